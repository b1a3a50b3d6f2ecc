//! Parameters, basis enumerations and state containers shared by every other
//! module.
//!
//! Two bases are used throughout:
//!
//! * [`ManifoldBasis`]: the fixed-excitation block spanned by
//!   `|n;e,e>, |n+1;g,e>, |n+1;e,g>, |n+2;g,g>` (states with a negative photon
//!   number are dropped, leaving 3 states for `N = 1` and the vacuum for
//!   `N = 0`).
//! * [`FullBasis`]: the truncated product space `|m; s1, s2>` with
//!   `m = 0..=n_max`, ordered photon-major, then atom 1, then atom 2, with `g`
//!   before `e`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Internal state of one two-level atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Ground,
    Excited,
}

impl Atom {
    pub fn is_excited(self) -> bool {
        matches!(self, Atom::Excited)
    }

    fn bit(self) -> usize {
        self.is_excited() as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Atom::Ground => 'g',
            Atom::Excited => 'e',
        }
    }
}

/// A bare product state `|photons; atom1, atom2>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel {
    pub photons: u32,
    pub atom1: Atom,
    pub atom2: Atom,
}

impl BasisLabel {
    pub const fn new(photons: u32, atom1: Atom, atom2: Atom) -> Self {
        BasisLabel {
            photons,
            atom1,
            atom2,
        }
    }

    /// Photons plus excited atoms.
    pub fn excitations(&self) -> u32 {
        self.photons + self.atom1.is_excited() as u32 + self.atom2.is_excited() as u32
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|{};{}{}>",
            self.photons,
            self.atom1.symbol(),
            self.atom2.symbol()
        )
    }
}

impl std::str::FromStr for BasisLabel {
    type Err = Error;

    /// Accepts `1;eg`, `|1;eg>` or `1,e,g`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownLabel(s.to_string());
        let body = s.trim().trim_start_matches('|').trim_end_matches('>');
        let (m, atoms) = body.split_once([';', ',']).ok_or_else(bad)?;
        let photons: u32 = m.trim().parse().map_err(|_| bad())?;
        let letters: Vec<char> = atoms.chars().filter(|c| !matches!(c, ',' | ' ')).collect();
        let atom = |c: char| match c {
            'g' => Ok(Atom::Ground),
            'e' => Ok(Atom::Excited),
            _ => Err(bad()),
        };
        match letters.as_slice() {
            [a, b] => Ok(BasisLabel::new(photons, atom(*a)?, atom(*b)?)),
            _ => Err(bad()),
        }
    }
}

/// Physical and numerical parameters for one cavity transit.
///
/// Rates (`g0`, `detuning`, `gamma`) are in units of `1/sigma` whenever
/// `sigma = 1`, which is how the CLI uses it. The integration window is stored
/// in units of `sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    pub g0: f64,
    pub epsilon: f64,
    pub sigma: f64,
    /// Dimensionless half delay between the two atoms.
    pub delta: f64,
    pub detuning: f64,
    pub gamma: f64,
    pub n_max: u32,
    /// Integration window `(t0, t1)` in units of `sigma`.
    pub t_span: (f64, f64),
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            g0: 28.3929,
            epsilon: 1.0,
            sigma: 1.0,
            delta: 1.0,
            detuning: 0.0,
            gamma: 0.0,
            n_max: 3,
            t_span: (-12.0, 12.0),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            // g0 = 0 is accepted as a decoupled reference system.
            return bad("g0 must be finite and non-negative");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be non-negative");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if !self.delta.is_finite() || !self.detuning.is_finite() {
            return bad("delta and detuning must be finite");
        }
        if !(self.t_span.0 < self.t_span.1) {
            return bad("t_span must satisfy t0 < t1");
        }
        Ok(())
    }

    /// Dimensionless time `t / (2 sigma)`.
    pub fn tau(&self, t: f64) -> f64 {
        t / (2.0 * self.sigma)
    }

    /// Physical time for a dimensionless time.
    pub fn time(&self, tau: f64) -> f64 {
        2.0 * self.sigma * tau
    }

    /// Integration window in physical time.
    pub fn window(&self) -> (f64, f64) {
        (self.t_span.0 * self.sigma, self.t_span.1 * self.sigma)
    }

    pub fn with_g0(mut self, g0: f64) -> Self {
        self.g0 = g0;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_n_max(mut self, n_max: u32) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_window(mut self, t0: f64, t1: f64) -> Self {
        self.t_span = (t0, t1);
        self
    }
}

/// Ordered fixed-excitation block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ManifoldBasis {
    /// Base photon index `n = N_exc - 2`; ranges over `-2, -1, 0, 1, ...`.
    pub n: i64,
}

impl ManifoldBasis {
    pub fn excitations(&self) -> u32 {
        (self.n + 2) as u32
    }

    pub fn dim(&self) -> usize {
        match self.n {
            -2 => 1,
            -1 => 3,
            _ => 4,
        }
    }

    pub fn labels(&self) -> Vec<BasisLabel> {
        use Atom::{Excited as E, Ground as G};
        let n = self.n;
        let all = [
            (n, E, E),
            (n + 1, G, E),
            (n + 1, E, G),
            (n + 2, G, G),
        ];
        all.iter()
            .filter(|(m, _, _)| *m >= 0)
            .map(|&(m, a, b)| BasisLabel::new(m as u32, a, b))
            .collect()
    }

    pub fn index_of(&self, label: &BasisLabel) -> Option<usize> {
        self.labels().iter().position(|l| l == label)
    }
}

/// Builds the ordered block with total excitation number `n_exc`.
pub fn manifold_basis(n_exc: i64) -> Result<ManifoldBasis> {
    if n_exc < 0 {
        return Err(Error::Domain(format!(
            "excitation number must be non-negative, got {n_exc}"
        )));
    }
    Ok(ManifoldBasis { n: n_exc - 2 })
}

/// Truncated Fock space tensored with both atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FullBasis {
    pub n_max: u32,
}

impl FullBasis {
    pub fn new(n_max: u32) -> Self {
        FullBasis { n_max }
    }

    pub fn dim(&self) -> usize {
        4 * (self.n_max as usize + 1)
    }

    pub fn index(&self, label: &BasisLabel) -> Option<usize> {
        if label.photons > self.n_max {
            return None;
        }
        Some(4 * label.photons as usize + 2 * label.atom1.bit() + label.atom2.bit())
    }

    pub fn label(&self, index: usize) -> BasisLabel {
        assert!(index < self.dim(), "index {index} outside basis");
        let atom = |b: usize| if b == 1 { Atom::Excited } else { Atom::Ground };
        BasisLabel::new((index / 4) as u32, atom((index >> 1) & 1), atom(index & 1))
    }

    pub fn labels(&self) -> Vec<BasisLabel> {
        (0..self.dim()).map(|i| self.label(i)).collect()
    }
}

/// Subsystem of the cavity-atom-atom product space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subsystem {
    Cavity,
    Atom1,
    Atom2,
}

/// Basis handle carried by every state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Manifold(ManifoldBasis),
    Full(FullBasis),
    /// Result of a partial trace: the kept subsystems in cavity, atom 1,
    /// atom 2 order, with the cavity truncated at `n_max`.
    Reduced { keep: Vec<Subsystem>, n_max: u32 },
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::Manifold(b) => b.dim(),
            Basis::Full(b) => b.dim(),
            Basis::Reduced { keep, n_max } => keep
                .iter()
                .map(|s| match s {
                    Subsystem::Cavity => *n_max as usize + 1,
                    _ => 2,
                })
                .product(),
        }
    }

    /// Bare labels, only defined for the manifold and full bases.
    pub fn labels(&self) -> Option<Vec<BasisLabel>> {
        match self {
            Basis::Manifold(b) => Some(b.labels()),
            Basis::Full(b) => Some(b.labels()),
            Basis::Reduced { .. } => None,
        }
    }

    pub fn index_of(&self, label: &BasisLabel) -> Option<usize> {
        match self {
            Basis::Manifold(b) => b.index_of(label),
            Basis::Full(b) => b.index(label),
            Basis::Reduced { .. } => None,
        }
    }
}

impl From<ManifoldBasis> for Basis {
    fn from(b: ManifoldBasis) -> Self {
        Basis::Manifold(b)
    }
}

impl From<FullBasis> for Basis {
    fn from(b: FullBasis) -> Self {
        Basis::Full(b)
    }
}

/// Normalized amplitude vector over a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    basis: Basis,
    amplitudes: DVector<C64>,
}

impl PureState {
    /// Normalizes `amplitudes`; fails on a zero vector or a length mismatch.
    pub fn new(basis: impl Into<Basis>, amplitudes: DVector<C64>) -> Result<Self> {
        let basis = basis.into();
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "{} amplitudes for a basis of dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Domain("state vector has zero or non-finite norm".into()));
        }
        Ok(PureState {
            basis,
            amplitudes: amplitudes.unscale(norm),
        })
    }

    /// Wraps amplitudes without renormalizing them.
    pub(crate) fn from_raw(basis: Basis, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), basis.dim());
        PureState { basis, amplitudes }
    }

    pub fn basis_state(basis: impl Into<Basis>, label: &BasisLabel) -> Result<Self> {
        let basis = basis.into();
        let index = basis
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let mut amplitudes = DVector::zeros(basis.dim());
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(PureState { basis, amplitudes })
    }

    /// Superposition of bare states; repeated labels add up.
    pub fn from_labels(basis: impl Into<Basis>, terms: &[(BasisLabel, C64)]) -> Result<Self> {
        let basis = basis.into();
        let mut amplitudes = DVector::zeros(basis.dim());
        for (label, amp) in terms {
            let index = basis
                .index_of(label)
                .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
            amplitudes[index] += amp;
        }
        PureState::new(basis, amplitudes)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn amplitude(&self, label: &BasisLabel) -> Result<C64> {
        self.basis
            .index_of(label)
            .map(|i| self.amplitudes[i])
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch(format!(
                "{:?} vs {:?}",
                self.basis, other.basis
            )));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            basis: self.basis.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix over a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    basis: Basis,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-8;
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const POSITIVITY_TOL: f64 = 1e-8;

    /// Validates trace, hermiticity and positivity.
    pub fn new(basis: impl Into<Basis>, matrix: DMatrix<C64>) -> Result<Self> {
        let rho = DensityMatrix::from_raw(basis.into(), matrix);
        rho.check()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(basis: Basis, matrix: DMatrix<C64>) -> Self {
        debug_assert_eq!(matrix.nrows(), basis.dim());
        DensityMatrix { basis, matrix }
    }

    pub fn check(&self) -> Result<()> {
        let d = self.basis.dim();
        if self.matrix.shape() != (d, d) {
            return Err(Error::BasisMismatch(format!(
                "matrix shape {:?} for basis dimension {d}",
                self.matrix.shape()
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let herm = self.hermiticity_error();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("hermiticity error {herm:e}")));
        }
        let min = self.min_eigenvalue();
        if min < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn population(&self, label: &BasisLabel) -> Result<f64> {
        self.basis
            .index_of(label)
            .map(|i| self.matrix[(i, i)].re)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

/// A state that is either pure or mixed.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl State {
    pub fn basis(&self) -> &Basis {
        match self {
            State::Pure(psi) => psi.basis(),
            State::Mixed(rho) => rho.basis(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            State::Pure(psi) => psi.to_density(),
            State::Mixed(rho) => rho.clone(),
        }
    }
}

impl From<PureState> for State {
    fn from(psi: PureState) -> Self {
        State::Pure(psi)
    }
}

impl From<DensityMatrix> for State {
    fn from(rho: DensityMatrix) -> Self {
        State::Mixed(rho)
    }
}

/// Copies a manifold state into the truncated product space.
pub fn embed(state: &PureState, full: FullBasis) -> Result<PureState> {
    let Basis::Manifold(block) = state.basis() else {
        return Err(Error::BasisMismatch("embed expects a manifold state".into()));
    };
    let mut amplitudes = DVector::zeros(full.dim());
    for (label, amp) in block.labels().iter().zip(state.amplitudes().iter()) {
        let index = full.index(label).ok_or(Error::Truncation {
            label: *label,
            n_max: full.n_max,
        })?;
        amplitudes[index] = *amp;
    }
    Ok(PureState::from_raw(full.into(), amplitudes))
}

/// Restricts a full-space state to one manifold block.
///
/// Amplitudes outside the block are discarded and the result is *not*
/// renormalized; the returned weight is the squared norm kept.
pub fn project(state: &PureState, block: ManifoldBasis) -> Result<(PureState, f64)> {
    let Basis::Full(full) = state.basis() else {
        return Err(Error::BasisMismatch("project expects a full-space state".into()));
    };
    let labels = block.labels();
    let mut amplitudes = DVector::zeros(labels.len());
    for (k, label) in labels.iter().enumerate() {
        let index = full.index(label).ok_or(Error::Truncation {
            label: *label,
            n_max: full.n_max,
        })?;
        amplitudes[k] = state.amplitudes()[index];
    }
    let weight = amplitudes.norm_squared();
    Ok((PureState::from_raw(block.into(), amplitudes), weight))
}

/// Smallest truncation that is lossless for a state whose largest populated
/// excitation number is `max_excitations`, plus one spare level so that
/// overflow monitoring can see population reaching the edge.
pub fn default_n_max(max_excitations: u32) -> u32 {
    max_excitations + 1
}

/// Largest excitation number carrying non-negligible weight.
pub fn max_excitations(state: &State) -> u32 {
    let basis = state.basis();
    let Some(labels) = basis.labels() else {
        return 0;
    };
    let weights: Vec<f64> = match state {
        State::Pure(psi) => psi.amplitudes().iter().map(|a| a.norm_sqr()).collect(),
        State::Mixed(rho) => (0..labels.len()).map(|i| rho.matrix()[(i, i)].re).collect(),
    };
    labels
        .iter()
        .zip(weights)
        .filter(|(_, w)| *w > 1e-14)
        .map(|(l, _)| l.excitations())
        .max()
        .unwrap_or(0)
}
