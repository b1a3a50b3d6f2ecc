//! Coherent and damped propagation over the transit window, a fixed-step
//! matrix-exponential reference propagator, and single-atom phase gates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hamiltonian::{full_matrix, manifold_matrix, AtomId, CouplingPair};
use crate::model::{Basis, DensityMatrix, FullBasis, PureState, State, SystemParams};
use crate::ode::{self, OdeStats, Scheme, StepControl};

/// Default population allowed on the highest retained photon number.
pub const EDGE_POPULATION_LIMIT: f64 = 1e-6;
/// Largest norm drift accepted from the adaptive Schrödinger integrator.
pub const NORM_DRIFT_LIMIT: f64 = 1e-9;
/// Reruns with ten times tighter tolerances allowed when the norm drifts.
const TIGHTENING_ROUNDS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Adaptive,
    /// Piecewise-constant midpoint exponentials with a fixed step.
    Oracle { step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConfig {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub method: Method,
    pub scheme: Scheme,
    /// Population allowed on the highest retained photon number while the
    /// couplings are on; exceeding it is a truncation error.
    pub edge_limit: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig::for_sigma(1.0)
    }
}

impl PropagationConfig {
    /// Default tolerances with steps scaled to the transit time `sigma`.
    pub fn for_sigma(sigma: f64) -> Self {
        PropagationConfig {
            rtol: 1e-9,
            atol: 1e-11,
            initial_step: sigma / 100.0,
            max_step: sigma / 10.0,
            method: Method::Adaptive,
            scheme: Scheme::Dop853,
            edge_limit: EDGE_POPULATION_LIMIT,
        }
    }

    pub fn oracle(sigma: f64, steps_per_sigma: usize) -> Self {
        PropagationConfig {
            method: Method::Oracle {
                step: sigma / steps_per_sigma as f64,
            },
            ..PropagationConfig::for_sigma(sigma)
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.initial_step > 0.0 && self.initial_step <= self.max_step) {
            return bad("need 0 < initial step <= max step".into());
        }
        if let Method::Oracle { step } = self.method {
            if !(step > 0.0 && step <= params.sigma / 200.0 * (1.0 + 1e-12)) {
                return bad(format!("oracle step {step} must lie in (0, sigma/200]"));
            }
        }
        Ok(())
    }

    fn control(&self) -> StepControl {
        StepControl {
            rtol: self.rtol,
            atol: self.atol,
            initial_step: self.initial_step,
            max_step: self.max_step,
            scheme: self.scheme,
        }
    }
}

/// Diagnostics of one propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunReport {
    pub stats: OdeStats,
    /// `|norm - 1|` (pure) or `|trace - 1|` (mixed) before any renormalization.
    pub drift: f64,
    /// Smallest eigenvalue of the final density matrix (mixed runs only).
    pub min_eigenvalue: f64,
    /// Largest population seen on the truncation edge with couplings on.
    pub edge_population: f64,
}

/// `H(t) = diag + eta1 C1 + eta2 C2` kept as sparse triplets.
#[derive(Clone, Debug)]
pub(crate) struct SplitHamiltonian {
    dim: usize,
    diag: Vec<f64>,
    c1: Vec<(usize, usize, f64)>,
    c2: Vec<(usize, usize, f64)>,
}

impl SplitHamiltonian {
    pub(crate) fn new(basis: &Basis, detuning: f64) -> Result<Self> {
        let build = |pair: CouplingPair, d: f64| -> Result<DMatrix<C64>> {
            match basis {
                Basis::Manifold(b) => Ok(manifold_matrix(pair, d, *b)),
                Basis::Full(b) => Ok(full_matrix(pair, d, *b)),
                Basis::Reduced { .. } => Err(Error::BasisMismatch("cannot propagate a reduced state".into())),
            }
        };
        let off = |m: DMatrix<C64>| {
            let mut out = Vec::new();
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if m[(i, j)].re != 0.0 {
                        out.push((i, j, m[(i, j)].re));
                    }
                }
            }
            out
        };
        let d = build(CouplingPair { eta1: 0.0, eta2: 0.0 }, detuning)?;
        Ok(SplitHamiltonian {
            dim: d.nrows(),
            diag: (0..d.nrows()).map(|i| d[(i, i)].re).collect(),
            c1: off(build(CouplingPair { eta1: 1.0, eta2: 0.0 }, 0.0)?),
            c2: off(build(CouplingPair { eta1: 0.0, eta2: 1.0 }, 0.0)?),
        })
    }

    fn terms(&self, pair: CouplingPair) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let diag = self.diag.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, i, v));
        let c1 = self.c1.iter().map(move |&(i, j, v)| (i, j, v * pair.eta1));
        let c2 = self.c2.iter().map(move |&(i, j, v)| (i, j, v * pair.eta2));
        diag.chain(c1).chain(c2)
    }

    /// `out = -i H x`.
    fn apply(&self, pair: CouplingPair, x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for (i, j, h) in self.terms(pair) {
            out[i] += x[j] * h;
        }
        for z in out.iter_mut() {
            *z = C64::new(z.im, -z.re);
        }
    }

    pub(crate) fn dense(&self, pair: CouplingPair) -> DMatrix<C64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.terms(pair) {
            h[(i, j)] += C64::new(v, 0.0);
        }
        h
    }
}

fn edge_indices(basis: &Basis) -> Vec<usize> {
    match basis {
        Basis::Full(full) => (0..full.dim()).filter(|&i| full.label(i).photons == full.n_max).collect(),
        _ => Vec::new(),
    }
}

fn couplings_on(t: f64, params: &SystemParams) -> bool {
    CouplingPair::at(t, params).norm() > 1e-6 * params.g0
}

fn check_edge(population: f64, limit: f64, t: f64, params: &SystemParams) -> Result<()> {
    if population > limit && couplings_on(t, params) {
        return Err(Error::TruncationOverflow { population, time: t });
    }
    Ok(())
}

/// Solves `i dpsi/dt = H(t) psi` across the parameter window.
///
/// When the norm drifts by more than [`NORM_DRIFT_LIMIT`] the run is
/// repeated with tighter tolerances; the result is renormalized once.
pub fn propagate_schrodinger(psi0: &PureState, params: &SystemParams, config: &PropagationConfig) -> Result<PureState> {
    propagate_schrodinger_report(psi0, params, config).map(|(psi, _)| psi)
}

pub fn propagate_schrodinger_report(
    psi0: &PureState,
    params: &SystemParams,
    config: &PropagationConfig,
) -> Result<(PureState, RunReport)> {
    params.validate()?;
    config.validate(params)?;
    if params.gamma > 0.0 {
        return Err(Error::WrongPropagator(
            "photon loss needs the density-matrix propagator".into(),
        ));
    }
    if let Method::Oracle { step } = config.method {
        let psi = oracle_propagate_state(psi0, params, step)?;
        let drift = (psi.norm() - 1.0).abs();
        return Ok((psi, RunReport { drift, ..Default::default() }));
    }
    let mut config = *config;
    let mut last_drift = 0.0;
    for _ in 0..=TIGHTENING_ROUNDS {
        let (v, report) = schrodinger_run(psi0, params, &config)?;
        if report.drift <= NORM_DRIFT_LIMIT {
            let norm = v.norm();
            return Ok((PureState::from_raw(psi0.basis().clone(), v.unscale(norm)), report));
        }
        last_drift = report.drift;
        config = config.with_tolerances(config.rtol / 10.0, config.atol / 10.0);
    }
    Err(Error::Domain(format!(
        "norm drifted by {last_drift:e} even at rtol {:e}",
        config.rtol * 10.0
    )))
}

fn schrodinger_run(psi0: &PureState, params: &SystemParams, config: &PropagationConfig) -> Result<(DVector<C64>, RunReport)> {
    let basis = psi0.basis();
    let gen = SplitHamiltonian::new(basis, params.detuning)?;
    let edges = edge_indices(basis);
    let (t0, t1) = params.window();
    let mut y: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let mut edge_max = 0.0f64;
    let stats = ode::integrate(
        |t, x, dx| gen.apply(CouplingPair::at(t, params), x, dx),
        t0,
        t1,
        &mut y,
        config.control(),
        |t, x| {
            let pop: f64 = edges.iter().map(|&i| x[i].norm_sqr()).sum();
            if couplings_on(t, params) {
                edge_max = edge_max.max(pop);
            }
            check_edge(pop, config.edge_limit, t, params)?;
            Ok(false)
        },
    )?;
    let v = DVector::from_vec(y);
    let report = RunReport {
        stats,
        drift: (v.norm() - 1.0).abs(),
        min_eigenvalue: 0.0,
        edge_population: edge_max,
    };
    Ok((v, report))
}

fn full_basis_of(basis: &Basis) -> Result<FullBasis> {
    match basis {
        Basis::Full(b) => Ok(*b),
        _ => Err(Error::BasisMismatch("photon loss needs the full product basis".into())),
    }
}

/// Static pieces of the dissipator on a full basis.
struct Damping {
    gamma: f64,
    photons: Vec<f64>,
    /// `(i, j, a_ij)` with `a` the annihilation operator.
    lowering: Vec<(usize, usize, f64)>,
}

impl Damping {
    fn new(full: FullBasis, gamma: f64) -> Self {
        let dim = full.dim();
        let photons = (0..dim).map(|i| full.label(i).photons as f64).collect();
        let lowering = (0..dim)
            .filter(|&i| full.label(i).photons > 0)
            .map(|i| (i - 4, i, (full.label(i).photons as f64).sqrt()))
            .collect();
        Damping { gamma, photons, lowering }
    }
}

/// `drho = -i[H, rho] - gamma/2 (n rho + rho n - 2 a rho a^dag)` on
/// column-major storage.
fn lindblad_rhs(gen: &SplitHamiltonian, damp: &Damping, pair: CouplingPair, rho: &[C64], out: &mut [C64]) {
    let d = gen.dim;
    let at = |i: usize, j: usize| i + d * j;
    out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    let minus_i = C64::new(0.0, -1.0);
    for (i, k, h) in gen.terms(pair) {
        // (H rho)_{i j} += h rho_{k j};  (rho H)_{j k} += rho_{j i} h
        for j in 0..d {
            out[at(i, j)] += minus_i * h * rho[at(k, j)];
            out[at(j, k)] -= minus_i * h * rho[at(j, i)];
        }
    }
    if damp.gamma > 0.0 {
        let g = damp.gamma;
        for j in 0..d {
            for i in 0..d {
                out[at(i, j)] -= 0.5 * g * (damp.photons[i] + damp.photons[j]) * rho[at(i, j)];
            }
        }
        for &(i, k, a) in &damp.lowering {
            for &(j, l, b) in &damp.lowering {
                out[at(i, j)] += g * a * b * rho[at(k, l)];
            }
        }
    }
}

fn symmetrize(rho: &mut [C64], d: usize) {
    for j in 0..d {
        for i in 0..=j {
            let avg = 0.5 * (rho[i + d * j] + rho[j + d * i].conj());
            rho[i + d * j] = avg;
            rho[j + d * i] = avg.conj();
        }
    }
}

/// Solves the damped-cavity master equation across the parameter window.
pub fn propagate_lindblad(rho0: &DensityMatrix, params: &SystemParams, config: &PropagationConfig) -> Result<DensityMatrix> {
    propagate_lindblad_report(rho0, params, config).map(|(rho, _)| rho)
}

pub fn propagate_lindblad_report(
    rho0: &DensityMatrix,
    params: &SystemParams,
    config: &PropagationConfig,
) -> Result<(DensityMatrix, RunReport)> {
    params.validate()?;
    config.validate(params)?;
    let full = full_basis_of(rho0.basis())?;
    if let Method::Oracle { step } = config.method {
        let rho = oracle_propagate_density(rho0, params, step)?;
        let report = RunReport {
            drift: (rho.trace().re - 1.0).abs(),
            min_eigenvalue: rho.min_eigenvalue(),
            ..Default::default()
        };
        return Ok((rho, report));
    }
    let basis = rho0.basis().clone();
    let gen = SplitHamiltonian::new(&basis, params.detuning)?;
    let damp = Damping::new(full, params.gamma);
    let d = full.dim();
    let edges = edge_indices(&basis);
    let (t0, t1) = params.window();
    let mut y: Vec<C64> = rho0.matrix().iter().copied().collect();
    let mut edge_max = 0.0f64;
    let stats = ode::integrate(
        |t, x, dx| lindblad_rhs(&gen, &damp, CouplingPair::at(t, params), x, dx),
        t0,
        t1,
        &mut y,
        config.control(),
        |t, x| {
            symmetrize(x, d);
            let pop: f64 = edges.iter().map(|&i| x[i + d * i].re).sum();
            if couplings_on(t, params) {
                edge_max = edge_max.max(pop);
            }
            check_edge(pop, config.edge_limit, t, params)?;
            Ok(true)
        },
    )?;
    let rho = DensityMatrix::from_raw(basis, DMatrix::from_vec(d, d, y));
    let report = RunReport {
        stats,
        drift: (rho.trace().re - 1.0).abs(),
        min_eigenvalue: rho.min_eigenvalue(),
        edge_population: edge_max,
    };
    Ok((rho, report))
}

/// Pure states without loss go through the Schrödinger equation; anything
/// else goes through the master equation.
pub fn propagate(state: &State, params: &SystemParams, config: &PropagationConfig) -> Result<State> {
    match state {
        State::Pure(psi) if params.gamma == 0.0 => propagate_schrodinger(psi, params, config).map(State::Pure),
        State::Pure(psi) => propagate_lindblad(&psi.to_density(), params, config).map(State::Mixed),
        State::Mixed(rho) => propagate_lindblad(rho, params, config).map(State::Mixed),
    }
}

fn oracle_grid(params: &SystemParams, step: f64) -> (f64, f64, usize) {
    let (t0, t1) = params.window();
    let steps = (((t1 - t0) / step) - 1e-9).ceil().max(1.0) as usize;
    (t0, (t1 - t0) / steps as f64, steps)
}

/// `exp(-i H(t_mid) dt)` for one reference step.
pub fn oracle_step_unitary(t_mid: f64, dt: f64, params: &SystemParams, basis: &Basis) -> Result<DMatrix<C64>> {
    let gen = SplitHamiltonian::new(basis, params.detuning)?;
    Ok(step_unitary(&gen, t_mid, dt, params))
}

fn step_unitary(gen: &SplitHamiltonian, t_mid: f64, dt: f64, params: &SystemParams) -> DMatrix<C64> {
    let h = gen.dense(CouplingPair::at(t_mid, params));
    (h * C64::new(0.0, -dt)).exp()
}

/// Reference propagation of a pure state with midpoint exponentials.
pub fn oracle_propagate_state(psi0: &PureState, params: &SystemParams, step: f64) -> Result<PureState> {
    let basis = psi0.basis().clone();
    let gen = SplitHamiltonian::new(&basis, params.detuning)?;
    let (t0, dt, steps) = oracle_grid(params, step);
    let mut v = psi0.amplitudes().clone();
    for k in 0..steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        v = step_unitary(&gen, t_mid, dt, params) * v;
    }
    Ok(PureState::from_raw(basis, v))
}

/// Dense generator `L` with `vec(drho/dt) = L vec(rho)` (column-major).
fn liouvillian(gen: &SplitHamiltonian, damp: &Damping, pair: CouplingPair) -> DMatrix<C64> {
    let d = gen.dim;
    let mut l = DMatrix::zeros(d * d, d * d);
    let mut e = vec![C64::new(0.0, 0.0); d * d];
    let mut col = vec![C64::new(0.0, 0.0); d * d];
    for c in 0..d * d {
        e[c] = C64::new(1.0, 0.0);
        lindblad_rhs(gen, damp, pair, &e, &mut col);
        l.set_column(c, &DVector::from_column_slice(&col));
        e[c] = C64::new(0.0, 0.0);
    }
    l
}

/// Reference propagation of a density matrix with midpoint exponentials of
/// the full Liouville generator. Cost grows as `dim^6`; meant for small
/// truncations.
pub fn oracle_propagate_density(rho0: &DensityMatrix, params: &SystemParams, step: f64) -> Result<DensityMatrix> {
    let full = full_basis_of(rho0.basis())?;
    let gen = SplitHamiltonian::new(rho0.basis(), params.detuning)?;
    let damp = Damping::new(full, params.gamma);
    let d = full.dim();
    let (t0, dt, steps) = oracle_grid(params, step);
    let mut v = DVector::from_iterator(d * d, rho0.matrix().iter().copied());
    for k in 0..steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        let l = liouvillian(&gen, &damp, CouplingPair::at(t_mid, params));
        v = (l * C64::new(dt, 0.0)).exp() * v;
    }
    Ok(DensityMatrix::from_raw(rho0.basis().clone(), DMatrix::from_vec(d, d, v.as_slice().to_vec())))
}

/// Reference propagation of either kind of state.
pub fn oracle_propagate(state: &State, params: &SystemParams, step: f64) -> Result<State> {
    match state {
        State::Pure(psi) if params.gamma == 0.0 => oracle_propagate_state(psi, params, step).map(State::Pure),
        State::Pure(psi) => oracle_propagate_density(&psi.to_density(), params, step).map(State::Mixed),
        State::Mixed(rho) => oracle_propagate_density(rho, params, step).map(State::Mixed),
    }
}

/// Multiplies every amplitude with the chosen atom excited by `exp(i chi)`.
pub fn apply_phase_gate(psi: &PureState, atom: AtomId, chi: f64) -> Result<PureState> {
    let labels = psi
        .basis()
        .labels()
        .ok_or_else(|| Error::BasisMismatch("phase gates need a labelled basis".into()))?;
    let phase = C64::from_polar(1.0, chi);
    let mut v = psi.amplitudes().clone();
    for (amp, label) in v.iter_mut().zip(&labels) {
        let excited = match atom {
            AtomId::First => label.atom1.is_excited(),
            AtomId::Second => label.atom2.is_excited(),
        };
        if excited {
            *amp *= phase;
        }
    }
    Ok(PureState::from_raw(psi.basis().clone(), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{excitation_operator, manifold_hamiltonian};
    use crate::model::{embed, manifold_basis, Atom, BasisLabel};
    use crate::spectrum::phi_angle;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};
    use Atom::{Excited as E, Ground as G};

    fn symmetric_params() -> SystemParams {
        SystemParams::default()
    }

    fn overlap(a: &PureState, b: &PureState) -> f64 {
        a.inner(b).unwrap().norm()
    }

    #[test]
    fn vacuum_is_stationary() {
        let block = manifold_basis(0).unwrap();
        let vac = PureState::basis_state(block, &BasisLabel::new(0, G, G)).unwrap();
        let out = propagate_schrodinger(&vac, &symmetric_params().with_detuning(3.0), &PropagationConfig::default()).unwrap();
        assert!((out.amplitudes()[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
        let full = FullBasis::new(2);
        let vac = PureState::basis_state(full, &BasisLabel::new(0, G, G)).unwrap();
        let out = propagate_schrodinger(&vac, &symmetric_params(), &PropagationConfig::default()).unwrap();
        assert!((overlap(&out, &vac) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dark_transfer_swaps_the_excitation() {
        let block = manifold_basis(1).unwrap();
        let psi = PureState::basis_state(block, &BasisLabel::new(0, G, E)).unwrap();
        let (out, report) = propagate_schrodinger_report(&psi, &symmetric_params(), &PropagationConfig::default()).unwrap();
        let target = PureState::basis_state(block, &BasisLabel::new(0, E, G)).unwrap();
        let amp = target.inner(&out).unwrap();
        assert!(amp.norm() > 0.999, "{amp}");
        assert!(amp.re < -0.99, "{amp}");
        assert!(report.drift < NORM_DRIFT_LIMIT);
    }

    #[test]
    fn bright_rotation_in_two_excitation_block() {
        let p = symmetric_params();
        let block = manifold_basis(2).unwrap();
        let psi = PureState::basis_state(block, &BasisLabel::new(1, E, G)).unwrap();
        let out = propagate_schrodinger(&psi, &p, &PropagationConfig::default()).unwrap();
        let phi0 = phi_angle(0, &p).unwrap();
        let expected = PureState::from_labels(
            block,
            &[
                (BasisLabel::new(1, G, E), C64::new(phi0.cos(), 0.0)),
                (BasisLabel::new(2, G, G), C64::new(0.0, -phi0.sin())),
            ],
        )
        .unwrap();
        let f = overlap(&out, &expected);
        assert!(f > 1.0 - 1e-3, "fidelity {f}");
    }

    #[test]
    fn photon_loss_needs_the_master_equation() {
        let block = manifold_basis(1).unwrap();
        let psi = PureState::basis_state(block, &BasisLabel::new(0, G, E)).unwrap();
        let err = propagate_schrodinger(&psi, &symmetric_params().with_gamma(0.1), &PropagationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::WrongPropagator(_)));
        let err = propagate_lindblad(&psi.to_density(), &symmetric_params(), &PropagationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::BasisMismatch(_)));
    }

    #[test]
    fn lindblad_without_loss_matches_schrodinger() {
        let p = symmetric_params().with_epsilon(0.9).with_detuning(1.0);
        let full = FullBasis::new(3);
        let s = FRAC_1_SQRT_2;
        let psi = PureState::from_labels(
            full,
            &[(BasisLabel::new(1, E, G), C64::new(s, 0.0)), (BasisLabel::new(0, G, E), C64::new(0.0, s))],
        )
        .unwrap();
        let cfg = PropagationConfig::default();
        let out = propagate_schrodinger(&psi, &p, &cfg).unwrap();
        let (rho, report) = propagate_lindblad_report(&psi.to_density(), &p, &cfg).unwrap();
        let diff = rho.matrix() - out.to_density().matrix();
        let trace_distance: f64 = 0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>();
        assert!(trace_distance < 1e-7, "{trace_distance:e}");
        assert!(report.drift < 1e-8);
        assert!(report.min_eigenvalue > -1e-7);
    }

    #[test]
    fn free_cavity_decays_exponentially() {
        let gamma = 0.3;
        let p = symmetric_params().with_g0(0.0).with_gamma(gamma).with_window(0.0, 4.0);
        let full = FullBasis::new(2);
        let rho0 = PureState::basis_state(full, &BasisLabel::new(1, G, G)).unwrap().to_density();
        let rho = propagate_lindblad(&rho0, &p, &PropagationConfig::default()).unwrap();
        let n1 = rho.population(&BasisLabel::new(1, G, G)).unwrap();
        assert!((n1 - (-gamma * 4.0f64).exp()).abs() < 1e-8, "{n1}");
        let n0 = rho.population(&BasisLabel::new(0, G, G)).unwrap();
        assert!((n0 + n1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn excitation_number_is_conserved_without_loss() {
        let p = symmetric_params().with_epsilon(1.1).with_detuning(2.0);
        let full = FullBasis::new(4);
        let psi = PureState::basis_state(full, &BasisLabel::new(1, E, E)).unwrap();
        let out = propagate_schrodinger(&psi, &p, &PropagationConfig::default()).unwrap();
        let n = excitation_operator(full);
        for (i, amp) in out.amplitudes().iter().enumerate() {
            if n[(i, i)].re != 3.0 {
                assert!(amp.norm_sqr() < 1e-10);
            }
        }
    }

    #[test]
    fn truncation_overflow_is_detected() {
        // |1;ee> climbs to two photons; n_max = 2 puts that on the edge.
        let full = FullBasis::new(2);
        let psi = PureState::basis_state(full, &BasisLabel::new(0, E, E)).unwrap();
        let err = propagate_lindblad(&psi.to_density(), &symmetric_params().with_gamma(0.01), &PropagationConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::TruncationOverflow { .. }), "{err}");
    }

    #[test]
    fn oracle_matches_adaptive() {
        let p = symmetric_params().with_window(-8.0, 8.0);
        let block = manifold_basis(2).unwrap();
        let psi = PureState::basis_state(block, &BasisLabel::new(1, E, G)).unwrap();
        let a = propagate_schrodinger(&psi, &p, &PropagationConfig::default()).unwrap();
        let b = propagate_schrodinger(&psi, &p, &PropagationConfig::oracle(1.0, 1000)).unwrap();
        assert!(1.0 - overlap(&a, &b) < 1e-6, "{}", 1.0 - overlap(&a, &b));
    }

    #[test]
    fn oracle_step_bounds_and_zero_step() {
        let p = symmetric_params();
        let cfg = PropagationConfig::oracle(1.0, 100);
        let block = manifold_basis(1).unwrap();
        let psi = PureState::basis_state(block, &BasisLabel::new(0, G, E)).unwrap();
        assert!(matches!(propagate_schrodinger(&psi, &p, &cfg), Err(Error::InvalidParams(_))));
        let u = oracle_step_unitary(0.3, 0.0, &p, &block.into()).unwrap();
        assert!((u - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn oracle_frozen_couplings_give_rabi_oscillation() {
        // constant H on the one-excitation block: |1;gg> oscillates with
        // frequency s = sqrt(eta1^2 + eta2^2)
        let p = symmetric_params().with_epsilon(0.6);
        let block = manifold_basis(1).unwrap();
        let t_mid = 0.4;
        let dt = 0.37;
        let u = oracle_step_unitary(t_mid, dt, &p, &block.into()).unwrap();
        let pair = CouplingPair::at(t_mid, &p);
        let s = pair.norm();
        let amp = u[(2, 2)];
        assert!((amp - C64::new((s * dt).cos(), 0.0)).norm() < 1e-12);
        let to_ge = u[(0, 2)];
        assert!((to_ge - C64::new(0.0, -pair.eta2 / s * (s * dt).sin())).norm() < 1e-12);
        let h = manifold_hamiltonian(t_mid, &p, block);
        assert!((&h.matrix * &u - &u * &h.matrix).norm() < 1e-10);
    }

    #[test]
    fn lindblad_oracle_matches_adaptive_on_small_truncation() {
        let p = symmetric_params().with_g0(6.0).with_gamma(0.2).with_window(-3.0, 3.0);
        let full = FullBasis::new(1);
        let s = FRAC_1_SQRT_2;
        let psi = PureState::from_labels(
            full,
            &[(BasisLabel::new(0, G, E), C64::new(s, 0.0)), (BasisLabel::new(0, G, G), C64::new(s, 0.0))],
        )
        .unwrap();
        let rho0 = psi.to_density();
        let loose = PropagationConfig { edge_limit: 1.0, ..Default::default() };
        let a = propagate_lindblad(&rho0, &p, &loose).unwrap();
        let b = propagate_lindblad(&rho0, &p, &PropagationConfig::oracle(1.0, 400)).unwrap();
        assert!((a.matrix() - b.matrix()).camax() < 1e-6);
    }

    #[test]
    fn phase_gates() {
        let block = manifold_basis(1).unwrap();
        let psi = PureState::from_labels(
            block,
            &[(BasisLabel::new(1, G, G), C64::new(0.6, 0.0)), (BasisLabel::new(0, G, E), C64::new(0.0, -0.8))],
        )
        .unwrap();
        let out = apply_phase_gate(&psi, AtomId::Second, PI / 2.0).unwrap();
        assert!((out.amplitude(&BasisLabel::new(0, G, E)).unwrap() - C64::new(0.8, 0.0)).norm() < 1e-15);
        assert!((out.amplitude(&BasisLabel::new(1, G, G)).unwrap() - C64::new(0.6, 0.0)).norm() < 1e-15);
        let same = apply_phase_gate(&psi, AtomId::First, 0.0).unwrap();
        assert_eq!(same, psi);
        let turn = apply_phase_gate(&psi, AtomId::Second, 2.0 * PI).unwrap();
        assert!((turn.amplitudes() - psi.amplitudes()).norm() < 1e-15);
        let full = embed(&psi, FullBasis::new(1)).unwrap();
        assert!((apply_phase_gate(&full, AtomId::Second, 1.0).unwrap().norm() - 1.0).abs() < 1e-15);
    }
}
