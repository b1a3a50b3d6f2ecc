//! Gaussian coupling profiles and the interaction-picture Hamiltonian.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::model::{Basis, FullBasis, ManifoldBasis, SystemParams};

/// Gaussian exponents beyond this are treated as an exact zero.
const TAIL_CUTOFF: f64 = 50.0;

/// Which atom a single-atom quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomId {
    First,
    Second,
}

impl TryFrom<u8> for AtomId {
    type Error = crate::Error;

    fn try_from(value: u8) -> crate::Result<Self> {
        match value {
            1 => Ok(AtomId::First),
            2 => Ok(AtomId::Second),
            other => Err(crate::Error::Domain(format!("atom index must be 1 or 2, got {other}"))),
        }
    }
}

/// Instantaneous coupling strengths of both atoms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingPair {
    pub eta1: f64,
    pub eta2: f64,
}

impl CouplingPair {
    pub fn at(t: f64, params: &SystemParams) -> Self {
        CouplingPair {
            eta1: coupling(AtomId::First, t, params),
            eta2: coupling(AtomId::Second, t, params),
        }
    }

    pub fn norm(&self) -> f64 {
        self.eta1.hypot(self.eta2)
    }
}

fn gaussian(x: f64) -> f64 {
    let arg = x * x;
    if arg > TAIL_CUTOFF {
        0.0
    } else {
        (-arg).exp()
    }
}

/// Coupling of one atom at physical time `t`:
/// `g0 exp(-(tau + delta)^2)` for atom 1 and `epsilon g0 exp(-(tau - delta)^2)`
/// for atom 2, with `tau = t / (2 sigma)`.
pub fn coupling(atom: AtomId, t: f64, params: &SystemParams) -> f64 {
    let tau = params.tau(t);
    match atom {
        AtomId::First => params.g0 * gaussian(tau + params.delta),
        AtomId::Second => params.epsilon * params.g0 * gaussian(tau - params.delta),
    }
}

/// Hermitian matrix over a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    pub basis: Basis,
    pub matrix: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Hamiltonian of one fixed-excitation block.
///
/// For `n >= 0` the diagonal is `(detuning, 0, 0, -detuning)`; the `N = 1`
/// block keeps the last three entries and the vacuum block is `[0]`.
pub fn manifold_hamiltonian(t: f64, params: &SystemParams, basis: ManifoldBasis) -> HermitianOperator {
    HermitianOperator {
        basis: basis.into(),
        matrix: manifold_matrix(CouplingPair::at(t, params), params.detuning, basis),
    }
}

pub(crate) fn manifold_matrix(pair: CouplingPair, d: f64, basis: ManifoldBasis) -> DMatrix<C64> {
    let CouplingPair { eta1, eta2 } = pair;
    match basis.n {
        -2 => DMatrix::zeros(1, 1),
        -1 => {
            // |0;ge>, |0;eg>, |1;gg>
            let mut h = DMatrix::zeros(3, 3);
            h[(2, 2)] = real(-d);
            h[(2, 0)] = real(eta2);
            h[(0, 2)] = real(eta2);
            h[(2, 1)] = real(eta1);
            h[(1, 2)] = real(eta1);
            h
        }
        n => {
            let a = ((n + 1) as f64).sqrt();
            let b = ((n + 2) as f64).sqrt();
            let mut h = DMatrix::zeros(4, 4);
            h[(0, 0)] = real(d);
            h[(3, 3)] = real(-d);
            for (i, j, v) in [
                (1, 0, eta1 * a),
                (2, 0, eta2 * a),
                (3, 1, eta2 * b),
                (3, 2, eta1 * b),
            ] {
                h[(i, j)] = real(v);
                h[(j, i)] = real(v);
            }
            h
        }
    }
}

/// Hamiltonian on the truncated product space:
/// `detuning (s1+ s1- + s2+ s2-) + sum_j eta_j (a^dag s_j- + a s_j+)`.
///
/// Restricted to a manifold block with at least one excitation this is
/// [`manifold_hamiltonian`] plus `detuning` times the identity; the vacuum
/// block is zero in both.
pub fn full_hamiltonian(t: f64, params: &SystemParams, basis: FullBasis) -> HermitianOperator {
    let pair = CouplingPair::at(t, params);
    HermitianOperator {
        basis: basis.into(),
        matrix: full_matrix(pair, params.detuning, basis),
    }
}

pub(crate) fn full_matrix(pair: CouplingPair, detuning: f64, basis: FullBasis) -> DMatrix<C64> {
    let dim = basis.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let label = basis.label(i);
        let excited = label.atom1.is_excited() as u32 + label.atom2.is_excited() as u32;
        h[(i, i)] = real(detuning * excited as f64);
        if label.photons >= basis.n_max {
            continue;
        }
        // a^dag s_j^- : move an excitation from atom j into the mode
        let amp = ((label.photons + 1) as f64).sqrt();
        let up = label.photons + 1;
        if label.atom1.is_excited() {
            let mut target = label;
            target.photons = up;
            target.atom1 = crate::model::Atom::Ground;
            let j = basis.index(&target).expect("label inside truncation");
            h[(j, i)] = real(pair.eta1 * amp);
            h[(i, j)] = real(pair.eta1 * amp);
        }
        if label.atom2.is_excited() {
            let mut target = label;
            target.photons = up;
            target.atom2 = crate::model::Atom::Ground;
            let j = basis.index(&target).expect("label inside truncation");
            h[(j, i)] = real(pair.eta2 * amp);
            h[(i, j)] = real(pair.eta2 * amp);
        }
    }
    h
}

/// Photon number operator `a^dag a` on the product space.
pub fn number_operator(basis: FullBasis) -> DMatrix<C64> {
    DMatrix::from_fn(basis.dim(), basis.dim(), |i, j| {
        if i == j {
            real(basis.label(i).photons as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Total excitation operator (photons plus excited atoms).
pub fn excitation_operator(basis: FullBasis) -> DMatrix<C64> {
    DMatrix::from_fn(basis.dim(), basis.dim(), |i, j| {
        if i == j {
            real(basis.label(i).excitations() as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Annihilation operator `a` on the product space.
pub fn annihilation_operator(basis: FullBasis) -> DMatrix<C64> {
    let dim = basis.dim();
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let label = basis.label(i);
        if label.photons == 0 {
            continue;
        }
        let mut lower = label;
        lower.photons -= 1;
        let j = basis.index(&lower).expect("lower photon number exists");
        a[(j, i)] = real((label.photons as f64).sqrt());
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{manifold_basis, BasisLabel};
    use proptest::prelude::*;

    fn params() -> SystemParams {
        SystemParams {
            g0: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn coupling_peaks_and_values() {
        let p = SystemParams {
            g0: 3.0,
            epsilon: 0.7,
            sigma: 2.0,
            delta: 1.3,
            ..Default::default()
        };
        let t1 = p.time(-p.delta);
        assert!((coupling(AtomId::First, t1, &p) - 3.0).abs() < 1e-15);
        let t2 = p.time(p.delta);
        assert!((coupling(AtomId::Second, t2, &p) - 2.1).abs() < 1e-15);
        let q = params();
        assert!((coupling(AtomId::First, 0.0, &q) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(coupling(AtomId::First, 100.0, &q), 0.0);
    }

    #[test]
    fn resonant_block_at_atom_one_peak() {
        let p = params();
        let t = p.time(-p.delta);
        let h = manifold_hamiltonian(t, &p, manifold_basis(2).unwrap());
        let CouplingPair { eta1, eta2 } = CouplingPair::at(t, &p);
        let s2 = 2f64.sqrt();
        let m = h.matrix.map(|z| z.re);
        for i in 0..4 {
            assert_eq!(m[(i, i)], 0.0);
        }
        assert!((m[(1, 0)] - eta1).abs() < 1e-15);
        assert!((m[(2, 0)] - eta2).abs() < 1e-15);
        assert!((m[(3, 1)] - eta2 * s2).abs() < 1e-15);
        assert!((m[(3, 2)] - eta1 * s2).abs() < 1e-15);
        assert_eq!(m[(3, 0)], 0.0);
        assert_eq!(m[(2, 1)], 0.0);
        assert_eq!(h.hermiticity_error(), 0.0);
    }

    #[test]
    fn vacuum_and_uncoupled_blocks() {
        let p = params().with_detuning(10.0);
        let h0 = manifold_hamiltonian(0.3, &p, manifold_basis(0).unwrap());
        assert_eq!(h0.matrix, DMatrix::zeros(1, 1));
        let far = manifold_hamiltonian(60.0, &p, manifold_basis(2).unwrap());
        let diag: Vec<f64> = (0..4).map(|i| far.matrix[(i, i)].re).collect();
        assert_eq!(diag, vec![10.0, 0.0, 0.0, -10.0]);
        assert_eq!(far.matrix.map(|z| z.norm()).sum(), 20.0);
    }

    #[test]
    fn full_restricts_to_manifold_plus_shift() {
        let p = SystemParams {
            g0: 2.5,
            epsilon: 0.8,
            detuning: 3.0,
            ..Default::default()
        };
        let full = FullBasis::new(4);
        for &t in &[-3.0, -0.4, 0.0, 1.7] {
            let hf = full_hamiltonian(t, &p, full);
            for n_exc in 0..=4 {
                let block = manifold_basis(n_exc).unwrap();
                let hm = manifold_hamiltonian(t, &p, block);
                let idx: Vec<usize> = block.labels().iter().map(|l| full.index(l).unwrap()).collect();
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        let shift = if a == b && n_exc > 0 { p.detuning } else { 0.0 };
                        let diff = hf.matrix[(i, j)] - hm.matrix[(a, b)] - C64::new(shift, 0.0);
                        assert!(diff.norm() < 1e-12, "t={t} n_exc={n_exc} ({a},{b})");
                    }
                }
            }
        }
    }

    #[test]
    fn ladder_operators() {
        let full = FullBasis::new(2);
        let a = annihilation_operator(full);
        let n = number_operator(full);
        assert!((a.adjoint() * &a - n).camax() < 1e-14);
        let i = full.index(&BasisLabel::new(2, crate::model::Atom::Ground, crate::model::Atom::Excited)).unwrap();
        let j = full.index(&BasisLabel::new(1, crate::model::Atom::Ground, crate::model::Atom::Excited)).unwrap();
        assert!((a[(j, i)].re - 2f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn hamiltonian_is_hermitian_and_conserves_excitations(
            t in -10.0f64..10.0,
            eps in 0.0f64..2.0,
            det in -20.0f64..20.0,
            n_max in 0u32..4,
        ) {
            let p = SystemParams { g0: 5.0, epsilon: eps, detuning: det, ..Default::default() };
            let full = FullBasis::new(n_max);
            let h = full_hamiltonian(t, &p, full);
            prop_assert!(h.hermiticity_error() < 1e-12);
            let n = excitation_operator(full);
            let comm = &h.matrix * &n - &n * &h.matrix;
            prop_assert!(comm.camax() < 1e-12);
        }

        #[test]
        fn symmetric_profiles_mirror(tau in -5.0f64..5.0, delta in 0.0f64..2.0) {
            let p = SystemParams { g0: 2.0, epsilon: 1.0, delta, ..Default::default() };
            let e1 = coupling(AtomId::First, p.time(tau), &p);
            let e2 = coupling(AtomId::Second, p.time(-tau), &p);
            prop_assert!((e1 - e2).abs() < 1e-14);
        }
    }
}
