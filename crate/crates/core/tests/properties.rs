use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use twoatom_cqed::analysis::{entanglement_entropy, fidelity, reduced_state, resonant_map};
use twoatom_cqed::model::{FullBasis, ManifoldBasis, PureState, State, Subsystem};

fn state(parts: &[(f64, f64)]) -> PureState {
    let v = DVector::from_iterator(parts.len(), parts.iter().map(|&(re, im)| C64::new(re, im)));
    let norm = v.norm();
    PureState::new(FullBasis::new(1), v / C64::new(norm, 0.0)).unwrap()
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8).prop_filter("non-zero", |v| {
        v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3
    })
}

proptest! {
    #[test]
    fn fidelity_ignores_global_phase(a in amplitudes(), b in amplitudes(), chi in 0.0..6.3f64) {
        let (psi, target) = (state(&a), state(&b));
        let rotated = PureState::new(FullBasis::new(1), psi.amplitudes() * C64::from_polar(1.0, chi)).unwrap();
        let f0 = fidelity(&State::Pure(psi.clone()), &target).unwrap();
        let f1 = fidelity(&State::Pure(rotated), &target).unwrap();
        let fm = fidelity(&State::Mixed(psi.to_density()), &target).unwrap();
        prop_assert!((f0 - f1).abs() < 1e-12);
        prop_assert!((f0 - fm).abs() < 1e-7);
        prop_assert!((0.0..=1.0).contains(&f0));
    }

    #[test]
    fn partial_trace_keeps_trace_and_hermiticity(a in amplitudes(), mask in 1usize..8) {
        let keep: Vec<Subsystem> = [Subsystem::Cavity, Subsystem::Atom1, Subsystem::Atom2]
            .into_iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, s)| s)
            .collect();
        let r = reduced_state(&State::Pure(state(&a)), &keep).unwrap();
        prop_assert!((r.trace() - C64::new(1.0, 0.0)).norm() < 1e-14);
        prop_assert!(r.hermiticity_error() < 1e-15);
        prop_assert!(r.min_eigenvalue() > -1e-12);
        prop_assert!(entanglement_entropy(&r) >= 0.0);
    }

    #[test]
    fn predicted_maps_are_unitary(phi in -20.0..20.0f64, theta in -20.0..20.0f64, n in -2i64..6) {
        let p = resonant_map(ManifoldBasis { n }, phi, theta);
        let d = p.nrows();
        let err = (p.adjoint() * &p - DMatrix::<C64>::identity(d, d)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-13);
    }
}
