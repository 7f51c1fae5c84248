use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use oam_entlab::state::*;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn complex() -> impl Strategy<Value = C64> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(re, im)| C64::new(re, im))
}

fn basis_state() -> impl Strategy<Value = MeasBasisState> {
    (complex(), complex())
        .prop_filter("non-zero", |(a, b)| a.norm() + b.norm() > 1e-3)
        .prop_map(|(a, b)| MeasBasisState::custom(a, b).unwrap())
}

fn unitary() -> impl Strategy<Value = Matrix2<C64>> {
    (0.0f64..std::f64::consts::TAU, 0.0f64..std::f64::consts::PI, 0.0f64..std::f64::consts::TAU, 0.0f64..std::f64::consts::TAU).prop_map(
        |(phi, t, b, g)| {
            let x = C64::from_polar((t / 2.0).cos(), b);
            let y = C64::from_polar((t / 2.0).sin(), g);
            let e = C64::from_polar(1.0, phi);
            Matrix2::new(x, -y.conj() * e, y, x.conj() * e)
        },
    )
}

fn mixed_state() -> impl Strategy<Value = TwoQubitState> {
    (prop::array::uniform4(complex()), prop::array::uniform4(complex()), 0.0f64..1.0).prop_filter_map("normalizable", |(a, b, w)| {
        let pa = PureTwoQubit::normalized(a).ok()?.density();
        let pb = PureTwoQubit::normalized(b).ok()?.density();
        Some(TwoQubitState::mix(&pa, &pb, w))
    })
}

proptest! {
    #[test]
    fn born_sums_to_one_over_product_bases(rho in mixed_state(), a in basis_state(), b in basis_state()) {
        let total: f64 = [a, a.orthogonal()]
            .iter()
            .flat_map(|x| [b, b.orthogonal()].map(|y| born_probability(&rho, x, &y).unwrap()))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn psi_gamma_swap_symmetry(g in complex().prop_filter("non-zero", |g| g.norm() > 1e-3)) {
        let a = psi_gamma(g).unwrap().schmidt_weights();
        let b = psi_gamma(C64::new(1.0, 0.0) / g.conj()).unwrap().schmidt_weights();
        prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn truncated_source_matches_psi_gamma(c0 in complex(), c1 in complex(), c2 in complex()) {
        prop_assume!(c0.norm() > 1e-2 && c2.norm() > 1e-6);
        let n3 = (c0.norm_sqr() + c1.norm_sqr() + c2.norm_sqr()).sqrt();
        let wide = SourceSpectrum::new([(0, c0 / n3), (1, c1 / n3), (2, c2 / n3)], 6.6e-3, 2).unwrap();
        prop_assert!(truncated_source_state(&wide).unwrap().to_two_qubit().is_none());
        let n2 = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        let spec = SourceSpectrum::new([(0, c0 / n2), (1, c1 / n2)], 6.6e-3, 1).unwrap();
        let q = truncated_source_state(&spec).unwrap();
        let two = q.to_two_qubit().unwrap();
        let direct = psi_gamma(c1 / c0).unwrap();
        let phase = c0 / c0.norm();
        for (x, y) in two.amplitudes().iter().zip(direct.amplitudes().iter()) {
            prop_assert!((x - y * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn purity_is_local_unitary_invariant(rho in mixed_state(), ua in unitary(), ub in unitary()) {
        let rotated = rho.local_rotation(&ua, &ub);
        prop_assert!((purity(&rotated) - purity(&rho)).abs() < 1e-10);
    }

    #[test]
    fn states_survive_json(rho in mixed_state()) {
        let json = serde_json::to_string(&rho).unwrap();
        let back: TwoQubitState = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, rho);
    }
}

#[test]
fn random_unitaries_are_unitary() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for _ in 0..50 {
        let u = unitary().new_tree(&mut runner).unwrap().current();
        assert!((u * u.adjoint() - Matrix2::identity()).norm() < 1e-12);
    }
}
