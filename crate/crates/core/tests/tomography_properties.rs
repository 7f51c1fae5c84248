use nalgebra::SymmetricEigen;
use oam_entlab::exec::{map_indexed, Execution};
use oam_entlab::rng::stream;
use oam_entlab::state::{psi_gamma, swap_operator, TwoQubitState, C64};
use oam_entlab::tomography::*;
use proptest::prelude::*;
use rand_distr::{Distribution, Poisson};

fn truth() -> TwoQubitState {
    let g = C64::from_polar(0.74, 0.11 * std::f64::consts::PI);
    TwoQubitState::mix(&psi_gamma(g).unwrap().density(), &TwoQubitState::maximally_mixed(), 0.85)
}

fn poisson_dataset(rho: &TwoQubitState, n: f64, seed: u64) -> TomographyDataset {
    let settings = canonical_settings();
    let probs = predicted_probabilities(rho, &settings).unwrap();
    let mut rng = stream(seed, &[7]);
    let counts = probs.iter().map(|&p| if p * n > 0.0 { Poisson::new(p * n).unwrap().sample(&mut rng) } else { 0.0 }).collect();
    TomographyDataset::new(settings, counts, vec![n; 16]).unwrap()
}

fn assert_physical(rho: &TwoQubitState) {
    let m = *rho.matrix();
    assert!((m.trace().re - 1.0).abs() < 1e-12);
    assert!((m - m.adjoint()).norm() < 1e-14);
    let eig = SymmetricEigen::new(m).eigenvalues;
    assert!(eig.iter().all(|&e| e >= -1e-12), "{eig:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_counts_give_physical_states_and_ascending_likelihood(
        counts in prop::collection::vec(0u32..500, 16),
        exposures in prop::collection::vec(500.0f64..2000.0, 16),
    ) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let d = TomographyDataset::new(canonical_settings(), counts.iter().map(|&c| c as f64).collect(), exposures).unwrap();
        let r = mle_reconstruct(&d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_physical(&r.rho);
        for w in r.history.windows(2) {
            prop_assert!(w[1] >= w[0], "{} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn noiseless_mle_agrees_with_linear_inversion() {
    for rho in [truth(), TwoQubitState::werner(0.4), TwoQubitState::maximally_mixed()] {
        let probs = predicted_probabilities(&rho, &canonical_settings()).unwrap();
        let d = TomographyDataset::new(canonical_settings(), probs.iter().map(|p| 1e5 * p).collect(), vec![1e5; 16]).unwrap();
        let lin = TwoQubitState::new(linear_inversion(&d).unwrap()).unwrap();
        let r = mle_reconstruct(&d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(r.rho.trace_distance(&lin) < 1e-6, "{}", r.rho.trace_distance(&lin));
    }
}

#[test]
fn error_shrinks_with_exposure() {
    let rho = truth();
    let mean_distance = |n: f64| {
        let d = map_indexed(Execution::Parallel, 200, |seed| {
            let r = mle_reconstruct(&poisson_dataset(&rho, n, seed as u64), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            r.rho.trace_distance(&rho)
        });
        d.iter().sum::<f64>() / d.len() as f64
    };
    let (small, large) = (mean_distance(1e4), mean_distance(1e5));
    assert!(small >= 2.0 * large, "{small} vs {large}");
}

#[test]
fn qubit_swap_transposes_the_reconstruction() {
    let swap = swap_operator();
    for seed in 0..5 {
        let d = poisson_dataset(&truth(), 1e5, seed);
        let direct = mle_reconstruct(&d, 1e-15, DEFAULT_MAX_ITER).unwrap();
        let swapped = mle_reconstruct(&d.swapped(), 1e-15, DEFAULT_MAX_ITER).unwrap();
        let expect = swap * direct.rho.matrix() * swap;
        let diff = (swapped.rho.matrix() - expect).norm();
        assert!(diff < 1e-8, "seed {seed}: {diff}");
    }
}

#[test]
fn large_exposure_recovers_bell_and_identity() {
    let bell = psi_gamma(C64::new(1.0, 0.0)).unwrap().density();
    for (rho, bound) in [(bell, 5e-3), (TwoQubitState::maximally_mixed(), 1e-2)] {
        for seed in 0..5 {
            let r = mle_reconstruct(&poisson_dataset(&rho, 1e6, seed), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert!(r.rho.trace_distance(&rho) < bound, "{}", r.rho.trace_distance(&rho));
        }
    }
}

#[test]
fn batch_matches_individual_runs() {
    let sets: Vec<_> = (0..8).map(|s| poisson_dataset(&truth(), 1e4, s)).collect();
    let batch = mle_batch(&sets, DEFAULT_TOL, DEFAULT_MAX_ITER, Execution::Parallel);
    for (d, b) in sets.iter().zip(batch) {
        assert_eq!(mle_reconstruct(d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().rho, b.unwrap().rho);
    }
}
