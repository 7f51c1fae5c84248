use std::sync::OnceLock;

use nalgebra::SymmetricEigen;
use oam_entlab::exec::{map_indexed, Execution};
use oam_entlab::modes::BasisAnalyzers;
use oam_entlab::sim::*;
use oam_entlab::state::{psi_gamma, MeasBasisState, C64};
use oam_entlab::tomography::canonical_settings;
use proptest::prelude::*;

fn analyzers() -> &'static BasisAnalyzers {
    static A: OnceLock<BasisAnalyzers> = OnceLock::new();
    A.get_or_init(|| {
        let cfg = ExperimentConfig::paper_defaults();
        BasisAnalyzers::new(cfg.fiber_waist_um, cfg.optics()).unwrap()
    })
}

fn source(cfg: &ExperimentConfig) -> SimInput {
    SimInput::Source(cfg.source().unwrap())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn g2_decreases_with_background() {
    let base = ExperimentConfig::paper_defaults();
    let scales = [0.5, 1.0, 1.5, 2.0, 3.0];
    let mut expected = Vec::new();
    let mut simulated = Vec::new();
    for s in scales {
        let cfg = ExperimentConfig {
            background_rate_as: s * base.background_rate_as,
            background_rate_s: s * base.background_rate_s,
            ..base.clone()
        };
        let state = source(&cfg).resolve(&cfg);
        expected.push(expected_g2(&state, &cfg, analyzers()).unwrap());
        let g2s = map_indexed(Execution::Parallel, 100, |seed| {
            let c = ExperimentConfig { rng_seed: seed as u64, ..cfg.clone() };
            let h = simulate_histogram_with(&source(&c), &c, analyzers(), 1000.0, 0).unwrap();
            g2_estimate(&h).unwrap().value
        });
        simulated.push(mean(&g2s));
    }
    for k in 1..scales.len() {
        assert!(expected[k] < expected[k - 1], "{expected:?}");
        assert!(simulated[k] < simulated[k - 1], "{simulated:?}");
    }
}

#[test]
fn coincidences_scale_linearly_with_arm_efficiency() {
    let base = ExperimentConfig { background_rate_as: 0.0, background_rate_s: 0.0, ..ExperimentConfig::paper_defaults() };
    let state = source(&base).resolve(&base);
    let probs = |cfg: &ExperimentConfig, a: MeasBasisState, b: MeasBasisState| {
        let sim = Simulator::with_analyzers(cfg.clone(), analyzers().clone()).unwrap();
        sim.trial_probabilities(&state, &a, &b).unwrap()
    };
    for (a, b) in canonical_settings() {
        let p0 = probs(&base, a, b);
        for k in [0.25, 0.5, 2.0] {
            let as_scaled = ExperimentConfig { transmission_efficiency_as: k * base.transmission_efficiency_as, ..base.clone() };
            let s_scaled = ExperimentConfig { retrieval_and_transmission_s: k * base.retrieval_and_transmission_s, ..base.clone() };
            let pa = probs(&as_scaled, a, b);
            let ps = probs(&s_scaled, a, b);
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1e-300);
            assert!(rel(pa.coincidence(), k * p0.coincidence()), "{a}/{b}");
            assert!(rel(ps.coincidence(), k * p0.coincidence()), "{a}/{b}");
            assert_eq!(pa.singles_s, p0.singles_s);
            assert_eq!(ps.singles_as, p0.singles_as);
        }
    }
}

#[test]
fn identical_seed_gives_identical_output() {
    let cfg = ExperimentConfig { rng_seed: 42, ..ExperimentConfig::paper_defaults() };
    let run = |exec| {
        let mut sim = Simulator::with_analyzers(cfg.clone(), analyzers().clone()).unwrap().execution(exec);
        let t = sim.simulate_counts(&source(&cfg), &canonical_settings()).unwrap();
        let h = sim.simulate_histogram(&source(&cfg), 500.0).unwrap();
        (t, h)
    };
    let (t1, h1) = run(Execution::Parallel);
    let (t2, h2) = run(Execution::Sequential);
    assert_eq!(t1, t2);
    assert_eq!(h1, h2);

    let other = ExperimentConfig { rng_seed: 43, ..cfg.clone() };
    let mut sim = Simulator::with_analyzers(other.clone(), analyzers().clone()).unwrap();
    assert_ne!(sim.simulate_counts(&source(&other), &canonical_settings()).unwrap(), t1);
}

#[test]
fn counts_respect_table_invariants() {
    let cfg = ExperimentConfig { acquisition_time: 10.0, ..ExperimentConfig::paper_defaults() };
    for seed in 0..20 {
        let c = ExperimentConfig { rng_seed: seed, ..cfg.clone() };
        let mut sim = Simulator::with_analyzers(c.clone(), analyzers().clone()).unwrap();
        for row in sim.simulate_counts(&source(&c), &basis_pair_settings()).unwrap().rows {
            assert!(row.coincidences <= row.singles_as.min(row.singles_s));
        }
    }
}

#[test]
fn doubling_duration_doubles_window_means() {
    let cfg = ExperimentConfig::paper_defaults();
    let windows = |duration: f64| -> Vec<f64> {
        let runs = map_indexed(Execution::Parallel, 100, |seed| {
            let c = ExperimentConfig { rng_seed: seed as u64, ..cfg.clone() };
            simulate_histogram_with(&source(&c), &c, analyzers(), duration, 0).unwrap().window_sums()
        });
        (0..runs[0].len()).map(|w| mean(&runs.iter().map(|r| r[w] as f64).collect::<Vec<_>>())).collect()
    };
    let one = windows(1000.0);
    let two = windows(2000.0);
    for (a, b) in one.iter().zip(&two) {
        assert!((b / a - 2.0).abs() < 0.1, "{a} -> {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn effective_state_is_a_density_matrix(
        t in 0.0f64..50.0,
        bg_as in 0.0f64..5000.0,
        bg_s in 0.0f64..5000.0,
        modulus in 0.0f64..4.0,
        phase in -1.0f64..1.0,
    ) {
        let cfg = ExperimentConfig {
            dephasing_time: t,
            background_rate_as: bg_as,
            background_rate_s: bg_s,
            ..ExperimentConfig::paper_defaults()
        };
        let src = psi_gamma(C64::from_polar(modulus, std::f64::consts::PI * phase)).unwrap();
        let rho = effective_state(&cfg, &src);
        let m = *rho.matrix();
        prop_assert!((m.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!((m - m.adjoint()).norm() < 1e-14);
        let eig = SymmetricEigen::new(m).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e > -1e-12), "{eig:?}");
    }

    #[test]
    fn multi_detection_stays_below_weak_excitation_bound(p in 1e-6f64..1e-2, seed_label in 0usize..16) {
        let cfg = ExperimentConfig {
            excitation_probability: p,
            transmission_efficiency_as: 1.0,
            detector_efficiency: 1.0,
            retrieval_and_transmission_s: 1.0,
            background_rate_as: 0.0,
            background_rate_s: 0.0,
            ..ExperimentConfig::paper_defaults()
        };
        let state = source(&cfg).resolve(&cfg);
        let (a, b) = canonical_settings()[seed_label];
        let sim = Simulator::with_analyzers(cfg.clone(), analyzers().clone()).unwrap();
        let tp = sim.trial_probabilities(&state, &a, &b).unwrap();
        prop_assert!(tp.accidental < 10.0 * p * p);
    }
}
