//! Find the dephasing time that brings the mean reconstructed purity to a
//! target, then print seed statistics at that value.
//!
//! `cargo run --release --example calibrate -- [target] [seeds]`

use oam_entlab::exec::Execution;
use oam_entlab::modes::BasisAnalyzers;
use oam_entlab::pipeline::{calibrate_dephasing_time, seed_sweep};
use oam_entlab::sim::{ExperimentConfig, SimInput};

fn main() -> oam_entlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let target: f64 = args.next().map_or(0.92, |s| s.parse().expect("target"));
    let seeds: usize = args.next().map_or(100, |s| s.parse().expect("seeds"));

    let cfg = ExperimentConfig::paper_defaults();
    let analyzers = BasisAnalyzers::new(cfg.fiber_waist_um, cfg.optics())?;
    let cal = calibrate_dephasing_time(&cfg, &analyzers, target, seeds, Execution::Parallel)?;
    println!("dephasing_time = {:.4} us (mean purity {:.4}, {} evaluations)", cal.dephasing_time, cal.mean_purity, cal.evaluations);

    let tuned = ExperimentConfig { dephasing_time: cal.dephasing_time, ..cfg };
    let source = SimInput::Source(tuned.source()?);
    let runs = seed_sweep(&tuned, &analyzers, &source, tuned.rng_seed, seeds, Execution::Parallel)
        .into_iter()
        .collect::<oam_entlab::Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    let mean = |f: fn(&oam_entlab::pipeline::SeedOutcome) -> f64| runs.iter().map(f).sum::<f64>() / n;
    println!("mean eof   {:.4}", mean(|r| r.eof));
    println!("mean bound {:.4}", mean(|r| r.fidelity_lower_bound));
    Ok(())
}
