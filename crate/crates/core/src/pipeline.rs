//! Simulate-reconstruct-analyze chains over seeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::metrics::{entanglement_of_formation, fidelity_lower_bound, WitnessInput};
use crate::modes::BasisAnalyzers;
use crate::sim::{basis_pair_settings, CoincidenceTable, ExperimentConfig, SimInput, Simulator};
use crate::state::purity;
use crate::tomography::{canonical_settings, mle_reconstruct, ExposureModel, ReconstructionResult, TomographyDataset};

/// Tables of one simulated run: the 16 tomography settings and the 12
/// three-basis settings the witness reads from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTables {
    pub tomography: CoincidenceTable,
    pub bases: CoincidenceTable,
}

pub fn exposure_model(config: &ExperimentConfig) -> ExposureModel {
    ExposureModel { repetition_rate: config.repetition_rate, subtract_accidentals: true }
}

/// Two simulate calls on `sim`: tomography first, then the basis table.
pub fn simulate_run(sim: &mut Simulator, input: &SimInput) -> Result<RunTables> {
    let tomography = sim.simulate_counts(input, &canonical_settings())?;
    let bases = sim.simulate_counts(input, &basis_pair_settings())?;
    Ok(RunTables { tomography, bases })
}

pub fn dataset(tables: &RunTables, config: &ExperimentConfig) -> Result<TomographyDataset> {
    TomographyDataset::from_table(&tables.tomography, &exposure_model(config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub purity: f64,
    pub eof: f64,
    pub fidelity_lower_bound: f64,
    pub converged: bool,
}

/// Simulate and reconstruct one seed.
pub fn run_seed(
    config: &ExperimentConfig,
    analyzers: &BasisAnalyzers,
    input: &SimInput,
    seed: u64,
) -> Result<(SeedOutcome, ReconstructionResult)> {
    let cfg = ExperimentConfig { rng_seed: seed, ..config.clone() };
    let mut sim = Simulator::with_analyzers(cfg.clone(), analyzers.clone())?.execution(Execution::Sequential);
    let tables = simulate_run(&mut sim, input)?;
    let recon = mle_reconstruct(&dataset(&tables, &cfg)?, crate::tomography::DEFAULT_TOL, crate::tomography::DEFAULT_MAX_ITER)?;
    let bound = fidelity_lower_bound(&WitnessInput::from_table(&tables.bases)?)?.value;
    let outcome = SeedOutcome {
        seed,
        purity: purity(&recon.rho),
        eof: entanglement_of_formation(&recon.rho),
        fidelity_lower_bound: bound,
        converged: recon.converged,
    };
    Ok((outcome, recon))
}

/// [`run_seed`] for seeds `first..first + n`, in seed order.
pub fn seed_sweep(
    config: &ExperimentConfig,
    analyzers: &BasisAnalyzers,
    input: &SimInput,
    first: u64,
    n: usize,
    exec: Execution,
) -> Vec<Result<SeedOutcome>> {
    map_indexed(exec, n, |k| run_seed(config, analyzers, input, first + k as u64).map(|r| r.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// us
    pub dephasing_time: f64,
    pub mean_purity: f64,
    pub evaluations: usize,
}

fn mean_purity(config: &ExperimentConfig, analyzers: &BasisAnalyzers, seeds: usize, exec: Execution) -> Result<f64> {
    let source = SimInput::Source(config.source()?);
    let runs: Vec<SeedOutcome> = seed_sweep(config, analyzers, &source, config.rng_seed, seeds, exec).into_iter().collect::<Result<_>>()?;
    Ok(runs.iter().map(|r| r.purity).sum::<f64>() / runs.len() as f64)
}

/// Dephasing time (us) at which the reconstructed purity, averaged over
/// `seeds` runs, equals `target`. Bisection in `ln T` on `[0.01, 1e4]` us;
/// every evaluation reuses the same seeds.
pub fn calibrate_dephasing_time(
    config: &ExperimentConfig,
    analyzers: &BasisAnalyzers,
    target: f64,
    seeds: usize,
    exec: Execution,
) -> Result<Calibration> {
    let at = |t: f64| mean_purity(&ExperimentConfig { dephasing_time: t, ..config.clone() }, analyzers, seeds, exec);
    let (mut lo, mut hi) = (0.01f64.ln(), 1e4f64.ln());
    let (p_lo, p_hi) = (at(lo.exp())?, at(hi.exp())?);
    if !(p_lo <= target && target <= p_hi) {
        return Err(Error::CalibrationUnreachable { target, lo: p_lo, hi: p_hi });
    }
    let mut evaluations = 2;
    let mut best = (hi.exp(), p_hi);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let p = at(mid.exp())?;
        evaluations += 1;
        if (p - target).abs() < (best.1 - target).abs() {
            best = (mid.exp(), p);
        }
        if (p - target).abs() < 1e-4 || hi - lo < 1e-4 {
            break;
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration { dephasing_time: best.0, mean_purity: best.1, evaluations })
}
