//! Entanglement figures of merit and their Poisson error bars.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::stream;
use crate::sim::CoincidenceTable;
use crate::state::{c, kron_mat2, pauli, psi_gamma, purity, MeasBasisState, TwoQubitState, C64};
use crate::tomography::{mle_reconstruct, ReconstructionResult, TomographyDataset};

/// Entanglement threshold of the fidelity bound.
pub const WITNESS_THRESHOLD: f64 = 0.5;
pub const DEFAULT_GAMMA_MAX: f64 = 4.0;
pub const MIN_RESAMPLES: usize = 100;
const BOOTSTRAP_STREAM: u64 = 0xB007;

/// Eigenvalues of `rho` below this are treated as exact zeros.
const RANK_FLOOR: f64 = 1e-13;

/// Wootters concurrence.
///
/// With `rho = sum_i |v_i><v_i|` over subnormalized eigenvectors, the
/// square roots of the eigenvalues of `rho rho~` are the singular values of
/// `tau_ij = v_i^T (Y x Y) v_j`. Working on the support of `rho` keeps
/// rank-deficient states free of square-rooted round-off.
pub fn concurrence(state: &TwoQubitState) -> f64 {
    let yy = kron_mat2(&pauli(2), &pauli(2));
    let eig = SymmetricEigen::new(*state.matrix());
    let support: Vec<_> = (0..4)
        .filter(|&k| eig.eigenvalues[k] > RANK_FLOOR)
        .map(|k| eig.eigenvectors.column(k) * c(eig.eigenvalues[k].sqrt(), 0.0))
        .collect();
    if support.len() < 2 {
        // a pure state: tau is the single number v^T Y v
        return support.first().map_or(0.0, |v| (v.transpose() * yy * v)[(0, 0)].norm().min(1.0));
    }
    let n = support.len();
    let tau = DMatrix::from_fn(n, n, |i, j| (support[i].transpose() * yy * support[j])[(0, 0)]);
    let mut l: Vec<f64> = tau.singular_values().iter().copied().collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1..].iter().sum::<f64>()).clamp(0.0, 1.0)
}

fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

pub fn eof_from_concurrence(conc: f64) -> f64 {
    if conc <= 0.0 {
        return 0.0;
    }
    binary_entropy(0.5 * (1.0 + (1.0 - conc * conc).max(0.0).sqrt()))
}

pub fn entanglement_of_formation(state: &TwoQubitState) -> f64 {
    eof_from_concurrence(concurrence(state))
}

/// Coincidences in the two superposition bases.
///
/// `table_c[i][j]` holds `(plus, minus)[i] x (plus, minus)[j]`; `table_d`
/// likewise over `(u, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessInput {
    pub table_c: [[f64; 2]; 2],
    pub table_d: [[f64; 2]; 2],
}

pub const WITNESS_SETTINGS: [(MeasBasisState, MeasBasisState); 8] = {
    use MeasBasisState::*;
    [(Plus, Plus), (Plus, Minus), (Minus, Plus), (Minus, Minus), (U, U), (U, D), (D, U), (D, D)]
};

impl WitnessInput {
    pub fn new(table_c: [[f64; 2]; 2], table_d: [[f64; 2]; 2]) -> Result<Self> {
        if table_c.iter().chain(&table_d).flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("witness", "counts must be finite and >= 0"));
        }
        Ok(Self { table_c, table_d })
    }

    pub fn from_table(table: &CoincidenceTable) -> Result<Self> {
        let get = |a, b| {
            table
                .find(&a, &b)
                .map(|r| r.coincidences as f64)
                .ok_or(Error::EmptyTable(if a == MeasBasisState::Plus || a == MeasBasisState::Minus { "table_c" } else { "table_d" }))
        };
        let mut counts = [0.0; 8];
        for (k, (a, b)) in WITNESS_SETTINGS.iter().enumerate() {
            counts[k] = get(*a, *b)?;
        }
        Self::from_counts(&counts)
    }

    /// Counts in [`WITNESS_SETTINGS`] order.
    pub fn counts(&self) -> [f64; 8] {
        let (c, d) = (self.table_c, self.table_d);
        [c[0][0], c[0][1], c[1][0], c[1][1], d[0][0], d[0][1], d[1][0], d[1][1]]
    }

    pub fn from_counts(n: &[f64]) -> Result<Self> {
        if n.len() != 8 {
            return Err(invalid("witness", "expected 8 counts"));
        }
        Self::new([[n[0], n[1]], [n[2], n[3]]], [[n[4], n[5]], [n[6], n[7]]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessResult {
    pub value: f64,
    pub stderr: f64,
    /// Correlated fraction in the plus/minus basis.
    pub p: f64,
    /// Correlated fraction in the u/d basis.
    pub q: f64,
    pub entangled: bool,
}

/// Lower bound `p + q - 1` on the fidelity with the maximally entangled target.
///
/// The atomic qubit's `|1>` is the conjugate OAM excitation, so its u/d
/// analyzer labels are mirrored: `p` counts `(plus, plus)` and
/// `(minus, minus)`, while `q` counts `(u, d)` and `(d, u)`.
pub fn fidelity_lower_bound(input: &WitnessInput) -> Result<WitnessResult> {
    let tc = input.table_c;
    let td = input.table_d;
    let nc: f64 = tc.iter().flatten().sum();
    let nd: f64 = td.iter().flatten().sum();
    if nc <= 0.0 {
        return Err(Error::EmptyTable("table_c"));
    }
    if nd <= 0.0 {
        return Err(Error::EmptyTable("table_d"));
    }
    let p = (tc[0][0] + tc[1][1]) / nc;
    let q = (td[0][1] + td[1][0]) / nd;
    let value = p + q - 1.0;
    let stderr = (p * (1.0 - p) / nc + q * (1.0 - q) / nd).sqrt();
    Ok(WitnessResult { value, stderr, p, q, entangled: value > WITNESS_THRESHOLD })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureFit {
    /// `None` is the `|gamma| -> infinity` limit `|1>|1>`.
    pub gamma: Option<C64>,
    pub fidelity: f64,
}

fn psi_fidelity(state: &TwoQubitState, g: C64) -> f64 {
    let m = state.matrix();
    (m[(0, 0)].re + 2.0 * (g * m[(0, 3)]).re + g.norm_sqr() * m[(3, 3)].re) / (1.0 + g.norm_sqr())
}

/// Maximize `<Psi(gamma)|rho|Psi(gamma)>` over `|gamma| <= gamma_max`.
///
/// Polar grid (modulus step 0.01, phase step pi/100), then a compass search
/// in the complex plane down to 1e-5. On a flat objective the first grid
/// point, `gamma = 0`, is returned.
pub fn best_pure_fit(state: &TwoQubitState, gamma_max: f64) -> Result<PureFit> {
    if !(gamma_max >= 2.0 && gamma_max.is_finite()) {
        return Err(invalid("gamma_max", "must be finite and >= 2"));
    }
    let n_mod = (gamma_max / 0.01).round() as usize;
    let mut best = (C64::new(0.0, 0.0), psi_fidelity(state, C64::new(0.0, 0.0)));
    for i in 1..=n_mod {
        let r = i as f64 * 0.01;
        for k in 0..200 {
            let g = C64::from_polar(r, k as f64 * PI / 100.0);
            let f = psi_fidelity(state, g);
            if f > best.1 {
                best = (g, f);
            }
        }
    }
    let mut step = 0.01;
    while step > 1e-5 {
        let mut moved = false;
        for d in [C64::new(step, 0.0), C64::new(-step, 0.0), C64::new(0.0, step), C64::new(0.0, -step)] {
            let g = best.0 + d;
            if g.norm() <= gamma_max {
                let f = psi_fidelity(state, g);
                if f > best.1 {
                    best = (g, f);
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let limit = state.matrix()[(3, 3)].re;
    if limit > best.1 + 1e-12 {
        return Ok(PureFit { gamma: None, fidelity: limit });
    }
    Ok(PureFit { gamma: Some(best.0), fidelity: best.1 })
}

/// EOF of `Psi(gamma)` for a fit result.
pub fn eof_of_fit(fit: &PureFit) -> Result<f64> {
    match fit.gamma {
        Some(g) => Ok(entanglement_of_formation(&psi_gamma(g)?.density())),
        None => Ok(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub stderr: Vec<f64>,
    pub resamples: usize,
    pub failures: usize,
}

/// Parametric bootstrap: redraw every count as Poisson around its observed
/// value, rerun `pipeline`, report the sample standard deviation per output.
///
/// Resample `i` uses the RNG stream `(seed, [BOOTSTRAP_STREAM, i])`.
pub fn bootstrap_errors<F>(counts: &[f64], n_resamples: usize, seed: u64, exec: Execution, pipeline: F) -> Result<BootstrapSummary>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    if n_resamples < MIN_RESAMPLES {
        return Err(invalid("n_resamples", format!("need >= {MIN_RESAMPLES}")));
    }
    let runs = map_indexed(exec, n_resamples, |i| {
        let mut rng = stream(seed, &[BOOTSTRAP_STREAM, i as u64]);
        let draw: Vec<f64> =
            counts.iter().map(|&n| if n > 0.0 { Poisson::new(n).map(|d| d.sample(&mut rng)).unwrap_or(0.0) } else { 0.0 }).collect();
        pipeline(&draw)
    });
    let ok: Vec<Vec<f64>> = runs.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let failures = n_resamples - ok.len();
    if ok.len() < 2 {
        return Err(invalid("bootstrap", format!("{failures} of {n_resamples} resamples failed")));
    }
    let width = ok[0].len();
    let stderr = (0..width)
        .map(|j| {
            let n = ok.len() as f64;
            let mean = ok.iter().map(|v| v[j]).sum::<f64>() / n;
            (ok.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapSummary { stderr, resamples: n_resamples, failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaJson {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fidelity_lower_bound: f64,
    pub fidelity_lower_bound_stderr: f64,
    pub eof: f64,
    pub eof_stderr: f64,
    pub purity: f64,
    pub purity_stderr: f64,
    /// `null` for the `|gamma| -> infinity` limit.
    pub gamma_best: Option<GammaJson>,
    pub fidelity_at_gamma_best: f64,
    pub eof_of_pure_fit: f64,
    pub bootstrap_resamples: usize,
    pub bootstrap_failures: usize,
}

impl MetricReport {
    pub fn entangled(&self) -> bool {
        self.fidelity_lower_bound > WITNESS_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub gamma_max: f64,
    pub resamples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            tol: crate::tomography::DEFAULT_TOL,
            max_iter: crate::tomography::DEFAULT_MAX_ITER,
            gamma_max: DEFAULT_GAMMA_MAX,
            resamples: 1000,
            seed: 0,
            exec: Execution::available(),
        }
    }
}

/// Point estimates `[bound, eof, purity]` for one dataset and witness.
pub fn point_metrics(dataset: &TomographyDataset, witness: &WitnessInput, options: &ReportOptions) -> Result<[f64; 3]> {
    let rho = mle_reconstruct(dataset, options.tol, options.max_iter)?.rho;
    let bound = fidelity_lower_bound(witness)?.value;
    Ok([bound, entanglement_of_formation(&rho), purity(&rho)])
}

/// Reconstruct, evaluate every metric, and attach bootstrap errors.
pub fn full_report(
    dataset: &TomographyDataset,
    witness: &WitnessInput,
    options: &ReportOptions,
) -> Result<(MetricReport, ReconstructionResult)> {
    let recon = mle_reconstruct(dataset, options.tol, options.max_iter)?;
    let rho = &recon.rho;
    let bound = fidelity_lower_bound(witness)?;
    let fit = best_pure_fit(rho, options.gamma_max)?;

    let mut counts = dataset.counts().to_vec();
    counts.extend_from_slice(&witness.counts());
    let split = dataset.counts().len();
    let boot = bootstrap_errors(&counts, options.resamples, options.seed, options.exec, |draw| {
        let d = dataset.with_counts(draw[..split].to_vec())?;
        let w = WitnessInput::from_counts(&draw[split..])?;
        let single = ReportOptions { exec: Execution::Sequential, ..*options };
        Ok(point_metrics(&d, &w, &single)?.to_vec())
    })?;

    let report = MetricReport {
        fidelity_lower_bound: bound.value,
        fidelity_lower_bound_stderr: boot.stderr[0],
        eof: entanglement_of_formation(rho),
        eof_stderr: boot.stderr[1],
        purity: purity(rho),
        purity_stderr: boot.stderr[2],
        gamma_best: fit.gamma.map(|g| GammaJson { re: g.re, im: g.im }),
        fidelity_at_gamma_best: fit.fidelity,
        eof_of_pure_fit: eof_of_fit(&fit)?,
        bootstrap_resamples: boot.resamples,
        bootstrap_failures: boot.failures,
    };
    Ok((report, recon))
}
