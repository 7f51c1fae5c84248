//! Two-qubit state reconstruction from product-projector coincidence counts.
//!
//! [`linear_inversion`] solves the Born equations directly in the Pauli basis.
//! [`mle_reconstruct`] maximizes the Poisson likelihood over physical states
//! written as `rho = T^dag T / Tr(T^dag T)` with `T` lower-triangular.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::sim::CoincidenceTable;
use crate::state::{born_probability, c, kron2, kron_mat2, matrix_from_pairs, matrix_to_pairs, pauli, Mat4, MeasBasisState, TwoQubitState};

/// Log guard for vanishing predicted probabilities.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 5000;
const RANK_TOL: f64 = 1e-10;
const LBFGS_MEMORY: usize = 8;

/// The 16 settings `{zero, one, plus, u}^2`.
pub fn canonical_settings() -> Vec<(MeasBasisState, MeasBasisState)> {
    use MeasBasisState::*;
    let single = [Zero, One, Plus, U];
    single.iter().flat_map(|&a| single.iter().map(move |&b| (a, b))).collect()
}

/// Projector `|ab><ab|` for a setting.
pub fn projector(setting: &(MeasBasisState, MeasBasisState)) -> Mat4 {
    let v = kron2(&setting.0.amplitudes(), &setting.1.amplitudes());
    v * v.adjoint()
}

fn pauli_product(k: usize) -> Mat4 {
    kron_mat2(&pauli(k / 4), &pauli(k % 4))
}

/// Row `k`: `Tr(P_k sigma_j) / 4`, so that `B r = p` for `rho = sum_j r_j sigma_j / 4`.
fn design_matrix(settings: &[(MeasBasisState, MeasBasisState)]) -> DMatrix<f64> {
    let sigmas: Vec<Mat4> = (0..16).map(pauli_product).collect();
    DMatrix::from_fn(settings.len(), 16, |k, j| (projector(&settings[k]) * sigmas[j]).trace().re / 4.0)
}

/// Counts and exposures over an informationally complete set of settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyDataset {
    settings: Vec<(MeasBasisState, MeasBasisState)>,
    counts: Vec<f64>,
    exposures: Vec<f64>,
    gram_condition: f64,
}

/// How counts and exposures are read off a coincidence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureModel {
    /// Trials per second of acquisition.
    pub repetition_rate: f64,
    /// Remove the singles-predicted accidental coincidences from each row.
    pub subtract_accidentals: bool,
}

impl TomographyDataset {
    pub fn new(settings: Vec<(MeasBasisState, MeasBasisState)>, counts: Vec<f64>, exposures: Vec<f64>) -> Result<Self> {
        if settings.len() != counts.len() || settings.len() != exposures.len() {
            return Err(invalid("dataset", "settings, counts and exposures differ in length"));
        }
        if counts.iter().chain(&exposures).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("dataset", "counts and exposures must be finite and >= 0"));
        }
        let sv = design_matrix(&settings).singular_values();
        let max = sv.max();
        let rank = sv.iter().filter(|&&s| s > RANK_TOL * max.max(f64::MIN_POSITIVE)).count();
        if rank < 16 {
            return Err(Error::SingularGram { rank });
        }
        let gram_condition = max / sv.min();
        Ok(Self { settings, counts, exposures, gram_condition })
    }

    /// Exact expected frequencies of `rho` with unit exposure per setting.
    pub fn from_probabilities(rho: &TwoQubitState, settings: Vec<(MeasBasisState, MeasBasisState)>) -> Result<Self> {
        let counts = predicted_probabilities(rho, &settings)?;
        let exposures = vec![1.0; settings.len()];
        Self::new(settings, counts, exposures)
    }

    pub fn from_table(table: &CoincidenceTable, model: &ExposureModel) -> Result<Self> {
        if !(model.repetition_rate > 0.0 && model.repetition_rate.is_finite()) {
            return Err(invalid("repetition_rate", "must be finite and > 0"));
        }
        let mut settings = Vec::with_capacity(table.rows.len());
        let mut counts = Vec::with_capacity(table.rows.len());
        let mut exposures = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let trials = row.duration * model.repetition_rate;
            let mut n = row.coincidences as f64;
            if model.subtract_accidentals && trials > 0.0 {
                n = (n - row.singles_as as f64 * row.singles_s as f64 / trials).max(0.0);
            }
            settings.push((row.setting_as, row.setting_s));
            counts.push(n);
            exposures.push(trials);
        }
        Self::new(settings, counts, exposures)
    }

    pub fn settings(&self) -> &[(MeasBasisState, MeasBasisState)] {
        &self.settings
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    /// Same data with the two qubits relabelled.
    pub fn swapped(&self) -> Self {
        Self { settings: self.settings.iter().map(|&(a, b)| (b, a)).collect(), ..self.clone() }
    }

    /// Same settings and exposures with new counts.
    pub fn with_counts(&self, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != self.counts.len() || counts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("counts", "length mismatch or negative entry"));
        }
        Ok(Self { counts, ..self.clone() })
    }

    fn is_degenerate(&self) -> bool {
        self.counts.iter().zip(&self.exposures).all(|(n, e)| *n == 0.0 || *e == 0.0)
    }
}

fn hermitian_part(m: &Mat4) -> Mat4 {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Least-squares solution of `Tr(P_k rho) = f_k`, scaled to unit trace.
pub fn linear_inversion(dataset: &TomographyDataset) -> Result<Mat4> {
    if dataset.is_degenerate() {
        return Err(Error::DegenerateData);
    }
    let b = design_matrix(&dataset.settings);
    let f = DVector::from_iterator(
        dataset.counts.len(),
        dataset.counts.iter().zip(&dataset.exposures).map(|(n, e)| if *e > 0.0 { n / e } else { 0.0 }),
    );
    let r = b.svd(true, true).solve(&f, RANK_TOL).map_err(|e| invalid("linear_inversion", e))?;
    let mut m = Mat4::zeros();
    for j in 0..16 {
        m += pauli_product(j) * c(r[j] / 4.0, 0.0);
    }
    let tr = m.trace().re;
    if tr.abs() < f64::EPSILON {
        return Err(Error::DegenerateData);
    }
    Ok(hermitian_part(&(m / c(tr, 0.0))))
}

/// Clip negative eigenvalues and renormalize.
pub fn project_psd(m: &Mat4) -> Result<TwoQubitState> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Err(Error::NonPhysical("no positive eigenvalue".into()));
    }
    let mut out = Mat4::zeros();
    for (k, v) in vals.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        out += col * col.adjoint() * c(v / total, 0.0);
    }
    TwoQubitState::new(hermitian_part(&out))
}

pub fn predicted_probabilities(rho: &TwoQubitState, settings: &[(MeasBasisState, MeasBasisState)]) -> Result<Vec<f64>> {
    settings.iter().map(|(a, b)| born_probability(rho, a, b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub rho: TwoQubitState,
    /// Poisson log-likelihood at the fitted overall detection scale.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gram_condition: f64,
    /// Objective after every accepted step, starting from the initializer.
    pub history: Vec<f64>,
}

/// Serialized form of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub matrix: Vec<[f64; 2]>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ReconstructionRecord {
    pub fn state(&self) -> Result<TwoQubitState> {
        TwoQubitState::new(matrix_from_pairs(4, &self.matrix)?)
    }
}

impl ReconstructionResult {
    pub fn record(&self) -> ReconstructionRecord {
        ReconstructionRecord {
            matrix: matrix_to_pairs(self.rho.matrix()),
            log_likelihood: self.log_likelihood,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// Parameter vector layout: 4 real diagonal entries, then real and imaginary
/// parts of the 6 strictly-lower entries.
fn lower_indices() -> impl Iterator<Item = (usize, usize)> {
    (1..4).flat_map(|i| (0..i).map(move |j| (i, j)))
}

fn unpack(x: &DVector<f64>) -> Mat4 {
    let mut t = Mat4::zeros();
    for i in 0..4 {
        t[(i, i)] = c(x[i], 0.0);
    }
    for (k, (i, j)) in lower_indices().enumerate() {
        t[(i, j)] = c(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

fn pack(t: &Mat4) -> DVector<f64> {
    let mut x = DVector::zeros(16);
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (k, (i, j)) in lower_indices().enumerate() {
        x[4 + 2 * k] = t[(i, j)].re;
        x[5 + 2 * k] = t[(i, j)].im;
    }
    x
}

/// Lower-triangular `T` with `T^dag T = rho` for positive-definite `rho`.
fn reverse_cholesky(rho: &Mat4) -> Result<Mat4> {
    // J rho J = L L^dag with J the exchange matrix; then T = J L^dag J.
    let j = |m: &Mat4| Mat4::from_fn(|r, s| m[(3 - r, 3 - s)]);
    let l = nalgebra::Cholesky::new(j(rho)).ok_or_else(|| Error::NonPhysical("initializer not positive definite".into()))?;
    Ok(j(&l.l().adjoint()))
}

struct Objective<'a> {
    projectors: Vec<Mat4>,
    data: &'a TomographyDataset,
    total: f64,
}

impl<'a> Objective<'a> {
    fn new(data: &'a TomographyDataset) -> Self {
        Self { projectors: data.settings.iter().map(projector).collect(), data, total: data.counts.iter().sum() }
    }

    fn rho(t: &Mat4) -> Mat4 {
        let a = t.adjoint() * t;
        hermitian_part(&(a / c(a.trace().re, 0.0)))
    }

    fn probabilities(&self, rho: &Mat4) -> Vec<f64> {
        self.projectors.iter().map(|p| (p * rho).trace().re.max(PROBABILITY_FLOOR)).collect()
    }

    fn expected_total(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.data.exposures).map(|(p, e)| p * e).sum()
    }

    /// Profile likelihood `sum n log p - S log(sum N p)` less its saturated
    /// value. With `r = S N p / (n Q)` the linear terms sum to zero, leaving
    /// `-sum n (r - 1 - ln r)` plus the expected share of zero-count rows,
    /// which stays accurate near the optimum.
    fn value_at(&self, rho: &Mat4) -> f64 {
        let p = self.probabilities(rho);
        let q = self.expected_total(&p);
        let mut l = 0.0;
        let mut empty = 0.0;
        for ((n, e), p) in self.data.counts.iter().zip(&self.data.exposures).zip(&p) {
            if *n > 0.0 {
                let u = self.total * e * p / (n * q) - 1.0;
                l -= n * (u - u.ln_1p());
            } else {
                empty += e * p;
            }
        }
        l - self.total * empty / q
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_at(&Self::rho(&unpack(x)))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = unpack(x);
        let a = t.adjoint() * t;
        let tr = a.trace().re;
        let rho = hermitian_part(&(a / c(tr, 0.0)));
        let p = self.probabilities(&rho);
        let scale = self.total / self.expected_total(&p);
        let mut r = Mat4::zeros();
        for ((proj, n), (p, e)) in self.projectors.iter().zip(&self.data.counts).zip(p.iter().zip(&self.data.exposures)) {
            r += proj * c(n / p - scale * e, 0.0);
        }
        let g = (r - Mat4::identity() * (r * rho).trace()) / c(tr, 0.0);
        let m = t * g * c(2.0, 0.0);
        pack(&m)
    }

    /// Full Poisson log-likelihood with the detection scale at its optimum.
    fn full_log_likelihood(&self, rho: &Mat4) -> f64 {
        let p = self.probabilities(rho);
        let s = self.total / self.expected_total(&p);
        self.data
            .counts
            .iter()
            .zip(&self.data.exposures)
            .zip(&p)
            .map(|((n, e), p)| {
                let mu = s * e * p;
                let log_term = if *n > 0.0 { n * mu.max(PROBABILITY_FLOOR).ln() } else { 0.0 };
                log_term - mu
            })
            .sum()
    }
}

/// Maximum-likelihood reconstruction started from the PSD-projected linear inversion.
pub fn mle_reconstruct(dataset: &TomographyDataset, tol: f64, max_iter: usize) -> Result<ReconstructionResult> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tol", "must be > 0"));
    }
    if dataset.is_degenerate() {
        return Err(Error::DegenerateData);
    }
    let start = project_psd(&linear_inversion(dataset)?)?;
    let mixed = TwoQubitState::mix(&TwoQubitState::maximally_mixed(), &start, 1e-3);
    let obj = Objective::new(dataset);
    let mut x = pack(&reverse_cholesky(mixed.matrix())?);
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut history = vec![f];
    let mut memory: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        // ascent direction from the two-loop recursion on -f
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * s.dot(&q);
            q -= y * a;
            alphas.push(a);
        }
        let gamma = memory.back().map(|(s, y, _)| s.dot(y) / y.dot(y)).unwrap_or(1.0 / g.norm().max(1e-300));
        let mut d = q * gamma;
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&d);
            d += s * (a - b);
        }
        let mut slope = g.dot(&d);
        if slope.is_nan() || slope <= 0.0 {
            memory.clear();
            d = g.clone() / g.norm().max(1e-300);
            slope = g.dot(&d);
        }
        if slope.is_nan() || slope <= 0.0 {
            converged = true;
            break;
        }
        let predicted = 0.5 * slope;

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let xn = &x + &d * step;
            let fn_ = obj.value(&xn);
            if fn_.is_finite() && fn_ >= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            // no ascent left at working precision
            converged = true;
            break;
        };
        let gn = obj.gradient(&xn);
        // curvature pair for minimizing -f
        let s = &xn - &x;
        let y = &g - &gn;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if memory.len() == LBFGS_MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let change = (fn_ - f).abs();
        x = xn;
        f = fn_;
        g = gn;
        history.push(f);
        let scale = f.abs().max(1.0);
        if change <= tol * scale && predicted <= tol * scale {
            converged = true;
            break;
        }
    }

    let rho_m = Objective::rho(&unpack(&x));
    let rho = TwoQubitState::new(rho_m)?;
    Ok(ReconstructionResult {
        log_likelihood: obj.full_log_likelihood(&rho_m),
        rho,
        iterations,
        converged,
        gram_condition: dataset.gram_condition,
        history,
    })
}

/// Reconstruct many datasets, one independent MLE per entry.
pub fn mle_batch(datasets: &[TomographyDataset], tol: f64, max_iter: usize, exec: Execution) -> Vec<Result<ReconstructionResult>> {
    map_indexed(exec, datasets.len(), |k| mle_reconstruct(&datasets[k], tol, max_iter))
}
