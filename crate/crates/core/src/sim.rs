//! Forward model of the coincidence experiment.
//!
//! Per trial (one write/read cycle) the source emits a pair into the
//! two-mode subspace with probability `p`. The pair's joint state is the
//! source after atomic dephasing over the storage delay. Each arm detects
//! through its analyzer with a lumped efficiency; uncorrelated detections
//! (background counts and multi-pair events) give an accidental floor equal
//! to the product of the two per-trial singles probabilities.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::modes::{analyzer_state, AnalysisOptics, AnalyzerSetting, BasisAnalyzers, PAPER_FIBER_WAIST_UM};
use crate::rng::stream;
use crate::state::{born_probability, psi_gamma, MeasBasisState, PureTwoQubit, TwoQubitState, C64};

/// Experiment parameters. Field names are the keys of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Pair-emission probability per trial into the analysed LG modes.
    pub excitation_probability: f64,
    /// Ensemble-to-detector transmission of the anti-Stokes arm.
    #[serde(rename = "transmission_efficiency_AS")]
    pub transmission_efficiency_as: f64,
    pub detector_efficiency: f64,
    /// Lumped Stokes-arm retrieval and transmission (detector efficiency applied on top).
    #[serde(rename = "retrieval_and_transmission_S")]
    pub retrieval_and_transmission_s: f64,
    /// Effective trials per second (duty cycle already folded in).
    pub repetition_rate: f64,
    /// Metadata only.
    pub duty_cycle: f64,
    /// Storage delay, ns.
    pub delay_dt: f64,
    /// Atomic coherence time, us.
    pub dephasing_time: f64,
    /// Background counts per second.
    #[serde(rename = "background_rate_AS")]
    pub background_rate_as: f64,
    #[serde(rename = "background_rate_S")]
    pub background_rate_s: f64,
    /// Per-setting acquisition, s.
    pub acquisition_time: f64,
    pub rng_seed: u64,

    /// Source state `psi(gamma)` with `gamma = gamma_modulus * exp(i pi gamma_phase_pi)`.
    pub gamma_modulus: f64,
    pub gamma_phase_pi: f64,
    pub fiber_waist_um: f64,
    pub analysis_waist_um: f64,
    pub quadrature_nodes: usize,
    /// Apply the radial-mismatch perturbation on diagonal-OAM pairs.
    pub radial_mismatch: bool,
    /// Start-stop histogram geometry.
    pub trial_period_ns: f64,
    pub histogram_bin_ns: f64,
    pub histogram_windows: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

impl ExperimentConfig {
    /// Apparatus values of the experiment; the Stokes efficiency and the two
    /// background rates are calibrated so that the `(zero, zero)` channel
    /// gives 3.1e2 anti-Stokes singles/s, 2.0 coincidences/s and g2 = 22.2.
    pub fn paper_defaults() -> Self {
        Self {
            excitation_probability: 6.6e-3,
            transmission_efficiency_as: 0.17,
            detector_efficiency: 0.62,
            retrieval_and_transmission_s: 0.015_23,
            repetition_rate: 4.5e5,
            duty_cycle: 0.5,
            delay_dt: 100.0,
            dephasing_time: 5.0,
            background_rate_as: 107.7,
            background_rate_s: 112.7,
            acquisition_time: 100.0,
            rng_seed: 1,
            gamma_modulus: 0.74,
            gamma_phase_pi: 0.11,
            fiber_waist_um: PAPER_FIBER_WAIST_UM,
            analysis_waist_um: crate::modes::DEFAULT_ANALYSIS_WAIST_UM,
            quadrature_nodes: crate::modes::DEFAULT_NODES,
            radial_mismatch: true,
            trial_period_ns: 1000.0,
            histogram_bin_ns: 1.6,
            histogram_windows: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &'static str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} not in (0, 1]")))
            }
        };
        if !(0.0..=crate::state::MAX_EXCITATION_PROBABILITY).contains(&self.excitation_probability) {
            return Err(invalid("excitation_probability", "single-excitation regime requires <= 0.1"));
        }
        prob("transmission_efficiency_AS", self.transmission_efficiency_as)?;
        prob("detector_efficiency", self.detector_efficiency)?;
        prob("retrieval_and_transmission_S", self.retrieval_and_transmission_s)?;
        prob("duty_cycle", self.duty_cycle)?;
        let nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} must be >= 0")))
            }
        };
        nonneg("background_rate_AS", self.background_rate_as)?;
        nonneg("background_rate_S", self.background_rate_s)?;
        nonneg("delay_dt", self.delay_dt)?;
        nonneg("dephasing_time", self.dephasing_time)?;
        nonneg("acquisition_time", self.acquisition_time)?;
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} must be finite and > 0")))
            }
        };
        pos("repetition_rate", self.repetition_rate)?;
        pos("fiber_waist_um", self.fiber_waist_um)?;
        pos("analysis_waist_um", self.analysis_waist_um)?;
        pos("trial_period_ns", self.trial_period_ns)?;
        pos("histogram_bin_ns", self.histogram_bin_ns)?;
        if !self.acquisition_time.is_finite() {
            return Err(Error::NonFinite("acquisition_time"));
        }
        if !(self.gamma_modulus.is_finite() && self.gamma_phase_pi.is_finite()) {
            return Err(Error::NonFinite("gamma"));
        }
        if self.histogram_windows < 3 {
            return Err(invalid("histogram_windows", "need >= 3 off-peak windows per side"));
        }
        if self.delay_dt >= self.trial_period_ns {
            return Err(invalid("delay_dt", "must fit inside one trial period"));
        }
        Ok(())
    }

    pub fn gamma(&self) -> C64 {
        C64::from_polar(self.gamma_modulus, PI * self.gamma_phase_pi)
    }

    pub fn source(&self) -> Result<PureTwoQubit> {
        psi_gamma(self.gamma())
    }

    pub fn optics(&self) -> AnalysisOptics {
        AnalysisOptics {
            analysis_waist_um: self.analysis_waist_um,
            radial_nodes: self.quadrature_nodes,
            angular_nodes: self.quadrature_nodes,
        }
    }

    /// Overall anti-Stokes detection efficiency.
    pub fn efficiency_as(&self) -> f64 {
        self.transmission_efficiency_as * self.detector_efficiency
    }

    /// Overall Stokes detection efficiency.
    pub fn efficiency_s(&self) -> f64 {
        self.retrieval_and_transmission_s * self.detector_efficiency
    }

    /// Coherence factor `exp(-dt / T)` surviving the storage delay.
    pub fn coherence_factor(&self) -> f64 {
        let ratio = (self.delay_dt * 1e-3) / self.dephasing_time;
        if ratio.is_nan() {
            // 0/0: no delay and instantaneous dephasing
            0.0
        } else {
            (-ratio).exp()
        }
    }
}

/// Phase damping on the atomic qubit: coherences between atomic `|0>` and
/// `|1>` are multiplied by `1 - lambda`, `lambda = 1 - exp(-dt/T)`.
///
/// Kraus pair `sqrt(1 - lambda/2) I`, `sqrt(lambda/2) Z` on the second factor.
pub fn dephase(state: &TwoQubitState, lambda: f64) -> TwoQubitState {
    let keep = 1.0 - lambda;
    let mut m = *state.matrix();
    for r in 0..4 {
        for col in 0..4 {
            if r % 2 != col % 2 {
                m[(r, col)] *= keep;
            }
        }
    }
    TwoQubitState::from_matrix_unchecked(m)
}

pub fn dephased_state(config: &ExperimentConfig, source: &PureTwoQubit) -> TwoQubitState {
    dephase(&source.density(), 1.0 - config.coherence_factor())
}

/// Weight of white noise equivalent to background-induced accidentals,
/// averaged over the four outcomes of a basis (unit marginal 1/2 per arm).
pub fn background_noise_weight(config: &ExperimentConfig) -> f64 {
    let p = config.excitation_probability;
    let rep = config.repetition_rate;
    let src_as = 0.5 * p * config.efficiency_as();
    let src_s = 0.5 * p * config.efficiency_s();
    let all = (src_as + config.background_rate_as / rep) * (src_s + config.background_rate_s / rep);
    let background = all - src_as * src_s;
    let pairs = p * config.efficiency_as() * config.efficiency_s();
    let acc = 4.0 * background;
    if acc + pairs == 0.0 {
        0.0
    } else {
        acc / (pairs + acc)
    }
}

/// Dephased source mixed with white noise from background accidentals.
pub fn effective_state(config: &ExperimentConfig, source: &PureTwoQubit) -> TwoQubitState {
    let w = background_noise_weight(config);
    TwoQubitState::mix(&TwoQubitState::maximally_mixed(), &dephased_state(config, source), w)
}

/// How one arm responds to its analyzer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmResponse {
    /// Projector actually realized.
    pub projector: MeasBasisState,
    /// Capture relative to the better member of the analyzer's basis.
    pub relative_capture: f64,
    /// Blank or on-axis analyzer (OAM eigenbasis).
    pub diagonal: bool,
}

impl ArmResponse {
    pub fn ideal(label: MeasBasisState) -> Self {
        Self { projector: label, relative_capture: 1.0, diagonal: label.is_diagonal() }
    }

    pub fn from_setting(setting: &AnalyzerSetting, optics: &AnalysisOptics) -> Result<Self> {
        let own = analyzer_state(setting, optics)?;
        let other = analyzer_state(&setting.partner(), optics).map(|s| s.capture()).unwrap_or(0.0);
        let relative_capture = own.capture() / own.capture().max(other);
        let diagonal = setting.effective_charge() == 0 || setting.displacement == 0.0;
        Ok(Self { projector: own.basis_state(), relative_capture, diagonal })
    }

    pub fn from_label(label: &MeasBasisState, analyzers: &BasisAnalyzers) -> Result<Self> {
        match analyzers.state(label) {
            Some(state) => {
                let partner = analyzers.state(&label.orthogonal()).map(|s| s.capture()).unwrap_or(state.capture());
                Ok(Self {
                    projector: state.basis_state(),
                    relative_capture: state.capture() / state.capture().max(partner),
                    diagonal: label.is_diagonal(),
                })
            }
            None => Ok(Self::ideal(*label)),
        }
    }
}

/// Per-trial probabilities for one analyzer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialProbabilities {
    /// Correlated pair detected in both arms.
    pub true_coincidence: f64,
    /// Uncorrelated coincidence floor.
    pub accidental: f64,
    pub singles_as: f64,
    pub singles_s: f64,
}

impl TrialProbabilities {
    pub fn coincidence(&self) -> f64 {
        self.true_coincidence + self.accidental
    }
}

pub fn trial_probabilities(
    state: &TwoQubitState,
    arm_as: &ArmResponse,
    arm_s: &ArmResponse,
    config: &ExperimentConfig,
) -> Result<TrialProbabilities> {
    let p = config.excitation_probability;
    let (eta_as, eta_s) = (config.efficiency_as(), config.efficiency_s());
    let born = born_probability(state, &arm_as.projector, &arm_s.projector)?;
    let mismatch =
        if config.radial_mismatch && arm_as.diagonal && arm_s.diagonal { arm_as.relative_capture * arm_s.relative_capture } else { 1.0 };
    let true_coincidence = p * born * eta_as * eta_s * mismatch;
    let marginal_as = born + born_probability(state, &arm_as.projector, &arm_s.projector.orthogonal())?;
    let marginal_s = born + born_probability(state, &arm_as.projector.orthogonal(), &arm_s.projector)?;
    let singles_as = p * eta_as * marginal_as + config.background_rate_as / config.repetition_rate;
    let singles_s = p * eta_s * marginal_s + config.background_rate_s / config.repetition_rate;
    let accidental = singles_as * singles_s;
    let total = true_coincidence + accidental;
    for v in [total, singles_as, singles_s] {
        if v > 1.0 {
            return Err(Error::ProbabilityOverflow(v));
        }
    }
    Ok(TrialProbabilities { true_coincidence, accidental, singles_as, singles_s })
}

/// Per-trial coincidence probability for a pair of physical analyzers.
pub fn coincidence_probability(state: &TwoQubitState, a: &AnalyzerSetting, b: &AnalyzerSetting, config: &ExperimentConfig) -> Result<f64> {
    let optics = config.optics();
    let ra = ArmResponse::from_setting(a, &optics)?;
    let rb = ArmResponse::from_setting(b, &optics)?;
    Ok(trial_probabilities(state, &ra, &rb, config)?.coincidence())
}

/// What to simulate: a prepared state, or the pure source (dephased first).
#[derive(Debug, Clone)]
pub enum SimInput {
    State(TwoQubitState),
    Source(PureTwoQubit),
}

impl SimInput {
    pub fn resolve(&self, config: &ExperimentConfig) -> TwoQubitState {
        match self {
            SimInput::State(s) => s.clone(),
            SimInput::Source(p) => dephased_state(config, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRow {
    pub setting_as: MeasBasisState,
    pub setting_s: MeasBasisState,
    pub coincidences: u64,
    pub singles_as: u64,
    pub singles_s: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoincidenceTable {
    pub rows: Vec<CoincidenceRow>,
}

pub const TABLE_HEADER: [&str; 6] = ["setting_as", "setting_s", "coincidences", "singles_as", "singles_s", "duration_s"];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    setting_as: String,
    setting_s: String,
    coincidences: u64,
    singles_as: u64,
    singles_s: u64,
    duration_s: f64,
}

impl CoincidenceTable {
    pub fn total_coincidences(&self) -> u64 {
        self.rows.iter().map(|r| r.coincidences).sum()
    }

    pub fn find(&self, a: &MeasBasisState, b: &MeasBasisState) -> Option<&CoincidenceRow> {
        self.rows.iter().find(|r| r.setting_as == *a && r.setting_s == *b)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(CsvRow {
                setting_as: r.setting_as.to_string(),
                setting_s: r.setting_s.to_string(),
                coincidences: r.coincidences,
                singles_as: r.singles_as,
                singles_s: r.singles_s,
                duration_s: r.duration,
            })?;
        }
        if self.rows.is_empty() {
            wtr.write_record(TABLE_HEADER)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != TABLE_HEADER {
            return Err(invalid("table", format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let raw: CsvRow = rec?;
            let row = CoincidenceRow {
                setting_as: raw.setting_as.parse()?,
                setting_s: raw.setting_s.parse()?,
                coincidences: raw.coincidences,
                singles_as: raw.singles_as,
                singles_s: raw.singles_s,
                duration: raw.duration_s,
            };
            if row.coincidences > row.singles_as.min(row.singles_s) {
                return Err(invalid("table", "coincidences exceed singles"));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Draw one table. Row `k` uses the RNG stream `(seed, [call, k])`.
pub fn simulate_counts_with(
    input: &SimInput,
    settings: &[(MeasBasisState, MeasBasisState)],
    config: &ExperimentConfig,
    analyzers: &BasisAnalyzers,
    call: u64,
    exec: Execution,
) -> Result<CoincidenceTable> {
    if settings.is_empty() {
        return Err(Error::EmptySettings);
    }
    config.validate()?;
    let state = input.resolve(config);
    let trials = config.repetition_rate * config.acquisition_time;
    let rows = map_indexed(exec, settings.len(), |k| -> Result<CoincidenceRow> {
        let (a, b) = settings[k];
        let ra = ArmResponse::from_label(&a, analyzers)?;
        let rb = ArmResponse::from_label(&b, analyzers)?;
        let tp = trial_probabilities(&state, &ra, &rb, config)?;
        let mut rng = stream(config.rng_seed, &[call, k as u64]);
        let coincidences = poisson(&mut rng, tp.coincidence() * trials);
        let singles_as = coincidences + poisson(&mut rng, (tp.singles_as - tp.coincidence()).max(0.0) * trials);
        let singles_s = coincidences + poisson(&mut rng, (tp.singles_s - tp.coincidence()).max(0.0) * trials);
        Ok(CoincidenceRow { setting_as: a, setting_s: b, coincidences, singles_as, singles_s, duration: config.acquisition_time })
    });
    Ok(CoincidenceTable { rows: rows.into_iter().collect::<Result<_>>()? })
}

/// Start-stop delay histogram over `2N + 1` trial windows centred on the
/// same-trial window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub trial_period: f64,
    /// Windows on each side of the peak window.
    pub windows: usize,
    pub bins: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn empty(bin_width: f64, trial_period: f64, windows: usize) -> Result<Self> {
        if !(bin_width > 0.0 && trial_period >= bin_width) {
            return Err(invalid("histogram", "bin width must be positive and below the trial period"));
        }
        let per = (trial_period / bin_width).round() as usize;
        Ok(Self { bin_width, trial_period, windows, bins: vec![0; per * (2 * windows + 1)] })
    }

    pub fn bins_per_window(&self) -> usize {
        self.bins.len() / (2 * self.windows + 1)
    }

    /// Left edge (ns) of bin `k`; the peak window starts at delay 0.
    pub fn bin_start(&self, k: usize) -> f64 {
        (k as f64 - (self.windows * self.bins_per_window()) as f64) * self.bin_width
    }

    /// Counts summed per window, index `windows` being the peak.
    pub fn window_sums(&self) -> Vec<u64> {
        self.bins.chunks(self.bins_per_window()).map(|w| w.iter().sum()).collect()
    }

    fn add_event(&mut self, delay_ns: f64) {
        let k = (delay_ns / self.bin_width).floor() as i64 + (self.windows * self.bins_per_window()) as i64;
        if k >= 0 && (k as usize) < self.bins.len() {
            self.bins[k as usize] += 1;
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bin_ns", "count"])?;
        for (k, n) in self.bins.iter().enumerate() {
            wtr.write_record([format!("{}", self.bin_start(k)), n.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parse `bin_ns,count`; the window geometry is inferred from the bin
    /// edges and the supplied trial period.
    pub fn read_csv<R: Read>(r: R, trial_period: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut starts = Vec::new();
        let mut bins = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let t: f64 = rec.get(0).unwrap_or("").parse().map_err(|_| invalid("bin_ns", "not a number"))?;
            let n: u64 = rec.get(1).unwrap_or("").parse().map_err(|_| invalid("count", "not an integer"))?;
            starts.push(t);
            bins.push(n);
        }
        if starts.len() < 2 {
            return Err(invalid("histogram", "need at least two bins"));
        }
        let per = (trial_period / (starts[1] - starts[0])).round() as usize;
        let bin_width = trial_period / per as f64;
        let n_windows = bins.len() / per;
        if per == 0 || n_windows * per != bins.len() || n_windows.is_multiple_of(2) {
            return Err(invalid("histogram", "bins do not tile an odd number of trial windows"));
        }
        Ok(Self { bin_width, trial_period, windows: n_windows / 2, bins })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Peak-window coincidences over the mean off-peak window.
pub fn g2_estimate(histogram: &CoincidenceHistogram) -> Result<G2Estimate> {
    let sums = histogram.window_sums();
    let off = sums.len() - 1;
    if off < 3 {
        return Err(Error::TooFewWindows(off));
    }
    let peak = sums[histogram.windows] as f64;
    let off_total: f64 = sums.iter().enumerate().filter(|(i, _)| *i != histogram.windows).map(|(_, &n)| n as f64).sum();
    if off_total == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    let mean_off = off_total / off as f64;
    let value = peak / mean_off;
    let stderr = if peak > 0.0 {
        value * (1.0 / peak + 1.0 / off_total).sqrt()
    } else {
        // one-count Poisson scale when the peak is empty
        1.0 / mean_off
    };
    Ok(G2Estimate { value, stderr })
}

/// Expected `g2` for the `(zero, zero)` channel of `state`.
pub fn expected_g2(state: &TwoQubitState, config: &ExperimentConfig, analyzers: &BasisAnalyzers) -> Result<f64> {
    let ra = ArmResponse::from_label(&MeasBasisState::Zero, analyzers)?;
    let rb = ArmResponse::from_label(&MeasBasisState::Zero, analyzers)?;
    let tp = trial_probabilities(state, &ra, &rb, config)?;
    Ok(1.0 + tp.true_coincidence / tp.accidental)
}

/// Time-resolved coincidences for LG00 analyzers on both arms.
pub fn simulate_histogram_with(
    input: &SimInput,
    config: &ExperimentConfig,
    analyzers: &BasisAnalyzers,
    duration: f64,
    call: u64,
) -> Result<CoincidenceHistogram> {
    config.validate()?;
    let state = input.resolve(config);
    let mut hist = CoincidenceHistogram::empty(config.histogram_bin_ns, config.trial_period_ns, config.histogram_windows)?;
    let ra = ArmResponse::from_label(&MeasBasisState::Zero, analyzers)?;
    let rb = ArmResponse::from_label(&MeasBasisState::Zero, analyzers)?;
    let tp = trial_probabilities(&state, &ra, &rb, config)?;
    let trials = config.repetition_rate * duration;
    let mut rng = stream(config.rng_seed, &[call, u64::MAX]);
    let jitter = Normal::new(0.0, config.histogram_bin_ns).map_err(|e| invalid("histogram_bin_ns", e.to_string()))?;
    let n = config.histogram_windows as i64;
    for k in -n..=n {
        let origin = k as f64 * config.trial_period_ns;
        for _ in 0..poisson(&mut rng, tp.accidental * trials) {
            hist.add_event(origin + rng.random::<f64>() * config.trial_period_ns);
        }
        if k == 0 {
            for _ in 0..poisson(&mut rng, tp.true_coincidence * trials) {
                hist.add_event(config.delay_dt + jitter.sample(&mut rng));
            }
        }
    }
    Ok(hist)
}

/// Owns the configuration and hands out one RNG stream per call.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ExperimentConfig,
    analyzers: BasisAnalyzers,
    calls: u64,
    exec: Execution,
}

impl Simulator {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let analyzers = BasisAnalyzers::new(config.fiber_waist_um, config.optics())?;
        Ok(Self { config, analyzers, calls: 0, exec: Execution::available() })
    }

    /// Reuse precomputed analyzers for a config sharing the same optics.
    pub fn with_analyzers(config: ExperimentConfig, analyzers: BasisAnalyzers) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, analyzers, calls: 0, exec: Execution::available() })
    }

    pub fn execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn analyzers(&self) -> &BasisAnalyzers {
        &self.analyzers
    }

    fn next_call(&mut self) -> u64 {
        let c = self.calls;
        self.calls += 1;
        c
    }

    pub fn simulate_counts(&mut self, input: &SimInput, settings: &[(MeasBasisState, MeasBasisState)]) -> Result<CoincidenceTable> {
        let call = self.next_call();
        simulate_counts_with(input, settings, &self.config, &self.analyzers, call, self.exec)
    }

    pub fn simulate_histogram(&mut self, input: &SimInput, duration: f64) -> Result<CoincidenceHistogram> {
        let call = self.next_call();
        simulate_histogram_with(input, &self.config, &self.analyzers, duration, call)
    }

    /// Trial probabilities for a label pair under this simulator's optics.
    pub fn trial_probabilities(&self, state: &TwoQubitState, a: &MeasBasisState, b: &MeasBasisState) -> Result<TrialProbabilities> {
        let ra = ArmResponse::from_label(a, &self.analyzers)?;
        let rb = ArmResponse::from_label(b, &self.analyzers)?;
        trial_probabilities(state, &ra, &rb, &self.config)
    }
}

/// The twelve settings of the three measurement bases (four combinations each).
pub fn basis_pair_settings() -> Vec<(MeasBasisState, MeasBasisState)> {
    use MeasBasisState::*;
    let mut out = Vec::with_capacity(12);
    for (a, b) in [(Zero, One), (Plus, Minus), (U, D)] {
        for x in [a, b] {
            for y in [a, b] {
                out.push((x, y));
            }
        }
    }
    out
}
