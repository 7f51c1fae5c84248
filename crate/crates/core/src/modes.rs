//! Laguerre-Gaussian modes and the hologram + single-mode-fiber analyzer.
//!
//! Fields are sampled on a polar grid: Gauss-Legendre in radius on
//! `[0, R]`, uniform trapezoid in angle. All lengths are in micrometres.
//!
//! Mode convention: `LG_pm(r, phi) ∝ (sqrt2 r/w)^|m| L_p^|m|(2r²/w²) exp(-r²/w²) exp(i m phi)`,
//! real positive radial part, normalized on the grid.
//!
//! The analyzer is modelled as a thin phase hologram `exp(i q phi')`, where
//! `phi'` is the azimuth about the dislocation, followed by a fiber that
//! accepts a Gaussian of waist `w_f`. Detection amplitude for an incoming
//! field `E` is `<A|E>` with `A = G_wf · exp(i q phi')`; projecting `A` onto
//! `{LG00, LG01}` of the analysis waist gives the effective qubit state.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::quadrature::gauss_legendre;
use crate::state::{c, MeasBasisState, C64};

pub const MIN_NODES: usize = 64;
pub const DEFAULT_NODES: usize = 256;
/// Grid radius in units of the largest waist.
pub const GRID_WAISTS: f64 = 6.0;
/// Maximum tolerated leakage out of the LG00/LG01 subspace.
pub const MAX_LEAKAGE: f64 = 0.5;
/// Fiber-mode waist of the experiment (LG00 coupling optimum at the ensemble).
pub const PAPER_FIBER_WAIST_UM: f64 = 140.0;
/// Analysis-beam waist maximizing the mean two-dimensional capture of the
/// on-axis analyzers for a 140 um fiber mode; see [`matched_analysis_waist`].
pub const DEFAULT_ANALYSIS_WAIST_UM: f64 = 114.9192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgMode {
    radial_index: u32,
    azimuthal_index: i32,
    waist_um: f64,
}

impl LgMode {
    pub fn new(radial_index: u32, azimuthal_index: i32, waist_um: f64) -> Result<Self> {
        if !(waist_um.is_finite() && waist_um > 0.0) {
            return Err(invalid("waist", format!("{waist_um} must be positive")));
        }
        Ok(Self { radial_index, azimuthal_index, waist_um })
    }

    pub fn gaussian(waist_um: f64) -> Result<Self> {
        Self::new(0, 0, waist_um)
    }

    pub fn radial_index(&self) -> u32 {
        self.radial_index
    }

    pub fn azimuthal_index(&self) -> i32 {
        self.azimuthal_index
    }

    pub fn waist(&self) -> f64 {
        self.waist_um
    }

    /// Unnormalized-by-grid analytic amplitude at `(x, y)` relative to the beam axis.
    pub fn amplitude_at(&self, x: f64, y: f64) -> C64 {
        let w = self.waist_um;
        let (p, am) = (self.radial_index, self.azimuthal_index.unsigned_abs());
        let r2 = (x * x + y * y) / (w * w);
        let rho = (2.0 * r2).sqrt();
        let norm = (2.0 * factorial(p) / (PI * factorial(p + am))).sqrt() / w;
        let radial = norm * rho.powi(am as i32) * laguerre(p, am, 2.0 * r2) * (-r2).exp();
        let phase = self.azimuthal_index as f64 * y.atan2(x);
        C64::from_polar(radial, phase)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Generalized Laguerre polynomial `L_p^a(x)` by the three-term recurrence.
fn laguerre(p: u32, a: u32, x: f64) -> f64 {
    let a = a as f64;
    let (mut l0, mut l1) = (1.0, 1.0 + a - x);
    if p == 0 {
        return l0;
    }
    for k in 1..p {
        let k = k as f64;
        let l2 = ((2.0 * k + 1.0 + a - x) * l1 - (k + a) * l0) / (k + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Polar sampling grid, optionally centred away from the beam axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    radius_um: f64,
    center: (f64, f64),
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    n_angle: usize,
}

impl PolarGrid {
    pub fn new(radius_um: f64, n_radial: usize, n_angle: usize, center: (f64, f64)) -> Result<Self> {
        if !(radius_um.is_finite() && radius_um > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        if n_radial < MIN_NODES || n_angle < MIN_NODES {
            return Err(invalid("grid", format!("need >= {MIN_NODES} x {MIN_NODES} nodes, got {n_radial} x {n_angle}")));
        }
        let (x, w) = gauss_legendre(n_radial);
        let half = radius_um / 2.0;
        let radii: Vec<f64> = x.iter().map(|xi| half * (xi + 1.0)).collect();
        // r dr dphi with the trapezoid angular weight folded in
        let dphi = 2.0 * PI / n_angle as f64;
        let radial_weights = w.iter().zip(&radii).map(|(wi, r)| wi * half * r * dphi).collect();
        Ok(Self { radius_um, center, radii, radial_weights, n_angle })
    }

    /// Axis-centred grid covering `GRID_WAISTS` times the largest waist.
    pub fn for_waists(waists: &[f64], n_radial: usize, n_angle: usize) -> Result<Self> {
        let wmax = waists.iter().copied().fold(0.0, f64::max);
        Self::new(GRID_WAISTS * wmax, n_radial, n_angle, (0.0, 0.0))
    }

    pub fn radius(&self) -> f64 {
        self.radius_um
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn n_radial(&self) -> usize {
        self.radii.len()
    }

    pub fn n_angle(&self) -> usize {
        self.n_angle
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.n_angle
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_angle as f64
    }

    /// Largest gap between neighbouring radial nodes (including the ends).
    pub fn max_radial_spacing(&self) -> f64 {
        let mut gap = self.radii[0];
        for p in self.radii.windows(2) {
            gap = gap.max(p[1] - p[0]);
        }
        gap.max(self.radius_um - self.radii[self.radii.len() - 1])
    }

    /// Node index for radial node `i`, angular node `j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_angle + j
    }

    /// Cartesian position (relative to the beam axis) of node `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        let (s, co) = self.angle(j).sin_cos();
        (self.center.0 + self.radii[i] * co, self.center.1 + self.radii[i] * s)
    }

    fn weight(&self, i: usize) -> f64 {
        self.radial_weights[i]
    }
}

#[derive(Debug, Clone)]
pub struct TransverseField {
    grid: Arc<PolarGrid>,
    amplitudes: Vec<C64>,
}

impl TransverseField {
    pub fn grid(&self) -> &Arc<PolarGrid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn value(&self, i: usize, j: usize) -> C64 {
        self.amplitudes[self.grid.index(i, j)]
    }

    pub fn norm_squared(&self) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for i in 0..g.n_radial() {
            let row = &self.amplitudes[g.index(i, 0)..g.index(i, 0) + g.n_angle()];
            s += g.weight(i) * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        s
    }

    fn normalize(mut self) -> Self {
        let n = self.norm_squared().sqrt();
        if n > 0.0 {
            let k = c(1.0 / n, 0.0);
            self.amplitudes.iter_mut().for_each(|z| *z *= k);
        }
        self
    }

    /// Multiply by the first-order transmission of a fork hologram whose
    /// dislocation sits at the grid centre: `exp(i q phi')`.
    fn through_hologram(mut self, charge: i32) -> Self {
        if charge != 0 {
            let g = Arc::clone(&self.grid);
            for i in 0..g.n_radial() {
                for j in 0..g.n_angle() {
                    self.amplitudes[g.index(i, j)] *= C64::from_polar(1.0, charge as f64 * g.angle(j));
                }
            }
        }
        self
    }

    /// Accumulated phase (radians) around the ring of radial node `ring`.
    pub fn phase_winding(&self, ring: usize) -> f64 {
        let n = self.grid.n_angle();
        (0..n)
            .map(|j| {
                let a = self.value(ring, j);
                let b = self.value(ring, (j + 1) % n);
                (b * a.conj()).arg()
            })
            .sum()
    }
}

/// Sample the normalized mode on `grid`.
pub fn evaluate_mode(mode: &LgMode, grid: &Arc<PolarGrid>) -> Result<TransverseField> {
    let required = GRID_WAISTS * mode.waist();
    if grid.radius() + 1e-9 < required {
        return Err(Error::GridTooSmall { radius: grid.radius(), required });
    }
    let spacing = grid.max_radial_spacing();
    let limit = mode.waist() / 8.0;
    if spacing > limit {
        return Err(Error::GridTooCoarse { spacing, limit });
    }
    let mut amplitudes = Vec::with_capacity(grid.len());
    for i in 0..grid.n_radial() {
        for j in 0..grid.n_angle() {
            let (x, y) = grid.position(i, j);
            amplitudes.push(mode.amplitude_at(x, y));
        }
    }
    Ok(TransverseField { grid: Arc::clone(grid), amplitudes }.normalize())
}

/// `<a|b>` by quadrature.
pub fn overlap(a: &TransverseField, b: &TransverseField) -> Result<C64> {
    if !(Arc::ptr_eq(&a.grid, &b.grid) || *a.grid == *b.grid) {
        return Err(Error::GridMismatch);
    }
    let g = &a.grid;
    let mut total = C64::default();
    for i in 0..g.n_radial() {
        let start = g.index(i, 0);
        let ring: C64 =
            a.amplitudes[start..start + g.n_angle()].iter().zip(&b.amplitudes[start..start + g.n_angle()]).map(|(x, y)| x.conj() * y).sum();
        total += ring * g.weight(i);
    }
    Ok(total)
}

/// Hologram plus fiber-coupled Gaussian selecting one analysis state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    /// Topological charge of the fork: 0 blank, ±1 single dislocation.
    pub hologram_charge: i32,
    /// Offset between beam axis and dislocation, in analysis-beam waists.
    pub displacement: f64,
    /// Direction of the offset; maps to the relative phase `exp(i orientation)` of `beta/alpha`.
    pub orientation: f64,
    pub fiber_waist_um: f64,
    pub diffraction_order: i32,
}

impl AnalyzerSetting {
    pub fn blank(fiber_waist_um: f64) -> Self {
        Self { hologram_charge: 0, displacement: 0.0, orientation: 0.0, fiber_waist_um, diffraction_order: 1 }
    }

    pub fn fork(displacement: f64, orientation: f64, fiber_waist_um: f64) -> Self {
        Self { hologram_charge: 1, displacement, orientation, fiber_waist_um, diffraction_order: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1..=1).contains(&self.hologram_charge) {
            return Err(invalid("hologram_charge", format!("{} not in {{-1, 0, 1}}", self.hologram_charge)));
        }
        if !(self.displacement.is_finite() && self.displacement >= 0.0) {
            return Err(invalid("displacement", format!("{} must be finite and >= 0", self.displacement)));
        }
        if !self.orientation.is_finite() {
            return Err(Error::NonFinite("orientation"));
        }
        if !(self.fiber_waist_um.is_finite() && self.fiber_waist_um > 0.0) {
            return Err(invalid("fiber_waist", "must be positive"));
        }
        if self.diffraction_order.abs() != 1 {
            return Err(invalid("diffraction_order", "only first orders are modelled"));
        }
        Ok(())
    }

    /// OAM removed from the beam in the selected diffraction order.
    pub fn effective_charge(&self) -> i32 {
        self.hologram_charge * self.diffraction_order
    }

    /// Orthogonal analyzer of the same measurement basis.
    pub fn partner(&self) -> Self {
        match (self.effective_charge(), self.displacement == 0.0) {
            (0, _) => Self { hologram_charge: 1, diffraction_order: 1, displacement: 0.0, orientation: 0.0, ..*self },
            (_, true) => Self { hologram_charge: 0, diffraction_order: 1, displacement: 0.0, orientation: 0.0, ..*self },
            _ => Self { orientation: self.orientation + PI, ..*self },
        }
    }
}

/// Sampling and basis-waist parameters shared by every analyzer computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptics {
    /// Waist of the `LG00`/`LG01` basis modes at the analysis plane.
    pub analysis_waist_um: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

impl Default for AnalysisOptics {
    fn default() -> Self {
        Self { analysis_waist_um: DEFAULT_ANALYSIS_WAIST_UM, radial_nodes: DEFAULT_NODES, angular_nodes: DEFAULT_NODES }
    }
}

impl AnalysisOptics {
    pub fn with_nodes(self, radial_nodes: usize, angular_nodes: usize) -> Self {
        Self { radial_nodes, angular_nodes, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerState {
    /// Renormalized `alpha`, `beta` of `alpha|0> + beta|1>`.
    pub alpha: C64,
    pub beta: C64,
    /// Power of the analyzer mode outside the two-dimensional subspace.
    pub leakage: f64,
    /// Raw (pre-renormalization) projections.
    pub raw_alpha: C64,
    pub raw_beta: C64,
}

impl AnalyzerState {
    pub fn capture(&self) -> f64 {
        1.0 - self.leakage
    }

    pub fn basis_state(&self) -> MeasBasisState {
        MeasBasisState::Custom(self.alpha, self.beta)
    }

    /// Fraction of analyzer power that lands on `|1>`.
    pub fn beta_weight(&self) -> f64 {
        self.beta.norm_sqr()
    }
}

/// Effective two-dimensional projector selected by hologram + fiber.
pub fn analyzer_state(setting: &AnalyzerSetting, optics: &AnalysisOptics) -> Result<AnalyzerState> {
    let st = raw_analyzer_state(setting, optics)?;
    if st.leakage > MAX_LEAKAGE {
        return Err(Error::Leakage { leakage: st.leakage });
    }
    Ok(st)
}

fn raw_analyzer_state(setting: &AnalyzerSetting, optics: &AnalysisOptics) -> Result<AnalyzerState> {
    setting.validate()?;
    let wb = optics.analysis_waist_um;
    let wf = setting.fiber_waist_um;
    if !(wb.is_finite() && wb > 0.0) {
        return Err(invalid("analysis_waist", "must be positive"));
    }
    let charge = setting.effective_charge();
    // Dislocation-centred grid: the hologram phase is then exactly the grid
    // azimuth and every integrand stays smooth in the grid coordinates.
    let (center, offset) = if charge == 0 {
        ((0.0, 0.0), 0.0)
    } else {
        let d = setting.displacement * wb;
        ((-d * setting.orientation.cos(), d * setting.orientation.sin()), d)
    };
    let radius = GRID_WAISTS * wb.max(wf) + offset;
    let grid = Arc::new(PolarGrid::new(radius, optics.radial_nodes, optics.angular_nodes, center)?);
    let fiber = evaluate_mode(&LgMode::gaussian(wf)?, &grid)?;
    let analyzer_mode = fiber.through_hologram(charge);
    let raw_alpha = overlap(&evaluate_mode(&LgMode::new(0, 0, wb)?, &grid)?, &analyzer_mode)?;
    let raw_beta = overlap(&evaluate_mode(&LgMode::new(0, 1, wb)?, &grid)?, &analyzer_mode)?;
    let captured = raw_alpha.norm_sqr() + raw_beta.norm_sqr();
    let leakage = (1.0 - captured).max(0.0);
    let s = captured.sqrt();
    let (mut alpha, mut beta) = (raw_alpha / s, raw_beta / s);
    // global phase: alpha real non-negative when present, else beta
    let ref_phase = if alpha.norm() > 1e-12 { alpha.arg() } else { beta.arg() };
    let rot = C64::from_polar(1.0, -ref_phase);
    alpha *= rot;
    beta *= rot;
    Ok(AnalyzerState { alpha, beta, leakage, raw_alpha: raw_alpha * rot, raw_beta: raw_beta * rot })
}

/// Displacement at which a charge-1 analyzer is balanced (`|alpha| = |beta|`).
pub fn balanced_displacement(fiber_waist_um: f64, optics: &AnalysisOptics) -> Result<f64> {
    let f = |d: f64| -> Result<f64> { Ok(analyzer_state(&AnalyzerSetting::fork(d, 0.0, fiber_waist_um), optics)?.beta_weight() - 0.5) };
    let (mut lo, mut hi) = (0.0, 4.0);
    let (mut flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBalancedPoint { lo, hi });
    }
    for _ in 0..200 {
        // bisection with a secant probe; |beta|^2 is smooth and monotone here
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 || hi - lo < 1e-12 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Relative coincidence-probability error introduced by the p = 0 fiber
/// projection for a pair of analyzers.
///
/// Each analyzer's capture is compared with the better-captured member of
/// its own basis (the analyzer and its [`AnalyzerSetting::partner`]). Blank
/// and on-axis fork analyzers differ in radial profile; displaced analyzers
/// of one basis share it.
pub fn radial_mismatch_penalty(pair: (&AnalyzerSetting, &AnalyzerSetting), optics: &AnalysisOptics) -> Result<f64> {
    let relative = |s: &AnalyzerSetting| -> Result<f64> {
        let own = analyzer_state(s, optics)?.capture();
        let other = raw_analyzer_state(&s.partner(), optics)?.capture();
        Ok(own / own.max(other))
    };
    let ratio = relative(pair.0)? * relative(pair.1)?;
    Ok((1.0 - ratio).clamp(0.0, 1.0))
}

/// Analysis-beam waist maximizing the mean subspace capture of the blank and
/// on-axis fork analyzers (golden-section search on `[0.4, 1.6] * w_f`).
pub fn matched_analysis_waist(fiber_waist_um: f64, radial_nodes: usize, angular_nodes: usize) -> Result<f64> {
    let score = |wb: f64| -> Result<f64> {
        let optics = AnalysisOptics { analysis_waist_um: wb, radial_nodes, angular_nodes };
        let c0 = raw_analyzer_state(&AnalyzerSetting::blank(fiber_waist_um), &optics)?.capture();
        let c1 = raw_analyzer_state(&AnalyzerSetting::fork(0.0, 0.0, fiber_waist_um), &optics)?.capture();
        Ok(0.5 * (c0 + c1))
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.4 * fiber_waist_um, 1.6 * fiber_waist_um);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (score(x1)?, score(x2)?);
    while b - a > 1e-6 * fiber_waist_um {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = score(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = score(x1)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Physical analyzers realizing the six named analysis states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisAnalyzers {
    pub optics: AnalysisOptics,
    pub fiber_waist_um: f64,
    pub balanced_displacement: f64,
    entries: Vec<(String, AnalyzerSetting, AnalyzerState)>,
}

impl BasisAnalyzers {
    pub fn new(fiber_waist_um: f64, optics: AnalysisOptics) -> Result<Self> {
        let dstar = balanced_displacement(fiber_waist_um, &optics)?;
        let mut entries = Vec::with_capacity(6);
        for label in MeasBasisState::NAMED {
            let setting = match label {
                MeasBasisState::Zero => AnalyzerSetting::blank(fiber_waist_um),
                MeasBasisState::One => AnalyzerSetting::fork(0.0, 0.0, fiber_waist_um),
                MeasBasisState::Plus => AnalyzerSetting::fork(dstar, 0.0, fiber_waist_um),
                MeasBasisState::Minus => AnalyzerSetting::fork(dstar, PI, fiber_waist_um),
                MeasBasisState::U => AnalyzerSetting::fork(dstar, PI / 2.0, fiber_waist_um),
                MeasBasisState::D => AnalyzerSetting::fork(dstar, 3.0 * PI / 2.0, fiber_waist_um),
                MeasBasisState::Custom(..) => unreachable!(),
            };
            let state = analyzer_state(&setting, &optics)?;
            entries.push((label.to_string(), setting, state));
        }
        Ok(Self { optics, fiber_waist_um, balanced_displacement: dstar, entries })
    }

    fn find(&self, label: &MeasBasisState) -> Option<&(String, AnalyzerSetting, AnalyzerState)> {
        let key = label.to_string();
        self.entries.iter().find(|e| e.0 == key)
    }

    /// Hologram setting for a named label; `None` for custom states.
    pub fn setting(&self, label: &MeasBasisState) -> Option<AnalyzerSetting> {
        self.find(label).map(|e| e.1)
    }

    pub fn state(&self, label: &MeasBasisState) -> Option<AnalyzerState> {
        self.find(label).map(|e| e.2)
    }

    /// Projector actually realized for `label`. Custom labels are taken as ideal.
    pub fn realized(&self, label: &MeasBasisState) -> MeasBasisState {
        self.state(label).map(|s| s.basis_state()).unwrap_or(*label)
    }

    /// Radial penalty for a label pair; zero when either side is a custom state.
    pub fn penalty(&self, a: &MeasBasisState, b: &MeasBasisState) -> Result<f64> {
        match (self.setting(a), self.setting(b)) {
            (Some(sa), Some(sb)) => radial_mismatch_penalty((&sa, &sb), &self.optics),
            _ => Ok(0.0),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AnalyzerSetting, &AnalyzerState)> {
        self.entries.iter().map(|(l, s, st)| (l.as_str(), s, st))
    }
}

/// Worst-case ratio of wanted to unwanted mode detection for the blank and
/// on-axis fork analyzers, using raw projections onto LG00 and LG01.
pub fn distinction_ratio(fiber_waist_um: f64, optics: &AnalysisOptics) -> Result<f64> {
    let ratio = |wanted: f64, unwanted: f64| wanted / unwanted.max(1e-15 * wanted);
    let blank = analyzer_state(&AnalyzerSetting::blank(fiber_waist_um), optics)?;
    let fork = analyzer_state(&AnalyzerSetting::fork(0.0, 0.0, fiber_waist_um), optics)?;
    Ok(ratio(blank.raw_alpha.norm_sqr(), blank.raw_beta.norm_sqr()).min(ratio(fork.raw_beta.norm_sqr(), fork.raw_alpha.norm_sqr())))
}

/// One row of an analyzer scan, as emitted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerRecord {
    pub charge: i32,
    pub displacement: f64,
    pub orientation: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub beta_re: f64,
    pub beta_im: f64,
    pub leakage: f64,
}

impl AnalyzerRecord {
    pub fn new(setting: &AnalyzerSetting, state: &AnalyzerState) -> Self {
        Self {
            charge: setting.hologram_charge,
            displacement: setting.displacement,
            orientation: setting.orientation,
            alpha_re: state.alpha.re,
            alpha_im: state.alpha.im,
            beta_re: state.beta.re,
            beta_im: state.beta.im,
            leakage: state.leakage,
        }
    }
}

/// Charge-1 analyzer states for each displacement in `displacements`.
pub fn displacement_scan(
    displacements: &[f64],
    orientation: f64,
    fiber_waist_um: f64,
    optics: &AnalysisOptics,
    exec: Execution,
) -> Result<Vec<AnalyzerRecord>> {
    map_indexed(exec, displacements.len(), |k| {
        let s = AnalyzerSetting::fork(displacements[k], orientation, fiber_waist_um);
        analyzer_state(&s, optics).map(|st| AnalyzerRecord::new(&s, &st))
    })
    .into_iter()
    .collect()
}

/// Overlap matrix `<LG_0m | LG_0m'>` for `m, m'` in `ms`, all at one waist.
pub fn overlap_matrix(ms: &[i32], waist_um: f64, n_radial: usize, n_angle: usize) -> Result<Vec<Vec<C64>>> {
    let grid = Arc::new(PolarGrid::for_waists(&[waist_um], n_radial, n_angle)?);
    let fields: Vec<TransverseField> = ms.iter().map(|&m| evaluate_mode(&LgMode::new(0, m, waist_um)?, &grid)).collect::<Result<_>>()?;
    fields.iter().map(|a| fields.iter().map(|b| overlap(a, b)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(waists: &[f64], n: usize) -> Arc<PolarGrid> {
        Arc::new(PolarGrid::for_waists(waists, n, n).unwrap())
    }

    #[test]
    fn laguerre_low_orders() {
        assert_eq!(laguerre(0, 3, 0.7), 1.0);
        assert!((laguerre(1, 2, 0.5) - 2.5).abs() < 1e-15);
        // L_2^1(x) = (x^2 - 6x + 6) / 2
        let x = 1.3;
        assert!((laguerre(2, 1, x) - (x * x - 6.0 * x + 6.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_peaks_on_axis() {
        let g = grid(&[140.0], 128);
        let f = evaluate_mode(&LgMode::gaussian(140.0).unwrap(), &g).unwrap();
        let inner = f.value(0, 0).norm();
        assert!(f.amplitudes().iter().all(|z| z.norm() <= inner + 1e-15));
    }

    #[test]
    fn vortex_vanishes_on_axis_and_winds_once() {
        let m = LgMode::new(0, 1, 140.0).unwrap();
        assert_eq!(m.amplitude_at(0.0, 0.0).norm(), 0.0);
        let g = grid(&[140.0], 128);
        let f = evaluate_mode(&m, &g).unwrap();
        for ring in [3, 40, 90] {
            assert!((f.phase_winding(ring) - 2.0 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn vortex_intensity_peaks_at_w_over_root2() {
        // maximize (r/w)^2 exp(-2 r^2/w^2) on a fine 1-D scan first
        let w = 140.0;
        let (best, _) = (0..200_000)
            .map(|k| k as f64 * 1e-3)
            .map(|r| (r, (r / w).powi(2) * (-2.0 * r * r / (w * w)).exp()))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best - w / 2f64.sqrt()).abs() < 2e-3);

        let g = grid(&[w], 256);
        let f = evaluate_mode(&LgMode::new(0, 1, w).unwrap(), &g).unwrap();
        let i_max = (0..g.n_radial()).max_by(|&a, &b| f.value(a, 0).norm().total_cmp(&f.value(b, 0).norm())).unwrap();
        let cell = g.radii()[i_max + 1] - g.radii()[i_max - 1];
        assert!((g.radii()[i_max] - best).abs() <= cell, "{} vs {}", g.radii()[i_max], best);
    }

    #[test]
    fn too_coarse_or_small_grids_rejected() {
        let g = Arc::new(PolarGrid::for_waists(&[400.0], 64, 64).unwrap());
        assert!(matches!(evaluate_mode(&LgMode::gaussian(140.0).unwrap(), &g), Err(Error::GridTooCoarse { .. })));
        let g = grid(&[100.0], 128);
        assert!(matches!(evaluate_mode(&LgMode::gaussian(140.0).unwrap(), &g), Err(Error::GridTooSmall { .. })));
        assert!(PolarGrid::new(100.0, 32, 64, (0.0, 0.0)).is_err());
    }

    #[test]
    fn overlap_examples() {
        let g = grid(&[140.0], 256);
        let a = evaluate_mode(&LgMode::gaussian(140.0).unwrap(), &g).unwrap();
        let b = evaluate_mode(&LgMode::new(0, 1, 140.0).unwrap(), &g).unwrap();
        assert!((overlap(&a, &a).unwrap() - c(1.0, 0.0)).norm() < 1e-6);
        assert!(overlap(&a, &b).unwrap().norm() < 1e-6);
        let ab = overlap(&a, &b).unwrap();
        let ba = overlap(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-15);
    }

    #[test]
    fn overlap_rejects_mismatched_grids() {
        let a = evaluate_mode(&LgMode::gaussian(140.0).unwrap(), &grid(&[140.0], 128)).unwrap();
        let b = evaluate_mode(&LgMode::gaussian(140.0).unwrap(), &grid(&[140.0], 256)).unwrap();
        assert!(matches!(overlap(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn blank_hologram_passes_gaussian_only() {
        let optics = AnalysisOptics::default();
        for d in [0.0, 0.7, 3.0] {
            let s = AnalyzerSetting { displacement: d, ..AnalyzerSetting::blank(140.0) };
            let st = analyzer_state(&s, &optics).unwrap();
            assert_eq!(st.alpha, c(1.0, 0.0));
            assert!(st.beta.norm() < 1e-15, "beta = {}", st.beta);
        }
    }

    #[test]
    fn on_axis_fork_selects_lg01() {
        let st = analyzer_state(&AnalyzerSetting::fork(0.0, 0.0, 140.0), &AnalysisOptics::default()).unwrap();
        assert!(st.beta_weight() >= 0.999);
        assert!(st.leakage < MAX_LEAKAGE);
    }

    #[test]
    fn orientation_sets_relative_phase() {
        let optics = AnalysisOptics::default().with_nodes(128, 128);
        for theta in [0.0, PI / 2.0, 1.0, PI, 3.0 * PI / 2.0] {
            let st = analyzer_state(&AnalyzerSetting::fork(0.6, theta, 140.0), &optics).unwrap();
            let rel = (st.beta / st.alpha).arg();
            let diff = (rel - theta).rem_euclid(2.0 * PI);
            assert!(diff < 1e-9 || 2.0 * PI - diff < 1e-9, "theta {theta}: phase {rel}");
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        let optics = AnalysisOptics::default().with_nodes(64, 64);
        let mut s = AnalyzerSetting::fork(0.1, 0.0, 140.0);
        s.hologram_charge = 2;
        assert!(analyzer_state(&s, &optics).is_err());
        let s = AnalyzerSetting::fork(-0.1, 0.0, 140.0);
        assert!(analyzer_state(&s, &optics).is_err());
    }

    #[test]
    fn excessive_leakage_is_an_error() {
        // basis waist far from the fiber mode: the on-axis fork captures < 50%
        let optics = AnalysisOptics { analysis_waist_um: 400.0, ..AnalysisOptics::default() };
        assert!(matches!(analyzer_state(&AnalyzerSetting::fork(0.0, 0.0, 140.0), &optics), Err(Error::Leakage { .. })));
    }

    #[test]
    fn default_waist_matches_optimizer() {
        let w = matched_analysis_waist(PAPER_FIBER_WAIST_UM, DEFAULT_NODES, DEFAULT_NODES).unwrap();
        assert!((w - DEFAULT_ANALYSIS_WAIST_UM).abs() < 1e-3, "optimizer gives {w}");
    }

    #[test]
    fn partner_pairs() {
        let z = AnalyzerSetting::blank(140.0);
        assert_eq!(z.partner().partner(), z);
        let p = AnalyzerSetting::fork(0.7, 0.0, 140.0);
        assert!((p.partner().orientation - PI).abs() < 1e-15);
    }
}
