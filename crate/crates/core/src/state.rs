//! Two-qubit states over the OAM basis, the source states, and the Born rule.
//!
//! Ordering of the product basis is `|00>, |01>, |10>, |11>` with the first
//! factor the anti-Stokes photon and the second the atomic excitation (read
//! out as the Stokes photon). Logical `|1>` on the photon is OAM +1; on the
//! atom it is the conjugate excitation carrying -1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
pub const PURE_NORM_TOL: f64 = 1e-12;
/// Largest excitation probability for which the single-excitation truncation holds.
pub const MAX_EXCITATION_PROBABILITY: f64 = 0.1;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn kron2(a: &Vector2<C64>, b: &Vector2<C64>) -> Vec4 {
    Vec4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

pub fn kron_mat2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Mat4 {
    Mat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// Pauli matrices, index 0 is the identity.
pub fn pauli(k: usize) -> Matrix2<C64> {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match k {
        0 => Matrix2::new(o, z, z, o),
        1 => Matrix2::new(z, o, o, z),
        2 => Matrix2::new(z, -i, i, z),
        3 => Matrix2::new(o, z, z, -o),
        _ => panic!("pauli index {k} out of range"),
    }
}

/// Qubit-exchange operator on the two factors.
pub fn swap_operator() -> Mat4 {
    let mut s = Mat4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            s[(2 * b + a, 2 * a + b)] = c(1.0, 0.0);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureTwoQubit {
    amps: Vec4,
}

impl PureTwoQubit {
    pub fn new(amps: [C64; 4]) -> Result<Self> {
        let v = Vec4::from(amps);
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("amplitudes"));
        }
        let norm = v.norm_squared();
        if (norm - 1.0).abs() > PURE_NORM_TOL {
            return Err(invalid("amplitudes", format!("squared norm {norm} != 1")));
        }
        Ok(Self { amps: v })
    }

    pub fn normalized(amps: [C64; 4]) -> Result<Self> {
        let v = Vec4::from(amps);
        let n = v.norm();
        if !n.is_finite() {
            return Err(Error::NonFinite("amplitudes"));
        }
        if n == 0.0 {
            return Err(invalid("amplitudes", "zero vector"));
        }
        Ok(Self { amps: v / c(n, 0.0) })
    }

    pub fn amplitudes(&self) -> &Vec4 {
        &self.amps
    }

    pub fn density(&self) -> TwoQubitState {
        TwoQubitState { matrix: self.amps * self.amps.adjoint() }
    }

    /// Schmidt coefficients (squared), largest first.
    pub fn schmidt_weights(&self) -> [f64; 2] {
        let m = Matrix2::new(self.amps[0], self.amps[1], self.amps[2], self.amps[3]);
        let sv = m.singular_values();
        let (a, b) = (sv[0] * sv[0], sv[1] * sv[1]);
        if a >= b {
            [a, b]
        } else {
            [b, a]
        }
    }
}

/// `(|0>|0> + gamma |1>|1>) / sqrt(1 + |gamma|^2)`.
pub fn psi_gamma(gamma: C64) -> Result<PureTwoQubit> {
    if !gamma.re.is_finite() || !gamma.im.is_finite() {
        return Err(Error::NonFinite("gamma"));
    }
    let n = (1.0 + gamma.norm_sqr()).sqrt();
    let zero = c(0.0, 0.0);
    PureTwoQubit::new([c(1.0 / n, 0.0), zero, zero, gamma / n])
}

/// The Bell state `psi_gamma(1)`.
pub fn bell() -> PureTwoQubit {
    psi_gamma(c(1.0, 0.0)).expect("finite")
}

/// Density operator on two qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    matrix: Mat4,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positivity at the module tolerances.
    pub fn new(matrix: Mat4) -> Result<Self> {
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        let herm = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(Error::NonPhysical(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NonPhysical(format!("trace {tr} != 1")));
        }
        let s = Self { matrix: hermitian_part(&matrix) };
        let min = s.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::NonPhysical(format!("negative eigenvalue {min:e}")));
        }
        Ok(s)
    }

    /// Trusted construction for matrices that are physical by construction.
    pub(crate) fn from_matrix_unchecked(matrix: Mat4) -> Self {
        Self { matrix: hermitian_part(&matrix) }
    }

    pub fn maximally_mixed() -> Self {
        Self { matrix: Mat4::identity() * c(0.25, 0.0) }
    }

    /// `v * |bell><bell| + (1 - v) * I/4`.
    pub fn werner(v: f64) -> Self {
        let b = bell().density().matrix;
        Self::from_matrix_unchecked(b * c(v, 0.0) + Mat4::identity() * c((1.0 - v) / 4.0, 0.0))
    }

    /// Convex combination `w * a + (1 - w) * b`.
    pub fn mix(a: &Self, b: &Self, w: f64) -> Self {
        Self::from_matrix_unchecked(a.matrix * c(w, 0.0) + b.matrix * c(1.0 - w, 0.0))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = self.matrix.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn trace_distance(&self, other: &Self) -> f64 {
        let d = self.matrix - other.matrix;
        0.5 * d.symmetric_eigen().eigenvalues.iter().map(|e| e.abs()).sum::<f64>()
    }

    /// Exchange the two subsystems.
    pub fn swapped(&self) -> Self {
        let s = swap_operator();
        Self::from_matrix_unchecked(s * self.matrix * s)
    }

    /// `(ua x ub) rho (ua x ub)^dagger`.
    pub fn local_rotation(&self, ua: &Matrix2<C64>, ub: &Matrix2<C64>) -> Self {
        let u = kron_mat2(ua, ub);
        Self::from_matrix_unchecked(u * self.matrix * u.adjoint())
    }

    /// Element `<row|rho|col>` with rows indexed in product-basis order.
    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }
}

fn hermitian_part(m: &Mat4) -> Mat4 {
    (m + m.adjoint()) * c(0.5, 0.0)
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    dim: usize,
    matrix: Vec<[f64; 2]>,
}

impl Serialize for TwoQubitState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateJson { dim: 4, matrix: matrix_to_pairs(&self.matrix) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoQubitState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = StateJson::deserialize(d)?;
        let m = matrix_from_pairs(raw.dim, &raw.matrix).map_err(D::Error::custom)?;
        TwoQubitState::new(m).map_err(D::Error::custom)
    }
}

/// Row-major `[[re, im], ...]` layout used by every JSON emitter.
pub fn matrix_to_pairs(m: &Mat4) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(16);
    for r in 0..4 {
        for col in 0..4 {
            let z = m[(r, col)];
            out.push([z.re, z.im]);
        }
    }
    out
}

pub fn matrix_from_pairs(dim: usize, pairs: &[[f64; 2]]) -> Result<Mat4> {
    if dim != 4 || pairs.len() != 16 {
        return Err(invalid("matrix", format!("expected dim 4 with 16 entries, got dim {dim} with {}", pairs.len())));
    }
    Ok(Mat4::from_fn(|r, col| {
        let [re, im] = pairs[4 * r + col];
        c(re, im)
    }))
}

/// Single-qubit analysis state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasBasisState {
    Zero,
    One,
    Plus,
    Minus,
    U,
    D,
    /// Normalized `alpha|0> + beta|1>`.
    Custom(C64, C64),
}

impl MeasBasisState {
    pub const NAMED: [MeasBasisState; 6] =
        [MeasBasisState::Zero, MeasBasisState::One, MeasBasisState::Plus, MeasBasisState::Minus, MeasBasisState::U, MeasBasisState::D];

    pub fn custom(alpha: C64, beta: C64) -> Result<Self> {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid("basis state", "amplitudes must be finite and non-zero"));
        }
        Ok(MeasBasisState::Custom(alpha / n, beta / n))
    }

    pub fn amplitudes(&self) -> Vector2<C64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            MeasBasisState::Zero => Vector2::new(c(1.0, 0.0), c(0.0, 0.0)),
            MeasBasisState::One => Vector2::new(c(0.0, 0.0), c(1.0, 0.0)),
            MeasBasisState::Plus => Vector2::new(c(h, 0.0), c(h, 0.0)),
            MeasBasisState::Minus => Vector2::new(c(h, 0.0), c(-h, 0.0)),
            MeasBasisState::U => Vector2::new(c(h, 0.0), c(0.0, h)),
            MeasBasisState::D => Vector2::new(c(h, 0.0), c(0.0, -h)),
            MeasBasisState::Custom(a, b) => Vector2::new(a, b),
        }
    }

    /// The orthogonal state of the same basis.
    pub fn orthogonal(&self) -> Self {
        match *self {
            MeasBasisState::Zero => MeasBasisState::One,
            MeasBasisState::One => MeasBasisState::Zero,
            MeasBasisState::Plus => MeasBasisState::Minus,
            MeasBasisState::Minus => MeasBasisState::Plus,
            MeasBasisState::U => MeasBasisState::D,
            MeasBasisState::D => MeasBasisState::U,
            MeasBasisState::Custom(a, b) => MeasBasisState::Custom(-b.conj(), a.conj()),
        }
    }

    /// True for the OAM eigenstates `|0>`, `|1>`.
    pub fn is_diagonal(&self) -> bool {
        matches!(self, MeasBasisState::Zero | MeasBasisState::One)
    }
}

impl fmt::Display for MeasBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasBasisState::Zero => f.write_str("zero"),
            MeasBasisState::One => f.write_str("one"),
            MeasBasisState::Plus => f.write_str("plus"),
            MeasBasisState::Minus => f.write_str("minus"),
            MeasBasisState::U => f.write_str("u"),
            MeasBasisState::D => f.write_str("d"),
            MeasBasisState::Custom(a, b) => write!(f, "custom({}:{}:{}:{})", a.re, a.im, b.re, b.im),
        }
    }
}

impl FromStr for MeasBasisState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "zero" => MeasBasisState::Zero,
            "one" => MeasBasisState::One,
            "plus" => MeasBasisState::Plus,
            "minus" => MeasBasisState::Minus,
            "u" => MeasBasisState::U,
            "d" => MeasBasisState::D,
            other => {
                let inner = other
                    .strip_prefix("custom(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::UnknownLabel(other.to_string()))?;
                let parts: Vec<f64> = inner
                    .split(':')
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::UnknownLabel(other.to_string()))?;
                if parts.len() != 4 {
                    return Err(Error::UnknownLabel(other.to_string()));
                }
                // Stored amplitudes are already normalized; keep them bit-exact.
                MeasBasisState::Custom(c(parts[0], parts[1]), c(parts[2], parts[3]))
            }
        })
    }
}

impl Serialize for MeasBasisState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MeasBasisState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `<ab|rho|ab>`, clipped into `[0, 1]` when within tolerance of the boundary.
pub fn born_probability(state: &TwoQubitState, a: &MeasBasisState, b: &MeasBasisState) -> Result<f64> {
    let v = kron2(&a.amplitudes(), &b.amplitudes());
    let p = (v.adjoint() * state.matrix * v)[(0, 0)].re;
    clip_probability(p)
}

pub(crate) fn clip_probability(p: f64) -> Result<f64> {
    if !(-PSD_TOL..=1.0 + PSD_TOL).contains(&p) {
        return Err(Error::NonPhysical(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

pub fn purity(state: &TwoQubitState) -> f64 {
    (state.matrix * state.matrix).trace().re
}

pub fn fidelity_to_pure(state: &TwoQubitState, target: &PureTwoQubit) -> f64 {
    let v = target.amplitudes();
    (v.adjoint() * state.matrix * v)[(0, 0)].re.clamp(0.0, 1.0)
}

/// OAM amplitudes `C_m` of the emitted pair, with the weak excitation probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpectrum {
    coefficients: BTreeMap<i32, C64>,
    excitation_probability: f64,
    m_max: i32,
}

impl SourceSpectrum {
    pub fn new(coefficients: impl IntoIterator<Item = (i32, C64)>, excitation_probability: f64, m_max: i32) -> Result<Self> {
        if m_max < 0 {
            return Err(invalid("m_max", "must be >= 0"));
        }
        if !(excitation_probability > 0.0 && excitation_probability <= MAX_EXCITATION_PROBABILITY) {
            return Err(invalid("excitation_probability", format!("{excitation_probability} outside (0, {MAX_EXCITATION_PROBABILITY}]")));
        }
        let coefficients: BTreeMap<i32, C64> = coefficients.into_iter().collect();
        if coefficients.keys().any(|m| m.abs() > m_max) {
            return Err(invalid("coefficients", format!("index beyond m_max = {m_max}")));
        }
        let norm: f64 = coefficients.values().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(invalid("coefficients", format!("sum |C_m|^2 = {norm} != 1")));
        }
        Ok(Self { coefficients, excitation_probability, m_max })
    }

    pub fn coefficients(&self) -> &BTreeMap<i32, C64> {
        &self.coefficients
    }

    pub fn excitation_probability(&self) -> f64 {
        self.excitation_probability
    }

    pub fn m_max(&self) -> i32 {
        self.m_max
    }
}

/// Post-selected pair state `sum_m C_m |m>_AS |-m>_a` on two `(2 m_max + 1)`-level systems.
#[derive(Debug, Clone, PartialEq)]
pub struct QuditPairState {
    m_max: i32,
    amplitudes: BTreeMap<i32, C64>,
}

impl QuditPairState {
    pub fn dim(&self) -> usize {
        (2 * self.m_max + 1) as usize
    }

    pub fn m_max(&self) -> i32 {
        self.m_max
    }

    /// Normalized amplitude of `|m>_AS |-m>_a`.
    pub fn amplitude(&self, m: i32) -> C64 {
        self.amplitudes.get(&m).copied().unwrap_or_default()
    }

    /// Dense vector over `|j>_AS |k>_a`, index `j * dim + k`, level `i` holding OAM `i - m_max`.
    pub fn to_dense(&self) -> Vec<C64> {
        let d = self.dim();
        let mut v = vec![C64::default(); d * d];
        for (&m, &a) in &self.amplitudes {
            let j = (m + self.m_max) as usize;
            let k = (-m + self.m_max) as usize;
            v[j * d + k] = a;
        }
        v
    }

    /// Reduced state of the anti-Stokes photon.
    pub fn reduced_photon(&self) -> DMatrix<C64> {
        let d = self.dim();
        let v = self.to_dense();
        DMatrix::from_fn(d, d, |j, jp| (0..d).map(|k| v[j * d + k] * v[jp * d + k].conj()).sum())
    }

    /// Schmidt weights, which for this state are just `|C_m|^2`.
    pub fn schmidt_weights(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.amplitudes.values().map(|z| z.norm_sqr()).filter(|&x| x > 0.0).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        w
    }

    pub fn schmidt_rank(&self) -> usize {
        self.schmidt_weights().iter().filter(|&&w| w > 1e-15).count()
    }

    /// Entanglement entropy in bits.
    pub fn entanglement_entropy(&self) -> f64 {
        self.schmidt_weights().iter().filter(|&&w| w > 0.0).map(|&w| -w * w.log2()).sum()
    }

    /// Two-qubit view when the support lies inside `{0, +1}`.
    pub fn to_two_qubit(&self) -> Option<PureTwoQubit> {
        if self.amplitudes.iter().any(|(&m, z)| m != 0 && m != 1 && z.norm_sqr() > 0.0) {
            return None;
        }
        let zero = C64::default();
        PureTwoQubit::normalized([self.amplitude(0), zero, zero, self.amplitude(1)]).ok()
    }
}

/// One-excitation branch of the source after photon detection.
pub fn truncated_source_state(spectrum: &SourceSpectrum) -> Result<QuditPairState> {
    let norm: f64 = spectrum.coefficients.iter().filter(|(m, _)| m.abs() <= spectrum.m_max).map(|(_, z)| z.norm_sqr()).sum();
    if norm <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let s = norm.sqrt();
    let amplitudes =
        spectrum.coefficients.iter().filter(|(m, z)| m.abs() <= spectrum.m_max && z.norm_sqr() > 0.0).map(|(&m, &z)| (m, z / s)).collect();
    Ok(QuditPairState { m_max: spectrum.m_max, amplitudes })
}
