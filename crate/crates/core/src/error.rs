use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("state is not physical: {0}")]
    NonPhysical(String),

    #[error("grid too coarse: radial spacing {spacing:.3} um exceeds waist/8 = {limit:.3} um")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("grid radius {radius:.1} um does not cover 6 waists ({required:.1} um)")]
    GridTooSmall { radius: f64, required: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("analyzer leaks {leakage:.3} of its power outside the LG00/LG01 subspace")]
    Leakage { leakage: f64 },

    #[error("no root in displacement range [{lo}, {hi}]")]
    NoBalancedPoint { lo: f64, hi: f64 },

    #[error("target {target} not reachable: mean over seeds spans [{lo:.4}, {hi:.4}]")]
    CalibrationUnreachable { target: f64, lo: f64, hi: f64 },

    #[error("source spectrum has no weight inside the truncation")]
    ZeroSpectrum,

    #[error("settings list is empty")]
    EmptySettings,

    #[error("per-trial probability {0} exceeds 1")]
    ProbabilityOverflow(f64),

    #[error("measurement set is not informationally complete (rank {rank} < 16)")]
    SingularGram { rank: usize },

    #[error("dataset carries no counts")]
    DegenerateData,

    #[error("no off-peak coincidences; g2 normalization undefined")]
    UndefinedNormalization,

    #[error("histogram needs at least 3 off-peak windows, got {0}")]
    TooFewWindows(usize),

    #[error("witness table `{0}` is empty")]
    EmptyTable(&'static str),

    #[error("unknown basis label `{0}`")]
    UnknownLabel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
