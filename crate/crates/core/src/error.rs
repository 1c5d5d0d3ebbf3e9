use thiserror::Error;

/// Errors raised by model construction, strategy evaluation, integration and
/// trajectory analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is out of range: {expected}")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("invalid integration config: {0}")]
    InvalidConfig(String),

    /// Every effective transmission term vanishes, so no finite threshold exists.
    #[error("no threshold: all effective transmission terms are zero")]
    NoThreshold,

    #[error("infection rates differ (gamma = {gammas:?}); equal-gamma model required")]
    UnequalGamma { gammas: Vec<f64> },

    #[error("regulated strategy needs S at sample time t = {t}")]
    MissingSample { t: f64 },

    #[error("regulated strategy skipped the sample at t = {expected} (queried t = {t})")]
    SkippedSample { expected: f64, t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("conservation drift {drift:e} at t = {t}")]
    ConservationDrift { t: f64, drift: f64 },

    #[error("trajectory ended at t = {t_end} before reaching quiescence")]
    NotQuiescent { t_end: f64 },

    #[error("no outbreak: E has no interior maximum")]
    NoOutbreak,

    #[error("trajectory never enters the outbreak cone")]
    NotOutbreakCondition,

    #[error("trajectory ended at t = {t_end} while the regulated strategy was still active")]
    InsufficientHorizon { t_end: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
