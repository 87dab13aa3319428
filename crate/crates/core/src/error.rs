use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state has no amplitude above the sparsity threshold")]
    ZeroState,

    #[error("mode map is not contractive: input mode ({t_index}, {f_index}) carries total weight {weight:.12}")]
    NonContractive { t_index: i64, f_index: i64, weight: f64 },

    #[error("bin index {index} out of range for {count} bins")]
    OutOfRange { index: usize, count: usize },

    #[error("expected {expected} digits, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("incompatible level shift: {0}")]
    IncompatibleShift(String),

    #[error("excitation train does not match bin layout: {0}")]
    LayoutMismatch(String),

    #[error("value {value} ps is not on the mode grid (quantum {quantum} ps)")]
    GridMismatch { value: f64, quantum: f64 },

    #[error("unknown level {0:?}")]
    UnknownLevel(String),

    #[error("sampling window of {window_ps:.1} ps cannot hold a field spreading over {needed_ps:.1} ps")]
    WindowOverflow { window_ps: f64, needed_ps: f64 },

    #[error("inconsistent settings: {0}")]
    InconsistentSettings(String),

    #[error("default schedule needs exactly two levels, got {0}")]
    UnsupportedLevels(usize),

    #[error("missing measurement basis {0}")]
    MissingBasis(String),

    #[error("insufficient interference scan: {0}")]
    InsufficientScan(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
