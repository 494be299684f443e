use thiserror::Error;

/// Errors raised by the simulator.
///
/// Variants fall in two families: refusals (a size cap or contract
/// precondition was hit; the CLI maps these to exit code 2) and input
/// problems (malformed instance files, bad arguments; exit code 1).
#[derive(Debug, Error)]
pub enum NandError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("depth {depth} exceeds the configured cap of {cap}")]
    DepthOverCap { depth: u32, cap: u32 },

    #[error("system dimension {dim} exceeds the cap of {cap}")]
    DimensionOverCap { dim: usize, cap: usize },

    #[error(
        "dense reference needs dimension {dim} but the dense cap is {cap}; \
         set NANDWALK_DENSE_CAP or use a smaller system"
    )]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate}, last change {change:e})")]
    NonConvergence {
        iterations: usize,
        estimate: f64,
        change: f64,
    },

    #[error("spectral decomposition of {operator} is inaccurate (relative residual {residual:e})")]
    InaccurateSpectrum { operator: String, residual: f64 },

    #[error("ancilla register is not in |0> (amplitude mass {mass:e} on a=1)")]
    AncillaNotClear { mass: f64 },

    #[error("planned segment count {segments} exceeds the budget of {budget}")]
    SegmentBudget { segments: u64, budget: u64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl NandError {
    /// True for cap and contract refusals, as opposed to malformed input.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            NandError::DepthOverCap { .. }
                | NandError::DimensionOverCap { .. }
                | NandError::DenseCapExceeded { .. }
                | NandError::DimensionMismatch { .. }
                | NandError::NonConvergence { .. }
                | NandError::InaccurateSpectrum { .. }
                | NandError::AncillaNotClear { .. }
                | NandError::SegmentBudget { .. }
                | NandError::NotNormalized { .. }
                | NandError::CalibrationFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, NandError>;
