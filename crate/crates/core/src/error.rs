use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("impulse response of length {len} does not fit an FFT of size {fft_size}")]
    ResponseTooLong { len: usize, fft_size: usize },

    #[error("negative magnitude {value} at bin {bin}")]
    NegativeMagnitude { bin: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "forward path and microphone response are rank deficient (singular value ratio {ratio:e})"
    )]
    RankDeficient { ratio: f64 },

    #[error("regularized normal matrix is singular")]
    SingularSystem,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("desired response has zero magnitude at bin {bin}")]
    ZeroDesiredMagnitude { bin: usize },

    #[error("no frequency bins between {f_low} Hz and {f_up} Hz")]
    EmptyBand { f_low: f64, f_up: f64 },

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("infeasible synthetic scene: {0}")]
    InfeasibleSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures that come from the numerics rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::SingularSystem
                | Error::Numerical(_)
                | Error::ZeroDesiredMagnitude { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
