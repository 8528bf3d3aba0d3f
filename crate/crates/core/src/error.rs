use thiserror::Error;

/// Errors raised anywhere in the SVKK chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(
        "unsupported resampling ratio {ratio} (no fraction with denominator <= {max_denominator})"
    )]
    UnsupportedRatio { ratio: f64, max_denominator: u64 },

    #[error("degenerate training: measured Stokes matrix has condition number {cond:.3e}")]
    DegenerateTraining { cond: f64 },

    #[error("frame sync failed: peak-to-sidelobe ratio {psr_db:.2} dB")]
    SyncFailure { psr_db: f64 },

    #[error("equalizer diverged at symbol {symbol_index}")]
    Diverged { symbol_index: usize },

    #[error("OSNR estimation unavailable: {0}")]
    EstimationUnavailable(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
