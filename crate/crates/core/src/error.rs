use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("sample period {dt_s} s cannot represent {freq_hz} Hz (Nyquist {nyquist_hz} Hz)")]
    Nyquist { dt_s: f64, freq_hz: f64, nyquist_hz: f64 },

    #[error("format error at row {row}: {msg}")]
    Format { row: usize, msg: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize, last: Vec<f64> },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize, last_finite: Vec<f64> },

    #[error("efficiency undefined: original trace has zero rms")]
    UndefinedEfficiency,

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("infeasible acquisition: {0}")]
    Feasibility(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure (fits, training), as
    /// opposed to bad inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::DegenerateFit(_)
                | Error::Fit(_)
                | Error::Divergence { .. }
                | Error::UndefinedEfficiency
        )
    }
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}
