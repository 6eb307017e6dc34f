use thiserror::Error;

/// Errors raised across the detection and attribution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("identification error: {0}")]
    Identification(String),

    #[error("model is not over-identified ({instruments} instruments, {endogenous} endogenous)")]
    NotOveridentified { instruments: usize, endogenous: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no variance shift across regimes for channel {0}")]
    NoVarianceShift(String),

    #[error("shares undefined: all coefficients are zero")]
    UndefinedShares,

    #[error("cannot classify identification status from {0} method label(s)")]
    Unclassifiable(usize),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a period/pair (or other) context label.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
