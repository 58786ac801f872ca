use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no usable data: {0}")]
    EmptyData(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown name '{0}'")]
    Lookup(String),

    #[error("singular design: term '{term}' is (nearly) collinear with preceding terms")]
    SingularDesign { term: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("response level error: {0}")]
    Level(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("grouping error: {0}")]
    Grouping(String),

    #[error("weak instrument: |b_xin| = {b_xin} does not exceed {floor_multiple} x SE = {floor}")]
    WeakInstrument {
        b_xin: f64,
        floor_multiple: f64,
        floor: f64,
    },

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the inputs or configuration rather than by
    /// the data encountered while running an analysis.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_) | Error::Validation(_) | Error::Lookup(_) | Error::Parse { .. } | Error::Json(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_))
    }
}
