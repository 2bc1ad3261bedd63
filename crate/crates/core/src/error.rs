use std::path::PathBuf;

/// Every failure the core library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("item sets do not match: {0}")]
    ItemMismatch(String),

    #[error("subject identifiers do not match: {0}")]
    SubjectMismatch(String),

    #[error("zero test information at theta = {theta}")]
    ZeroInformation { theta: f64 },

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("image `{image_id}` has a zero-norm embedding")]
    ZeroNorm { image_id: String },

    #[error("image `{0}` is not present in the similarity matrix")]
    MissingImage(String),

    #[error("no triads could be built: {0}")]
    NoTriads(String),

    #[error("instance too large for brute-force search: {0}")]
    TooLarge(String),

    #[error("stratum {stratum} is short by {deficit} items")]
    OverRequest { stratum: String, deficit: usize },

    #[error("item sets overlap on {0:?}")]
    Overlap(Vec<String>),

    #[error("unknown form `{0}`")]
    UnknownForm(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session `{0}` is complete")]
    SessionComplete(String),

    #[error("item `{got}` is not the pending item (expected {expected:?})")]
    StaleItem { expected: Option<String>, got: String },

    #[error("choice index {0} is outside 0..=2")]
    InvalidChoice(u8),

    #[error("schema mismatch in {path}: expected {expected}, found {found}")]
    SchemaMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Degenerate(_) => "degenerate",
            Error::UnknownItem(_) => "unknown_item",
            Error::ItemMismatch(_) => "item_mismatch",
            Error::SubjectMismatch(_) => "subject_mismatch",
            Error::ZeroInformation { .. } => "zero_information",
            Error::ZeroVariance(_) => "zero_variance",
            Error::ZeroNorm { .. } => "zero_norm",
            Error::MissingImage(_) => "missing_image",
            Error::NoTriads(_) => "no_triads",
            Error::TooLarge(_) => "too_large",
            Error::OverRequest { .. } => "over_request",
            Error::Overlap(_) => "overlap",
            Error::UnknownForm(_) => "unknown_form",
            Error::UnknownSession(_) => "unknown_session",
            Error::SessionComplete(_) => "session_complete",
            Error::StaleItem { .. } => "stale_item",
            Error::InvalidChoice(_) => "invalid_choice",
            Error::SchemaMismatch { .. } => "schema_mismatch",
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
