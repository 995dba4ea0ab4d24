use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyData,

    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("degenerate denominator in {context}: {value:e} (threshold {threshold:e})")]
    DegenerateDenominator {
        context: String,
        value: f64,
        threshold: f64,
    },

    #[error("missing history for period {k}, lag {m}")]
    MissingHistory { k: usize, m: usize },

    #[error("time {t} outside period [{k}, {k}+1)")]
    OutOfWindow { t: f64, k: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("need at least {need} individuals, have {have}")]
    TooFewIndividuals { need: usize, have: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("panel validation failed:\n{0}")]
    InvalidPanel(crate::panel::ValidationReport),

    #[error("{excluded} of {total} bootstrap replicates failed after retries")]
    BootstrapFailure { excluded: usize, total: usize },

    #[error("fold {fold}, period {k}, lag {m}: {source}")]
    FoldFit {
        fold: usize,
        k: usize,
        m: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
