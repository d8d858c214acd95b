use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("implied covariance is singular (minimum eigenvalue {min_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("rank-deficient design in {stage} (condition number {condition_number:e})")]
    RankDeficient {
        stage: String,
        condition_number: f64,
    },

    #[error("column `{column}` has zero variance")]
    DegenerateColumn { column: String },

    #[error("column `{0}` has no observed values after row exclusions")]
    EmptyColumn(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every candidate fit failed: {}", format_failures(.failures))]
    AllFitsFailed { failures: Vec<(usize, String)> },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("treatment takes a single value; no contrast is estimable")]
    SingleGroup,

    #[error("perfect separation: {fraction:.3} of propensities within 1e-6 of 0 or 1")]
    Separation { fraction: f64 },

    #[error("non-positive variance estimate for {what}")]
    NonPositiveVariance { what: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("proxy count {0} is odd; even NCO/NCE splits need an even count")]
    OddProxyCount(usize),

    #[error("{0} splits exceeds the enumeration limit")]
    TooManySplits(u128),

    #[error("{failed} of {total} bootstrap resamples failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("required column `{0}` not found")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("no rows survived ingestion")]
    NoRowsSurvived,

    #[error("role map: {0}")]
    Roles(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Outermost stage label, if the error was raised inside a labelled stage.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

fn format_failures(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .map(|(k, msg)| format!("k={k}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: what.to_string(),
            expected,
            found,
        })
    }
}
