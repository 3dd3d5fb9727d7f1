use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse `{field}`: {message}")]
    Parse {
        row: usize,
        field: String,
        message: String,
    },

    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },

    #[error("row {row}: non-positive consumption {value}")]
    NonPositiveConsumption { row: usize, value: f64 },

    #[error("row {row}: {field} = {value} outside [{min}, {max}]")]
    OutOfRange {
        row: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("missing dates: {}", format_dates(.0))]
    MissingDates(Vec<NaiveDate>),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("regressor `{0}` is constant over the training rows")]
    ConstantColumn(String),

    #[error("design matrix is rank deficient at column `{column}`")]
    RankDeficient { column: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("row {row}: forecast date {forecast} does not match realized date {realized}")]
    DateMismatch {
        row: usize,
        forecast: NaiveDate,
        realized: NaiveDate,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite (jitter up to {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("bootstrap failed: {failed} of {total} replica fits failed")]
    Bootstrap { failed: usize, total: usize },

    #[error("negative forecast variance {value:e} on horizon day {day}")]
    NegativeVariance { day: usize, value: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Numerical(_)
                | Error::Optimizer(_)
                | Error::Bootstrap { .. }
                | Error::NegativeVariance { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingColumn(_) => "missing_column",
            Error::Parse { .. } => "parse",
            Error::DuplicateDate { .. } => "duplicate_date",
            Error::NonPositiveConsumption { .. } => "non_positive_consumption",
            Error::OutOfRange { .. } => "out_of_range",
            Error::MissingDates(_) => "missing_dates",
            Error::InvalidSplit(_) => "invalid_split",
            Error::ConstantColumn(_) => "constant_column",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DateMismatch { .. } => "date_mismatch",
            Error::InsufficientData(_) => "insufficient_data",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::Numerical(_) => "numerical",
            Error::Optimizer(_) => "optimizer",
            Error::Bootstrap { .. } => "bootstrap",
            Error::NegativeVariance { .. } => "negative_variance",
            Error::UnknownModel(_) => "unknown_model",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

fn format_dates(dates: &[NaiveDate]) -> String {
    dates
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
