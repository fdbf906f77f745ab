use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {needed} values, got {got}")]
    Length { needed: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate series ({0}): kernel self-covariance is zero")]
    DegenerateSeries(&'static str),

    #[error("degenerate region '{region}': column is constant")]
    DegenerateRegion { region: String },

    #[error("unsupported distribution '{0}'")]
    UnsupportedDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region index {index} out of range 1..={size}")]
    Index { index: usize, size: usize },

    #[error("self-loop on region {index}")]
    SelfLoop { index: usize },

    #[error("regions {first} and {second} share the same coordinates")]
    DuplicatePoint { first: String, second: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("isolated regions with zero row sum: {}", .regions.join(", "))]
    IsolatedRegion { regions: Vec<String> },

    #[error("convergence check failed: {0}")]
    Convergence(String),

    #[error("expected {expected} eigen spectra, got {got}")]
    SpectraMismatch { expected: usize, got: usize },

    #[error("null distribution has no samples")]
    EmptyNull,

    #[error("I - theta*W is numerically singular (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("bootstrap drew {attempts} resamples without collecting enough non-degenerate ones")]
    TooManyDegenerateResamples { attempts: usize },

    #[error("rank-deficient regression design: {0}")]
    RankDeficient(String),

    #[error("series of length {len} too short for AR({order}): need more than {}", 2 * .order + 2)]
    ShortSeries { len: usize, order: usize },

    #[error("max lag {max_lag} must be smaller than series length {len}")]
    Lag { max_lag: usize, len: usize },

    #[error("need at least {needed} samples, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: u64, column: usize, message: String },

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },

    #[error("non-numeric value '{value}' at line {line}, column {column}")]
    NonNumeric { line: u64, column: usize, value: String },

    #[error("weight matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("nonzero diagonal weight {value} at region {index}")]
    NonzeroDiagonal { index: usize, value: f64 },

    #[error("region '{region}': {source}")]
    InRegion {
        region: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI on stderr.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Length { .. } => "length_error",
            Error::NonFinite { .. } => "non_finite_error",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::DegenerateSeries(_) => "degenerate_series_error",
            Error::DegenerateRegion { .. } => "degenerate_region_error",
            Error::UnsupportedDistribution(_) => "unsupported_distribution",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Index { .. } => "index_error",
            Error::SelfLoop { .. } => "self_loop_error",
            Error::DuplicatePoint { .. } => "duplicate_point_error",
            Error::Size(_) => "size_error",
            Error::IsolatedRegion { .. } => "isolated_region_error",
            Error::Convergence(_) => "convergence_error",
            Error::SpectraMismatch { .. } => "spectra_mismatch",
            Error::EmptyNull => "empty_null",
            Error::SingularSystem { .. } => "singular_system_error",
            Error::TooManyDegenerateResamples { .. } => "too_many_degenerate_resamples",
            Error::RankDeficient(_) => "rank_deficient_error",
            Error::ShortSeries { .. } => "short_series_error",
            Error::Lag { .. } => "lag_error",
            Error::SampleSize { .. } => "sample_size_error",
            Error::Degenerate(_) => "degenerate_error",
            Error::Parse { .. } => "parse_error",
            Error::RaggedRow { .. } => "ragged_row_error",
            Error::NonNumeric { .. } => "non_numeric_error",
            Error::NotSquare { .. } => "not_square_error",
            Error::NonzeroDiagonal { .. } => "nonzero_diagonal_error",
            Error::InRegion { source, .. } => source.category(),
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "json_error",
        }
    }

    pub(crate) fn in_region(self, region: &str) -> Error {
        Error::InRegion {
            region: region.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if !e.is_io_error() {
            return Error::Csv(e.to_string());
        }
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Csv(format!("{other:?}")),
        }
    }
}
