use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (shape, non-finite cells, duplicate names).
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Exhaustive enumeration requested beyond the supported size.
    #[error("capacity exceeded: {what} = {value}, maximum is {max}")]
    Capacity {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("singular design: column(s) {columns:?} are linearly dependent on the others")]
    SingularDesign { columns: Vec<String> },

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("degenerate curvature: {0}")]
    DegenerateCurvature(String),

    #[error("no sign change: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NoRoot {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. }
                | Error::DegenerateScale(_)
                | Error::DegenerateCurvature(_)
                | Error::NoRoot { .. }
        )
    }
}
