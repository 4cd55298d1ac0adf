use num_complex::Complex64;
use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Each variant belongs to one of three failure classes (see [`Error::class`]),
/// which the command-line front end maps to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("zero too close to contour (min |q| = {min_modulus:e}, max |q| = {max_modulus:e})")]
    ZeroOnContour { min_modulus: f64, max_modulus: f64 },

    #[error("clustered zeros: {count} zero(s) unresolved in box re [{re_lo}, {re_hi}] x im [{im_lo}, {im_hi}]")]
    ClusteredZeros {
        re_lo: f64,
        re_hi: f64,
        im_lo: f64,
        im_hi: f64,
        count: usize,
    },

    #[error("ill-separated numerical rank; singular values {singular_values:?}")]
    IllSeparatedRank { singular_values: Vec<f64> },

    #[error("family is not index 0 at this point: kernel dim {kernel} != cokernel dim {cokernel}")]
    NotIndexZero { kernel: usize, cokernel: usize },

    #[error("reduction invalid at sigma = {sigma}: complement block condition number {cond:e}")]
    ReductionInvalid { sigma: Complex64, cond: f64 },

    #[error("root system: {0}")]
    RootSystem(String),

    #[error("dual normalization system singular (residual {residual:e})")]
    SingularNormalization { residual: f64 },

    #[error("pole on carrier circle: non-finite sample at node {node}")]
    PoleOnCarrier { node: usize },

    #[error("pairing matrix singular (condition number {cond:e})")]
    SingularPairing { cond: f64 },

    #[error("section not in kernel bundle (reconstruction residual {residual:e})")]
    NotInKernel { residual: f64 },

    #[error("clustered poles: minimum separation {separation:e} below {required:e}")]
    ClusteredPoles { separation: f64, required: f64 },

    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension jump at y = {y:?}: expected {expected}, found {found}")]
    DimensionJump {
        y: Vec<f64>,
        expected: usize,
        found: usize,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Failure classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Validation,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Parse => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Input(_) | Error::Json(_) | Error::Io(_) => ErrorClass::Parse,
            Error::Config(_)
            | Error::Domain(_)
            | Error::Validation(_)
            | Error::NotIndexZero { .. }
            | Error::DimensionJump { .. } => ErrorClass::Validation,
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
