use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("division by zero at flat index {index}")]
    DivisionByZero { index: usize },
    #[error("{op}: empty tensor")]
    EmptyTensor { op: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("leaf {0} has no bound value")]
    UnboundLeaf(usize),
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("loss node must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("no gradient supplied for parameter {0}")]
    MissingGradient(usize),
    #[error("carrier constant component stayed below threshold after {0} resamples")]
    DegenerateCarrier(usize),

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: length {len} is not a multiple of the {record}-byte record size")]
    RecordSize {
        path: PathBuf,
        len: usize,
        record: usize,
    },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
    #[error("png decoding: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// Process exit code used by the command-line front end:
    /// 1 for configuration problems, 2 for data and I/O, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::RecordSize { .. }
            | Error::Malformed(_)
            | Error::Checkpoint(_)
            | Error::Io(_)
            | Error::Png(_)
            | Error::PngDecode(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Numerical(_) | Error::DegenerateCarrier(_) => 3,
            _ => 1,
        }
    }
}
