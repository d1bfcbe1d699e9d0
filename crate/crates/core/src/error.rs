use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the core can report.
///
/// Format errors (`BadMagic`, `Truncated`, `ZeroDimension`, `NonFinite`,
/// `CorruptMask`) are kept distinct so callers can tell a damaged file from a
/// misuse of the API.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    BadMagic([u8; 4]),
    Truncated { expected: usize, actual: usize },
    TrailingBytes { expected: usize, actual: usize },
    ZeroDimension,
    NonFinite { index: usize },
    SizeOverflow,
    CorruptMask { run_sum: u64, expected: u64 },
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    LengthMismatch { left: usize, right: usize },
    EmptyMask,
    OutOfRange { what: &'static str, value: f64 },
    MissingScore { index: usize },
    InvalidConfig(&'static str),
    PendingCrop { request_id: String },
    PendingRefine { request_id: String },
    UnknownImage(String),
    Source(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BadMagic(m) => write!(f, "bad magic {m:?}, expected \"SFG1\""),
            Error::Truncated { expected, actual } => {
                write!(f, "truncated payload: expected {expected} bytes, got {actual}")
            }
            Error::TrailingBytes { expected, actual } => {
                write!(f, "trailing bytes: expected {expected} bytes, got {actual}")
            }
            Error::ZeroDimension => f.write_str("zero dimension"),
            Error::NonFinite { index } => write!(f, "non-finite value at index {index}"),
            Error::SizeOverflow => f.write_str("dimensions overflow addressable size"),
            Error::CorruptMask { run_sum, expected } => {
                write!(f, "corrupt mask: runs sum to {run_sum}, expected {expected}")
            }
            Error::DimensionMismatch { left, right } => write!(
                f,
                "dimension mismatch: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::EmptyMask => f.write_str("mask is empty"),
            Error::OutOfRange { what, value } => write!(f, "{what} out of range: {value}"),
            Error::MissingScore { index } => write!(f, "prediction {index} has no score"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::PendingCrop { request_id } => {
                write!(f, "pending crop response for request {request_id}")
            }
            Error::PendingRefine { request_id } => {
                write!(f, "pending refine response for request {request_id}")
            }
            Error::UnknownImage(id) => write!(f, "unknown image_id {id}"),
            Error::Source(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for Error {}
