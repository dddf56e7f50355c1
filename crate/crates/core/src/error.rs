use alloc::string::String;
use core::fmt;

/// Error kinds for the checkpoint wire format, kept distinct so callers can
/// report precisely what went wrong with a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    VersionMismatch,
    DescriptorMismatch,
    Truncated,
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    Shape(String),
    /// Invalid configuration (bad alpha, bad scale, bad flag value).
    Config(String),
    /// An API contract was violated (missing upstream grad, non-scalar loss).
    Contract(String),
    /// Non-finite values or other numeric failure.
    Numeric(String),
    /// Checkpoint encoding/decoding failure.
    Format(FormatErrorKind, String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Format(kind, m) => write!(f, "checkpoint format error ({kind:?}): {m}"),
        }
    }
}

#[cfg(any(test, feature = "std"))]
impl std::error::Error for Error {}
