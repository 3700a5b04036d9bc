use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix or vector dimensions disagree with the instance.
    Shape(String),
    /// An agent index lies outside `0..n` or `0..m`.
    IndexOutOfRange { index: usize, len: usize },
    /// A search order is not a permutation of the mutual set.
    InvalidPermutation,
    /// `paper_instance` was asked for a name it does not know.
    UnknownInstance(String),
    /// Generator arguments outside their domain.
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::InvalidPermutation => f.write_str("order is not a permutation of the mutual set"),
            Error::UnknownInstance(name) => write!(f, "unknown instance name `{name}`"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
