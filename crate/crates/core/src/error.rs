use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Contract violations reported by the core operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two inputs that must share a shape do not.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Channel or class counts disagree between paired inputs.
    ChannelMismatch { expected: usize, found: usize },
    /// A parameter is outside its documented domain.
    InvalidParameter(&'static str),
    /// An operation that needs at least one element got none.
    Empty(&'static str),
    /// A mask holds a class id the model or metric does not know about.
    ClassOutOfRange { class: u8, classes: usize },
    /// Every training sample was masked out.
    NoValidPixels,
    /// A round of self-training selected no pseudo-labelled image.
    NoneSelected { round: usize },
    /// Serialized model bytes could not be decoded.
    Decode(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::ChannelMismatch { expected, found } => {
                write!(f, "channel mismatch: expected {expected}, found {found}")
            }
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::ClassOutOfRange { class, classes } => {
                write!(f, "class id {class} out of range for {classes} classes")
            }
            Error::NoValidPixels => f.write_str("no valid pixels in the training set"),
            Error::NoneSelected { round } => {
                write!(f, "round {round} selected no reliable pseudo labels")
            }
            Error::Decode(what) => write!(f, "model decode error: {what}"),
        }
    }
}

impl core::error::Error for Error {}
