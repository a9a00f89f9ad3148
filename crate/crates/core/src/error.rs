use alloc::string::String;
use core::fmt;

use crate::codec::DecodeError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible.
    Shape {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// An argument is outside its valid domain.
    Argument(String),
    /// The loss became non-finite or exploded during training.
    Diverged {
        stage: usize,
        epoch: usize,
        loss: f64,
    },
    Decode(DecodeError),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn shape(op: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape { op, expected, found }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, expected, found } => {
                write!(f, "{op}: shape mismatch, expected {}x{}, found {}x{}", expected.0, expected.1, found.0, found.1)
            }
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Diverged { stage, epoch, loss } => {
                write!(f, "training diverged at stage {stage}, epoch {epoch} (loss {loss})")
            }
            Error::Decode(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<DecodeError> for Error {
    fn from(e: DecodeError) -> Self {
        Error::Decode(e)
    }
}
