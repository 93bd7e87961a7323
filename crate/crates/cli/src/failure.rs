use std::fmt;
use std::io::ErrorKind;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERICAL: u8 = 4;

    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: Self::NUMERICAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<angmf::Error> for Failure {
    fn from(e: angmf::Error) -> Self {
        use angmf::Error as E;
        let code = match &e {
            E::Io(io) if io.kind() == ErrorKind::NotFound => Failure::USAGE,
            E::Io(_) | E::Format { .. } => Failure::IO,
            E::DegenerateVector
            | E::NotUnit { .. }
            | E::Domain { .. }
            | E::EmptyBatch
            | E::EmptyInput
            | E::Shape(_)
            | E::InsufficientPixels { .. } => Failure::USAGE,
            E::DegenerateResultant | E::Normalization { .. } | E::Divergence { .. } => {
                Failure::NUMERICAL
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        angmf::Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: Failure::IO,
            message: e.to_string(),
        }
    }
}
