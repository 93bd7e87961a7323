use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero or non-finite vector")]
    DegenerateVector,

    #[error("vector norm {norm} is too far from 1 to renormalize")]
    NotUnit { norm: f64 },

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("no valid pixels in batch")]
    EmptyBatch,

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sample resultant vanishes; mean direction is undefined")]
    DegenerateResultant,

    #[error("need {needed} valid pixels, have {available}")]
    InsufficientPixels { needed: usize, available: usize },

    #[error("raw direction head has norm {norm:e}, below the 1e-12 floor")]
    Normalization { norm: f64 },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            domain,
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
