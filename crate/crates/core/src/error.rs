//! Error type shared by every module of the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty logits")]
    EmptyLogits,

    #[error("empty input")]
    EmptyInput,

    #[error("no attendable keys")]
    NoAttendableKeys,

    #[error("no attendable modality mass")]
    NoModalityMass,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// A probe was asked for a quantity that is undefined on this input.
    #[error("probe precondition failed: {0}")]
    Probe(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-identifying query: {0}")]
    NonIdentifying(String),

    #[error("degenerate query: {0}")]
    Degenerate(String),

    #[error("scene generation exhausted {retries} retries (seed {seed}, scene {scene_id})")]
    GenerationExhausted { seed: u64, scene_id: u64, retries: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("payload shorter than declared ({actual} of {declared} bytes)")]
    TruncatedPayload { declared: u64, actual: u64 },

    #[error("shape inconsistency: {0}")]
    ShapeInconsistency(String),

    #[error("unknown rotation pairing {found:?}; supported conventions: {supported}")]
    UnknownPairing { found: String, supported: String },

    #[error("malformed metadata: {0}")]
    Metadata(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// Short machine-readable tag used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyLogits => "empty_logits",
            Error::EmptyInput => "empty_input",
            Error::NoAttendableKeys => "no_attendable_keys",
            Error::NoModalityMass => "no_modality_mass",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidPartition(_) => "invalid_partition",
            Error::Probe(_) => "probe_precondition",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonIdentifying(_) => "non_identifying_query",
            Error::Degenerate(_) => "degenerate_query",
            Error::GenerationExhausted { .. } => "generation_exhausted",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::ShapeInconsistency(_) => "shape_inconsistency",
            Error::UnknownPairing { .. } => "unknown_pairing",
            Error::Metadata(_) => "metadata",
            Error::Io(_) => "io",
        }
    }
}
