use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("no loss positions: every target is padding")]
    NoLossPositions,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("decoder prefix is empty or does not start with BOS")]
    BadPrefix,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("graft shape mismatch for `{name}`: source {src:?}, destination {dst:?}")]
    GraftShape {
        name: String,
        src: alloc::vec::Vec<usize>,
        dst: alloc::vec::Vec<usize>,
    },
    #[error("vocabulary fingerprint mismatch grafting `{name}`")]
    VocabMismatch { name: String },
    #[error("source checkpoint has no tensor `{0}`")]
    MissingSource(String),
    #[error("overlapping graft destinations `{0}` and `{1}`")]
    OverlappingDestinations(String, String),
    #[error("freeze strategy freezes {requested} layers but the stack has {available}")]
    LayerOutOfRange { requested: usize, available: usize },
    #[error("gradient supplied for frozen parameter `{0}`")]
    GradientForFrozen(String),
    #[error("gradient missing for trainable parameter `{0}`")]
    MissingGradient(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty dev set")]
    EmptyDevSet,
    #[error("vocabulary of size {0} cannot hold the reserved special tokens")]
    VocabTooSmall(usize),
    #[error("concept inventory exhausted: {0}")]
    InventoryExhausted(String),
    #[error("merge count must be non-negative, got {0}")]
    NegativeMerges(i64),
    #[error("max_len must be at least 2, got {0}")]
    MaxLenTooSmall(usize),
    #[error("beam size must be at least 1")]
    ZeroBeam,
    #[error("pivot vocabulary fingerprint mismatch: {0:016x} vs {1:016x}")]
    PivotMismatch(u64, u64),
    #[error("hypothesis/reference count mismatch: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("empty hypothesis set")]
    EmptyHypotheses,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}
