use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("missing 0x prefix: {0:?}")]
    MissingPrefix(String),
    #[error("{input:?} is empty or longer than {max_bytes} bytes")]
    Length { input: String, max_bytes: usize },
    #[error("invalid hex digits in {0:?}")]
    Digits(String),
}

/// Errors from ABI and storage-layout handling.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaError {
    #[error("malformed ABI: {0}")]
    MalformedAbi(String),
    #[error("malformed storage layout: {0}")]
    MalformedLayout(String),
    #[error("unknown function selector 0x{}", hex::encode(.0))]
    UnknownSelector([u8; 4]),
    #[error("calldata truncated: {0}")]
    TruncatedCalldata(String),
    #[error("unknown event topic {0}")]
    UnknownEvent(String),
    #[error("malformed event data: {0}")]
    MalformedEventData(String),
    #[error("unsupported type: {0}")]
    UnsupportedType(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("invalid trace json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(String),
    #[error("{name} must lie in [0, 1], got {value}")]
    Fraction { name: &'static str, value: String },
    #[error("minSupport must be positive")]
    MinSupport,
    #[error("invalid decimal {0:?}")]
    Decimal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("store holds no invariants for contract {0}")]
    NoStore(String),
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("digest mismatch: recorded {recorded}, computed {computed}")]
    DigestMismatch { recorded: String, computed: String },
    #[error("unknown schema version {0}")]
    SchemaUnknown(u64),
    #[error("expected artifact kind {expected:?}, found {found:?}")]
    KindMismatch { expected: String, found: String },
    #[error("invalid artifact: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("attack script {script} is not supported by the {machine} machine")]
    UnsupportedScript { script: String, machine: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {text:?}: {reason}")]
pub struct PropertyParseError {
    pub text: String,
    pub reason: String,
}
