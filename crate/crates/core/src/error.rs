//! Shared error type. Every variant carries a stable machine-readable code
//! (`Error::code`) so CLI and service surfaces can expose errors as contract
//! tokens while keeping messages free-form.

use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    // model
    #[error("unknown record kind `{0}`")]
    UnknownKind(String),
    #[error("malformed entity id `{0}`: {1}")]
    MalformedId(String, String),

    // store
    #[error("stale revision for {id}: expected {expected}, current {actual}")]
    StaleRevision {
        id: String,
        expected: u64,
        actual: u64,
    },
    #[error("validation failed for {id}: {}", summarize(.violations))]
    ValidationFailed { id: String, violations: Vec<Violation> },
    #[error("record {id} originates at site `{origin}`, local site is `{local}`")]
    NotOriginSite {
        id: String,
        origin: String,
        local: String,
    },
    #[error("{kind} {id} not found")]
    NotFound { kind: String, id: String },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    // catalog
    #[error("type ({name}, {kind}) already registered")]
    DuplicateType { name: String, kind: String },
    #[error("operation would create a cycle: {0}")]
    CycleRejected(String),
    #[error("parent `{parent}` has kind {parent_kind}, expected {expected}")]
    KindMismatch {
        parent: String,
        parent_kind: String,
        expected: String,
    },
    #[error("a type cannot be associated with itself: {0}")]
    SelfAssociation(String),
    #[error("duplicate entry: {0}")]
    Duplicate(String),
    #[error("relation constraint violated: {0}")]
    RelationConstraint(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown site `{0}`")]
    UnknownSite(String),
    #[error("object must carry at least one type")]
    EmptyTypes,
    #[error("converter must have exactly one input and one output type, and they must differ")]
    ConverterArity,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("object {0} listed as both input and output of the same run")]
    InputOutputOverlap(String),

    // query
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("syntax error at {line}:{col}: {message}")]
    SyntaxError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown predicate at {line}:{col}: {message}")]
    UnknownPredicate {
        line: usize,
        col: usize,
        message: String,
    },

    // lineage
    #[error("no conversion path from {from} to {to}")]
    NoConversionPath { from: String, to: String },

    // scheduler
    #[error("function `{0}` is disabled")]
    FunctionDisabled(String),
    #[error("illegal job transition: {0}")]
    IllegalTransition(String),
    #[error("job {job} is assigned to `{assignee}`, not `{caller}`")]
    NotAssignee {
        job: String,
        assignee: String,
        caller: String,
    },
    #[error("unknown control target: {0}")]
    Unknown(String),

    // federation
    #[error("bundle seal mismatch: expected {expected}, computed {computed}")]
    SealMismatch { expected: String, computed: String },
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error("target `{target}` unreachable: {reason}")]
    TargetUnreachable { target: String, reason: String },
    #[error("site `{0}` has no endpoint and no output path was given")]
    NoEndpoint(String),

    // interfaces
    #[error("malformed ingest header: {0}")]
    MalformedHeader(String),
    #[error("already initialized: {0}")]
    AlreadyInitialized(String),
    #[error("feature `{0}` is disabled")]
    FeatureDisabled(String),
    #[error("bind failure: {0}")]
    BindFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable token for this error. Contract for CLI exit
    /// messages and service response bodies; messages may change, codes not.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownKind(_) => "UnknownKind",
            Error::MalformedId(_, _) => "MalformedId",
            Error::StaleRevision { .. } => "StaleRevision",
            Error::ValidationFailed { .. } => "ValidationFailed",
            Error::NotOriginSite { .. } => "NotOriginSite",
            Error::NotFound { .. } => "NotFound",
            Error::CorruptSnapshot(_) => "CorruptSnapshot",
            Error::DuplicateType { .. } => "DuplicateType",
            Error::CycleRejected(_) => "CycleRejected",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::SelfAssociation(_) => "SelfAssociation",
            Error::Duplicate(_) => "Duplicate",
            Error::RelationConstraint(_) => "RelationConstraint",
            Error::UnknownType(_) => "UnknownType",
            Error::UnknownSite(_) => "UnknownSite",
            Error::EmptyTypes => "EmptyTypes",
            Error::ConverterArity => "ConverterArity",
            Error::UnknownFunction(_) => "UnknownFunction",
            Error::InputOutputOverlap(_) => "InputOutputOverlap",
            Error::UnknownEntity(_) => "UnknownEntity",
            Error::SyntaxError { .. } => "SyntaxError",
            Error::UnknownPredicate { .. } => "UnknownPredicate",
            Error::NoConversionPath { .. } => "NoConversionPath",
            Error::FunctionDisabled(_) => "FunctionDisabled",
            Error::IllegalTransition(_) => "IllegalTransition",
            Error::NotAssignee { .. } => "NotAssignee",
            Error::Unknown(_) => "Unknown",
            Error::SealMismatch { .. } => "SealMismatch",
            Error::MalformedBundle(_) => "MalformedBundle",
            Error::TargetUnreachable { .. } => "TargetUnreachable",
            Error::NoEndpoint(_) => "NoEndpoint",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::AlreadyInitialized(_) => "AlreadyInitialized",
            Error::FeatureDisabled(_) => "FeatureDisabled",
            Error::BindFailure(_) => "BindFailure",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "IoError",
        }
    }
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.rule.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
