use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),
    #[error("unknown control tier `{0}`")]
    UnknownTier(String),
    #[error("unsupported Likert scale with {0} points (expected 5 or 6)")]
    UnsupportedScale(u8),
    #[error("Likert value {value} outside 1..={points}")]
    LikertOutOfRange { value: i64, points: u8 },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("invalid pandemic context: {0}")]
    InvalidContext(String),
    #[error("invalid control measures: {0}")]
    InvalidMeasures(String),
    #[error("expected 9 intervention slots, got {0}")]
    InterventionSlots(usize),
    #[error("{0} requires a non-empty input")]
    Empty(&'static str),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("survey header: {0}")]
    Header(String),
    #[error("row {row}, field `{field}`: {message}")]
    Field {
        row: usize,
        field: String,
        message: String,
    },
    #[error("row {row}: {source}")]
    Csv {
        row: usize,
        #[source]
        source: csv::Error,
    },
    #[error("malformed age bracket `{0}`")]
    Bracket(String),
    #[error("name corpus is empty")]
    EmptyCorpus,
    #[error("records span several communities: {0:?}")]
    MixedCommunities(Vec<String>),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("template: {0}")]
    Template(String),
    #[error("invalid prompt input: {0}")]
    Input(String),
    #[error("cannot parse model response: {reason}")]
    Parse { reason: String, raw: String },
    #[error("missing behavior `{behavior}` in response")]
    MissingBehavior { behavior: String, raw: String },
    #[error("behavior `{behavior}` listed twice in response")]
    DuplicateBehavior { behavior: String, raw: String },
    #[error("value {value} for `{field}` outside [0, 1]")]
    OutOfRange {
        field: String,
        value: f64,
        raw: String,
    },
}

impl PromptError {
    /// The response text that failed to parse, if this is a parse failure.
    pub fn raw(&self) -> Option<&str> {
        match self {
            PromptError::Parse { raw, .. }
            | PromptError::MissingBehavior { raw, .. }
            | PromptError::DuplicateBehavior { raw, .. }
            | PromptError::OutOfRange { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("gave up after {attempts} attempts: {last}")]
    Transient { attempts: u32, last: String },
    #[error("request rejected with status {status}: {body}")]
    Permanent { status: u16, body: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("malformed completion payload: {0}")]
    Payload(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{persona} / {condition}, {kind} repetition {repetition}: {source}")]
    Repetition {
        persona: String,
        condition: String,
        kind: &'static str,
        repetition: u32,
        #[source]
        source: Box<SimError>,
    },
    #[error("response still unparseable after {attempts} attempts: {last}")]
    ParseExhausted { attempts: u32, last: PromptError },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{0} requires a non-empty sample")]
    Empty(&'static str),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("logistic regression did not converge in {iterations} iterations; gradient norms {trace:?}")]
    NonConvergent { iterations: usize, trace: Vec<f64> },
    #[error("control pool exhausted: {treated} treated units, {control} controls")]
    PoolExhausted { treated: usize, control: usize },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot write report {path}: {message}")]
    Write { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config references missing path {0}")]
    MissingPath(PathBuf),
    #[error("config: {0}")]
    Invalid(String),
}
