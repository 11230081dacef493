use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ExpertAction, Institution, PricePair, ProblemType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseValueError {
    #[error("not a decimal number: {0:?}")]
    Decimal(String),
    #[error("{0:?} has fractions of a cent")]
    SubCent(String),
    #[error("probability {0} outside [0, 1]")]
    Probability(String),
    #[error("unknown {kind} {value:?} (expected one of: {expected})")]
    Label {
        kind: &'static str,
        value: String,
        expected: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid price pair ({low}, {high}): need {min} <= low <= high <= {max}")]
    InvalidPricePair {
        low: i64,
        high: i64,
        min: i64,
        max: i64,
    },
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
    #[error("{action} is not legal under {institution} for a {problem} problem")]
    IllegalAction {
        institution: Institution,
        problem: ProblemType,
        action: ExpertAction,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Value(#[from] ParseValueError),
    #[error("price distribution weights sum to {sum}, not 1")]
    WeightsDoNotSumToOne { sum: f64 },
    #[error("price distribution is empty")]
    EmptyDistribution,
    #[error("negative weight {weight} for {prices}")]
    NegativeWeight { prices: PricePair, weight: f64 },
    #[error("delegated LLM policy has objective {found:?} but the expert chose {chosen:?}")]
    ObjectiveMismatch { chosen: String, found: String },
    #[error("no objective-free rational policy exists")]
    NoRationalObjective,
    #[error("replay pool for {0} has no records")]
    EmptyReplayPool(Institution),
    #[error(
        "no price pair attracts consumers at a profit under {institution}: the market breaks down"
    )]
    MarketBreakdown { institution: Institution },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("expert {expert} emitted an illegal action: {source}")]
    IllegalExpertAction { expert: usize, source: ModelError },
    #[error("expert {expert} posted an invalid price pair: {source}")]
    InvalidOffer { expert: usize, source: ModelError },
    #[error("expected {expected} {role} policies, got {found}")]
    PolicyCount {
        role: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("replication {rep}: {source}")]
    Replication { rep: u64, source: Box<EngineError> },
    #[error("number of replications must be at least 1")]
    NoReplications,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("closed-form evaluation unavailable: {0}")]
    NotClosedForm(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no records")]
    NoRecords,
    #[error("no valid records ({rejected} rows rejected)")]
    AllRejected { rejected: usize },
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("record {index}: {source}")]
    InvalidRecord { index: usize, source: ModelError },
    #[error("record {index}: approached Player A{chosen}, but only {experts} experts are listed")]
    InvalidChoice {
        index: usize,
        chosen: usize,
        experts: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Why a model reply could not be turned into a decision.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("no `ANSWER:` line found")]
    MissingTrailer,
    #[error("malformed answer line: {0}")]
    Malformed(String),
    #[error("prices outside the grid: {0}")]
    OutOfGrid(ModelError),
    #[error("illegal action: {0}")]
    IllegalAction(ModelError),
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("{turn}: no usable answer after {attempts} attempts; last error: {last}")]
    ParseRetriesExhausted {
        turn: String,
        attempts: usize,
        last: AnswerError,
    },
    #[error("replayed transcript ran out of replies at turn {0}")]
    ReplayExhausted(usize),
    #[error(
        "replayed transcript diverges at turn {turn}: the request differs from the recorded one"
    )]
    ReplayMismatch { turn: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("transcript: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{action} is not allowed in phase {phase}; allowed in: {allowed}")]
    OutOfPhase {
        action: &'static str,
        phase: String,
        allowed: String,
    },
    #[error("{action} is only available to the {role} in this session")]
    WrongRole {
        action: &'static str,
        role: &'static str,
    },
    #[error("rejected submission: {0}")]
    Illegal(String),
    #[error("session setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("digest log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
