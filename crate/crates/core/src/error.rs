use std::path::PathBuf;

use thiserror::Error;

use crate::model::{CollectionMode, DataType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid practice: {mode:?} collection of {data_type:?} does not exist")]
    InvalidPractice {
        mode: CollectionMode,
        data_type: DataType,
    },
    #[error("score out of [1,9]: {0}")]
    ScoreOutOfRange(i64),
    #[error("coefficient {0} outside [0,1]")]
    CoefficientOutOfRange(f64),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("event order violated: {0}")]
    EventOrder(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("input is constant; statistic undefined")]
    DegenerateInput,
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("both samples are constant")]
    BothConstant,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ragged matrix: row {row} has {got} columns, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("need at least {k} responses to form {k} clusters, got {n}")]
    TooFewResponses { n: usize, k: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("unknown respondent `{0}`")]
    UnknownRespondent(String),
    #[error("template `{0}` has no {{top_values}} placeholder")]
    TemplateMissingTopValues(String),
    #[error("{got} templates supplied for {k} clusters")]
    TemplateCount { got: usize, k: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("seed `{0}` appears more than once")]
    DuplicateSeed(String),
    #[error("seed `{0}` lists itself as a similar app")]
    SelfSimilar(String),
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("app `{0}` has no keywords")]
    MissingKeywords(String),
    #[error("duplicate app id `{0}` in source")]
    DuplicateApp(String),
    #[error("no seeds supplied")]
    NoSeeds,
    #[error("jaccard of two empty sets is undefined")]
    BothEmpty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no profile selected")]
    NoProfileSelected,
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("profile `{profile}` has no acceptance data for {practice}")]
    UnknownPractice { profile: String, practice: String },
    #[error("no pending {0} notice")]
    NoPendingNotice(&'static str),
    #[error("app `{0}` is not on the device")]
    NotDownloaded(String),
    #[error("app `{0}` is already on the device")]
    AlreadyDownloaded(String),
    #[error("profile `{0}` has no members")]
    EmptyProfile(String),
    #[error("app `{0}` does not belong to a family")]
    NoFamily(String),
    #[error("clock went backwards: {now} < {last}")]
    ClockBackwards { now: u64, last: u64 },
    #[error("replay mismatch in session {session} at seq {seq}: {detail}")]
    ReplayMismatch {
        session: String,
        seq: u64,
        detail: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("encode: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("need at least 2 sessions for profile `{0}`")]
    TooFewSessions(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
