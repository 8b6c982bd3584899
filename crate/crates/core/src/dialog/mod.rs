//! Question/answer sessions driven by a decision tree.
//!
//! A session keeps a frontier of `(node, probability)` pairs. In greedy mode the
//! frontier is a single node; an unanswerable question moves it to the child with
//! the largest training support. In belief mode an unanswerable question spreads
//! the node's mass across all children by edge probability, and the next question
//! is taken from the heaviest frontier node.

mod engine;

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeValue, DatasetError, Schema};
use crate::induction::NodeId;

pub use engine::{DialogConfig, DialogEngine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DialogError {
    #[error("session is already classified")]
    SessionClosed,
    #[error("answer is for `{got}` but the pending question asks `{expected}`")]
    AttributeMismatch { expected: String, got: String },
    #[error("no question is pending")]
    NoPendingQuestion,
    #[error("session is waiting for a confirmation")]
    AwaitingConfirmation,
    #[error("no confirmation is pending")]
    NoPendingConfirmation,
    #[error("confidence {0} is outside (0, 1]")]
    InvalidConfidence(f64),
    #[error("session runs on tree version {session}, engine has version {engine}")]
    VersionMismatch { session: u64, engine: u64 },
    #[error("volunteered value for `{0}` must not be missing")]
    MissingVolunteered(String),
    #[error("replay turn {0} cannot be applied")]
    BadReplay(usize),
    #[error(transparent)]
    InvalidAnswer(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogMode {
    Greedy,
    Belief,
}

impl std::str::FromStr for DialogMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "belief" => Ok(Self::Belief),
            other => Err(format!("unknown dialog mode `{other}` (greedy|belief)")),
        }
    }
}

impl std::fmt::Display for DialogMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Greedy => "greedy",
            Self::Belief => "belief",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Classified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

/// A user's reply to a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer<T> {
    Known { value: AttributeValue, confidence: T },
    Unknown,
}

impl<T: num_traits::One> Answer<T> {
    pub fn certain(value: AttributeValue) -> Self {
        Answer::Known {
            value,
            confidence: T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TurnPayload<T> {
    /// System asks for an attribute.
    Question { text: String },
    /// System reads back a low-confidence answer.
    Confirm { text: String, value: AttributeValue },
    /// System announces the decision.
    Decision { class: String, probability: T },
    Answer {
        value: AttributeValue,
        confidence: T,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        volunteered: BTreeMap<String, AttributeValue>,
    },
    Unknown {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        volunteered: BTreeMap<String, AttributeValue>,
    },
    Confirmation { accepted: bool },
    /// Values offered before the first question.
    Volunteered {
        values: BTreeMap<String, AttributeValue>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn<T> {
    pub index: usize,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    pub payload: TurnPayload<T>,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
}

impl<T> Turn<T> {
    /// System turns that ask the user something; these are the turn-takes counted.
    pub fn is_system_question(&self) -> bool {
        matches!(
            self.payload,
            TurnPayload::Question { .. } | TurnPayload::Confirm { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Ask,
    Confirm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub attribute: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub class: String,
    pub probability: T,
    pub distribution: Vec<T>,
}

/// What the engine wants next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Step<T> {
    Question(Prompt),
    Classified(Outcome<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub(crate) enum Recorded<T> {
    Known { value: AttributeValue, confidence: T },
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct PendingConfirmation<T> {
    attribute: String,
    value: AttributeValue,
    confidence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogSession<T> {
    pub id: String,
    pub tree_version: u64,
    pub mode: DialogMode,
    pub frontier: Vec<(NodeId, T)>,
    pub volunteered: BTreeMap<String, AttributeValue>,
    pub transcript: Vec<Turn<T>>,
    pub status: SessionStatus,
    pub result: Option<Outcome<T>>,
    pub novel: bool,
    pub pending: Option<Prompt>,
    answers: BTreeMap<String, Recorded<T>>,
    confirmation: Option<PendingConfirmation<T>>,
}

impl<T> DialogSession<T> {
    pub fn transcript(&self) -> &[Turn<T>] {
        &self.transcript
    }

    /// True when the traversal relied on an unseen-value default edge.
    pub fn flag_novel(&self) -> bool {
        self.novel
    }

    pub fn is_classified(&self) -> bool {
        self.status == SessionStatus::Classified
    }

    /// Number of system turns that asked the user something.
    pub fn system_questions(&self) -> usize {
        self.transcript
            .iter()
            .filter(|t| t.is_system_question())
            .count()
    }

    /// Values collected so far in schema order: explicit answers, then
    /// volunteered values; unknown or unasked attributes are missing.
    pub fn case(&self, schema: &Schema) -> Vec<AttributeValue> {
        schema
            .attributes()
            .iter()
            .map(|a| match self.answers.get(&a.name) {
                Some(Recorded::Known { value, .. }) => value.clone(),
                Some(Recorded::Unknown) => AttributeValue::Missing,
                None => self
                    .volunteered
                    .get(&a.name)
                    .cloned()
                    .unwrap_or(AttributeValue::Missing),
            })
            .collect()
    }
}

/// Source of turn timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Always returns the same instant; used for reproducible transcripts.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}
