//! Synthetic credit data, batch simulation of dialog managers, and
//! satisfaction scores.

mod generator;
mod simulate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::dialog::DialogError;
use crate::induction::InductionError;

pub use generator::{
    credit_rule, credit_schema, generate_credit_dataset, generate_credit_dataset_noisy, DENY,
    GRANT,
};
pub use simulate::{
    run_tree_dialog, simulate, simulate_serial, DialogRun, Manager, ManagerReport,
    SimulationConfig, SimulationReport, UserModel, UserScript,
};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("runs must be positive")]
    ZeroRuns,
    #[error("no managers to simulate")]
    NoManagers,
    #[error("rate out of range: {0}")]
    InvalidRate(String),
    #[error("train/holdout split leaves one side empty")]
    EmptySplit,
    #[error("satisfaction score {0} is outside 1..=5")]
    ScoreOutOfRange(i64),
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error(transparent)]
    Dialog(#[from] DialogError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// A user-satisfaction score in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct SatisfactionScore(u8);

impl SatisfactionScore {
    pub fn new(score: i64) -> Result<Self, EvaluationError> {
        if (1..=5).contains(&score) {
            Ok(Self(score as u8))
        } else {
            Err(EvaluationError::ScoreOutOfRange(score))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for SatisfactionScore {
    type Error = EvaluationError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<SatisfactionScore> for i64 {
    fn from(s: SatisfactionScore) -> i64 {
        s.0 as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionRecord {
    pub session_id: String,
    pub score: SatisfactionScore,
    pub recorded_at: u64,
}

/// Mean score over sessions, keeping only the latest record per session.
pub fn satisfaction_mean(records: &[SatisfactionRecord]) -> Option<f64> {
    let mut latest = std::collections::BTreeMap::new();
    for r in records {
        latest.insert(r.session_id.as_str(), r.score.get());
    }
    if latest.is_empty() {
        return None;
    }
    Some(latest.values().map(|&s| s as f64).sum::<f64>() / latest.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, s: i64) -> SatisfactionRecord {
        SatisfactionRecord {
            session_id: id.into(),
            score: SatisfactionScore::new(s).unwrap(),
            recorded_at: 0,
        }
    }

    #[test]
    fn score_range() {
        assert!(SatisfactionScore::new(0).is_err());
        assert!(SatisfactionScore::new(6).is_err());
        assert_eq!(SatisfactionScore::new(5).unwrap().get(), 5);
        assert!(serde_json::from_str::<SatisfactionScore>("9").is_err());
    }

    #[test]
    fn latest_score_wins() {
        assert_eq!(satisfaction_mean(&[]), None);
        let m = satisfaction_mean(&[rec("a", 1), rec("b", 3), rec("a", 5)]).unwrap();
        assert_eq!(m, 4.0);
    }
}
