//! Fixed-order reference managers used for turn-count comparison.
//!
//! Both ask attributes in a fixed order and hand the assembled case to the same
//! decision tree the tree-driven manager uses, so only the number of questions
//! differs between them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeValue, Schema};
use crate::induction::{classify_example, DecisionTree, InductionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// System initiative throughout; volunteered values are ignored.
    FiniteState,
    /// Form filling; slots already volunteered are skipped.
    Frame,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("question order is not a permutation of the schema attributes")]
    NotAPermutation,
    #[error("answers do not cover attribute `{0}`")]
    MissingAnswer(String),
    #[error(transparent)]
    Classify(#[from] InductionError),
}

#[derive(Debug, Clone)]
pub struct BaselinePolicy<'a> {
    kind: BaselineKind,
    question_order: Vec<String>,
    classifier: &'a DecisionTree,
}

impl<'a> BaselinePolicy<'a> {
    pub fn new(
        kind: BaselineKind,
        question_order: Vec<String>,
        classifier: &'a DecisionTree,
    ) -> Result<Self, BaselineError> {
        let schema = classifier.schema();
        let names: BTreeSet<&str> = question_order.iter().map(String::as_str).collect();
        if question_order.len() != schema.len()
            || names.len() != schema.len()
            || schema.attributes().iter().any(|a| !names.contains(a.name.as_str()))
        {
            return Err(BaselineError::NotAPermutation);
        }
        Ok(Self {
            kind,
            question_order,
            classifier,
        })
    }

    /// Asks in schema order.
    pub fn in_schema_order(kind: BaselineKind, classifier: &'a DecisionTree) -> Self {
        let order = schema_order(classifier.schema());
        Self::new(kind, order, classifier).expect("schema order is a permutation")
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn question_order(&self) -> &[String] {
        &self.question_order
    }
}

fn schema_order(schema: &Schema) -> Vec<String> {
    schema.attributes().iter().map(|a| a.name.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub class: String,
    pub system_questions: usize,
}

/// Runs one scripted dialog. `answers` holds what the user replies when asked
/// (`Missing` for "don't know"); `volunteered` holds values offered up front.
pub fn run_baseline(
    policy: &BaselinePolicy<'_>,
    answers: &BTreeMap<String, AttributeValue>,
    volunteered: &BTreeMap<String, AttributeValue>,
) -> Result<BaselineRun, BaselineError> {
    let schema = policy.classifier.schema();
    let mut case = vec![AttributeValue::Missing; schema.len()];
    let mut asked = 0;
    for name in &policy.question_order {
        let idx = schema.position(name).expect("checked at construction");
        if policy.kind == BaselineKind::Frame {
            if let Some(v) = volunteered.get(name) {
                case[idx] = v.clone();
                continue;
            }
        }
        let reply = answers
            .get(name)
            .ok_or_else(|| BaselineError::MissingAnswer(name.clone()))?;
        asked += 1;
        case[idx] = reply.clone();
    }
    let c = classify_example::<f64>(policy.classifier, &case)?;
    Ok(BaselineRun {
        class: c.class,
        system_questions: asked,
    })
}
