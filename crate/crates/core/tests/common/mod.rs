//! Shared helpers for integration tests: small random datasets and an
//! independent brute-force gain oracle that works on raw rows.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dtdialog::dataset::{AttributeSchema, Example};
use dtdialog::dialog::{Answer, DialogConfig, DialogEngine, DialogMode, FixedClock, PromptKind, Step};
use dtdialog::{AttributeValue, Dataset, DecisionTree, Schema, Session};
use dtdialog::dataset::{best_split, candidate_thresholds, information_gain, DatasetError, Split};
use dtdialog::induction::{induce_tree, InductionConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CATEGORIES: [&str; 3] = ["a", "b", "c"];

/// Raw description of a small dataset: attribute kinds plus rows of optional
/// small integers (categorical cells index into [`CATEGORIES`]).
#[derive(Debug, Clone)]
pub struct RawData {
    pub numeric: Vec<bool>,
    pub n_classes: usize,
    pub rows: Vec<(Vec<Option<u8>>, usize)>,
}

pub fn class_name(i: usize) -> String {
    format!("k{i}")
}

pub fn attr_name(i: usize) -> String {
    format!("A{i}")
}

impl RawData {
    pub fn schema(&self) -> Schema {
        let attrs = self
            .numeric
            .iter()
            .enumerate()
            .map(|(i, &num)| {
                let name = attr_name(i);
                if num {
                    AttributeSchema::numeric(&name, None, format!("{name}?"))
                } else {
                    AttributeSchema::categorical(&name, &CATEGORIES, format!("{name}?"))
                }
            })
            .collect();
        Schema::new(attrs).unwrap()
    }

    pub fn value(&self, attribute: usize, cell: Option<u8>) -> AttributeValue {
        match cell {
            None => AttributeValue::Missing,
            Some(x) if self.numeric[attribute] => AttributeValue::Number(x as f64),
            Some(x) => AttributeValue::category(CATEGORIES[x as usize % CATEGORIES.len()]),
        }
    }

    pub fn dataset(&self) -> Dataset {
        let examples = self
            .rows
            .iter()
            .map(|(cells, label)| Example {
                values: cells
                    .iter()
                    .enumerate()
                    .map(|(a, c)| self.value(a, *c))
                    .collect(),
                label: class_name(*label),
            })
            .collect();
        Dataset::new(
            self.schema(),
            (0..self.n_classes).map(class_name).collect(),
            examples,
        )
        .unwrap()
    }
}

/// Datasets with 1..=max_rows rows, 1..=max_attrs attributes and 2..=3 classes.
/// About one cell in six is missing when `missing` is set.
pub fn raw_data(max_rows: usize, max_attrs: usize, missing: bool) -> impl Strategy<Value = RawData> {
    (1..=max_attrs, 2usize..=3, 1..=max_rows).prop_flat_map(move |(n_attrs, k, n_rows)| {
        let cell = if missing {
            prop_oneof![5 => (0u8..4).prop_map(Some), 1 => Just(None)].boxed()
        } else {
            (0u8..4).prop_map(Some).boxed()
        };
        let row = (prop::collection::vec(cell, n_attrs), 0..k);
        (
            prop::collection::vec(any::<bool>(), n_attrs),
            prop::collection::vec(row, n_rows),
        )
            .prop_map(move |(numeric, rows)| {
                let rows = rows
                    .into_iter()
                    .map(|(cells, l)| {
                        // categorical cells only use the first three codes
                        let cells = cells
                            .into_iter()
                            .enumerate()
                            .map(|(a, c)| if numeric[a] { c } else { c.map(|x| x % 3) })
                            .collect();
                        (cells, l)
                    })
                    .collect();
                RawData {
                    numeric,
                    n_classes: k,
                    rows,
                }
            })
    })
}

// ---- oracle ----

pub fn oracle_entropy(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln() / std::f64::consts::LN_2
        })
        .sum()
}

fn partition_gain(all: &[usize], parts: &[Vec<usize>]) -> f64 {
    let n = all.len() as f64;
    oracle_entropy(all)
        - parts
            .iter()
            .map(|p| p.len() as f64 / n * oracle_entropy(p))
            .sum::<f64>()
}

/// Categorical gain with missing cells forming their own part.
pub fn oracle_categorical_gain(raw: &RawData, attribute: usize) -> f64 {
    let mut parts: BTreeMap<Option<u8>, Vec<usize>> = BTreeMap::new();
    let mut all = Vec::new();
    for (cells, l) in &raw.rows {
        parts.entry(cells[attribute]).or_default().push(*l);
        all.push(*l);
    }
    partition_gain(&all, &parts.into_values().collect::<Vec<_>>())
}

/// Threshold gain over known cells, scaled by the known fraction.
pub fn oracle_threshold_gain(raw: &RawData, attribute: usize, t: f64) -> f64 {
    let (mut low, mut high, mut known) = (Vec::new(), Vec::new(), Vec::new());
    for (cells, l) in &raw.rows {
        if let Some(x) = cells[attribute] {
            if (x as f64) <= t {
                low.push(*l);
            } else {
                high.push(*l);
            }
            known.push(*l);
        }
    }
    if known.is_empty() {
        return 0.0;
    }
    partition_gain(&known, &[low, high]) * known.len() as f64 / raw.rows.len() as f64
}

pub fn oracle_thresholds(raw: &RawData, attribute: usize) -> Vec<f64> {
    let mut xs: Vec<u8> = raw.rows.iter().filter_map(|(c, _)| c[attribute]).collect();
    xs.sort_unstable();
    xs.dedup();
    xs.windows(2)
        .map(|w| (w[0] as f64 + w[1] as f64) / 2.0)
        .collect()
}

/// Every candidate split with its gain: `(attribute, threshold, gain)`.
pub fn oracle_scan(raw: &RawData) -> Vec<(usize, Option<f64>, f64)> {
    let mut out = Vec::new();
    for a in 0..raw.numeric.len() {
        if raw.numeric[a] {
            for t in oracle_thresholds(raw, a) {
                out.push((a, Some(t), oracle_threshold_gain(raw, a, t)));
            }
        } else {
            out.push((a, None, oracle_categorical_gain(raw, a)));
        }
    }
    out
}

pub fn oracle_max_gain(raw: &RawData) -> f64 {
    oracle_scan(raw)
        .into_iter()
        .map(|(_, _, g)| g)
        .fold(0.0, f64::max)
}

// ---- fixtures ----

pub fn figure1_schema() -> Schema {
    Schema::new(vec![
        AttributeSchema::categorical("Employment", &["yes", "no"], "Are you employed?"),
        AttributeSchema::numeric(
            "Years",
            Some("years"),
            "How many years have you lived at your current address?",
        ),
        AttributeSchema::numeric("Savings", Some("dollars"), "How much do you have in savings?"),
        AttributeSchema::categorical("Bankruptcy", &["yes", "no"], "Did you ever declare bankruptcy?"),
    ])
    .unwrap()
}

pub fn figure1() -> Dataset {
    use AttributeValue::*;
    let row = |e: &str, y: AttributeValue, s: f64, b: &str, l: &str| Example {
        values: vec![Category(e.into()), y, Number(s), Category(b.into())],
        label: l.into(),
    };
    Dataset::new(
        figure1_schema(),
        vec!["yes".into(), "no".into()],
        vec![
            row("no", Number(10.0), 100_000.0, "yes", "yes"),
            row("no", Missing, 5_000.0, "yes", "no"),
            row("yes", Number(1.0), 2_000.0, "no", "yes"),
        ],
    )
    .unwrap()
}

/// A full case over `raw`'s schema built from `cells`, one per attribute.
pub fn case_from(raw: &RawData, cells: &[Option<u8>]) -> Vec<AttributeValue> {
    cells
        .iter()
        .enumerate()
        .map(|(a, c)| raw.value(a, c.map(|x| if raw.numeric[a] { x } else { x % 3 })))
        .collect()
}

/// Proptest config with `cases` cases and no failure-persistence files.
pub fn cfg(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}

// ---- scripted dialogs ----

/// A scripted reply: `None` is "don't know".
#[derive(Debug, Clone)]
pub struct Reply {
    pub value: Option<AttributeValue>,
    pub confidence: f64,
    pub accept: bool,
}

pub fn reply_strategy() -> impl Strategy<Value = (Option<u8>, f64, bool)> {
    (
        prop_oneof![3 => (0u8..4).prop_map(Some), 1 => Just(None)],
        prop_oneof![2 => Just(1.0), 1 => 0.05f64..1.0],
        any::<bool>(),
    )
}

pub fn replies(raw: &RawData, script: &[(Option<u8>, f64, bool)]) -> BTreeMap<String, Reply> {
    let values = case_from(raw, &script.iter().map(|s| s.0).collect::<Vec<_>>());
    values
        .into_iter()
        .zip(script)
        .enumerate()
        .map(|(a, (v, s))| {
            (
                attr_name(a),
                Reply {
                    value: (!v.is_missing()).then_some(v),
                    confidence: s.1,
                    accept: s.2,
                },
            )
        })
        .collect()
}

/// Reply used for attributes a script does not mention.
pub const UNKNOWN: Reply = Reply {
    value: None,
    confidence: 1.0,
    accept: true,
};

pub struct Trace {
    pub asked: Vec<(PromptKind, String)>,
    pub class: String,
    pub probability: f64,
    pub masses: Vec<f64>,
}

/// Runs a session to completion, recording the frontier mass after each reply.
/// Attributes missing from `replies` are answered as unknown.
pub fn drive(
    tree: &DecisionTree,
    mode: DialogMode,
    replies: &BTreeMap<String, Reply>,
    volunteered: BTreeMap<String, AttributeValue>,
) -> Trace {
    run_session(tree, "p", mode, replies, volunteered, 0).1
}

/// Like [`drive`], also returning the finished session. Turns are stamped
/// with `at_ms`.
pub fn run_session(
    tree: &DecisionTree,
    id: &str,
    mode: DialogMode,
    replies: &BTreeMap<String, Reply>,
    volunteered: BTreeMap<String, AttributeValue>,
    at_ms: u64,
) -> (Session, Trace) {
    let clock = FixedClock(at_ms);
    let engine = DialogEngine::new(tree, DialogConfig::default(), &clock);
    let mut s = engine.start_with(id, mode, volunteered).unwrap();
    let mut trace = Trace {
        asked: Vec::new(),
        class: String::new(),
        probability: 0.0,
        masses: Vec::new(),
    };
    loop {
        let step = match &s.result {
            Some(o) => Step::Classified(o.clone()),
            None => engine.next_question(&mut s).unwrap(),
        };
        match step {
            Step::Classified(o) => {
                trace.class = o.class;
                trace.probability = o.probability;
                return (s, trace);
            }
            Step::Question(p) => {
                let r = replies.get(&p.attribute).unwrap_or(&UNKNOWN);
                match p.kind {
                    PromptKind::Ask => {
                        let answer = match &r.value {
                            Some(v) => Answer::Known {
                                value: v.clone(),
                                confidence: r.confidence,
                            },
                            None => Answer::Unknown,
                        };
                        engine
                            .submit_answer(&mut s, &p.attribute, answer, BTreeMap::new())
                            .unwrap();
                    }
                    PromptKind::Confirm => engine.submit_confirmation(&mut s, r.accept).unwrap(),
                }
                trace.asked.push((p.kind, p.attribute));
                trace.masses.push(s.frontier.iter().map(|(_, m)| m).sum());
            }
        }
    }
}

pub fn certain(raw: &RawData, cells: &[Option<u8>]) -> BTreeMap<String, Reply> {
    replies(
        raw,
        &cells.iter().map(|c| (*c, 1.0, true)).collect::<Vec<_>>(),
    )
}

pub fn case_strategy(max_attrs: usize) -> impl Strategy<Value = Vec<Option<u8>>> {
    prop::collection::vec((0u8..4).prop_map(Some), max_attrs)
}


pub fn tree_of(raw: &RawData) -> DecisionTree {
    induce_tree(&raw.dataset(), &InductionConfig::default()).unwrap()
}

// ---- shared case bodies ----

/// `information_gain`, `candidate_thresholds` and `best_split` against the
/// brute-force oracle, within 1e-9.
pub fn gain_oracle_case(raw: &RawData) -> Result<(), TestCaseError> {
    let ds = raw.dataset();
    let view = ds.view();
    for a in 0..raw.numeric.len() {
        let name = attr_name(a);
        if raw.numeric[a] {
            let ts = candidate_thresholds(&view, &name).unwrap();
            prop_assert_eq!(&ts, &oracle_thresholds(raw, a));
            for t in ts {
                let g: f64 = information_gain(&view, &name, &Split::Threshold(t)).unwrap();
                prop_assert!(g >= -1e-12);
                prop_assert!((g - oracle_threshold_gain(raw, a, t)).abs() < 1e-9);
            }
        } else {
            let g: f64 = information_gain(&view, &name, &Split::Categorical).unwrap();
            prop_assert!(g >= -1e-12);
            prop_assert!((g - oracle_categorical_gain(raw, a)).abs() < 1e-9);
        }
    }
    let names: Vec<String> = (0..raw.numeric.len()).map(attr_name).collect();
    let max = oracle_max_gain(raw);
    match best_split::<f64, _>(&view, &names) {
        Ok(c) => {
            prop_assert!((c.gain - max).abs() < 1e-9);
            let own = match c.split {
                Split::Threshold(t) => oracle_threshold_gain(raw, c.attribute, t),
                Split::Categorical => oracle_categorical_gain(raw, c.attribute),
            };
            prop_assert!((own - max).abs() < 1e-9);
        }
        Err(DatasetError::NoInformativeSplit) => prop_assert!(max < 1e-9),
        Err(e) => prop_assert!(false, "unexpected error {e}"),
    }
    Ok(())
}

/// Belief-mode frontier mass stays at 1 after every reply, and no attribute
/// is asked twice.
pub fn frontier_case(raw: &RawData, script: &[(Option<u8>, f64, bool)]) -> Result<(), TestCaseError> {
    let tree = tree_of(raw);
    let r = replies(raw, &script[..raw.numeric.len()]);
    let t = drive(&tree, DialogMode::Belief, &r, BTreeMap::new());
    for m in &t.masses {
        prop_assert!((m - 1.0).abs() <= 1e-9, "mass {m}");
    }
    prop_assert!(t.probability > 0.0 && t.probability <= 1.0 + 1e-12);
    // unknown answers are never re-asked
    let asks: Vec<_> = t.asked.iter().filter(|(k, _)| *k == PromptKind::Ask).map(|(_, a)| a).collect();
    let distinct: BTreeSet<_> = asks.iter().collect();
    prop_assert_eq!(asks.len(), distinct.len());
    Ok(())
}

/// Fully answered greedy and belief sessions ask the same questions and reach
/// the same decision; the question count respects the turn bound.
pub fn agreement_case(raw: &RawData, cells: &[Option<u8>]) -> Result<(), TestCaseError> {
    let tree = tree_of(raw);
    let r = certain(raw, &cells[..raw.numeric.len()]);
    let g = drive(&tree, DialogMode::Greedy, &r, BTreeMap::new());
    let b = drive(&tree, DialogMode::Belief, &r, BTreeMap::new());
    prop_assert_eq!(&g.asked, &b.asked);
    prop_assert_eq!(&g.class, &b.class);
    prop_assert_eq!(g.probability, b.probability);
    prop_assert!(g.asked.len() <= tree.height());
    prop_assert!(g.asked.len() <= raw.numeric.len());
    Ok(())
}
