use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::baselines::{run_baseline, BaselineKind, BaselinePolicy};
use crate::dataset::{AttributeValue, Dataset, Example, Schema};
use crate::dialog::{Answer, DialogConfig, DialogEngine, DialogMode, FixedClock, Step};
use crate::induction::{holdout_split, train_tree, DecisionTree, InductionConfig};

/// Dialog managers compared by the simulator. Declaration order is name order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manager {
    FiniteState,
    Frame,
    TreeBelief,
    TreeGreedy,
}

impl Manager {
    pub const ALL: [Manager; 4] = [
        Manager::FiniteState,
        Manager::Frame,
        Manager::TreeBelief,
        Manager::TreeGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Manager::FiniteState => "finite_state",
            Manager::Frame => "frame",
            Manager::TreeBelief => "tree_belief",
            Manager::TreeGreedy => "tree_greedy",
        }
    }
}

impl std::str::FromStr for Manager {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Manager::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown manager `{s}`"))
    }
}

impl std::fmt::Display for Manager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A simulated user answering from one held-out example.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    pub answer_source: Example,
    pub missing_rate: f64,
    pub volunteer_rate: f64,
    pub rng_seed: u64,
}

/// What a simulated user will say: replies when asked (`Missing` for "don't
/// know") and the values offered up front.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserScript {
    pub answers: BTreeMap<String, AttributeValue>,
    pub volunteered: BTreeMap<String, AttributeValue>,
}

impl UserModel {
    pub fn new(
        answer_source: Example,
        missing_rate: f64,
        volunteer_rate: f64,
        rng_seed: u64,
    ) -> Result<Self, EvaluationError> {
        check_rate("missing_rate", missing_rate)?;
        check_rate("volunteer_rate", volunteer_rate)?;
        Ok(Self {
            answer_source,
            missing_rate,
            volunteer_rate,
            rng_seed,
        })
    }

    /// Two draws per attribute in schema order: one for forgetting the value,
    /// one for volunteering it. Only values the user knows can be volunteered.
    pub fn script(&self, schema: &Schema) -> UserScript {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let mut s = UserScript::default();
        for (a, v) in schema.attributes().iter().zip(&self.answer_source.values) {
            let forget = rng.random::<f64>() < self.missing_rate;
            let offer = rng.random::<f64>() < self.volunteer_rate;
            let value = if forget { AttributeValue::Missing } else { v.clone() };
            if offer && !value.is_missing() {
                s.volunteered.insert(a.name.clone(), value.clone());
            }
            s.answers.insert(a.name.clone(), value);
        }
        s
    }
}

fn check_rate(name: &str, r: f64) -> Result<(), EvaluationError> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(EvaluationError::InvalidRate(format!("{name} = {r}")))
    }
}

/// Result of one scripted dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogRun {
    pub class: String,
    pub probability: f64,
    pub system_questions: usize,
    pub novel: bool,
}

/// Drives a tree session to completion from a script.
pub fn run_tree_dialog(
    tree: &DecisionTree,
    mode: DialogMode,
    script: &UserScript,
) -> Result<DialogRun, EvaluationError> {
    let clock = FixedClock(0);
    let engine = DialogEngine::<f64>::new(tree, DialogConfig::default(), &clock);
    let mut s = engine.start_with("sim", mode, script.volunteered.clone())?;
    loop {
        match engine.next_question(&mut s) {
            Ok(Step::Question(p)) => {
                let answer = match script.answers.get(&p.attribute) {
                    Some(v) if !v.is_missing() => Answer::certain(v.clone()),
                    _ => Answer::Unknown,
                };
                engine.submit_answer(&mut s, &p.attribute, answer, BTreeMap::new())?;
            }
            Ok(Step::Classified(o)) => {
                return Ok(DialogRun {
                    class: o.class,
                    probability: o.probability,
                    system_questions: s.system_questions(),
                    novel: s.flag_novel(),
                })
            }
            Err(crate::dialog::DialogError::SessionClosed) => {
                let o = s.result.clone().expect("classified session has a result");
                return Ok(DialogRun {
                    class: o.class,
                    probability: o.probability,
                    system_questions: s.system_questions(),
                    novel: s.flag_novel(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub runs: usize,
    pub seed: u64,
    pub missing_rate: f64,
    pub volunteer_rate: f64,
    /// Fraction of the dataset held out as simulated users.
    pub holdout_fraction: f64,
    pub induction: InductionConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            runs: 20,
            seed: 0,
            missing_rate: 0.0,
            volunteer_rate: 0.0,
            holdout_fraction: 0.25,
            induction: InductionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerReport {
    pub manager: Manager,
    pub sessions: usize,
    pub mean_questions: f64,
    /// Population standard deviation.
    pub std_questions: f64,
    pub accuracy: f64,
    pub mean_volunteered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub rng_seed: u64,
    pub train_size: usize,
    pub holdout_size: usize,
    pub tree_nodes: usize,
    pub tree_height: usize,
    pub attributes: usize,
    pub managers: Vec<ManagerReport>,
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One row per manager.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record([
            "manager",
            "sessions",
            "mean_questions",
            "std_questions",
            "accuracy",
            "mean_volunteered",
        ])
        .expect("in-memory write");
        for m in &self.managers {
            w.write_record([
                m.manager.name().to_string(),
                m.sessions.to_string(),
                format!("{:.6}", m.mean_questions),
                format!("{:.6}", m.std_questions),
                format!("{:.6}", m.accuracy),
                format!("{:.6}", m.mean_volunteered),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn manager(&self, m: Manager) -> Option<&ManagerReport> {
        self.managers.iter().find(|r| r.manager == m)
    }
}

/// Per-run outcome for each manager: (questions, correct, volunteered).
type RunOutcome = Vec<(usize, bool, usize)>;

struct Prepared {
    tree: DecisionTree,
    holdout: Vec<Example>,
    train_size: usize,
    managers: Vec<Manager>,
}

fn prepare(
    managers: &[Manager],
    dataset: &Dataset,
    config: &SimulationConfig,
) -> Result<Prepared, EvaluationError> {
    if config.runs == 0 {
        return Err(EvaluationError::ZeroRuns);
    }
    if managers.is_empty() {
        return Err(EvaluationError::NoManagers);
    }
    check_rate("missing_rate", config.missing_rate)?;
    check_rate("volunteer_rate", config.volunteer_rate)?;
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(EvaluationError::InvalidRate(format!(
            "holdout_fraction = {}",
            config.holdout_fraction
        )));
    }
    let (train, holdout) = holdout_split(dataset.len(), config.holdout_fraction, config.seed);
    if holdout.is_empty() || train.is_empty() {
        return Err(EvaluationError::EmptySplit);
    }
    let tree = train_tree(&dataset.select(&train), &config.induction)?;
    let mut managers = managers.to_vec();
    managers.sort();
    managers.dedup();
    Ok(Prepared {
        tree,
        holdout: holdout.iter().map(|&r| dataset.examples()[r].clone()).collect(),
        train_size: train.len(),
        managers,
    })
}

fn run_one(p: &Prepared, config: &SimulationConfig, i: usize) -> Result<RunOutcome, EvaluationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(i as u64);
    let example = p.holdout[rng.random_range(0..p.holdout.len())].clone();
    let label = example.label.clone();
    let user = UserModel::new(example, config.missing_rate, config.volunteer_rate, rng.random())?;
    let script = user.script(p.tree.schema());
    let offered = script.volunteered.len();
    let mut out = Vec::with_capacity(p.managers.len());
    for &m in &p.managers {
        let (class, questions) = match m {
            Manager::FiniteState | Manager::Frame => {
                let kind = if m == Manager::Frame {
                    BaselineKind::Frame
                } else {
                    BaselineKind::FiniteState
                };
                let policy = BaselinePolicy::in_schema_order(kind, &p.tree);
                let r = run_baseline(&policy, &script.answers, &script.volunteered)?;
                (r.class, r.system_questions)
            }
            Manager::TreeBelief | Manager::TreeGreedy => {
                let mode = if m == Manager::TreeBelief {
                    DialogMode::Belief
                } else {
                    DialogMode::Greedy
                };
                let r = run_tree_dialog(&p.tree, mode, &script)?;
                (r.class, r.system_questions)
            }
        };
        out.push((questions, class == label, offered));
    }
    Ok(out)
}

fn summarize(p: &Prepared, config: &SimulationConfig, runs: Vec<RunOutcome>) -> SimulationReport {
    let n = runs.len() as f64;
    let managers = p
        .managers
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let q: Vec<f64> = runs.iter().map(|r| r[k].0 as f64).collect();
            let mean = q.iter().sum::<f64>() / n;
            let var = q.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            ManagerReport {
                manager: m,
                sessions: runs.len(),
                mean_questions: mean,
                std_questions: var.sqrt(),
                accuracy: runs.iter().filter(|r| r[k].1).count() as f64 / n,
                mean_volunteered: runs.iter().map(|r| r[k].2 as f64).sum::<f64>() / n,
            }
        })
        .collect();
    SimulationReport {
        config: config.clone(),
        rng_seed: config.seed,
        train_size: p.train_size,
        holdout_size: p.holdout.len(),
        tree_nodes: p.tree.node_count(),
        tree_height: p.tree.height(),
        attributes: p.tree.schema().len(),
        managers,
    }
}

/// Trains a tree on a seeded split of `dataset` and runs every manager against
/// the same sequence of simulated users drawn from the held-out part.
///
/// Run `i` draws from a ChaCha8 stream `i` under `config.seed`, so runs are
/// independent of each other and of scheduling.
pub fn simulate(
    managers: &[Manager],
    dataset: &Dataset,
    config: &SimulationConfig,
) -> Result<SimulationReport, EvaluationError> {
    let p = prepare(managers, dataset, config)?;
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|i| run_one(&p, config, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&p, config, runs))
}

/// Single-threaded [`simulate`]; produces the same report.
pub fn simulate_serial(
    managers: &[Manager],
    dataset: &Dataset,
    config: &SimulationConfig,
) -> Result<SimulationReport, EvaluationError> {
    let p = prepare(managers, dataset, config)?;
    let runs = (0..config.runs)
        .map(|i| run_one(&p, config, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&p, config, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::generate_credit_dataset;

    fn cfg(runs: usize) -> SimulationConfig {
        SimulationConfig {
            runs,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn finite_state_asks_all_attributes() {
        let ds = generate_credit_dataset(300, 1);
        let r = simulate(&Manager::ALL, &ds, &cfg(20)).unwrap();
        let names: Vec<_> = r.managers.iter().map(|m| m.manager.name()).collect();
        assert_eq!(names, ["finite_state", "frame", "tree_belief", "tree_greedy"]);
        assert_eq!(r.manager(Manager::FiniteState).unwrap().mean_questions, 26.0);
        assert_eq!(r.manager(Manager::FiniteState).unwrap().std_questions, 0.0);
        let g = r.manager(Manager::TreeGreedy).unwrap();
        assert!(g.mean_questions < 26.0);
        assert!(g.mean_questions <= r.tree_height as f64);
    }

    #[test]
    fn frame_subtracts_volunteered() {
        let ds = generate_credit_dataset(300, 1);
        let c = SimulationConfig {
            volunteer_rate: 0.3,
            ..cfg(20)
        };
        let r = simulate(&Manager::ALL, &ds, &c).unwrap();
        let f = r.manager(Manager::Frame).unwrap();
        assert!(f.mean_volunteered > 0.0);
        assert!((f.mean_questions - (26.0 - f.mean_volunteered)).abs() < 1e-12);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let ds = generate_credit_dataset(200, 2);
        let c = SimulationConfig {
            missing_rate: 0.3,
            volunteer_rate: 0.2,
            ..cfg(40)
        };
        let a = simulate(&Manager::ALL, &ds, &c).unwrap();
        let b = simulate_serial(&Manager::ALL, &ds, &c).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(SimulationReport::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn silent_user_still_completes() {
        let ds = generate_credit_dataset(200, 2);
        let c = SimulationConfig {
            missing_rate: 1.0,
            ..cfg(20)
        };
        let r = simulate(&[Manager::TreeGreedy], &ds, &c).unwrap();
        assert_eq!(r.managers.len(), 1);
        assert!(r.managers[0].mean_questions <= r.tree_height as f64);
    }

    #[test]
    fn errors() {
        let ds = generate_credit_dataset(50, 2);
        assert!(matches!(
            simulate(&Manager::ALL, &ds, &cfg(0)),
            Err(EvaluationError::ZeroRuns)
        ));
        assert!(matches!(
            simulate(&[], &ds, &cfg(1)),
            Err(EvaluationError::NoManagers)
        ));
        let bad = SimulationConfig {
            missing_rate: 1.5,
            ..cfg(1)
        };
        assert!(matches!(
            simulate(&Manager::ALL, &ds, &bad),
            Err(EvaluationError::InvalidRate(_))
        ));
        assert!(matches!(
            simulate(&Manager::ALL, &generate_credit_dataset(1, 0), &cfg(1)),
            Err(EvaluationError::EmptySplit)
        ));
    }

    #[test]
    fn manager_names_parse() {
        assert_eq!("tree-greedy".parse::<Manager>(), Ok(Manager::TreeGreedy));
        assert!("oracle".parse::<Manager>().is_err());
    }
}
