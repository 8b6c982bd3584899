//! `dtdialog`: train trees, run dialogs on stdin, simulate, retrain and serve.

mod ask;

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dtdialog::dataset::{load_dataset_path, write_dataset, SchemaConfig};
use dtdialog::dialog::{Clock, DialogConfig, DialogEngine, DialogMode, SystemClock};
use dtdialog::evaluation::{
    generate_credit_dataset, generate_credit_dataset_noisy, simulate, Manager, SimulationConfig,
};
use dtdialog::induction::{classify_example, train_tree, InductionConfig, Pruning};
use dtdialog::persistence::{Store, VerificationRecord};
use dtdialog::Dataset;
use dtdialog_service::{AppState, ServiceConfig};

const TRAIN_DATASET: &str = "train";

#[derive(Parser)]
#[command(name = "dtdialog", version, about = "Decision-tree dialog manager")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic credit-screening dataset and its schema.
    Generate(GenerateArgs),
    /// Induce a tree from a CSV dataset and store it as the next version.
    Train(TrainArgs),
    /// Run one dialog, reading answers from stdin.
    Ask(AskArgs),
    /// Record an operator's corrected label for a classified session.
    Verify(VerifyArgs),
    /// Retrain on the stored dataset plus all verifications.
    Retrain(StoreArgs),
    /// Compare dialog managers on simulated users.
    Simulate(SimulateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct StoreArgs {
    /// Store directory.
    #[arg(long, env = "DTDIALOG_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Probability of flipping each label.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    schema_out: PathBuf,
}

#[derive(Args)]
struct InductionArgs {
    /// Apply reduced-error pruning against a holdout split.
    #[arg(long)]
    prune: bool,
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
}

impl InductionArgs {
    fn config(&self) -> InductionConfig {
        InductionConfig {
            min_leaf_examples: self.min_leaf,
            max_depth: self.max_depth,
            pruning: if self.prune {
                Pruning::ReducedError {
                    holdout_fraction: self.holdout,
                    seed: self.seed,
                }
            } else {
                Pruning::None
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[command(flatten)]
    induction: InductionArgs,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Args)]
struct AskArgs {
    /// Tree version; defaults to the latest.
    #[arg(long)]
    tree: Option<u64>,
    #[arg(long, default_value = "greedy")]
    mode: DialogMode,
    #[arg(long, default_value_t = 0.5)]
    confirm_threshold: f64,
    #[arg(long)]
    session_id: Option<String>,
    /// Values offered up front, as `Attribute=value` pairs separated by commas.
    #[arg(long)]
    volunteer: Option<String>,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    session: String,
    #[arg(long)]
    label: String,
    #[arg(long, default_value = "cli")]
    operator: String,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// CSV dataset; the generated credit data is used when absent.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Rows of generated data.
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long, default_value_t = 0.0)]
    volunteer: f64,
    #[arg(long, default_value_t = 0.25)]
    holdout: f64,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "DTDIALOG_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, env = "DTDIALOG_MODE", default_value = "greedy")]
    mode: DialogMode,
    #[arg(long, env = "DTDIALOG_CONFIRM_THRESHOLD", default_value_t = 0.5)]
    confirm_threshold: f64,
    /// Bearer token required for verify and retrain.
    #[arg(long, env = "DTDIALOG_TOKEN")]
    token: Option<String>,
    #[command(flatten)]
    store: StoreArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Ask(a) => ask_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Retrain(a) => retrain(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Serve(a) => serve(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.noise) {
        bail!("noise {} is outside [0, 1]", a.noise);
    }
    if a.rows == 0 {
        bail!("rows must be positive");
    }
    let ds = generate_credit_dataset_noisy(a.rows, a.seed, a.noise);
    let f = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_dataset(&ds, io::BufWriter::new(f), "label")?;
    fs::write(&a.schema_out, SchemaConfig::describe(&ds, "label").to_toml())
        .with_context(|| format!("writing {}", a.schema_out.display()))?;
    println!("rows: {}", ds.len());
    Ok(())
}

fn load_csv(data: &PathBuf, schema: &PathBuf) -> Result<(Dataset, String)> {
    let config = SchemaConfig::from_path(schema)?;
    let ds = load_dataset_path(data, &config)?;
    Ok((ds, config.label))
}

fn training_accuracy(tree: &dtdialog::DecisionTree, ds: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for e in ds.examples() {
        if classify_example::<f64>(tree, &e.values)?.class == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn train(a: TrainArgs) -> Result<()> {
    let (ds, label) = load_csv(&a.data, &a.schema)?;
    let store = Store::open(&a.store.data_dir)?;
    let version = store.latest_version()?.map_or(1, |v| v + 1);
    let tree = train_tree(&ds, &a.induction.config())?.with_version(version);
    store.save_dataset(TRAIN_DATASET, &ds, &label)?;
    store.save_tree(&tree)?;
    println!("version: {version}");
    println!("nodes: {}", tree.node_count());
    println!("leaves: {}", tree.leaf_count());
    println!("depth: {}", tree.height());
    println!("training_accuracy: {:.6}", training_accuracy(&tree, &ds)?);
    Ok(())
}

fn ask_cmd(a: AskArgs) -> Result<()> {
    let store = Store::open(&a.store.data_dir)?;
    let tree = match a.tree {
        Some(v) => store.load_tree(v)?,
        None => store.load_latest_tree()?,
    };
    let config = DialogConfig {
        confirm_threshold: a.confirm_threshold,
        ..DialogConfig::default()
    };
    let clock = SystemClock;
    let engine = DialogEngine::new(&tree, config, &clock as &dyn Clock);
    let volunteered = match &a.volunteer {
        Some(text) => ask::parse_assignments(tree.schema(), text)?,
        None => Default::default(),
    };
    let id = a
        .session_id
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let mut session = engine.start_with(id, a.mode, volunteered)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let result = ask::run_dialog(&engine, &mut session, &mut stdin.lock(), &mut stdout.lock());
    store.append_session_log(&session, tree.schema())?;
    result?;
    let outcome = session.result.as_ref().expect("dialog ended classified");
    let mut out = stdout.lock();
    writeln!(out, "class: {}", outcome.class)?;
    writeln!(out, "probability: {:.6}", outcome.probability)?;
    writeln!(out, "system_questions: {}", session.system_questions())?;
    writeln!(out, "novel: {}", session.flag_novel())?;
    writeln!(out, "session: {}", session.id)?;
    writeln!(out, "tree_version: {}", session.tree_version)?;
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let store = Store::open(&a.store.data_dir)?;
    let summary = store.session_summary(&a.session)?;
    let original = summary.class.unwrap_or_default();
    let r = store.record_verification(VerificationRecord {
        session_id: a.session,
        operator_id: a.operator,
        original_label: original,
        corrected_label: a.label,
        applied_in_version: None,
        created_at: SystemClock.now_ms(),
    })?;
    println!(
        "recorded: {} {} -> {}",
        r.session_id, r.original_label, r.corrected_label
    );
    Ok(())
}

fn retrain(a: StoreArgs) -> Result<()> {
    let store = Store::open(&a.data_dir)?;
    let base = store.load_dataset(TRAIN_DATASET)?;
    let outcome = store.retrain(&base, &InductionConfig::default())?;
    println!("version: {}", outcome.version);
    println!("applied: {}", outcome.applied);
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let ds = match (&a.data, &a.schema) {
        (Some(d), Some(s)) => load_csv(d, s)?.0,
        _ => {
            if a.rows == 0 {
                bail!("rows must be positive");
            }
            generate_credit_dataset(a.rows, a.seed)
        }
    };
    let config = SimulationConfig {
        runs: a.runs,
        seed: a.seed,
        missing_rate: a.missing,
        volunteer_rate: a.volunteer,
        holdout_fraction: a.holdout,
        induction: InductionConfig::default(),
    };
    let report = simulate(&Manager::ALL, &ds, &config)?;
    if let Some(p) = &a.json {
        fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.csv {
        fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "tree: {} nodes, height {}, {} attributes; train {} / holdout {}",
        report.tree_nodes,
        report.tree_height,
        report.attributes,
        report.train_size,
        report.holdout_size
    );
    println!(
        "{:<13} {:>8} {:>10} {:>9} {:>9} {:>11}",
        "manager", "sessions", "questions", "std", "accuracy", "volunteered"
    );
    for m in &report.managers {
        println!(
            "{:<13} {:>8} {:>10.2} {:>9.2} {:>9.4} {:>11.2}",
            m.manager.name(),
            m.sessions,
            m.mean_questions,
            m.std_questions,
            m.accuracy,
            m.mean_volunteered
        );
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        default_mode: a.mode,
        confirm_threshold: a.confirm_threshold,
        operator_token: a.token,
        ..ServiceConfig::default()
    };
    let state = AppState::open(&a.store.data_dir, config)
        .map_err(|e| anyhow::anyhow!("{}", e.message))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(dtdialog_service::serve(a.addr, Arc::new(state)))?;
    Ok(())
}
