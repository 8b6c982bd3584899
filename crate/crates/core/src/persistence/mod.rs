//! File-backed storage under one data directory:
//!
//! ```text
//! schema.toml
//! datasets/{name}.csv
//! trees/v{N}.tree          pretty JSON tree document with a SHA-256 digest
//! sessions/{id}.log        append-only NDJSON session events
//! verifications.log        NDJSON verification records
//! satisfaction.log         NDJSON satisfaction scores
//! ```
//!
//! Whole-file writes go to a temporary sibling and are renamed into place.

mod tree_format;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    load_dataset_path, write_dataset, AttributeValue, Dataset, DatasetError, Schema, SchemaConfig,
};
use crate::dialog::{DialogMode, DialogSession, SessionStatus, Turn};
use crate::evaluation::{satisfaction_mean, SatisfactionRecord, SatisfactionScore};
use crate::induction::{
    retrain_with_feedback, CaseSource, DecisionTree, InductionConfig, InductionError,
};

pub use tree_format::{TreeDocument, TREE_FORMAT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub session_id: String,
    pub operator_id: String,
    pub original_label: String,
    pub corrected_label: String,
    pub applied_in_version: Option<u64>,
    pub created_at: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("tree version {0} not found")]
    TreeNotFound(u64),
    #[error("no tree has been stored")]
    NoTree,
    #[error("tree version {0} already stored with different content")]
    VersionExists(u64),
    #[error("tree v{version}: digest mismatch")]
    DigestMismatch { version: u64 },
    #[error("{what} is corrupt: {reason}")]
    Corrupt { what: String, reason: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is not classified")]
    SessionNotClassified(String),
    #[error("label `{0}` is not a class of the session's tree")]
    UnknownLabel(String),
    #[error("invalid session id `{0}`")]
    InvalidSessionId(String),
    #[error("dataset `{0}` not found")]
    DatasetNotFound(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Induction(#[from] InductionError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Start {
        session_id: String,
        tree_version: u64,
        mode: DialogMode,
        at_ms: u64,
    },
    Turn(Turn<f64>),
    End {
        class: String,
        probability: f64,
        distribution: Vec<f64>,
        novel: bool,
        system_questions: usize,
        /// Values the dialog collected, in schema order.
        case: Vec<AttributeValue>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub tree_version: u64,
    pub mode: DialogMode,
    pub status: SessionStatus,
    pub turns: usize,
    pub system_questions: usize,
    pub novel: bool,
    pub class: Option<String>,
    pub probability: Option<f64>,
    pub case: Option<Vec<AttributeValue>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFilter {
    pub status: Option<SessionStatus>,
    pub novel: Option<bool>,
    pub version: Option<u64>,
}

impl SessionFilter {
    pub fn matches(&self, s: &SessionSummary) -> bool {
        self.status.is_none_or(|v| v == s.status)
            && self.novel.is_none_or(|v| v == s.novel)
            && self.version.is_none_or(|v| v == s.tree_version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub version: u64,
    pub applied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionStats {
    pub version: u64,
    pub sessions: usize,
    pub classified: usize,
    /// Mean system questions over classified sessions.
    pub mean_questions: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub latest_version: Option<u64>,
    pub versions: Vec<VersionStats>,
    pub verified_sessions: usize,
    /// Share of verified sessions whose label the operator kept.
    pub verified_accuracy: Option<f64>,
    pub pending_verifications: usize,
    pub satisfaction_count: usize,
    pub satisfaction_mean: Option<f64>,
    pub novel_sessions: usize,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn latest_per_session(records: &[VerificationRecord]) -> Vec<VerificationRecord> {
    let mut latest: BTreeMap<&str, &VerificationRecord> = BTreeMap::new();
    for r in records {
        latest.insert(&r.session_id, r);
    }
    latest.into_values().cloned().collect()
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["trees", "sessions", "datasets"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, contents: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    fn append_lines(&self, path: &Path, lines: &[String]) -> Result<(), StoreError> {
        if lines.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        f.write_all(buf.as_bytes()).map_err(io_err(path))
    }

    fn read_ndjson<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<Vec<T>, StoreError> {
        let f = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(path)(e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                what: format!("{} line {}", path.display(), i + 1),
                reason: e.to_string(),
            })?);
        }
        Ok(out)
    }

    // ---- datasets ----

    pub fn save_dataset(
        &self,
        name: &str,
        dataset: &Dataset,
        label_column: &str,
    ) -> Result<(), StoreError> {
        let mut csv = Vec::new();
        write_dataset(dataset, &mut csv, label_column)?;
        self.write_atomic(&self.root.join("datasets").join(format!("{name}.csv")), &csv)?;
        let config = SchemaConfig::describe(dataset, label_column).to_toml();
        self.write_atomic(&self.root.join("schema.toml"), config.as_bytes())
    }

    pub fn load_dataset(&self, name: &str) -> Result<Dataset, StoreError> {
        let csv = self.root.join("datasets").join(format!("{name}.csv"));
        if !csv.exists() {
            return Err(StoreError::DatasetNotFound(name.to_string()));
        }
        let config = SchemaConfig::from_path(self.root.join("schema.toml"))?;
        Ok(load_dataset_path(&csv, &config)?)
    }

    // ---- trees ----

    fn tree_path(&self, version: u64) -> PathBuf {
        self.root.join("trees").join(format!("v{version}.tree"))
    }

    /// Stores a tree under its version. Re-saving identical content is a no-op.
    pub fn save_tree(&self, tree: &DecisionTree) -> Result<PathBuf, StoreError> {
        let path = self.tree_path(tree.version());
        let text = TreeDocument::from_tree(tree).to_text();
        if let Ok(existing) = fs::read_to_string(&path) {
            if existing == text {
                return Ok(path);
            }
            return Err(StoreError::VersionExists(tree.version()));
        }
        self.write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn load_tree(&self, version: u64) -> Result<DecisionTree, StoreError> {
        let path = self.tree_path(version);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::TreeNotFound(version))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        TreeDocument::parse(&text, version)?.into_tree()
    }

    /// Stored versions, ascending.
    pub fn tree_versions(&self) -> Result<Vec<u64>, StoreError> {
        let dir = self.root.join("trees");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name();
            let name = name.to_string_lossy();
            if let Some(v) = name
                .strip_prefix('v')
                .and_then(|s| s.strip_suffix(".tree"))
                .and_then(|s| s.parse().ok())
            {
                out.push(v);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn latest_version(&self) -> Result<Option<u64>, StoreError> {
        Ok(self.tree_versions()?.last().copied())
    }

    pub fn load_latest_tree(&self) -> Result<DecisionTree, StoreError> {
        let v = self.latest_version()?.ok_or(StoreError::NoTree)?;
        self.load_tree(v)
    }

    // ---- sessions ----

    fn session_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_session_id(id) {
            return Err(StoreError::InvalidSessionId(id.to_string()));
        }
        Ok(self.root.join("sessions").join(format!("{id}.log")))
    }

    /// Appends whatever the log does not yet hold: the start event, new turns,
    /// and the end event once the session is classified. Existing lines are
    /// never touched.
    pub fn append_session_log(
        &self,
        session: &DialogSession<f64>,
        schema: &Schema,
    ) -> Result<(), StoreError> {
        let path = self.session_path(&session.id)?;
        let existing: Vec<SessionEvent> = self.read_ndjson(&path)?;
        let mut lines = Vec::new();
        let line = |e: &SessionEvent| serde_json::to_string(e).expect("event serializes");
        if existing.is_empty() {
            lines.push(line(&SessionEvent::Start {
                session_id: session.id.clone(),
                tree_version: session.tree_version,
                mode: session.mode,
                at_ms: session.transcript.first().map_or(0, |t| t.at_ms),
            }));
        }
        let logged_turns = existing
            .iter()
            .filter(|e| matches!(e, SessionEvent::Turn(_)))
            .count();
        let ended = existing.iter().any(|e| matches!(e, SessionEvent::End { .. }));
        for t in session.transcript.iter().skip(logged_turns) {
            lines.push(line(&SessionEvent::Turn(t.clone())));
        }
        if !ended {
            if let Some(r) = &session.result {
                lines.push(line(&SessionEvent::End {
                    class: r.class.clone(),
                    probability: r.probability,
                    distribution: r.distribution.clone(),
                    novel: session.novel,
                    system_questions: session.system_questions(),
                    case: session.case(schema),
                }));
            }
        }
        self.append_lines(&path, &lines)
    }

    pub fn session_log(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        let path = self.session_path(id)?;
        if !path.exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        self.read_ndjson(&path)
    }

    pub fn session_summary(&self, id: &str) -> Result<SessionSummary, StoreError> {
        let events = self.session_log(id)?;
        let corrupt = |reason: &str| StoreError::Corrupt {
            what: format!("session {id}"),
            reason: reason.to_string(),
        };
        let Some(SessionEvent::Start {
            session_id,
            tree_version,
            mode,
            ..
        }) = events.first()
        else {
            return Err(corrupt("log does not begin with a start event"));
        };
        let mut s = SessionSummary {
            session_id: session_id.clone(),
            tree_version: *tree_version,
            mode: *mode,
            status: SessionStatus::Active,
            turns: 0,
            system_questions: 0,
            novel: false,
            class: None,
            probability: None,
            case: None,
        };
        for e in &events[1..] {
            match e {
                SessionEvent::Turn(t) => {
                    s.turns += 1;
                    if t.is_system_question() {
                        s.system_questions += 1;
                    }
                }
                SessionEvent::End {
                    class,
                    probability,
                    novel,
                    case,
                    ..
                } => {
                    s.status = SessionStatus::Classified;
                    s.novel = *novel;
                    s.class = Some(class.clone());
                    s.probability = Some(*probability);
                    s.case = Some(case.clone());
                }
                SessionEvent::Start { .. } => return Err(corrupt("repeated start event")),
            }
        }
        Ok(s)
    }

    /// Summaries of stored sessions matching `filter`, ordered by id.
    pub fn list_sessions(&self, filter: &SessionFilter) -> Result<Vec<SessionSummary>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name();
            if let Some(id) = name.to_string_lossy().strip_suffix(".log") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            let s = self.session_summary(&id)?;
            if filter.matches(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }

    fn classified_summary(&self, id: &str) -> Result<SessionSummary, StoreError> {
        let s = self.session_summary(id)?;
        if s.status != SessionStatus::Classified {
            return Err(StoreError::SessionNotClassified(id.to_string()));
        }
        Ok(s)
    }

    // ---- verifications ----

    fn verifications_path(&self) -> PathBuf {
        self.root.join("verifications.log")
    }

    /// Stores an operator's verdict on a classified session. Any
    /// `applied_in_version` on the input is cleared.
    pub fn record_verification(
        &self,
        mut v: VerificationRecord,
    ) -> Result<VerificationRecord, StoreError> {
        let s = self.classified_summary(&v.session_id)?;
        let tree = self.load_tree(s.tree_version)?;
        if tree.class_index(&v.corrected_label).is_none() {
            return Err(StoreError::UnknownLabel(v.corrected_label));
        }
        v.applied_in_version = None;
        let line = serde_json::to_string(&v).expect("record serializes");
        self.append_lines(&self.verifications_path(), &[line])?;
        Ok(v)
    }

    pub fn verifications(&self) -> Result<Vec<VerificationRecord>, StoreError> {
        self.read_ndjson(&self.verifications_path())
    }

    pub fn pending_verifications(&self) -> Result<Vec<VerificationRecord>, StoreError> {
        Ok(self
            .verifications()?
            .into_iter()
            .filter(|v| v.applied_in_version.is_none())
            .collect())
    }

    /// Retrains on `base` plus every session's latest verification, stores the
    /// result as the next version, then marks all pending records applied in a
    /// single rename of the verification log. Returns the new version and the
    /// number of records marked.
    pub fn retrain(
        &self,
        base: &Dataset,
        config: &InductionConfig,
    ) -> Result<RetrainOutcome, StoreError> {
        let previous = self.latest_version()?.ok_or(StoreError::NoTree)?;
        let all = self.verifications()?;
        let feedback = latest_per_session(&all);
        let tree = retrain_with_feedback(base, &feedback, self, config, previous)?;
        self.save_tree(&tree)?;
        let version = tree.version();
        let mut applied = 0;
        let mut text = String::new();
        for mut r in all {
            if r.applied_in_version.is_none() {
                r.applied_in_version = Some(version);
                applied += 1;
            }
            text.push_str(&serde_json::to_string(&r).expect("record serializes"));
            text.push('\n');
        }
        if applied > 0 {
            self.write_atomic(&self.verifications_path(), text.as_bytes())?;
        }
        Ok(RetrainOutcome { version, applied })
    }

    // ---- satisfaction ----

    fn satisfaction_path(&self) -> PathBuf {
        self.root.join("satisfaction.log")
    }

    pub fn record_satisfaction(
        &self,
        session_id: &str,
        score: SatisfactionScore,
        at_ms: u64,
    ) -> Result<SatisfactionRecord, StoreError> {
        self.classified_summary(session_id)?;
        let r = SatisfactionRecord {
            session_id: session_id.to_string(),
            score,
            recorded_at: at_ms,
        };
        let line = serde_json::to_string(&r).expect("record serializes");
        self.append_lines(&self.satisfaction_path(), &[line])?;
        Ok(r)
    }

    pub fn satisfaction_records(&self) -> Result<Vec<SatisfactionRecord>, StoreError> {
        self.read_ndjson(&self.satisfaction_path())
    }

    /// Latest score for a session, if any.
    pub fn satisfaction(&self, session_id: &str) -> Result<Option<SatisfactionScore>, StoreError> {
        Ok(self
            .satisfaction_records()?
            .into_iter()
            .rev()
            .find(|r| r.session_id == session_id)
            .map(|r| r.score))
    }

    // ---- stats ----

    pub fn stats(&self) -> Result<Stats, StoreError> {
        let sessions = self.list_sessions(&SessionFilter::default())?;
        let mut by_version: BTreeMap<u64, (usize, usize, usize)> = BTreeMap::new();
        for s in &sessions {
            let e = by_version.entry(s.tree_version).or_default();
            e.0 += 1;
            if s.status == SessionStatus::Classified {
                e.1 += 1;
                e.2 += s.system_questions;
            }
        }
        let versions = by_version
            .into_iter()
            .map(|(version, (n, c, q))| VersionStats {
                version,
                sessions: n,
                classified: c,
                mean_questions: (c > 0).then(|| q as f64 / c as f64),
            })
            .collect();
        let all = self.verifications()?;
        let latest = latest_per_session(&all);
        let kept = latest
            .iter()
            .filter(|v| v.corrected_label == v.original_label)
            .count();
        let sat = self.satisfaction_records()?;
        Ok(Stats {
            latest_version: self.latest_version()?,
            versions,
            verified_sessions: latest.len(),
            verified_accuracy: (!latest.is_empty()).then(|| kept as f64 / latest.len() as f64),
            pending_verifications: all.iter().filter(|v| v.applied_in_version.is_none()).count(),
            satisfaction_count: sat
                .iter()
                .map(|r| r.session_id.as_str())
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            satisfaction_mean: satisfaction_mean(&sat),
            novel_sessions: sessions.iter().filter(|s| s.novel).count(),
        })
    }
}

impl CaseSource for Store {
    fn case(&self, session_id: &str) -> Option<Vec<AttributeValue>> {
        self.session_summary(session_id).ok().and_then(|s| s.case)
    }
}
