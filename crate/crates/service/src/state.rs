use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use dtdialog::dialog::{Clock, DialogConfig, DialogEngine, DialogMode, SystemClock};
use dtdialog::induction::{DecisionTree, InductionConfig};
use dtdialog::persistence::{SessionEvent, Store};
use dtdialog::Session;

use crate::error::{ApiError, ErrorCode};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub default_mode: DialogMode,
    pub confirm_threshold: f64,
    /// Name of the stored dataset retraining starts from.
    pub dataset: String,
    pub induction: InductionConfig,
    /// When set, verify and retrain require `Authorization: Bearer <token>`.
    pub operator_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            default_mode: DialogMode::Greedy,
            confirm_threshold: 0.5,
            dataset: "train".to_string(),
            induction: InductionConfig::default(),
            operator_token: None,
        }
    }
}

pub(crate) type SessionHandle = Arc<Mutex<Session>>;

#[derive(Debug, Clone)]
pub(crate) struct CachedResponse {
    pub status: axum::http::StatusCode,
    pub content_type: Option<axum::http::HeaderValue>,
    pub body: axum::body::Bytes,
}

pub(crate) type IdempotencySlot = Arc<tokio::sync::Mutex<Option<CachedResponse>>>;

pub struct AppState {
    pub(crate) store: Store,
    pub(crate) config: ServiceConfig,
    pub(crate) clock: Arc<dyn Clock>,
    trees: RwLock<BTreeMap<u64, Arc<DecisionTree>>>,
    current: RwLock<Option<u64>>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    pub(crate) idempotency: Mutex<HashMap<String, IdempotencySlot>>,
    pub(crate) retrain_lock: tokio::sync::Mutex<()>,
}

impl AppState {
    /// Opens the store at `data_dir` and loads its latest tree, if any.
    pub fn open(data_dir: impl Into<PathBuf>, config: ServiceConfig) -> Result<Self, ApiError> {
        Self::with_clock(data_dir, config, Arc::new(SystemClock))
    }

    pub fn with_clock(
        data_dir: impl Into<PathBuf>,
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ApiError> {
        let store = Store::open(data_dir)?;
        let state = Self {
            store,
            config,
            clock,
            trees: RwLock::new(BTreeMap::new()),
            current: RwLock::new(None),
            sessions: Mutex::new(HashMap::new()),
            idempotency: Mutex::new(HashMap::new()),
            retrain_lock: tokio::sync::Mutex::new(()),
        };
        if let Some(v) = state.store.latest_version()? {
            let tree = state.tree(v)?;
            state.install(tree);
        }
        Ok(state)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn current_version(&self) -> Option<u64> {
        *self.current.read().expect("version lock")
    }

    /// Makes `tree` the version new sessions start on.
    pub(crate) fn install(&self, tree: Arc<DecisionTree>) {
        let v = tree.version();
        self.trees.write().expect("tree lock").insert(v, tree);
        *self.current.write().expect("version lock") = Some(v);
    }

    pub(crate) fn current_tree(&self) -> Result<Arc<DecisionTree>, ApiError> {
        let v = self
            .current_version()
            .ok_or_else(|| ApiError::new(ErrorCode::NoTree, "no tree has been trained"))?;
        self.tree(v)
    }

    pub(crate) fn tree(&self, version: u64) -> Result<Arc<DecisionTree>, ApiError> {
        if let Some(t) = self.trees.read().expect("tree lock").get(&version) {
            return Ok(t.clone());
        }
        let t = Arc::new(self.store.load_tree(version)?);
        self.trees
            .write()
            .expect("tree lock")
            .insert(version, t.clone());
        Ok(t)
    }

    pub(crate) fn dialog_config(&self) -> DialogConfig<f64> {
        DialogConfig {
            confirm_threshold: self.config.confirm_threshold,
            ..DialogConfig::default()
        }
    }

    pub(crate) fn engine<'a>(&'a self, tree: &'a DecisionTree) -> DialogEngine<'a, f64> {
        DialogEngine::new(tree, self.dialog_config(), self.clock.as_ref())
    }

    pub(crate) fn insert_session(&self, s: Session) -> SessionHandle {
        let h = Arc::new(Mutex::new(s));
        let id = h.lock().expect("fresh session").id.clone();
        self.sessions
            .lock()
            .expect("session map")
            .insert(id, h.clone());
        h
    }

    /// The live session, rebuilt from its log when it is not in memory.
    pub(crate) fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        if let Some(h) = self.sessions.lock().expect("session map").get(id) {
            return Ok(h.clone());
        }
        let not_found = || ApiError::new(ErrorCode::SessionNotFound, format!("no session `{id}`"));
        let events = self.store.session_log(id).map_err(|_| not_found())?;
        let Some(SessionEvent::Start {
            tree_version, mode, ..
        }) = events.first()
        else {
            return Err(not_found());
        };
        let turns: Vec<_> = events
            .iter()
            .filter_map(|e| match e {
                SessionEvent::Turn(t) => Some(t.clone()),
                _ => None,
            })
            .collect();
        let tree = self.tree(*tree_version)?;
        let mut s = self.engine(&tree).replay(id, *mode, &turns)?;
        if s.transcript.len() == turns.len() {
            s.transcript = turns;
        }
        let mut map = self.sessions.lock().expect("session map");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(s)))
            .clone())
    }
}
