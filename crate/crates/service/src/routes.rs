use std::collections::BTreeMap;
use std::sync::{Arc, TryLockError};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use dtdialog::dataset::{AttributeKind, AttributeValue, Schema};
use dtdialog::dialog::{Answer, DialogMode, Outcome, Prompt, SessionStatus, Turn};
use dtdialog::evaluation::SatisfactionScore;
use dtdialog::persistence::{RetrainOutcome, Stats, TreeDocument, VerificationRecord};
use dtdialog::{DecisionTree, Session};

use crate::error::{ApiError, ErrorCode};
use crate::state::{AppState, CachedResponse, SessionHandle};

type AppResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/classify", post(classify))
        .route("/sessions/{id}/verify", post(verify))
        .route("/sessions/{id}/satisfaction", post(satisfaction))
        .route("/admin/retrain", post(retrain))
        .route("/tree", get(tree))
        .route("/stats", get(stats))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .layer(middleware::from_fn_with_state(state.clone(), version_header))
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this route")
}

async fn version_header(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let mut resp = next.run(req).await;
    if let Some(v) = state.current_version() {
        resp.headers_mut()
            .insert("x-tree-version", HeaderValue::from(v));
    }
    resp
}

async fn idempotency(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(key) = req
        .headers()
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
    else {
        return next.run(req).await;
    };
    let slot = state
        .idempotency
        .lock()
        .expect("idempotency map")
        .entry(format!("{} {key}", req.uri().path()))
        .or_default()
        .clone();
    let mut cached = slot.lock().await;
    if let Some(c) = cached.as_ref() {
        return replay(c);
    }
    let resp = next.run(req).await;
    if !resp.status().is_success() {
        return resp;
    }
    let (parts, body) = resp.into_parts();
    let body = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::new(ErrorCode::StorageError, e.to_string()).into_response(),
    };
    let c = CachedResponse {
        status: parts.status,
        content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
        body: body.clone(),
    };
    *cached = Some(c);
    Response::from_parts(parts, Body::from(body))
}

fn replay(c: &CachedResponse) -> Response {
    let mut r = Response::new(Body::from(c.body.clone()));
    *r.status_mut() = c.status;
    if let Some(ct) = &c.content_type {
        r.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
    }
    r.headers_mut()
        .insert("idempotent-replay", HeaderValue::from_static("true"));
    r
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> AppResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, format!("malformed body: {e}")))
}

fn parse_required<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, format!("malformed body: {e}")))
}

fn authorize(state: &AppState, headers: &HeaderMap) -> AppResult<()> {
    let Some(token) = &state.config.operator_token else {
        return Ok(());
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(ErrorCode::Unauthorized, "operator token required"))
    }
}

/// Converts a JSON answer value. Strings go through the schema's text parser,
/// so `"15000"`, `"15_000"` and `"?"` all work; `null` means unknown.
fn json_value(schema: &Schema, attribute: &str, v: &Value) -> AppResult<AttributeValue> {
    let invalid = |m: String| ApiError::new(ErrorCode::InvalidAnswer, m);
    let (_, a) = schema
        .lookup(attribute)
        .map_err(|e| invalid(e.to_string()))?;
    let value = match v {
        Value::Null => AttributeValue::Missing,
        Value::String(s) => a.parse_value(s).map_err(invalid)?,
        Value::Number(n) if matches!(a.kind, AttributeKind::Numeric { .. }) => {
            AttributeValue::Number(n.as_f64().ok_or_else(|| invalid("number out of range".into()))?)
        }
        Value::Bool(b) if matches!(a.kind, AttributeKind::Categorical { .. }) => {
            a.parse_value(if *b { "yes" } else { "no" }).map_err(invalid)?
        }
        other => return Err(invalid(format!("`{attribute}` cannot take {other}"))),
    };
    a.validate(&value).map_err(|e| invalid(e.to_string()))?;
    Ok(value)
}

fn json_values(
    schema: &Schema,
    values: &BTreeMap<String, Value>,
) -> AppResult<BTreeMap<String, AttributeValue>> {
    values
        .iter()
        .map(|(k, v)| Ok((k.clone(), json_value(schema, k, v)?)))
        .collect()
}

#[derive(Debug, Serialize)]
struct FrontierEntry {
    node: usize,
    probability: f64,
}

#[derive(Debug, Serialize)]
struct SessionView {
    tree_version: u64,
    id: String,
    mode: DialogMode,
    status: SessionStatus,
    novel: bool,
    system_questions: usize,
    frontier: Vec<FrontierEntry>,
    volunteered: BTreeMap<String, AttributeValue>,
    pending: Option<Prompt>,
    result: Option<Outcome<f64>>,
    transcript: Vec<Turn<f64>>,
}

impl SessionView {
    fn of(s: &Session) -> Self {
        Self {
            tree_version: s.tree_version,
            id: s.id.clone(),
            mode: s.mode,
            status: s.status,
            novel: s.novel,
            system_questions: s.system_questions(),
            frontier: s
                .frontier
                .iter()
                .map(|&(node, probability)| FrontierEntry { node, probability })
                .collect(),
            volunteered: s.volunteered.clone(),
            pending: s.pending.clone(),
            result: s.result.clone(),
            transcript: s.transcript.clone(),
        }
    }
}

/// Runs `f` with exclusive access to the session; a concurrent writer gets
/// `version_conflict` instead of waiting.
fn with_session<R>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session, &DecisionTree) -> AppResult<R>,
) -> AppResult<R> {
    let handle: SessionHandle = state.session(id)?;
    let mut guard = match handle.try_lock() {
        Ok(g) => g,
        Err(TryLockError::WouldBlock) => {
            return Err(ApiError::new(
                ErrorCode::VersionConflict,
                format!("session `{id}` is being updated by another request"),
            ))
        }
        Err(TryLockError::Poisoned(p)) => p.into_inner(),
    };
    let tree = state.tree(guard.tree_version)?;
    let out = f(&mut guard, &tree)?;
    state.store.append_session_log(&guard, tree.schema())?;
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    mode: Option<DialogMode>,
    #[serde(default)]
    volunteered: BTreeMap<String, Value>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> AppResult<Response> {
    let req: CreateSession = parse_body(&body)?;
    let tree = state.current_tree()?;
    let volunteered = json_values(tree.schema(), &req.volunteered)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let s = state.engine(&tree).start_with(
        id,
        req.mode.unwrap_or(state.config.default_mode),
        volunteered,
    )?;
    state.store.append_session_log(&s, tree.schema())?;
    let view = SessionView::of(&s);
    state.insert_session(s);
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> AppResult<Json<SessionView>> {
    let h = state.session(&id)?;
    let s = h.lock().unwrap_or_else(|p| p.into_inner());
    Ok(Json(SessionView::of(&s)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRequest {
    attribute: String,
    #[serde(default)]
    value: Option<Value>,
    #[serde(default)]
    unknown: bool,
    confidence: Option<f64>,
    #[serde(default)]
    volunteered: BTreeMap<String, Value>,
}

async fn answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<Json<SessionView>> {
    let req: AnswerRequest = parse_required(&body)?;
    let view = with_session(&state, &id, |s, tree| {
        let answer = match (&req.value, req.unknown) {
            (_, true) => Answer::Unknown,
            (None, false) => {
                return Err(ApiError::new(
                    ErrorCode::InvalidRequest,
                    "answer needs `value` or `unknown: true`",
                ))
            }
            (Some(v), false) => match json_value(tree.schema(), &req.attribute, v)? {
                AttributeValue::Missing => Answer::Unknown,
                value => Answer::Known {
                    value,
                    confidence: req.confidence.unwrap_or(1.0),
                },
            },
        };
        let extras = json_values(tree.schema(), &req.volunteered)?;
        let engine = state.engine(tree);
        engine.submit_answer(s, &req.attribute, answer, extras)?;
        engine.next_question(s)?;
        Ok(SessionView::of(s))
    })?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmRequest {
    accepted: bool,
}

async fn confirm(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<Json<SessionView>> {
    let req: ConfirmRequest = parse_required(&body)?;
    let view = with_session(&state, &id, |s, tree| {
        let engine = state.engine(tree);
        engine.submit_confirmation(s, req.accepted)?;
        engine.next_question(s)?;
        Ok(SessionView::of(s))
    })?;
    Ok(Json(view))
}

async fn classify(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> AppResult<Json<SessionView>> {
    let view = with_session(&state, &id, |s, tree| {
        state.engine(tree).classify_session(s)?;
        Ok(SessionView::of(s))
    })?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyRequest {
    corrected_label: String,
    operator_id: String,
}

#[derive(Debug, Serialize)]
struct Versioned<T> {
    tree_version: Option<u64>,
    #[serde(flatten)]
    body: T,
}

async fn verify(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Json<Versioned<VerificationRecord>>> {
    authorize(&state, &headers)?;
    let req: VerifyRequest = parse_required(&body)?;
    let h = state.session(&id)?;
    let original = {
        let s = h.lock().unwrap_or_else(|p| p.into_inner());
        match &s.result {
            Some(r) => r.class.clone(),
            None => {
                return Err(ApiError::new(
                    ErrorCode::SessionNotClassified,
                    format!("session `{id}` is still active"),
                ))
            }
        }
    };
    let record = state.store.record_verification(VerificationRecord {
        session_id: id,
        operator_id: req.operator_id,
        original_label: original,
        corrected_label: req.corrected_label,
        applied_in_version: None,
        created_at: state.clock.now_ms(),
    })?;
    Ok(Json(Versioned {
        tree_version: state.current_version(),
        body: record,
    }))
}

#[derive(Debug, Serialize)]
struct RetrainResponse {
    previous_version: u64,
    #[serde(flatten)]
    outcome: RetrainOutcome,
}

async fn retrain(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
) -> AppResult<Json<Versioned<RetrainResponse>>> {
    authorize(&state, &headers)?;
    let _guard = state.retrain_lock.lock().await;
    let previous = state.current_tree()?.version();
    let base = state.store.load_dataset(&state.config.dataset)?;
    let outcome = state.store.retrain(&base, &state.config.induction)?;
    let tree = state.tree(outcome.version)?;
    state.install(tree);
    Ok(Json(Versioned {
        tree_version: Some(outcome.version),
        body: RetrainResponse {
            previous_version: previous,
            outcome,
        },
    }))
}

#[derive(Debug, Default, Deserialize)]
struct TreeQuery {
    version: Option<u64>,
}

#[derive(Debug, Serialize)]
struct TreeResponse {
    tree_version: u64,
    tree: TreeDocument,
}

async fn tree(
    State(state): State<Arc<AppState>>,
    query: Result<Query<TreeQuery>, axum::extract::rejection::QueryRejection>,
) -> AppResult<Json<TreeResponse>> {
    let Query(q) = query.map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.body_text()))?;
    let t = match q.version {
        Some(v) => state.tree(v)?,
        None => state.current_tree()?,
    };
    Ok(Json(TreeResponse {
        tree_version: t.version(),
        tree: TreeDocument::from_tree(&t),
    }))
}

async fn stats(State(state): State<Arc<AppState>>) -> AppResult<Json<Versioned<Stats>>> {
    Ok(Json(Versioned {
        tree_version: state.current_version(),
        body: state.store.stats()?,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SatisfactionRequest {
    score: i64,
}

#[derive(Debug, Serialize)]
struct SatisfactionResponse {
    session_id: String,
    score: SatisfactionScore,
    recorded_at: u64,
}

async fn satisfaction(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<Json<Versioned<SatisfactionResponse>>> {
    let req: SatisfactionRequest = parse_required(&body)?;
    let score = SatisfactionScore::new(req.score)?;
    let version = state.session(&id)?.lock().unwrap_or_else(|p| p.into_inner()).tree_version;
    let r = state
        .store
        .record_satisfaction(&id, score, state.clock.now_ms())?;
    Ok(Json(Versioned {
        tree_version: Some(version),
        body: SatisfactionResponse {
            session_id: r.session_id,
            score: r.score,
            recorded_at: r.recorded_at,
        },
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ServiceConfig;
    use dtdialog::dialog::{DialogMode, FixedClock};
    use dtdialog::evaluation::generate_credit_dataset;
    use dtdialog::induction::{induce_tree, InductionConfig};

    #[test]
    fn concurrent_writer_gets_version_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState::with_clock(
            dir.path(),
            ServiceConfig::default(),
            Arc::new(FixedClock(0)),
        )
        .unwrap();
        let tree = Arc::new(
            induce_tree(&generate_credit_dataset(60, 1), &InductionConfig::default()).unwrap(),
        );
        state.store.save_tree(&tree).unwrap();
        state.install(tree.clone());
        let s = state.engine(&tree).start_session("s1", DialogMode::Greedy);
        let handle = state.insert_session(s);

        let held = handle.lock().unwrap();
        let err = with_session(&state, "s1", |_, _| Ok(())).unwrap_err();
        assert_eq!(err.code, ErrorCode::VersionConflict);
        drop(held);
        assert!(with_session(&state, "s1", |_, _| Ok(())).is_ok());
    }

    #[test]
    fn json_values_follow_schema() {
        let schema = dtdialog::evaluation::credit_schema();
        assert_eq!(
            json_value(&schema, "Savings", &serde_json::json!("15_000")).unwrap(),
            AttributeValue::Number(15_000.0)
        );
        assert_eq!(
            json_value(&schema, "Savings", &Value::Null).unwrap(),
            AttributeValue::Missing
        );
        assert_eq!(
            json_value(&schema, "Employment", &serde_json::json!(true)).unwrap(),
            AttributeValue::category("yes")
        );
        assert!(json_value(&schema, "Employment", &serde_json::json!(1)).is_err());
        assert!(json_value(&schema, "Nope", &serde_json::json!(1)).is_err());
    }
}
