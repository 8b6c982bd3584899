//! HTTP API over the dialog engine and the file store.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | `{mode?, volunteered?}` |
//! | GET | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/answer` | `{attribute, value? , unknown?, confidence?, volunteered?}` |
//! | POST | `/sessions/{id}/confirm` | `{accepted}` |
//! | POST | `/sessions/{id}/classify` | |
//! | POST | `/sessions/{id}/verify` | `{corrected_label, operator_id}` |
//! | POST | `/sessions/{id}/satisfaction` | `{score}` |
//! | POST | `/admin/retrain` | |
//! | GET | `/tree?version=N` | |
//! | GET | `/stats` | |
//!
//! Successful bodies carry `tree_version`; every response also carries an
//! `x-tree-version` header with the current version. POST requests with an
//! `Idempotency-Key` header are answered once per key and path; successful
//! responses are replayed verbatim.

mod error;
mod routes;
mod state;

pub use error::{ApiError, ErrorCode};
pub use routes::router;
pub use state::{AppState, ServiceConfig};

use std::net::SocketAddr;
use std::sync::Arc;

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
