//! Span annotation: given text and marked byte spans, return an entity or
//! NIL per span. Shared by the batch `annotate` command and the HTTP API.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_context, EntityId, N_CONTEXT};
use crate::error::Result;
use crate::pipeline::disambiguate;
use crate::store::{KnowledgeBase, ModelCache, ModelSource, ModelStore};
use crate::text::{lemma_key, stop_verbs, Body};

/// Environment variable naming the model store directory.
pub const STORE_ENV: &str = "MENTIONLINK_STORE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRequest {
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub text: String,
    #[serde(default)]
    pub spans: Vec<SpanRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub length: usize,
    /// Entity title, or `null` for NIL.
    pub entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<EntityId>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub annotations: Vec<SpanAnnotation>,
}

/// Which rule produced a span's answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    StopVerb,
    Model,
    Pruned,
    Direct,
    Redirect,
    Nil,
    Invalid,
}

pub struct Annotator {
    source: Arc<dyn ModelSource>,
    kb: Arc<KnowledgeBase>,
    pruner: Option<String>,
    n_context: usize,
}

impl Annotator {
    /// `pruner` is a pruner storage key such as `threshold@-0.05,-0.02`.
    pub fn new(source: Arc<dyn ModelSource>, kb: Arc<KnowledgeBase>, pruner: Option<String>) -> Self {
        Annotator {
            source,
            kb,
            pruner,
            n_context: N_CONTEXT,
        }
    }

    pub fn from_store(store: ModelStore, pruner: Option<String>) -> Result<Self> {
        let kb = store.load_kb()?;
        Ok(Annotator::new(Arc::new(ModelCache::new(store)), Arc::new(kb), pruner))
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    /// Resolves one span; errors are reported per span.
    pub fn annotate_span(&self, text: &str, span: SpanRequest) -> (SpanAnnotation, Resolution) {
        let mut out = SpanAnnotation {
            start: span.start,
            length: span.length,
            entity: None,
            id: None,
            score: 0.0,
            error: None,
        };
        let end = span.start.checked_add(span.length);
        let valid =
            end.is_some_and(|e| e <= text.len() && text.is_char_boundary(span.start) && text.is_char_boundary(e));
        let Some(end) = end.filter(|_| valid) else {
            out.error = Some(format!(
                "span {}+{} outside text of {} bytes",
                span.start,
                span.length,
                text.len()
            ));
            return (out, Resolution::Invalid);
        };
        let mention = lemma_key(&text[span.start..end]);
        if mention.is_empty() {
            return (out, Resolution::Nil);
        }
        if stop_verbs().contains(&mention) {
            return (out, Resolution::StopVerb);
        }
        let set = |out: &mut SpanAnnotation, id: EntityId, score: f64| {
            out.id = Some(id);
            out.entity = Some(self.kb.title(id).unwrap_or_default().to_string());
            out.score = score;
        };
        let (body, tokens) = Body::from_marked_text(text, &[(span.start, end)]);
        let context = tokens[0]
            .map(|t| extract_context(&body, t, self.n_context))
            .unwrap_or_default();
        match disambiguate(
            self.source.as_ref(),
            &self.kb,
            self.pruner.as_deref(),
            &mention,
            &context,
        ) {
            Ok(Some(linked)) => {
                return match linked.sense {
                    Some(id) => {
                        set(&mut out, id, linked.prediction.top_probability);
                        (out, Resolution::Model)
                    }
                    None => (out, Resolution::Pruned),
                };
            }
            Ok(None) => {}
            Err(e) => {
                out.error = Some(e.to_string());
                return (out, Resolution::Invalid);
            }
        }
        if let Some(&id) = self.kb.direct.get(&mention) {
            set(&mut out, id, 1.0);
            return (out, Resolution::Direct);
        }
        if let Some(&id) = self.kb.redirects.get(&mention) {
            set(&mut out, id, 1.0);
            return (out, Resolution::Redirect);
        }
        (out, Resolution::Nil)
    }

    pub fn annotate_document(&self, request: &AnnotateRequest, with_ids: bool) -> AnnotateResponse {
        let annotations = request
            .spans
            .iter()
            .map(|&s| {
                let (mut a, _) = self.annotate_span(&request.text, s);
                if !with_ids {
                    a.id = None;
                }
                a
            })
            .collect();
        AnnotateResponse { annotations }
    }
}

/// Shared server state; `annotator` is `None` when the store failed to open.
pub struct AppState {
    pub annotator: Option<Annotator>,
    pub startup_error: Option<String>,
}

impl AppState {
    pub fn open(store_dir: &std::path::Path, pruner: Option<String>) -> Self {
        match ModelStore::open(store_dir).and_then(|s| Annotator::from_store(s, pruner)) {
            Ok(a) => AppState {
                annotator: Some(a),
                startup_error: None,
            },
            Err(e) => {
                log::error!("model store unavailable: {e}");
                AppState {
                    annotator: None,
                    startup_error: Some(e.to_string()),
                }
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct AnnotateQuery {
    #[serde(default)]
    ids: bool,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

fn unavailable(state: &AppState) -> Response {
    error(
        StatusCode::SERVICE_UNAVAILABLE,
        state
            .startup_error
            .clone()
            .unwrap_or_else(|| "model store unavailable".into()),
    )
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    match &state.annotator {
        Some(a) => Json(serde_json::json!({
            "status": "ok",
            "mentions": a.knowledge_base().ambiguous.len(),
        }))
        .into_response(),
        None => unavailable(&state),
    }
}

async fn annotate(State(state): State<Arc<AppState>>, Query(query): Query<AnnotateQuery>, body: Bytes) -> Response {
    if state.annotator.is_none() {
        return unavailable(&state);
    }
    let request: AnnotateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let with_ids = query.ids;
    let worker = state.clone();
    match tokio::task::spawn_blocking(move || {
        worker
            .annotator
            .as_ref()
            .map(|a| a.annotate_document(&request, with_ids))
    })
    .await
    {
        Ok(Some(resp)) => Json(resp).into_response(),
        Ok(None) => unavailable(&state),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/annotate", post(annotate))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
