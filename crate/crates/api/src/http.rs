//! HTTP interface. All bodies are JSON except the session archive, which is
//! transferred as a gzip'd tar.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use twai_core::scorecard::{ScorecardEntry, TrustItem};
use twai_core::session::{help_text, Mode};
use twai_core::source::CorpusDocument;
use twai_core::store::SessionArchive;
use twai_core::Workbench;

use crate::error::ApiError;

type App = Arc<Workbench>;
type ApiResult<T> = Result<T, ApiError>;

const ARCHIVE_BODY_LIMIT: usize = 256 * 1024 * 1024;

/// JSON body whose parse failures become `InvalidRequest`.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|rej| ApiError::invalid_request(rej.body_text()))
    }
}

/// Path parameters whose parse failures become `InvalidRequest`.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| Params(v))
            .map_err(|rej| ApiError::invalid_request(rej.body_text()))
    }
}

/// Query string whose parse failures become `InvalidRequest`.
pub struct QueryParams<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryParams<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| QueryParams(v))
            .map_err(|rej| ApiError::invalid_request(rej.body_text()))
    }
}

/// Run blocking workbench code off the async executor.
async fn blocking<T, F>(app: &App, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Workbench) -> twai_core::Result<T> + Send + 'static,
{
    let app = Arc::clone(app);
    tokio::task::spawn_blocking(move || f(&app))
        .await
        .map_err(|e| ApiError::new("IoError", format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

/// Mode check at the API boundary; the session layer repeats it.
fn gate(wb: &Workbench, session_id: &str, allowed: &[Mode], operation: &'static str) -> twai_core::Result<()> {
    let state = wb.mode_state(session_id)?;
    if allowed.contains(&state.current) {
        Ok(())
    } else {
        Err(twai_core::Error::WrongMode {
            current: state.current,
            operation,
        })
    }
}

fn all_providers(wb: &Workbench, requested: Option<Vec<String>>) -> Vec<String> {
    requested.unwrap_or_else(|| wb.registry().ids())
}

pub fn router(wb: Workbench) -> Router {
    let app: App = Arc::new(wb);
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/providers", get(providers))
        .route("/help", get(help_all))
        .route("/help/{mode}", get(help_one))
        .route("/metrics", get(metrics))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/mode", get(get_mode).put(switch_mode).post(switch_mode))
        .route("/sessions/{id}/prompts", post(submit_prompt))
        .route("/sessions/{id}/turns/{index}", get(get_turn))
        .route("/sessions/{id}/verifications", get(list_verifications))
        .route("/sessions/{id}/verify/source", post(verify_source))
        .route("/sessions/{id}/verify/double-check", post(verify_double_check))
        .route("/sessions/{id}/verify/compare", post(verify_compare))
        .route("/sessions/{id}/decision-table", get(decision_table))
        .route("/sessions/{id}/decisions", post(record_decision).get(list_decisions))
        .route("/sessions/{id}/library", get(get_library))
        .route("/sessions/{id}/library/templates", post(add_template))
        .route("/sessions/{id}/library/bookmarks", post(add_bookmark))
        .route("/sessions/{id}/library/{item}", delete(remove_library_item))
        .route("/sessions/{id}/archive", get(export_archive))
        .route(
            "/archives",
            post(import_archive).layer(DefaultBodyLimit::max(ARCHIVE_BODY_LIMIT)),
        )
        .route("/corpus", get(corpus_summary))
        .route("/corpus/documents", post(ingest_document))
        .route("/scorecard/items", get(scorecard_items))
        .route("/scorecard/entries", post(record_scorecard).get(list_scorecard))
        .route("/scorecard/tools/{tool}", get(aggregate_scorecard))
        .route("/scorecard/compare", get(compare_tools))
        .fallback(|| async { ApiError::new("NotFound", "no such endpoint") })
        .with_state(app)
}

/// Bind and serve until ctrl-c.
pub async fn serve(wb: Workbench, addr: SocketAddr) -> Result<(), ApiError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ApiError::new("PortInUse", format!("port {} is already in use", addr.port()))
        } else {
            ApiError::new("IoError", format!("cannot bind {addr}: {e}"))
        }
    })?;
    axum::serve(listener, router(wb))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::new("IoError", e.to_string()))
}

async fn providers(State(app): State<App>) -> Json<Value> {
    Json(json!(app.providers()))
}

async fn help_all() -> Json<BTreeMap<&'static str, &'static str>> {
    Json(Mode::ALL.into_iter().map(|m| (m.as_str(), help_text(m))).collect())
}

async fn help_one(Params(mode): Params<String>) -> ApiResult<Json<Value>> {
    let mode: Mode = mode.parse()?;
    Ok(Json(json!({"mode": mode, "text": help_text(mode)})))
}

async fn metrics(State(app): State<App>) -> Json<Value> {
    Json(json!(app.metrics()))
}

#[derive(Deserialize)]
struct CreateSession {
    #[serde(default)]
    title: String,
}

async fn create_session(State(app): State<App>, Body(req): Body<CreateSession>) -> ApiResult<Response> {
    let session = blocking(&app, move |wb| wb.create_session(&req.title)).await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn list_sessions(State(app): State<App>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(blocking(&app, |wb| Ok(wb.list_sessions())).await?)))
}

async fn get_session(State(app): State<App>, Params(id): Params<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(blocking(&app, move |wb| wb.session(&id)).await?)))
}

async fn get_mode(State(app): State<App>, Params(id): Params<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(blocking(&app, move |wb| wb.mode_state(&id)).await?)))
}

#[derive(Deserialize)]
struct SwitchMode {
    mode: Mode,
}

async fn switch_mode(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<SwitchMode>,
) -> ApiResult<Json<Value>> {
    let state = blocking(&app, move |wb| wb.switch_mode(&id, req.mode)).await?;
    Ok(Json(json!(state)))
}

#[derive(Deserialize)]
struct SubmitPrompt {
    prompt: String,
    providers: Option<Vec<String>>,
}

async fn submit_prompt(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<SubmitPrompt>,
) -> ApiResult<Response> {
    let turn = blocking(&app, move |wb| {
        gate(wb, &id, &[Mode::Generation], "submit_prompt")?;
        let providers = all_providers(wb, req.providers);
        wb.submit_prompt(&id, &req.prompt, &providers)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(turn)).into_response())
}

async fn get_turn(State(app): State<App>, Params((id, index)): Params<(String, usize)>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(blocking(&app, move |wb| wb.turn(&id, index)).await?)))
}

async fn list_verifications(State(app): State<App>, Params(id): Params<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(
        blocking(&app, move |wb| Ok(wb.session(&id)?.verifications)).await?
    )))
}

#[derive(Deserialize)]
struct VerifyResponse {
    response_id: String,
}

async fn verify_source(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<VerifyResponse>,
) -> ApiResult<Response> {
    let rec = blocking(&app, move |wb| {
        gate(wb, &id, &[Mode::Verification], "verify_source")?;
        wb.verify_source(&id, &req.response_id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn verify_double_check(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<VerifyResponse>,
) -> ApiResult<Response> {
    let rec = blocking(&app, move |wb| {
        gate(wb, &id, &[Mode::Verification], "double_check")?;
        wb.double_check(&id, &req.response_id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

#[derive(Deserialize)]
struct CompareRequest {
    /// Compare the responses of this existing turn.
    turn: Option<usize>,
    /// Otherwise ask `providers` (default: all) this prompt.
    prompt: Option<String>,
    providers: Option<Vec<String>>,
}

#[derive(Serialize)]
struct CompareResult {
    verification: twai_core::session::VerificationRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    turn: Option<twai_core::session::Turn>,
}

async fn verify_compare(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<CompareRequest>,
) -> ApiResult<Response> {
    let result = blocking(&app, move |wb| {
        gate(wb, &id, &[Mode::Generation, Mode::Verification], "run_compare")?;
        match (req.turn, req.prompt) {
            (Some(index), None) => Ok(CompareResult {
                verification: wb.compare_turn(&id, index)?,
                turn: None,
            }),
            (None, Some(prompt)) => {
                let providers = all_providers(wb, req.providers);
                let (turn, verification) = wb.run_compare(&id, &prompt, &providers)?;
                Ok(CompareResult {
                    verification,
                    turn: Some(turn),
                })
            }
            _ => Err(twai_core::Error::InvalidRequest(
                "give either `turn` or `prompt`, not both".into(),
            )),
        }
    })
    .await?;
    Ok((StatusCode::CREATED, Json(result)).into_response())
}

#[derive(Deserialize)]
struct TableQuery {
    format: Option<String>,
}

async fn decision_table(
    State(app): State<App>,
    Params(id): Params<String>,
    QueryParams(q): QueryParams<TableQuery>,
) -> ApiResult<Response> {
    let table = blocking(&app, move |wb| wb.decision_table(&id)).await?;
    Ok(match q.format.as_deref() {
        Some("text") => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], table.to_text()).into_response(),
        None | Some("json") => Json(table).into_response(),
        Some(other) => return Err(ApiError::invalid_request(format!("unknown format `{other}`"))),
    })
}

#[derive(Deserialize)]
struct DecisionRequest {
    response_id: String,
    #[serde(default)]
    rationale: String,
}

async fn record_decision(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<DecisionRequest>,
) -> ApiResult<Response> {
    let rec = blocking(&app, move |wb| {
        gate(wb, &id, &[Mode::Decision], "record_decision")?;
        wb.record_decision(&id, &req.response_id, &req.rationale)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn list_decisions(State(app): State<App>, Params(id): Params<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(
        blocking(&app, move |wb| Ok(wb.session(&id)?.decisions)).await?
    )))
}

async fn get_library(State(app): State<App>, Params(id): Params<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(blocking(&app, move |wb| wb.library(&id)).await?)))
}

#[derive(Deserialize)]
struct TemplateRequest {
    label: String,
    body: String,
}

async fn add_template(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<TemplateRequest>,
) -> ApiResult<Json<Value>> {
    let lib = blocking(&app, move |wb| wb.add_template(&id, &req.label, &req.body)).await?;
    Ok(Json(json!(lib)))
}

#[derive(Deserialize)]
struct BookmarkRequest {
    #[serde(default)]
    label: String,
    response_id: String,
}

async fn add_bookmark(
    State(app): State<App>,
    Params(id): Params<String>,
    Body(req): Body<BookmarkRequest>,
) -> ApiResult<Json<Value>> {
    let lib = blocking(&app, move |wb| wb.add_bookmark(&id, &req.label, &req.response_id)).await?;
    Ok(Json(json!(lib)))
}

async fn remove_library_item(
    State(app): State<App>,
    Params((id, item)): Params<(String, String)>,
) -> ApiResult<Json<Value>> {
    let lib = blocking(&app, move |wb| wb.remove_library_item(&id, &item)).await?;
    Ok(Json(json!(lib)))
}

async fn export_archive(State(app): State<App>, Params(id): Params<String>) -> ApiResult<Response> {
    let bytes = blocking(&app, move |wb| {
        let archive = wb.export_session(&id)?;
        let mut out = Vec::new();
        archive.write_to(&mut out)?;
        Ok(out)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/gzip")], bytes).into_response())
}

async fn import_archive(State(app): State<App>, body: Bytes) -> ApiResult<Response> {
    let session = blocking(&app, move |wb| {
        let archive = SessionArchive::read_from(body.as_ref())?;
        wb.import_archive(&archive)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn corpus_summary(State(app): State<App>) -> Json<Value> {
    Json(json!(app.corpus_summary()))
}

async fn ingest_document(State(app): State<App>, Body(doc): Body<CorpusDocument>) -> ApiResult<Response> {
    let doc_id = doc.doc_id.clone();
    let chunks = blocking(&app, move |wb| wb.ingest_document(doc)).await?;
    Ok((StatusCode::CREATED, Json(json!({"doc_id": doc_id, "chunks": chunks}))).into_response())
}

async fn scorecard_items() -> Json<Value> {
    Json(json!(TrustItem::ALL
        .iter()
        .map(|i| json!({"item_id": i, "statement": i.statement(), "scored": i.is_scored()}))
        .collect::<Vec<_>>()))
}

async fn record_scorecard(State(app): State<App>, Body(entry): Body<ScorecardEntry>) -> ApiResult<Response> {
    let stored = blocking(&app, move |wb| wb.record_scorecard(entry)).await?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn list_scorecard(State(app): State<App>) -> Json<Value> {
    Json(json!(app.scorecard_entries()))
}

async fn aggregate_scorecard(State(app): State<App>, Params(tool): Params<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(app.aggregate_scorecard(&tool)?)))
}

#[derive(Deserialize)]
struct CompareToolsQuery {
    a: String,
    b: String,
}

async fn compare_tools(
    State(app): State<App>,
    QueryParams(q): QueryParams<CompareToolsQuery>,
) -> ApiResult<Json<Value>> {
    Ok(Json(json!(app.compare_tools(&q.a, &q.b)?)))
}
