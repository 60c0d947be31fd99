//! Routes:
//!
//! - `POST /sheets`, `GET /sheets/{id}`, `PUT /sheets/{id}`
//! - `POST /sheets/{id}/suggest`
//! - `GET /suggestions/{id}`, `POST /suggestions/{id}/next`,
//!   `POST /suggestions/{id}/feedback`
//! - `GET /stats`, `GET /health`
//!
//! Callers identify themselves with `X-User-Id`; their suggestions are
//! logged only when `X-Data-Opt-In` is `true`, `yes` or `1`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cadenza_core::anticipate::Capability;
use cadenza_core::engine::{
    accept, generate, session_rng, EngineError, GenerationRequest, StopReason, Suggestion,
};
use cadenza_core::leadsheet::{
    parse_leadsheet, serialize_leadsheet, HarmonyChord, LeadSheet, MelodyNote, SheetError,
};
use cadenza_core::model::SamplingPolicy;
use serde::{Deserialize, Serialize};

use crate::flywheel::{
    Cause, FlywheelStats, Ledger, LogEntry, LogError, Outcome, SuggestionRecord,
};
use crate::store::{StoreError, StoredSheet, SuggestionEntry};
use crate::AppState;

pub const USER_HEADER: &str = "x-user-id";
pub const OPT_IN_HEADER: &str = "x-data-opt-in";
pub const ANONYMOUS_USER: &str = "anonymous";

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            error,
            message: message.into(),
            line: None,
            field: None,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("unknown {what} {id}"),
        )
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<SheetError> for ApiError {
    fn from(e: SheetError) -> Self {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "invalid_sheet", e.to_string());
        if let SheetError::Parse { line, field, .. } = e {
            err.line = Some(line);
            err.field = Some(field);
        }
        err
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::not_found("sheet", &id),
            StoreError::VersionConflict { .. } => ApiError::conflict(e.to_string()),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => ApiError::internal(e.to_string()),
        }
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let error = if r.status() == StatusCode::UNPROCESSABLE_ENTITY {
            "invalid_request"
        } else {
            "bad_request"
        };
        ApiError::new(r.status(), error, r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sheets", post(create_sheet))
        .route("/sheets/{id}", get(get_sheet).put(put_sheet))
        .route("/sheets/{id}/suggest", post(suggest))
        .route("/suggestions/{id}", get(get_suggestion))
        .route("/suggestions/{id}/next", post(next))
        .route("/suggestions/{id}/feedback", post(feedback))
        .route("/stats", get(stats))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetView {
    pub id: String,
    pub version: u64,
    /// Canonical document text.
    pub document: String,
    pub sheet: LeadSheet,
}

impl From<StoredSheet> for SheetView {
    fn from(s: StoredSheet) -> Self {
        SheetView {
            id: s.id,
            version: s.version,
            document: serialize_leadsheet(&s.sheet),
            sheet: s.sheet,
        }
    }
}

/// JSON sheet bodies: `{"document": ...}`, `{"sheet": ...}` (both with an
/// optional `version`), or a bare JSON mirror of the sheet.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SheetPayload {
    #[serde(default)]
    version: Option<u64>,
    #[serde(default)]
    document: Option<String>,
    #[serde(default)]
    sheet: Option<LeadSheet>,
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.trim_start().starts_with("application/json"))
}

fn json_error(e: serde_json::Error) -> ApiError {
    let mut err = ApiError::new(StatusCode::BAD_REQUEST, "invalid_sheet", e.to_string());
    err.line = Some(e.line());
    err
}

/// The sheet in a request body and the version it names, if any.
fn parse_sheet_body(headers: &HeaderMap, body: &[u8]) -> ApiResult<(LeadSheet, Option<u64>)> {
    if !is_json(headers) {
        let text = std::str::from_utf8(body).map_err(|_| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_sheet",
                "body is not UTF-8",
            )
        })?;
        return Ok((parse_leadsheet(text)?, None));
    }
    let value: serde_json::Value = serde_json::from_slice(body).map_err(json_error)?;
    let wrapped = value
        .as_object()
        .is_some_and(|o| o.contains_key("document") || o.contains_key("sheet"));
    let (mut sheet, version) = if wrapped {
        let p: SheetPayload = serde_json::from_value(value).map_err(json_error)?;
        match (p.document, p.sheet) {
            (Some(doc), None) => (parse_leadsheet(&doc)?, p.version),
            (None, Some(sheet)) => (sheet, p.version),
            _ => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "invalid_sheet",
                    "give exactly one of `document` and `sheet`",
                ))
            }
        }
    } else {
        (serde_json::from_value(value).map_err(json_error)?, None)
    };
    sheet.sort();
    sheet.validate()?;
    Ok((sheet, version))
}

fn wants_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/json"))
}

fn etag(version: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{version}\"")).expect("digits are a valid header")
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "model_version": state.model_version(),
    }))
}

async fn create_sheet(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let (sheet, _) = parse_sheet_body(&headers, &body)?;
    let stored = state.inner.sheets.create(sheet)?;
    let location = HeaderValue::from_str(&format!("/sheets/{}", stored.id)).expect("ids are ascii");
    let tag = etag(stored.version);
    let view = SheetView::from(stored);
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, location), (header::ETAG, tag)],
        Json(view),
    )
        .into_response())
}

/// The canonical document as text, or the JSON view when asked for.
async fn get_sheet(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let stored = state
        .inner
        .sheets
        .get(&id)
        .ok_or_else(|| ApiError::not_found("sheet", &id))?;
    let tag = etag(stored.version);
    if wants_json(&headers) {
        return Ok(([(header::ETAG, tag)], Json(SheetView::from(stored))).into_response());
    }
    let text = serialize_leadsheet(&stored.sheet);
    Ok((
        [
            (header::ETAG, tag),
            (
                header::CONTENT_TYPE,
                HeaderValue::from_static("text/plain; charset=utf-8"),
            ),
        ],
        text,
    )
        .into_response())
}

/// Replace a sheet. The expected version comes from `If-Match` or the JSON
/// body's `version`.
async fn put_sheet(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    if state.inner.sheets.get(&id).is_none() {
        return Err(ApiError::not_found("sheet", &id));
    }
    let (sheet, body_version) = parse_sheet_body(&headers, &body)?;
    let header_version = match headers.get(header::IF_MATCH) {
        None => None,
        Some(v) => Some(
            v.to_str()
                .ok()
                .map(|s| s.trim().trim_start_matches("W/").trim_matches('"'))
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| {
                    ApiError::new(
                        StatusCode::BAD_REQUEST,
                        "bad_request",
                        "If-Match must be a version",
                    )
                })?,
        ),
    };
    let version = header_version.or(body_version).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_request",
            "the sheet version is required (If-Match or `version`)",
        )
    })?;
    let stored = state.inner.sheets.update(&id, version, sheet)?;
    let tag = etag(stored.version);
    Ok(([(header::ETAG, tag)], Json(SheetView::from(stored))).into_response())
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestBody {
    pub span_beats: (u32, u32),
    pub capability: Capability,
    #[serde(default)]
    pub policy: Option<SamplingPolicy>,
    #[serde(default)]
    pub session_seed: Option<u64>,
    #[serde(default)]
    pub alternative_index: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NextBody {
    #[serde(default)]
    pub policy: Option<SamplingPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackOutcome {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub outcome: FeedbackOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionView {
    pub suggestion_id: String,
    pub sheet_id: String,
    pub sheet_version: u64,
    pub capability: Capability,
    pub span_beats: (u32, u32),
    pub alternative_index: u64,
    pub session_seed: u64,
    /// No usable note was generated; `message` says why.
    pub empty: bool,
    pub message: Option<String>,
    pub melody: Vec<MelodyNote>,
    pub harmony: Vec<HarmonyChord>,
    pub model_version: String,
    pub stop_reason: Option<StopReason>,
    pub outcome: Outcome,
    pub logged: bool,
}

impl From<&SuggestionEntry> for SuggestionView {
    fn from(e: &SuggestionEntry) -> Self {
        let (melody, harmony, model_version, stop_reason) = match &e.suggestion {
            Some(s) => (
                s.generated_melody.clone(),
                s.generated_harmony.clone(),
                s.model_version.clone(),
                Some(s.stop_reason),
            ),
            None => (Vec::new(), Vec::new(), String::new(), None),
        };
        SuggestionView {
            suggestion_id: e.id.clone(),
            sheet_id: e.sheet_id.clone(),
            sheet_version: e.sheet_version,
            capability: e.request.capability,
            span_beats: e.request.span_beats,
            alternative_index: e.request.alternative_index,
            session_seed: e.session_seed,
            empty: e.suggestion.as_ref().is_none_or(Suggestion::is_empty),
            message: e.message.clone(),
            melody,
            harmony,
            model_version,
            stop_reason,
            outcome: e.outcome,
            logged: e.logged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackView {
    pub suggestion_id: String,
    pub outcome: Outcome,
    /// The updated sheet after an accept.
    pub sheet: Option<SheetView>,
}

struct Caller {
    user_id: String,
    opted_in: bool,
}

fn caller(headers: &HeaderMap) -> Caller {
    let user_id = headers
        .get(USER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .unwrap_or(ANONYMOUS_USER)
        .to_string();
    let opted_in = headers
        .get(OPT_IN_HEADER)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| matches!(v.trim().to_ascii_lowercase().as_str(), "true" | "yes" | "1"));
    Caller { user_id, opted_in }
}

/// Record pending suggestions older than the session timeout as ignored.
pub async fn sweep_timeouts(state: &AppState) -> ApiResult<()> {
    let inner = &state.inner;
    let cutoff = inner.clock.now_ms() - inner.config.session_timeout_secs as i64 * 1000;
    let mut ledger = inner.ledger.lock().await;
    for id in ledger.pending_served_before(cutoff) {
        append(
            state,
            &mut ledger,
            transition(&id, Outcome::Ignored, Cause::SessionTimeout, state),
        )
        .await?;
        inner.suggestions.set_outcome(&id, Outcome::Ignored)?;
    }
    for id in inner
        .suggestions
        .pending_where(|e| !e.logged && e.served_ms <= cutoff)
    {
        inner.suggestions.set_outcome(&id, Outcome::Ignored)?;
    }
    Ok(())
}

fn transition(id: &str, outcome: Outcome, cause: Cause, state: &AppState) -> LogEntry {
    LogEntry::Transition {
        suggestion_id: id.to_string(),
        outcome,
        cause,
        timestamp_ms: state.inner.clock.now_ms(),
    }
}

async fn append(state: &AppState, ledger: &mut Ledger, entry: LogEntry) -> ApiResult<()> {
    ledger.check(&entry).map_err(ApiError::conflict)?;
    let seq = state.inner.log.append(entry.clone()).await?;
    ledger.apply(seq, entry);
    Ok(())
}

/// The entry's outcome; the log is authoritative for logged entries.
fn outcome_of(ledger: &Ledger, entry: &SuggestionEntry) -> Outcome {
    match ledger.record(&entry.id) {
        Some(r) if entry.logged => r.outcome,
        _ => entry.outcome,
    }
}

fn new_suggestion_id(state: &AppState, ledger: &Ledger) -> String {
    loop {
        let id = format!("sg-{:016x}", rand::random::<u64>());
        if ledger.record(&id).is_none() && !state.inner.suggestions.contains(&id) {
            return id;
        }
    }
}

/// Run the engine on the worker pool. `Ok(Err(message))` is a stalled
/// generation, served as an empty suggestion.
async fn run_generation(
    state: &AppState,
    req: GenerationRequest,
    seed: u64,
) -> ApiResult<Result<Suggestion, String>> {
    let model = state.inner.model.clone().map_err(|reason| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            format!("model unavailable: {reason}"),
        )
    })?;
    req.validate().map_err(engine_error)?;
    let _permit = Arc::clone(&state.inner.workers)
        .acquire_owned()
        .await
        .map_err(|_| ApiError::internal("worker pool closed"))?;
    let vocab = state.inner.vocab;
    let result = tokio::task::spawn_blocking(move || {
        let mut rng = session_rng(seed, req.alternative_index);
        generate(&req, model.as_ref(), &mut rng, &vocab)
    })
    .await
    .map_err(|e| ApiError::internal(format!("generation task failed: {e}")))?;
    match result {
        Ok(s) => Ok(Ok(s)),
        Err(EngineError::GenerationStalled(reason)) => Ok(Err(reason)),
        Err(e) => Err(engine_error(e)),
    }
}

fn engine_error(e: EngineError) -> ApiError {
    match e {
        EngineError::SpanOutOfRange { .. } | EngineError::InvalidPolicy(_) => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_request",
            e.to_string(),
        ),
        EngineError::ModelUnavailable(_) => ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            e.to_string(),
        ),
        EngineError::Conflict { .. } => ApiError::conflict(e.to_string()),
        EngineError::Sheet(e) => e.into(),
        EngineError::GenerationStalled(_) | EngineError::Token(_) => {
            ApiError::internal(e.to_string())
        }
    }
}

/// Store a generated suggestion and, for opted-in callers, append its
/// pending record. `prior` is marked ignored first if still pending.
async fn serve_suggestion(
    state: &AppState,
    who: Caller,
    stored: &StoredSheet,
    req: GenerationRequest,
    seed: u64,
    generated: Result<Suggestion, String>,
    prior: Option<&SuggestionEntry>,
) -> ApiResult<SuggestionView> {
    let inner = &state.inner;
    let mut ledger = inner.ledger.lock().await;
    if let Some(prior) = prior {
        match outcome_of(&ledger, prior) {
            Outcome::Pending => {
                if prior.logged {
                    let entry =
                        transition(&prior.id, Outcome::Ignored, Cause::NextAlternative, state);
                    append(state, &mut ledger, entry).await?;
                }
                inner.suggestions.set_outcome(&prior.id, Outcome::Ignored)?;
            }
            Outcome::Ignored => {}
            done => {
                return Err(ApiError::conflict(format!(
                    "suggestion {} is already {done:?}",
                    prior.id
                )))
            }
        }
    }
    let id = new_suggestion_id(state, &ledger);
    let served_ms = inner.clock.now_ms();
    let (suggestion, message) = match generated {
        Ok(s) => (Some(s), None),
        Err(reason) => (None, Some(format!("no suggestion, try again ({reason})"))),
    };
    let model_version = match &suggestion {
        Some(s) => s.model_version.clone(),
        None => state.model_version().unwrap_or_default(),
    };
    let entry = SuggestionEntry {
        id: id.clone(),
        sheet_id: stored.id.clone(),
        sheet_version: stored.version,
        user_id: who.user_id.clone(),
        session_seed: seed,
        request: GenerationRequest {
            sheet: stored.sheet.clone(),
            ..req
        },
        suggestion,
        message,
        served_ms,
        logged: who.opted_in,
        outcome: Outcome::Pending,
    };
    if who.opted_in {
        let record = SuggestionRecord {
            suggestion_id: id.clone(),
            user_id: who.user_id,
            timestamp_ms: served_ms,
            capability: entry.request.capability,
            span_beats: entry.request.span_beats,
            model_version,
            outcome: Outcome::Pending,
            sheet_id: stored.id.clone(),
            alternative_index: entry.request.alternative_index,
            empty: entry.suggestion.as_ref().is_none_or(Suggestion::is_empty),
        };
        append(state, &mut ledger, LogEntry::Served(record)).await?;
    }
    inner.suggestions.put(entry.clone())?;
    Ok(SuggestionView::from(&entry))
}

async fn suggest(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<SuggestBody>, JsonRejection>,
) -> ApiResult<Json<SuggestionView>> {
    let Json(body) = body?;
    sweep_timeouts(&state).await?;
    let stored = state
        .inner
        .sheets
        .get(&id)
        .ok_or_else(|| ApiError::not_found("sheet", &id))?;
    let req = GenerationRequest {
        sheet: stored.sheet.clone(),
        span_beats: body.span_beats,
        capability: body.capability,
        policy: body.policy.unwrap_or_default(),
        alternative_index: body.alternative_index.unwrap_or(0),
    };
    let seed = body.session_seed.unwrap_or_else(rand::random);
    let generated = run_generation(&state, req.clone(), seed).await?;
    let view = serve_suggestion(
        &state,
        caller(&headers),
        &stored,
        req,
        seed,
        generated,
        None,
    )
    .await?;
    Ok(Json(view))
}

async fn get_suggestion(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SuggestionView>> {
    sweep_timeouts(&state).await?;
    let entry = state
        .inner
        .suggestions
        .get(&id)
        .ok_or_else(|| ApiError::not_found("suggestion", &id))?;
    let outcome = outcome_of(&*state.inner.ledger.lock().await, &entry);
    let mut view = SuggestionView::from(&entry);
    view.outcome = outcome;
    Ok(Json(view))
}

/// The next alternative for the same span, against the sheet's current
/// version.
async fn next(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<SuggestionView>> {
    let body: NextBody = if body.iter().all(u8::is_ascii_whitespace) {
        NextBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_request",
                e.to_string(),
            )
        })?
    };
    sweep_timeouts(&state).await?;
    let prior = state
        .inner
        .suggestions
        .get(&id)
        .ok_or_else(|| ApiError::not_found("suggestion", &id))?;
    match outcome_of(&*state.inner.ledger.lock().await, &prior) {
        Outcome::Accepted | Outcome::Rejected => {
            return Err(ApiError::conflict(format!(
                "suggestion {id} already has a final outcome"
            )));
        }
        Outcome::Pending | Outcome::Ignored => {}
    }
    let stored = state
        .inner
        .sheets
        .get(&prior.sheet_id)
        .ok_or_else(|| ApiError::not_found("sheet", &prior.sheet_id))?;
    let req = GenerationRequest {
        sheet: stored.sheet.clone(),
        span_beats: prior.request.span_beats,
        capability: prior.request.capability,
        policy: body.policy.unwrap_or(prior.request.policy),
        alternative_index: prior.request.alternative_index + 1,
    };
    let generated = run_generation(&state, req.clone(), prior.session_seed).await?;
    let view = serve_suggestion(
        &state,
        caller(&headers),
        &stored,
        req,
        prior.session_seed,
        generated,
        Some(&prior),
    )
    .await?;
    Ok(Json(view))
}

async fn feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> ApiResult<Json<FeedbackView>> {
    let Json(body) = body?;
    sweep_timeouts(&state).await?;
    let inner = &state.inner;
    let mut ledger = inner.ledger.lock().await;
    let entry = inner
        .suggestions
        .get(&id)
        .ok_or_else(|| ApiError::not_found("suggestion", &id))?;
    let current = outcome_of(&ledger, &entry);
    if current.is_terminal() {
        return Err(ApiError::conflict(format!(
            "suggestion {id} is already {current:?}"
        )));
    }
    let (outcome, sheet) = match body.outcome {
        FeedbackOutcome::Rejected => (Outcome::Rejected, None),
        FeedbackOutcome::Accepted => {
            let suggestion = entry
                .suggestion
                .as_ref()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| {
                    ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "empty_suggestion",
                        "an empty suggestion cannot be accepted",
                    )
                })?;
            let stored = inner
                .sheets
                .get(&entry.sheet_id)
                .ok_or_else(|| ApiError::not_found("sheet", &entry.sheet_id))?;
            let merged = accept(&stored.sheet, suggestion).map_err(engine_error)?;
            let updated = inner.sheets.update(&stored.id, stored.version, merged)?;
            (Outcome::Accepted, Some(SheetView::from(updated)))
        }
    };
    if entry.logged {
        append(
            &state,
            &mut ledger,
            transition(&id, outcome, Cause::Feedback, &state),
        )
        .await?;
    }
    inner.suggestions.set_outcome(&id, outcome)?;
    Ok(Json(FeedbackView {
        suggestion_id: id,
        outcome,
        sheet,
    }))
}

async fn stats(State(state): State<AppState>) -> ApiResult<Json<FlywheelStats>> {
    sweep_timeouts(&state).await?;
    Ok(Json(state.stats().await))
}
