//! HTTP/JSON API.
//!
//! Every mutating subject endpoint validates the request, appends exactly
//! one user event (plus any system events it unlocks) and answers with the
//! subject's visible state. Requests that do not fit the subject's current
//! stage get 409 and leave the log untouched.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ethgame_core::engine::{AiStrategy, ExperimentConfig, SessionMode, Stage, TradeAction};
use ethgame_core::instruments::{loc_items, LikertResponse, LocResponse};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::event::EventKind;
use crate::export::export_tables;
use crate::journal::{token_digest, Journal, JournalError};
use crate::record::ApplyError;

pub struct AppState {
    journal: Mutex<Journal>,
    admin_token: String,
    config: ExperimentConfig,
}

impl AppState {
    /// `config` is what `POST /experiments` uses when the request has no body.
    pub fn new(
        journal: Journal,
        admin_token: impl Into<String>,
        config: ExperimentConfig,
    ) -> Arc<Self> {
        Arc::new(Self {
            journal: Mutex::new(journal),
            admin_token: admin_token.into(),
            config,
        })
    }

    pub fn journal(&self) -> MutexGuard<'_, Journal> {
        self.journal.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/experiments", post(create_experiment))
        .route("/subjects", post(register))
        .route("/subjects/{id}/state", get(subject_state))
        .route("/subjects/{id}/loc", get(loc_form).post(submit_loc))
        .route("/subjects/{id}/chart", get(chart))
        .route("/subjects/{id}/strategy", post(choose_strategy))
        .route("/subjects/{id}/decision", post(decide))
        .route("/subjects/{id}/selection", post(select_mode))
        .route("/subjects/{id}/results", get(results))
        .route("/subjects/{id}/survey", post(submit_survey))
        .route("/admin/export", get(export))
        .route("/admin/progress", get(progress))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn conflict(msg: impl Into<String>) -> Self {
        Self(StatusCode::CONFLICT, msg.into())
    }

    fn unprocessable(msg: impl Into<String>) -> Self {
        Self(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<JournalError> for ApiError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::StateConflict(ApplyError::UnknownSubject(id)) => {
                Self(StatusCode::NOT_FOUND, format!("unknown subject {id}"))
            }
            JournalError::StateConflict(_) => Self::conflict(e.to_string()),
            other => {
                tracing::error!("journal failure: {other}");
                Self(StatusCode::INTERNAL_SERVER_ERROR, other.to_string())
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(e.to_string()))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    match bearer(headers) {
        Some(t) if t == state.admin_token => Ok(()),
        _ => Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "admin token required".into(),
        )),
    }
}

/// 404 for an unknown subject, 401 for a missing or wrong token.
fn authorize(journal: &Journal, id: &str, headers: &HeaderMap) -> ApiResult<()> {
    let entry = journal
        .record()
        .subject(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown subject {id}")))?;
    match bearer(headers) {
        Some(token) if token_digest(token) == entry.token_sha256 => Ok(()),
        _ => Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "subject token required".into(),
        )),
    }
}

fn view(journal: &Journal, id: &str) -> ApiResult<Json<serde_json::Value>> {
    let cfg = journal
        .record()
        .config()
        .ok_or_else(|| ApiError::conflict("no experiment"))?;
    let entry = journal
        .record()
        .subject(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown subject {id}")))?;
    let v = entry.state.visible_state(&journal.prices().series, cfg);
    Ok(Json(serde_json::to_value(v).expect("views serialize")))
}

/// Appends one subject event, runs the system steps it unlocks and returns
/// the visible state.
fn act(
    state: &AppState,
    id: &str,
    headers: &HeaderMap,
    kind: impl FnOnce(&Journal) -> ApiResult<EventKind>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut journal = state.journal();
    authorize(&journal, id, headers)?;
    let kind = kind(&journal)?;
    journal.append(Some(id), kind)?;
    journal.advance(id)?;
    view(&journal, id)
}

async fn create_experiment(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let config: ExperimentConfig = if body.iter().all(u8::is_ascii_whitespace) {
        state.config.clone()
    } else {
        parse_body(&body)?
    };
    config
        .validate()
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let mut journal = state.journal();
    let needed = config.required_series_len();
    let have = journal.prices().series.len();
    if have < needed {
        return Err(ApiError::unprocessable(format!(
            "price series has {have} days, config needs at least {needed}"
        )));
    }
    let price_source = journal.prices().source.clone();
    journal.append(
        None,
        EventKind::ExperimentCreated {
            config: config.clone(),
            price_source: price_source.clone(),
        },
    )?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "config": config, "price_source": price_source })),
    ))
}

#[derive(Deserialize)]
struct RegisterBody {
    name: String,
}

#[derive(Serialize)]
struct Registered {
    subject_id: String,
    token: String,
    treatment: ethgame_core::engine::Treatment,
}

async fn register(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let body: RegisterBody = parse_body(&body)?;
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    let token = hex::encode(bytes);
    let (subject_id, treatment) = state.journal().register(&body.name, &token)?;
    Ok((
        StatusCode::CREATED,
        Json(Registered {
            subject_id,
            token,
            treatment,
        }),
    ))
}

async fn subject_state(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    let journal = state.journal();
    authorize(&journal, &id, &headers)?;
    view(&journal, &id)
}

async fn loc_form(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    let journal = state.journal();
    authorize(&journal, &id, &headers)?;
    let key = &journal
        .record()
        .config()
        .expect("subject implies experiment")
        .loc_key;
    let items: Vec<_> = loc_items(key)
        .into_iter()
        .map(|i| json!({ "id": i.id, "text": i.text }))
        .collect();
    Ok(Json(json!({ "items": items })))
}

#[derive(Deserialize)]
struct LocBody {
    answers: Vec<bool>,
}

async fn submit_loc(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    act(&state, &id, &headers, |journal| {
        let body: LocBody = parse_body(&body)?;
        let answers = LocResponse::try_from(body.answers)
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let cfg = journal
            .record()
            .config()
            .expect("subject implies experiment");
        Ok(EventKind::LocSubmitted {
            score: ethgame_core::instruments::score_loc(&answers, &cfg.loc_key),
            answers,
        })
    })
}

async fn chart(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    let journal = state.journal();
    authorize(&journal, &id, &headers)?;
    let cfg = journal
        .record()
        .config()
        .expect("subject implies experiment");
    let entry = journal.record().subject(&id).expect("authorized");
    let v = entry.state.visible_state(&journal.prices().series, cfg);
    let chart = v
        .current
        .and_then(|c| c.chart)
        .ok_or_else(|| ApiError::conflict("no chart in the current stage"))?;
    Ok(Json(serde_json::to_value(chart).expect("charts serialize")))
}

#[derive(Deserialize)]
struct StrategyBody {
    period: usize,
    strategy: AiStrategy,
}

async fn choose_strategy(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    act(&state, &id, &headers, |_| {
        let body: StrategyBody = parse_body(&body)?;
        Ok(EventKind::StrategyChosen {
            period: body.period,
            strategy: body.strategy,
        })
    })
}

#[derive(Deserialize)]
struct DecisionBody {
    action: TradeAction,
}

async fn decide(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    act(&state, &id, &headers, |journal| {
        let body: DecisionBody = parse_body(&body)?;
        let subject = &journal.record().subject(&id).expect("authorized").state;
        // The turn is whatever the active session expects; the engine
        // rejects the event if the session is not a discretion session.
        let (period, day) = subject
            .active_session()
            .filter(|s| !s.is_complete())
            .map(|s| (s.current_period, s.current_day))
            .ok_or_else(|| {
                ApiError::conflict(format!("no decision expected in stage {:?}", subject.stage))
            })?;
        Ok(EventKind::DecisionSubmitted {
            period,
            day,
            action: body.action,
        })
    })
}

#[derive(Deserialize)]
struct SelectionBody {
    mode: SessionMode,
}

async fn select_mode(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    act(&state, &id, &headers, |_| {
        let body: SelectionBody = parse_body(&body)?;
        Ok(EventKind::ModeSelected { mode: body.mode })
    })
}

async fn results(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    let journal = state.journal();
    authorize(&journal, &id, &headers)?;
    let cfg = journal
        .record()
        .config()
        .expect("subject implies experiment");
    let entry = journal.record().subject(&id).expect("authorized");
    let v = entry.state.visible_state(&journal.prices().series, cfg);
    if v.results.is_empty() {
        return Err(ApiError::conflict("no session has been settled yet"));
    }
    Ok(Json(json!({ "results": v.results })))
}

#[derive(Deserialize)]
struct SurveyBody {
    answers: Vec<u8>,
}

async fn submit_survey(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    act(&state, &id, &headers, |_| {
        let body: SurveyBody = parse_body(&body)?;
        let answers = LikertResponse::try_from(body.answers)
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        Ok(EventKind::SurveySubmitted { answers })
    })
}

async fn export(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    require_admin(&state, &headers)?;
    let journal = state.journal();
    let tables = export_tables(journal.record());
    let map: serde_json::Map<String, serde_json::Value> = tables
        .named()
        .into_iter()
        .map(|(name, body)| (name.to_owned(), body.into()))
        .collect();
    Ok(Json(map.into()))
}

#[derive(Serialize)]
struct Progress {
    subject_id: String,
    name: String,
    stage: Stage,
    treatment: Option<ethgame_core::engine::Treatment>,
    settled_sessions: usize,
}

async fn progress(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
) -> ApiResult<Json<Vec<Progress>>> {
    require_admin(&state, &headers)?;
    let journal = state.journal();
    Ok(Json(
        journal
            .record()
            .subjects()
            .iter()
            .map(|s| Progress {
                subject_id: s.state.subject_id.clone(),
                name: s.name.clone(),
                stage: s.state.stage,
                treatment: s.state.treatment,
                settled_sessions: s.state.sessions.iter().filter(|x| x.is_settled()).count(),
            })
            .collect(),
    ))
}
