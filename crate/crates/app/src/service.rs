//! JSON-over-HTTP service: annotation sessions with leases, dataset stats,
//! and creative selection.
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/v1/sessions` | 201 [`SessionCreated`] |
//! | GET | `/v1/sessions/{id}` | 200 [`AnnotationSession`] |
//! | GET | `/v1/sessions/{id}/next` | 200 [`NextSample`], or 204 when nothing is left |
//! | POST | `/v1/sessions/{id}/claim` | 200 [`NextSample`] |
//! | POST | `/v1/sessions/{id}/answers` | 200 [`SubmitOutcome`] |
//! | GET | `/v1/datasets/{id}/stats` | 200 [`DatasetStats`] |
//! | POST | `/v1/select` | 200 [`SelectResponse`] |
//! | POST | `/v1/compare` | 200 [`ComparatorOutcome`] |
//! | GET | `/v1/protocol` | 200 [`ProtocolDocument`] |
//!
//! Errors are [`ErrorBody`] with 404 for unknown ids, 409 for lease
//! conflicts, 422 for invalid answers or selection parameters, and 503 when
//! a comparator is missing or its gateway fails.

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use creative_select::model::{CreativeImageRef, ProductContext};
use creative_select::protocol::{
    early_exit, protocol_document, validate_answers, AnswerValue, AnswerViolation, ProtocolAnswers,
    ProtocolDocument, PROTOCOL_VERSION,
};
use creative_select::tournament::{
    compare_pair, enumerate_pairs, run_tournament, top_k, Comparator, ComparatorOutcome, TournamentConfig,
    TournamentResult,
};

use crate::store::{AnnotationSession, Claim, Clock, DatasetStore, Event, SampleStatus, StoreError, SystemClock};

pub const DEFAULT_LEASE_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<AnswerViolation>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                violations: Vec::new(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownSample(_) | StoreError::UnknownSession(_) => StatusCode::NOT_FOUND,
            StoreError::LeaseConflict { .. }
            | StoreError::LeaseLost { .. }
            | StoreError::NotPending(_)
            | StoreError::Duplicate(_) => StatusCode::CONFLICT,
            StoreError::NotAnnotated(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Locked(_) => StatusCode::SERVICE_UNAVAILABLE,
            StoreError::CorruptLog { .. } | StoreError::Io(_) | StoreError::Json(_) => {
                tracing::error!(error = %e, "store failure");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "BAD_REQUEST", e.body_text())
    }
}

/// `Json` whose rejections use the service error body.
#[derive(Debug, FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    #[default]
    Toy,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    pub annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub dataset_id: String,
    pub annotator_id: String,
    pub lease_ms: u64,
}

/// A claimed pair as shown to an annotator. Exposure statistics and the
/// CTR label stay on the server so they cannot bias the answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextSample {
    pub session_id: String,
    pub pair_id: String,
    pub protocol_version: String,
    pub lease_expires_at_ms: u64,
    pub context: ProductContext,
    pub image_a: CreativeImageRef,
    pub image_b: CreativeImageRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub pair_id: String,
}

/// Protocol answers for one claimed pair. `annotator_id` defaults to the
/// session's annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAnswers {
    pub pair_id: String,
    pub answers: BTreeMap<u8, AnswerValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<BTreeMap<u8, u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub session_id: String,
    pub pair_id: String,
    pub status: SampleStatus,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset_id: String,
    pub collected: usize,
    pub filtered: usize,
    pub annotated: usize,
    pub excluded: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRequest {
    pub candidates: Vec<CreativeImageRef>,
    #[serde(default)]
    pub context: ProductContext,
    pub k: usize,
    #[serde(default)]
    pub comparator: ComparatorKind,
    #[serde(default)]
    pub both_orders: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    pub top_k: Vec<CreativeImageRef>,
    pub result: TournamentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub a: CreativeImageRef,
    pub b: CreativeImageRef,
    #[serde(default)]
    pub context: ProductContext,
    #[serde(default)]
    pub comparator: ComparatorKind,
}

/// Shared state behind the router. Each dataset store sits behind its own
/// mutex, which makes every claim a compare-and-set on that dataset.
pub struct ServiceState {
    datasets: BTreeMap<String, Mutex<DatasetStore>>,
    default_dataset: String,
    lease_ms: u64,
    snapshot_every: u64,
    clock: Arc<dyn Clock>,
    toy: Option<Arc<dyn Comparator>>,
    remote: Option<Arc<dyn Comparator>>,
    tournament: TournamentConfig,
    bearer_token: Option<String>,
}

impl ServiceState {
    /// The first store is the default dataset for new sessions.
    pub fn new(stores: Vec<DatasetStore>) -> Self {
        let default_dataset = stores.first().map(|s| s.dataset_id().to_string()).unwrap_or_default();
        Self {
            datasets: stores
                .into_iter()
                .map(|s| (s.dataset_id().to_string(), Mutex::new(s)))
                .collect(),
            default_dataset,
            lease_ms: DEFAULT_LEASE_MS,
            snapshot_every: 100,
            clock: Arc::new(SystemClock),
            toy: None,
            remote: None,
            tournament: TournamentConfig::default(),
            bearer_token: None,
        }
    }

    pub fn with_lease_ms(mut self, ms: u64) -> Self {
        self.lease_ms = ms;
        self
    }

    pub fn with_snapshot_every(mut self, events: u64) -> Self {
        self.snapshot_every = events.max(1);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_toy(mut self, comparator: Arc<dyn Comparator>) -> Self {
        self.toy = Some(comparator);
        self
    }

    pub fn with_remote(mut self, comparator: Arc<dyn Comparator>) -> Self {
        self.remote = Some(comparator);
        self
    }

    pub fn with_tournament(mut self, cfg: TournamentConfig) -> Self {
        self.tournament = cfg;
        self
    }

    pub fn with_bearer_token(mut self, token: Option<String>) -> Self {
        self.bearer_token = token;
        self
    }

    /// Materializes every dataset snapshot, e.g. at shutdown.
    pub fn write_snapshots(&self) -> Result<(), StoreError> {
        for store in self.datasets.values() {
            store.lock().expect("store lock").write_snapshot()?;
        }
        Ok(())
    }

    fn dataset(&self, id: &str) -> ApiResult<&Mutex<DatasetStore>> {
        self.datasets
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_DATASET", format!("no dataset {id}")))
    }

    /// Runs `f` on the store that owns `session_id`.
    fn with_session<T>(
        &self,
        session_id: &str,
        f: impl FnOnce(&mut DatasetStore) -> ApiResult<T>,
    ) -> ApiResult<T> {
        for store in self.datasets.values() {
            let mut guard = store.lock().expect("store lock");
            if guard.state().sessions.contains_key(session_id) {
                let out = f(&mut guard)?;
                self.maybe_snapshot(&guard);
                return Ok(out);
            }
        }
        Err(StoreError::UnknownSession(session_id.to_string()).into())
    }

    fn maybe_snapshot(&self, store: &DatasetStore) {
        if store.state().last_seq.is_multiple_of(self.snapshot_every) {
            if let Err(e) = store.write_snapshot() {
                tracing::error!(error = %e, "snapshot write failed");
            }
        }
    }

    fn comparator(&self, kind: ComparatorKind) -> ApiResult<Arc<dyn Comparator>> {
        let c = match kind {
            ComparatorKind::Toy => &self.toy,
            ComparatorKind::Remote => &self.remote,
        };
        c.clone().ok_or_else(|| {
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "COMPARATOR_UNAVAILABLE",
                format!("no {kind:?} comparator is configured"),
            )
        })
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/next", get(next_sample))
        .route("/v1/sessions/{id}/claim", post(claim_sample))
        .route("/v1/sessions/{id}/answers", post(submit_answers))
        .route("/v1/datasets/{id}/stats", get(dataset_stats))
        .route("/v1/select", post(select))
        .route("/v1/compare", post(compare))
        .route("/v1/protocol", get(protocol))
        .layer(middleware::from_fn_with_state(state.clone(), require_bearer))
        .with_state(state)
}

async fn require_bearer(State(state): State<Arc<ServiceState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.bearer_token {
        let sent = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if sent != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "AUTH", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

async fn create_session(
    State(state): State<Arc<ServiceState>>,
    ApiJson(req): ApiJson<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let dataset_id = req.dataset_id.unwrap_or_else(|| state.default_dataset.clone());
    let store = state.dataset(&dataset_id)?;
    let mut store = store.lock().expect("store lock");
    let session_id = store.create_session(&req.annotator_id, state.clock.now_ms())?;
    state.maybe_snapshot(&store);
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id,
            dataset_id,
            annotator_id: req.annotator_id,
            lease_ms: state.lease_ms,
        }),
    ))
}

async fn get_session(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Json<AnnotationSession>> {
    let now = state.clock.now_ms();
    state.with_session(&id, |store| {
        Ok(Json(store.state().session(&id, now).expect("session exists")))
    })
}

fn next_view(store: &DatasetStore, session_id: &str, claim: Claim) -> NextSample {
    let sample = &store.state().samples[&claim.pair_id].sample;
    NextSample {
        session_id: session_id.to_string(),
        pair_id: claim.pair_id,
        protocol_version: PROTOCOL_VERSION.to_string(),
        lease_expires_at_ms: claim.expires_at_ms,
        context: sample.context.clone(),
        image_a: sample.image_a.clone(),
        image_b: sample.image_b.clone(),
    }
}

async fn next_sample(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let now = state.clock.now_ms();
    state.with_session(&id, |store| {
        Ok(match store.claim_next(&id, state.lease_ms, now)? {
            Some(claim) => Json(next_view(store, &id, claim)).into_response(),
            None => StatusCode::NO_CONTENT.into_response(),
        })
    })
}

async fn claim_sample(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ClaimRequest>,
) -> ApiResult<Json<NextSample>> {
    let now = state.clock.now_ms();
    state.with_session(&id, |store| {
        let claim = store.claim(&id, &req.pair_id, state.lease_ms, now)?;
        Ok(Json(next_view(store, &id, claim)))
    })
}

async fn submit_answers(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SubmitAnswers>,
) -> ApiResult<Json<SubmitOutcome>> {
    let now = state.clock.now_ms();
    state.with_session(&id, |store| {
        let annotator_id = match req.annotator_id {
            Some(a) => a,
            None => store.state().sessions[&id].annotator_id.clone(),
        };
        let answers = ProtocolAnswers {
            answers: req.answers,
            annotator_id,
            elapsed_ms: req.elapsed_ms,
        };
        let violations = validate_answers(&answers);
        if !violations.is_empty() {
            let mut err = ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                violations[0].code(),
                violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            );
            err.body.violations = violations;
            return Err(err);
        }
        let excluded = early_exit(&answers).expect("validated answers include Q1 and Q2");
        let session_id = Some(id.clone());
        let pair_id = req.pair_id.clone();
        let (event, status) = if excluded {
            (Event::SampleExcluded { session_id, pair_id, answers }, SampleStatus::Excluded)
        } else {
            (Event::AnnotationSubmitted { session_id, pair_id, answers }, SampleStatus::Annotated)
        };
        let seq = store.append(event, now)?;
        Ok(Json(SubmitOutcome {
            session_id: id.clone(),
            pair_id: req.pair_id,
            status,
            seq,
        }))
    })
}

async fn dataset_stats(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Json<DatasetStats>> {
    let f = state.dataset(&id)?.lock().expect("store lock").state().funnel();
    Ok(Json(DatasetStats {
        dataset_id: id,
        collected: f.collected,
        filtered: f.filtered,
        annotated: f.annotated,
        excluded: f.excluded,
        train: f.train,
        test: f.test,
    }))
}

fn unprocessable(e: impl ToString) -> ApiError {
    let msg = e.to_string();
    let code = msg.split(':').next().unwrap_or("INVALID").to_string();
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &code, msg)
}

async fn select(
    State(state): State<Arc<ServiceState>>,
    ApiJson(req): ApiJson<SelectRequest>,
) -> ApiResult<Json<SelectResponse>> {
    let n = req.candidates.len();
    enumerate_pairs(n).map_err(unprocessable)?;
    if req.k == 0 || req.k > n {
        return Err(unprocessable(format!("K_RANGE: k = {} outside 1..={n}", req.k)));
    }
    let comparator = state.comparator(req.comparator)?;
    let cfg = TournamentConfig {
        both_orders: req.both_orders,
        ..state.tournament.clone()
    };
    let result = tokio::task::spawn_blocking(move || {
        run_tournament(&req.candidates, &req.context, comparator.as_ref(), &cfg)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
    .map_err(unprocessable)?;
    if result.partial {
        let msg = result.error.clone().unwrap_or_default();
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "COMPARATOR_UNAVAILABLE", msg));
    }
    let top = top_k(&result, req.k).map_err(unprocessable)?;
    Ok(Json(SelectResponse { top_k: top, result }))
}

async fn compare(
    State(state): State<Arc<ServiceState>>,
    ApiJson(req): ApiJson<CompareRequest>,
) -> ApiResult<Json<ComparatorOutcome>> {
    let comparator = state.comparator(req.comparator)?;
    let retries = state.tournament.retries;
    // Scoped worker thread, so blocking gateway clients never run on the
    // async runtime.
    let outcome = tokio::task::spawn_blocking(move || {
        std::thread::scope(|s| {
            s.spawn(|| compare_pair(comparator.as_ref(), &req.a, &req.b, &req.context, retries))
                .join()
                .expect("comparator thread")
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "COMPARATOR_UNAVAILABLE", e.to_string()))?;
    Ok(Json(outcome))
}

async fn protocol() -> Json<ProtocolDocument> {
    Json(protocol_document())
}
