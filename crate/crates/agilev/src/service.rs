//! HTTP read/decide surface under `/v1/`.
//!
//! Every request re-reads the store from disk, so the service never holds
//! state the CLI could not see. Gate decisions go through the same
//! [`Store::execute`] path as `agilev gate approve|reject` and take the
//! single-writer lock for the duration of the write.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use agilev_core::compliance::{iso_report, StoreView};
use agilev_core::cost::{reference_scenarios, render_sensitivity_table, scenario_cost, Scenario, ScenarioCost};
use agilev_core::traceability::{CoverageMetrics, Requirement, TraceLink};
use agilev_core::verification::{Finding, FindingStatus, Severity};
use agilev_core::workflow::{CycleState, Transition, TRANSITIONS};
use agilev_core::{Actor, ChangeLogEntry, Command, CycleId, Decision, Envelope, Error as CoreError, GateId, Phase, Project, Timestamp};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{canonical, clock, content_digest, data, Store, StoreError};

pub type Clock = Arc<dyn Fn() -> crate::Result<Timestamp> + Send + Sync>;

#[derive(Clone)]
pub struct ServiceConfig {
    /// Repository root; the store lives in `<root>/.agile-v`.
    pub root: PathBuf,
    /// Static bearer token expected in `Authorization`.
    pub token: String,
    /// Identity recorded for decisions made with `token`.
    pub principal: Actor,
    pub clock: Clock,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>, token: impl Into<String>, principal: Actor) -> Self {
        ServiceConfig { root: root.into(), token: token.into(), principal, clock: Arc::new(clock::now) }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid store: {0}")]
    InvalidStore(#[source] StoreError),
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("empty auth token; set AGILEV_TOKEN")]
    MissingToken,
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

struct AppState {
    config: ServiceConfig,
    // readers see either the state before a write or after it, never between
    rw: RwLock<()>,
}

type Shared = Arc<AppState>;

/// Builds the router after checking that the store opens cleanly.
pub fn router(config: ServiceConfig) -> Result<Router, ServeError> {
    if config.token.is_empty() {
        return Err(ServeError::MissingToken);
    }
    Store::open(&config.root).map_err(ServeError::InvalidStore)?;
    let state = Arc::new(AppState { config, rw: RwLock::new(()) });
    Ok(Router::new()
        .route("/v1/cycles", get(list_cycles))
        .route("/v1/cycles/{id}", get(get_cycle))
        .route("/v1/gates/pending", get(pending_gates))
        .route("/v1/gates/{id}/decision", post(decide))
        .route("/v1/traceability", get(traceability))
        .route("/v1/findings", get(findings))
        .route("/v1/reports/iso", get(iso))
        .route("/v1/cost/sensitivity", get(sensitivity))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint") })
        .with_state(state))
}

pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServeError> {
    let app = router(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::BindFailure { addr, source })?;
    axum::serve(listener, app).with_graceful_shutdown(shutdown()).await?;
    Ok(())
}

async fn shutdown() {
    let _ = tokio::signal::ctrl_c().await;
}

// ---------------------------------------------------------------------------
// errors

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { error: code.into(), message: message.into() } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn core_status(e: &CoreError) -> StatusCode {
    use CoreError::*;
    match e {
        NonHumanApprover(_) => StatusCode::FORBIDDEN,
        UnknownCycle(_) | UnknownFinding(_) | UnknownRequirement(_) | UnknownSession(_) | UnknownRisk(_) => {
            StatusCode::NOT_FOUND
        }
        MissingRationale | MissingActor | InvalidId { .. } | Parse(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::CONFLICT,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Core(c) => core_status(c),
            StoreError::Locked(_) | StoreError::CycleOpen(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        StoreError::Core(e).into()
    }
}

// ---------------------------------------------------------------------------
// auth

/// Passes when the request carries `Authorization: Bearer <token>`.
struct Authenticated;

impl FromRequestParts<Shared> for Authenticated {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, ApiError> {
        let presented = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        match presented {
            Some(t) if constant_time_eq(t.as_bytes(), state.config.token.as_bytes()) => Ok(Authenticated),
            _ => Err(ApiError::new(StatusCode::UNAUTHORIZED, "Unauthenticated", "missing or invalid bearer token")),
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

// ---------------------------------------------------------------------------
// reads

/// Store state at one instant plus its content digest.
struct Snapshot {
    digest: String,
    store: Store,
}

async fn snapshot(state: Shared) -> Result<Snapshot, ApiError> {
    tokio::task::spawn_blocking(move || {
        let _guard = state.rw.read().unwrap_or_else(|e| e.into_inner());
        let store = Store::open(&state.config.root)?;
        let digest = content_digest(store.dir())?;
        Ok(Snapshot { digest, store })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

/// JSON response with the digest echoed as an ETag.
fn reply<T: Serialize>(digest: &str, body: &T) -> Response {
    let mut res = Json(canonical::to_value(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("\"{digest}\"")) {
        res.headers_mut().insert(header::ETAG, v);
    }
    res
}

#[derive(Debug, Default, Deserialize)]
struct CycleQuery {
    cycle: Option<String>,
}

fn parse_cycle(s: &str) -> Result<CycleId, ApiError> {
    s.parse().map_err(|e: CoreError| ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()))
}

/// `?cycle=` when given, else the latest cycle.
fn selected_cycle(p: &Project, q: &CycleQuery) -> Result<CycleId, ApiError> {
    match &q.cycle {
        Some(c) => {
            let id = parse_cycle(c)?;
            p.cycle(id)?;
            Ok(id)
        }
        None => p
            .latest_cycle()
            .map(|c| c.cycle_id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NoCycles", "no cycle has been started")),
    }
}

#[derive(Serialize)]
pub struct CyclesBody<'a> {
    pub digest: &'a str,
    pub cycles: &'a [CycleState],
}

async fn list_cycles(State(state): State<Shared>, _: Authenticated) -> Result<Response, ApiError> {
    let s = snapshot(state).await?;
    Ok(reply(&s.digest, &CyclesBody { digest: &s.digest, cycles: &s.store.project().cycles }))
}

#[derive(Serialize)]
pub struct CycleBody<'a> {
    pub digest: &'a str,
    pub cycle: &'a CycleState,
    pub open_major_findings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageMetrics>,
    /// The whole phase relation, for drawing the loop.
    pub transitions: &'a [Transition],
}

async fn get_cycle(State(state): State<Shared>, _: Authenticated, Path(id): Path<String>) -> Result<Response, ApiError> {
    let id = parse_cycle(&id)?;
    let s = snapshot(state).await?;
    let p = s.store.project();
    let cycle = p.cycle(id)?;
    let body = CycleBody {
        digest: &s.digest,
        cycle,
        open_major_findings: p.open_major_count(id),
        coverage: p.coverage(id).ok(),
        transitions: &TRANSITIONS,
    };
    Ok(reply(&s.digest, &body))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsSummary {
    pub open_major: Vec<agilev_core::FindingId>,
    pub open_minor: Vec<agilev_core::FindingId>,
    pub resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachments {
    /// SHA-256 of the canonical requirement snapshot the gate reviews.
    pub requirement_set_digest: String,
    pub open_findings: FindingsSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<CoverageMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateView {
    pub gate_id: GateId,
    pub cycle_id: CycleId,
    pub phase: Phase,
    pub pending_since: Timestamp,
    pub attachments: Attachments,
    /// Store digest the view was computed from.
    pub digest: String,
}

pub fn gate_views(p: &Project, digest: &str) -> Vec<GateView> {
    p.cycles
        .iter()
        .filter(|c| !c.is_closed())
        .filter_map(|c| c.pending_gate().map(|g| (c, g)))
        .map(|(c, g)| {
            let snapshot = p.matrix.snapshot(c.cycle_id);
            let requirement_set_digest = hex::encode(Sha256::digest(canonical::to_string(&snapshot).as_bytes()));
            let ids = |sev: Severity, status: FindingStatus| {
                p.findings
                    .iter()
                    .filter(|f| f.cycle_id == c.cycle_id && f.severity == sev && f.status == status)
                    .map(|f| f.id)
                    .collect::<Vec<_>>()
            };
            let resolved = p.findings.iter().filter(|f| f.cycle_id == c.cycle_id && f.status == FindingStatus::Resolved).count();
            GateView {
                gate_id: g.gate,
                cycle_id: c.cycle_id,
                phase: c.phase,
                pending_since: g.pending_since,
                attachments: Attachments {
                    requirement_set_digest,
                    open_findings: FindingsSummary {
                        open_major: ids(Severity::Major, FindingStatus::Open),
                        open_minor: ids(Severity::Minor, FindingStatus::Open),
                        resolved,
                    },
                    coverage: p.coverage(c.cycle_id).ok(),
                },
                digest: digest.to_string(),
            }
        })
        .collect()
}

#[derive(Serialize)]
pub struct PendingBody<'a> {
    pub digest: &'a str,
    pub gates: Vec<GateView>,
}

async fn pending_gates(State(state): State<Shared>, _: Authenticated) -> Result<Response, ApiError> {
    let s = snapshot(state).await?;
    let gates = gate_views(s.store.project(), &s.digest);
    Ok(reply(&s.digest, &PendingBody { digest: &s.digest, gates }))
}

#[derive(Serialize)]
pub struct TraceabilityBody<'a> {
    pub digest: &'a str,
    pub cycle: CycleId,
    pub requirements: Vec<&'a Requirement>,
    pub links: Vec<TraceLink>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageMetrics>,
}

async fn traceability(
    State(state): State<Shared>,
    _: Authenticated,
    Query(q): Query<CycleQuery>,
) -> Result<Response, ApiError> {
    let s = snapshot(state).await?;
    let p = s.store.project();
    let cycle = selected_cycle(p, &q)?;
    let requirements = p.matrix.snapshot(cycle).map(|m| m.values().collect()).unwrap_or_default();
    let body = TraceabilityBody {
        digest: &s.digest,
        cycle,
        requirements,
        links: p.matrix.trace_links(Some(cycle)),
        coverage: p.coverage(cycle).ok(),
    };
    Ok(reply(&s.digest, &body))
}

#[derive(Serialize)]
pub struct FindingsBody<'a> {
    pub digest: &'a str,
    pub findings: Vec<&'a Finding>,
}

async fn findings(State(state): State<Shared>, _: Authenticated, Query(q): Query<CycleQuery>) -> Result<Response, ApiError> {
    let s = snapshot(state).await?;
    let p = s.store.project();
    let only = q.cycle.as_deref().map(parse_cycle).transpose()?;
    if let Some(c) = only {
        p.cycle(c)?;
    }
    let findings = p.findings.iter().filter(|f| only.is_none_or(|c| f.cycle_id == c)).collect();
    Ok(reply(&s.digest, &FindingsBody { digest: &s.digest, findings }))
}

async fn iso(State(state): State<Shared>, _: Authenticated, Query(q): Query<CycleQuery>) -> Result<Response, ApiError> {
    let s = snapshot(state).await?;
    let p = s.store.project();
    let cycle = selected_cycle(p, &q)?;
    let present = s.store.documents_present();
    let report = iso_report(StoreView { project: p, documents_present: &present }, &data::default_mappings(), cycle)?;
    Ok(reply(&s.digest, &serde_json::json!({ "digest": s.digest, "report": report, "caveat": agilev_core::compliance::CAVEAT })))
}

#[derive(Serialize)]
pub struct ScenarioRow {
    pub scenario: Scenario,
    pub cost: ScenarioCost,
}

async fn sensitivity(_: Authenticated) -> Result<Response, ApiError> {
    let scenarios = reference_scenarios();
    let rows: Vec<ScenarioRow> =
        scenarios.iter().map(|s| Ok(ScenarioRow { scenario: s.clone(), cost: scenario_cost(s)? })).collect::<Result<_, CoreError>>()?;
    let table = render_sensitivity_table(&scenarios)?;
    Ok(Json(serde_json::json!({ "scenarios": rows, "table": table })).into_response())
}

// ---------------------------------------------------------------------------
// decisions

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub decision: Decision,
    pub rationale: String,
    /// Digest the client reviewed; a mismatch means the store moved on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_digest: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct DecisionResponse {
    pub digest: String,
    pub entry: ChangeLogEntry,
    pub cycle: CycleState,
}

async fn decide(
    State(state): State<Shared>,
    _: Authenticated,
    Path(gate): Path<String>,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let gate: GateId = gate.parse().map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "UnknownGate", format!("no gate {gate:?}")))?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text()))?;
    let res = tokio::task::spawn_blocking(move || -> Result<DecisionResponse, ApiError> {
        let _guard = state.rw.write().unwrap_or_else(|e| e.into_inner());
        let root = &state.config.root;
        let mut store = Store::open_writer(root)?;
        if let Some(expected) = &req.expected_digest {
            let current = content_digest(store.dir())?;
            if *expected != current {
                return Err(ApiError::new(
                    StatusCode::PRECONDITION_FAILED,
                    "StaleDigest",
                    format!("store changed since review (now {current})"),
                ));
            }
        }
        let at = (state.config.clock)()?;
        let command = Command::GateDecision { gate, decision: req.decision, rationale: req.rationale };
        let entry = store.execute(Envelope::new(state.config.principal.clone(), at, command))?;
        let cycle_id = entry.cycle.ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", "decision without cycle"))?;
        let cycle = store.project().cycle(cycle_id)?.clone();
        drop(store);
        let digest = content_digest(&Store::state_dir(root))?;
        Ok(DecisionResponse { digest, entry, cycle })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(reply(&res.digest.clone(), &res))
}
