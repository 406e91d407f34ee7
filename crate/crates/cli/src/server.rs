//! Preference server: HTTP+JSON transport between a browser and the human
//! oracle of a running training job.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use dicgan_core::corrections::{CorrectionRow, Method, Phase, ReplacementBuffer, TrainingObserver};
use dicgan_core::experiment::{run_experiment_with, ExperimentConfig, ExperimentReport, OracleKindSpec};
use dicgan_core::preferences::{HumanBridge, HumanVerdict, PreferencePair, SubmitError};
use dicgan_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub phase: String,
    /// Corrections completed so far.
    pub correction_index: usize,
    /// PDD after the last completed correction; `null` before the first.
    pub pdd: Option<f64>,
    pub buffer_size: usize,
    pub queries_used: u64,
    pub query_budget: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SamplesSnapshot {
    generated: Vec<Vec<f64>>,
    training: Vec<Vec<f64>>,
    training_labels: Vec<Option<bool>>,
}

fn rows(a: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// State shared by the HTTP handlers and the training thread. Snapshots are
/// replaced whole, never mutated in place.
#[derive(Debug)]
pub struct ServerState {
    pub bridge: HumanBridge,
    status: RwLock<Arc<StatusSnapshot>>,
    samples: RwLock<Arc<SamplesSnapshot>>,
    /// Pair ids consumed by each correction, in order.
    consumed: Mutex<Vec<(usize, Vec<String>)>>,
    stop: AtomicBool,
}

impl ServerState {
    pub fn new(bridge: HumanBridge, training: ArrayView2<'_, f64>, labels: &[bool], query_budget: Option<u64>) -> Arc<Self> {
        Arc::new(Self {
            bridge,
            status: RwLock::new(Arc::new(StatusSnapshot {
                phase: Phase::Pretraining.name().into(),
                correction_index: 0,
                pdd: None,
                buffer_size: training.nrows(),
                queries_used: 0,
                query_budget,
            })),
            samples: RwLock::new(Arc::new(SamplesSnapshot {
                generated: Vec::new(),
                training: rows(training),
                training_labels: labels.iter().map(|&l| Some(l)).collect(),
            })),
            consumed: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        })
    }

    pub fn status(&self) -> StatusSnapshot {
        (**self.status.read().expect("status lock")).clone()
    }

    fn update_status(&self, f: impl FnOnce(&mut StatusSnapshot)) {
        let mut guard = self.status.write().expect("status lock");
        let mut next = (**guard).clone();
        f(&mut next);
        *guard = Arc::new(next);
    }

    /// Human pair ids that entered each correction's preference set.
    pub fn consumed_pairs(&self) -> Vec<(usize, Vec<String>)> {
        self.consumed.lock().expect("pair log lock").clone()
    }

    /// Asks training to stop after the current correction and releases any
    /// wait for verdicts.
    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.bridge.close();
    }
}

/// Feeds training progress into [`ServerState`].
pub struct ServerObserver {
    state: Arc<ServerState>,
}

impl ServerObserver {
    pub fn new(state: Arc<ServerState>) -> Self {
        Self { state }
    }
}

impl TrainingObserver for ServerObserver {
    fn on_phase(&mut self, phase: Phase) {
        self.state.update_status(|s| s.phase = phase.name().into());
    }

    fn on_correction(&mut self, row: &CorrectionRow, buffer: &ReplacementBuffer, generated: ArrayView2<'_, f64>) {
        let snapshot = SamplesSnapshot {
            generated: rows(generated),
            training: rows(buffer.samples()),
            training_labels: buffer.labels().to_vec(),
        };
        *self.state.samples.write().expect("samples lock") = Arc::new(snapshot);
        self.state.update_status(|s| {
            s.correction_index = row.index + 1;
            s.pdd = Some(row.pdd);
            s.buffer_size = buffer.len();
            s.queries_used = row.queries_used;
        });
    }

    fn on_pairs(&mut self, correction: usize, pairs: &[PreferencePair]) {
        let ids = pairs.iter().filter_map(|p| p.pair_id.clone()).collect();
        self.state.consumed.lock().expect("pair log lock").push((correction, ids));
    }

    fn should_stop(&mut self) -> bool {
        self.state.stop.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: &'static str,
    message: String,
}

fn api_error(status: StatusCode, error: &'static str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ApiError {
            error,
            message: message.into(),
        }),
    )
        .into_response()
}

#[derive(Debug, Deserialize)]
pub struct PreferenceRequest {
    pub pair_id: String,
    pub verdict: HumanVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Generated,
    Training,
}

#[derive(Debug, Deserialize)]
pub struct SamplesQuery {
    pub kind: SampleKind,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SamplesResponse {
    points: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Option<bool>>>,
}

async fn get_status(State(state): State<Arc<ServerState>>) -> Json<StatusSnapshot> {
    Json(state.status())
}

async fn get_pair(State(state): State<Arc<ServerState>>) -> Response {
    match state.bridge.next_pending() {
        Some(c) => Json(c).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_preference(
    State(state): State<Arc<ServerState>>,
    body: std::result::Result<Json<PreferenceRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return api_error(StatusCode::BAD_REQUEST, "malformed_request", e.body_text()),
    };
    match state.bridge.submit(&req.pair_id, req.verdict) {
        Ok(ack) => Json(ack).into_response(),
        Err(e @ SubmitError::UnknownPair(_)) => api_error(StatusCode::NOT_FOUND, "unknown_pair", e.to_string()),
        Err(e @ SubmitError::Conflicting(_)) => api_error(StatusCode::CONFLICT, "conflicting_verdict", e.to_string()),
    }
}

async fn get_samples(
    State(state): State<Arc<ServerState>>,
    query: std::result::Result<Query<SamplesQuery>, QueryRejection>,
) -> Response {
    let Query(q) = match query {
        Ok(q) => q,
        Err(e) => return api_error(StatusCode::BAD_REQUEST, "malformed_request", e.body_text()),
    };
    let snap = state.samples.read().expect("samples lock").clone();
    let (points, labels) = match q.kind {
        SampleKind::Generated => (&snap.generated, None),
        SampleKind::Training => (&snap.training, Some(&snap.training_labels)),
    };
    let n = q.limit.unwrap_or(points.len()).min(points.len());
    Json(SamplesResponse {
        points: points[..n].to_vec(),
        labels: labels.map(|l| l[..n].to_vec()),
    })
    .into_response()
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/status", get(get_status))
        .route("/pair", get(get_pair))
        .route("/preference", post(post_preference))
        .route("/samples", get(get_samples))
        .with_state(state)
}

/// Checks that `cfg` can be served: a pair-based method with a human oracle.
pub fn check_servable(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    if !matches!(&cfg.oracle, Some(o) if o.kind == OracleKindSpec::Human) {
        return Err(Error::Config {
            field: "oracle.kind".into(),
            message: "serve needs a human oracle".into(),
        });
    }
    if !matches!(cfg.method, Method::Dicgan | Method::DicganNg0) {
        return Err(Error::Config {
            field: "method".into(),
            message: format!("serve runs dicgan, not {}", cfg.method),
        });
    }
    Ok(())
}

/// Shared state plus the training thread, which writes the report when it ends.
pub struct TrainingJob {
    pub state: Arc<ServerState>,
    pub handle: JoinHandle<Result<ExperimentReport>>,
}

pub fn start_training(cfg: ExperimentConfig) -> Result<TrainingJob> {
    check_servable(&cfg)?;
    let data = cfg.dataset.load(cfg.seed)?;
    let bridge = HumanBridge::new();
    let budget = cfg.oracle.as_ref().and_then(|o| o.budget);
    let state = ServerState::new(bridge.clone(), data.samples.view(), &data.labels, budget);
    let mut observer = ServerObserver::new(state.clone());
    let handle = std::thread::Builder::new()
        .name("training".into())
        .spawn(move || run_experiment_with(&cfg, Some(bridge), &mut observer))?;
    Ok(TrainingJob { state, handle })
}

/// Serves the protocol on `addr` until Ctrl-C, then stops training and
/// returns the checkpointed report.
pub async fn serve(cfg: ExperimentConfig, addr: SocketAddr) -> Result<ExperimentReport> {
    check_servable(&cfg)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("preference server listening on {}", listener.local_addr()?);
    let job = start_training(cfg)?;
    let state = job.state.clone();
    axum::serve(listener, router(job.state.clone()))
        .with_graceful_shutdown(async move {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down; finishing the current correction");
            state.request_stop();
        })
        .await?;
    job.handle
        .join()
        .map_err(|_| Error::TrainingAborted("training thread panicked".into()))?
}
