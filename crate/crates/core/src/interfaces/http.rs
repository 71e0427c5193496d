//! JSON service over the shared operations.
//!
//! | method | path                     | body / query                                  |
//! |--------|--------------------------|-----------------------------------------------|
//! | GET    | /health                  |                                               |
//! | GET    | /datasets                |                                               |
//! | POST   | /datasets                | `{path}` or `{csv}`, optional `delimiter`     |
//! | GET    | /datasets/{digest}       |                                               |
//! | GET    | /models                  |                                               |
//! | POST   | /models                  | `{dataset, kind, criterion, .., wait, request_token}` |
//! | GET    | /models/jobs/{job}       |                                               |
//! | GET    | /models/{id}             | model file                                    |
//! | POST   | /models/{id}/prune       | `{level, request_token}`                      |
//! | GET    | /rules                   | `?model=..&format=text\|json`                 |
//! | POST   | /predict                 | `{model, record}`                             |
//! | POST   | /advise                  | `{model, dataset, evidence, actionable, prospective}` |
//! | POST   | /whatif                  | `{model, record, overrides}`                  |
//! | POST   | /paths                   | `{model, record}` or `{model, evidence}`      |
//! | POST   | /metrics/evaluate        | `{model, dataset}`                            |
//! | POST   | /metrics/compare         | `{dataset, models, fraction, seed?}`, `?format=csv` |
//! | GET    | /kb                      | `?kind=..&tag=..`                             |
//! | POST   | /kb                      | `{kind, payload \| payload_base64, tags, request_token}` |
//! | GET    | /kb/{id}                 |                                               |
//! | PUT    | /kb/{id}                 | `{payload \| payload_base64, tags}`           |
//!
//! Errors are `{code, message, field}` documents. Responses that depend on a
//! model or dataset carry `x-model-digest` / `x-dataset-digest` headers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{DatasetSummary, Loaded, PanelOptions, Problem, RuleFormat, TrainSpec};
use crate::dataset::{self, Dataset, Dialect, Schema};
use crate::kb::{ArtifactKind, ArtifactMeta, Store};
use crate::metrics::ModelKind;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub bind: String,
    pub store: PathBuf,
    /// Dataset used when a request names none.
    pub dataset: Option<PathBuf>,
    pub dialect: Dialect,
    /// Holdout seed for comparisons that name none.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Problem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_token: Option<String>,
}

pub struct AppState {
    config: ServiceConfig,
    store: RwLock<Store>,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    by_path: RwLock<BTreeMap<PathBuf, String>>,
    jobs: Mutex<BTreeMap<String, Job>>,
    /// Training jobs run one at a time.
    train_gate: tokio::sync::Mutex<()>,
}

type Shared = Arc<AppState>;

pub struct ApiError(pub Problem);

impl From<Problem> for ApiError {
    fn from(p: Problem) -> Self {
        ApiError(p)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// JSON body whose rejections are problem documents.
struct Body<T>(T);

impl<S, T> FromRequest<S> for Body<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(r) => Err(ApiError(Problem::usage(r.body_text(), "body"))),
        }
    }
}

/// Query string whose rejections are problem documents.
struct Params<T>(T);

impl<S, T> FromRequestParts<S> for Params<T>
where
    Query<T>: FromRequestParts<S, Rejection = QueryRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        match Query::<T>::from_request_parts(parts, state).await {
            Ok(Query(v)) => Ok(Params(v)),
            Err(r) => Err(ApiError(Problem::usage(r.body_text(), "query"))),
        }
    }
}

fn lock_err() -> Problem {
    Problem::new("internal", "state lock poisoned", None)
}

/// JSON response with digest headers.
fn reply<T: Serialize>(status: StatusCode, body: &T, model: Option<&str>, data: Option<&str>) -> Response {
    let mut resp = (status, Json(body)).into_response();
    let h = resp.headers_mut();
    if let Some(d) = model.and_then(|d| HeaderValue::from_str(d).ok()) {
        h.insert("x-model-digest", d);
    }
    if let Some(d) = data.and_then(|d| HeaderValue::from_str(d).ok()) {
        h.insert("x-dataset-digest", d);
    }
    resp
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Shared, Problem> {
        let store = Store::open(&config.store)?;
        Ok(Arc::new(AppState {
            config,
            store: RwLock::new(store),
            datasets: RwLock::new(BTreeMap::new()),
            by_path: RwLock::new(BTreeMap::new()),
            jobs: Mutex::new(BTreeMap::new()),
            train_gate: tokio::sync::Mutex::new(()),
        }))
    }

    fn register(&self, ds: Dataset) -> Result<Arc<Dataset>, Problem> {
        let digest = ds.provenance.digest.clone();
        let mut map = self.datasets.write().map_err(|_| lock_err())?;
        Ok(map.entry(digest).or_insert_with(|| Arc::new(ds)).clone())
    }

    /// A registered dataset by digest, a path to load, or the default.
    fn dataset(&self, reference: Option<&str>) -> Result<Arc<Dataset>, Problem> {
        let path = match reference {
            Some(r) => {
                if let Some(ds) = self.datasets.read().map_err(|_| lock_err())?.get(r) {
                    return Ok(ds.clone());
                }
                PathBuf::from(r)
            }
            None => self
                .config
                .dataset
                .clone()
                .ok_or_else(|| Problem::usage("no dataset given and no default configured", "dataset"))?,
        };
        if let Some(d) = self.by_path.read().map_err(|_| lock_err())?.get(&path) {
            if let Some(ds) = self.datasets.read().map_err(|_| lock_err())?.get(d) {
                return Ok(ds.clone());
            }
        }
        let ds = self.register(super::load_dataset(&path, self.config.dialect)?)?;
        self.by_path.write().map_err(|_| lock_err())?.insert(path, ds.provenance.digest.clone());
        Ok(ds)
    }

    fn model(&self, reference: &str) -> Result<Loaded, Problem> {
        let store = self.store.read().map_err(|_| lock_err())?;
        super::resolve_model(Some(&store), reference)
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(add_dataset))
        .route("/datasets/{digest}", get(get_dataset))
        .route("/models", get(list_models).post(train_model))
        .route("/models/jobs/{job}", get(job_status))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/prune", post(prune_model))
        .route("/rules", get(export_rules))
        .route("/predict", post(predict))
        .route("/advise", post(advise))
        .route("/whatif", post(what_if))
        .route("/paths", post(paths))
        .route("/metrics/evaluate", post(evaluate))
        .route("/metrics/compare", post(compare))
        .route("/kb", get(kb_list).post(kb_put))
        .route("/kb/{id}", get(kb_get).put(kb_update))
        .fallback(|| async { ApiError(Problem::not_found("no such route", "path")) })
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let bind = config.bind.clone();
    let state = AppState::new(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    axum::serve(listener, router(state)).await
}

async fn health() -> Response {
    reply(StatusCode::OK, &serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }), None, None)
}

async fn list_datasets(State(s): State<Shared>) -> ApiResult {
    let map = s.datasets.read().map_err(|_| lock_err())?;
    let list = map.values().map(|d| super::summarize(d, None)).collect::<Result<Vec<DatasetSummary>, _>>()?;
    Ok(reply(StatusCode::OK, &list, None, None))
}

#[derive(Deserialize)]
struct DatasetRequest {
    path: Option<String>,
    csv: Option<String>,
    delimiter: Option<char>,
    evidence: Option<String>,
}

async fn add_dataset(State(s): State<Shared>, Body(req): Body<DatasetRequest>) -> ApiResult {
    let mut dialect = s.config.dialect;
    if let Some(c) = req.delimiter {
        dialect.delimiter = u8::try_from(c).map_err(|_| Problem::invalid("delimiter must be ASCII", "delimiter"))?;
    }
    let ds = match (req.path, req.csv) {
        (Some(p), None) => {
            let ds = s.register(super::load_dataset(std::path::Path::new(&p), dialect)?)?;
            s.by_path.write().map_err(|_| lock_err())?.insert(PathBuf::from(p), ds.provenance.digest.clone());
            ds
        }
        (None, Some(text)) => s.register(dataset::load_csv(text.as_bytes(), dialect, &Schema::bank()).map_err(Problem::from)?)?,
        _ => return Err(Problem::usage("give exactly one of `path` and `csv`", "path").into()),
    };
    let summary = super::summarize(&ds, req.evidence.as_deref())?;
    Ok(reply(StatusCode::OK, &summary, None, Some(&summary.digest)))
}

async fn get_dataset(State(s): State<Shared>, Path(digest): Path<String>) -> ApiResult {
    let map = s.datasets.read().map_err(|_| lock_err())?;
    let ds = map.get(&digest).ok_or_else(|| Problem::not_found(format!("no dataset {digest}"), "digest"))?;
    Ok(reply(StatusCode::OK, &super::summarize(ds, None)?, None, Some(&digest)))
}

#[derive(Serialize)]
struct ModelList {
    builtin: Vec<&'static str>,
    models: Vec<ArtifactMeta>,
}

async fn list_models(State(s): State<Shared>) -> ApiResult {
    let store = s.store.read().map_err(|_| lock_err())?;
    let list = ModelList { builtin: vec![super::FIXTURE, super::FIXTURE_RULES], models: store.query(Some(ArtifactKind::Model), None) };
    Ok(reply(StatusCode::OK, &list, None, None))
}

#[derive(Deserialize)]
struct TrainRequest {
    dataset: Option<String>,
    #[serde(flatten)]
    spec: TrainSpec,
    #[serde(default)]
    wait: bool,
    request_token: Option<String>,
}

fn run_training(s: &AppState, dataset: Option<&str>, spec: &TrainSpec, token: Option<&str>) -> Result<String, Problem> {
    let ds = s.dataset(dataset)?;
    let model = super::train(&ds, spec)?;
    let mut store = s.store.write().map_err(|_| lock_err())?;
    super::store_model(&mut store, &model, Some(ds.provenance.digest.clone()), token)
}

async fn train_model(State(s): State<Shared>, Body(req): Body<TrainRequest>) -> ApiResult {
    let token = req.request_token.clone();
    if let Some(t) = &token {
        if let Some(id) = s.store.read().map_err(|_| lock_err())?.find_token(t) {
            let status = if req.wait { StatusCode::CREATED } else { StatusCode::ACCEPTED };
            return Ok(reply(status, &serde_json::json!({ "id": id, "state": JobState::Done }), None, None));
        }
        let jobs = s.jobs.lock().map_err(|_| lock_err())?;
        if let Some(job) = jobs.values().find(|j| j.request_token.as_deref() == Some(t)) {
            return Ok(reply(StatusCode::ACCEPTED, job, None, None));
        }
    }
    if req.wait {
        let _gate = s.train_gate.lock().await;
        let state = s.clone();
        let id = tokio::task::spawn_blocking(move || {
            run_training(&state, req.dataset.as_deref(), &req.spec, req.request_token.as_deref())
        })
        .await
        .map_err(|e| Problem::new("internal", e.to_string(), None))??;
        return Ok(reply(StatusCode::CREATED, &serde_json::json!({ "id": id, "state": JobState::Done }), None, None));
    }
    let job_id = format!("job-{:016x}", rand::random::<u64>());
    let job = Job { id: job_id.clone(), state: JobState::Queued, model_id: None, error: None, request_token: token };
    s.jobs.lock().map_err(|_| lock_err())?.insert(job_id.clone(), job.clone());
    let state = s.clone();
    tokio::spawn(async move {
        let _gate = state.train_gate.lock().await;
        set_job(&state, &job_id, |j| j.state = JobState::Running);
        let st = state.clone();
        let result = tokio::task::spawn_blocking(move || {
            run_training(&st, req.dataset.as_deref(), &req.spec, req.request_token.as_deref())
        })
        .await
        .unwrap_or_else(|e| Err(Problem::new("internal", e.to_string(), None)));
        set_job(&state, &job_id, |j| match result {
            Ok(id) => {
                j.state = JobState::Done;
                j.model_id = Some(id);
            }
            Err(p) => {
                j.state = JobState::Failed;
                j.error = Some(p);
            }
        });
    });
    Ok(reply(StatusCode::ACCEPTED, &job, None, None))
}

fn set_job(s: &AppState, id: &str, f: impl FnOnce(&mut Job)) {
    if let Ok(mut jobs) = s.jobs.lock() {
        if let Some(j) = jobs.get_mut(id) {
            f(j);
        }
    }
}

async fn job_status(State(s): State<Shared>, Path(job): Path<String>) -> ApiResult {
    let jobs = s.jobs.lock().map_err(|_| lock_err())?;
    let j = jobs.get(&job).ok_or_else(|| Problem::not_found(format!("no job {job}"), "job"))?;
    Ok(reply(StatusCode::OK, j, None, None))
}

async fn get_model(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let loaded = s.model(&id)?;
    let file: serde_json::Value = serde_json::from_str(&super::model_file_json(&loaded)).expect("model file is json");
    Ok(reply(StatusCode::OK, &file, Some(&loaded.digest), loaded.dataset_digest.as_deref()))
}

#[derive(Deserialize)]
struct PruneRequest {
    level: usize,
    request_token: Option<String>,
}

async fn prune_model(State(s): State<Shared>, Path(id): Path<String>, Body(req): Body<PruneRequest>) -> ApiResult {
    let loaded = s.model(&id)?;
    let pruned = super::prune(&loaded, req.level)?;
    let mut store = s.store.write().map_err(|_| lock_err())?;
    let new_id = super::store_model(&mut store, &pruned, loaded.dataset_digest.clone(), req.request_token.as_deref())?;
    let leaves = pruned.tree().map_or(0, |t| t.leaf_count());
    Ok(reply(StatusCode::CREATED, &serde_json::json!({ "id": new_id, "leaves": leaves }), Some(&loaded.digest), None))
}

#[derive(Deserialize)]
struct RulesQuery {
    model: String,
    format: Option<RuleFormat>,
}

async fn export_rules(State(s): State<Shared>, Params(q): Params<RulesQuery>) -> ApiResult {
    let loaded = s.model(&q.model)?;
    let format = q.format.unwrap_or(RuleFormat::Json);
    let body = super::export_rules(&loaded, format)?;
    let mut resp = match format {
        RuleFormat::Text => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response(),
        RuleFormat::Json => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
    };
    if let Ok(v) = HeaderValue::from_str(&loaded.digest) {
        resp.headers_mut().insert("x-model-digest", v);
    }
    Ok(resp)
}

/// A record as an array of codes or a comma-separated string.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum RecordInput {
    Codes(Vec<i64>),
    Text(String),
}

impl RecordInput {
    fn parse(&self, schema: &Schema) -> Result<Vec<i64>, Problem> {
        match self {
            RecordInput::Codes(x) => {
                schema.validate(x).map_err(|e| Problem::invalid(e.to_string(), "record"))?;
                Ok(x.clone())
            }
            RecordInput::Text(t) => super::parse_record(t, schema),
        }
    }
}

fn schema_of(loaded: &Loaded) -> Schema {
    loaded.model.schema().cloned().unwrap_or_else(Schema::bank)
}

#[derive(Deserialize)]
struct PredictRequest {
    model: String,
    record: RecordInput,
}

async fn predict(State(s): State<Shared>, Body(req): Body<PredictRequest>) -> ApiResult {
    let loaded = s.model(&req.model)?;
    let x = req.record.parse(&schema_of(&loaded))?;
    let p = super::predict(&loaded, &x)?;
    Ok(reply(StatusCode::OK, &p, Some(&loaded.digest), None))
}

#[derive(Deserialize)]
struct AdviseRequest {
    model: String,
    dataset: Option<String>,
    #[serde(default)]
    evidence: String,
    #[serde(flatten)]
    options: PanelOptions,
}

async fn advise(State(s): State<Shared>, Body(req): Body<AdviseRequest>) -> ApiResult {
    let loaded = s.model(&req.model)?;
    let ds = s.dataset(req.dataset.as_deref())?;
    let ev = super::parse_evidence(&req.evidence, &ds.schema)?;
    let panel = super::panel(ev, &ds.schema, &req.options)?;
    let report = super::advise(&loaded, &ds, &panel)?;
    Ok(reply(StatusCode::OK, &report, Some(&loaded.digest), Some(&ds.provenance.digest)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OverrideValue {
    Code(i64),
    Label(String),
}

#[derive(Deserialize)]
struct WhatIfRequest {
    model: String,
    record: RecordInput,
    #[serde(default)]
    overrides: BTreeMap<String, OverrideValue>,
}

async fn what_if(State(s): State<Shared>, Body(req): Body<WhatIfRequest>) -> ApiResult {
    let loaded = s.model(&req.model)?;
    let x = req.record.parse(&schema_of(&loaded))?;
    let overrides: BTreeMap<String, String> = req
        .overrides
        .into_iter()
        .map(|(k, v)| {
            (k, match v {
                OverrideValue::Code(c) => c.to_string(),
                OverrideValue::Label(l) => l,
            })
        })
        .collect();
    let w = super::what_if(&loaded, &x, &overrides)?;
    Ok(reply(StatusCode::OK, &w, Some(&loaded.digest), None))
}

#[derive(Deserialize)]
struct PathsRequest {
    model: String,
    record: Option<RecordInput>,
    evidence: Option<String>,
    #[serde(flatten)]
    options: PanelOptions,
}

async fn paths(State(s): State<Shared>, Body(req): Body<PathsRequest>) -> ApiResult {
    let loaded = s.model(&req.model)?;
    let schema = schema_of(&loaded);
    let report = match (&req.record, &req.evidence) {
        (Some(r), _) => super::paths(&loaded, Some(&r.parse(&schema)?), None)?,
        (None, ev) => {
            let ev = super::parse_evidence(ev.as_deref().unwrap_or(""), &schema)?;
            let panel = super::panel(ev, &schema, &req.options)?;
            super::paths(&loaded, None, Some(&panel))?
        }
    };
    Ok(reply(StatusCode::OK, &report, Some(&loaded.digest), None))
}

#[derive(Deserialize)]
struct EvaluateRequest {
    model: String,
    dataset: Option<String>,
}

async fn evaluate(State(s): State<Shared>, Body(req): Body<EvaluateRequest>) -> ApiResult {
    let loaded = s.model(&req.model)?;
    let ds = s.dataset(req.dataset.as_deref())?;
    let e = tokio::task::spawn_blocking(move || super::evaluate(&loaded, &ds))
        .await
        .map_err(|e| Problem::new("internal", e.to_string(), None))??;
    Ok(reply(StatusCode::OK, &e, Some(&e.model_digest), Some(&e.dataset_digest)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KindList {
    List(Vec<String>),
    Text(String),
}

fn default_fraction() -> f64 {
    0.4
}

#[derive(Deserialize)]
struct CompareRequest {
    dataset: Option<String>,
    models: Option<KindList>,
    #[serde(default = "default_fraction")]
    fraction: f64,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn compare(State(s): State<Shared>, Params(q): Params<FormatQuery>, Body(req): Body<CompareRequest>) -> ApiResult {
    let kinds = match &req.models {
        None => ModelKind::ALL.to_vec(),
        Some(KindList::Text(t)) => super::parse_kinds(t)?,
        Some(KindList::List(l)) => super::parse_kinds(&l.join(","))?,
    };
    let ds = s.dataset(req.dataset.as_deref())?;
    let (fraction, seed) = (req.fraction, req.seed.unwrap_or(s.config.seed));
    let c = tokio::task::spawn_blocking(move || super::compare(&ds, &kinds, fraction, seed))
        .await
        .map_err(|e| Problem::new("internal", e.to_string(), None))??;
    if q.format.as_deref() == Some("csv") {
        let mut resp = ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], c.to_csv()).into_response();
        if let Ok(v) = HeaderValue::from_str(&c.dataset_digest) {
            resp.headers_mut().insert("x-dataset-digest", v);
        }
        return Ok(resp);
    }
    Ok(reply(StatusCode::OK, &c, None, Some(&c.dataset_digest)))
}

#[derive(Deserialize)]
struct KbQuery {
    kind: Option<String>,
    tag: Option<String>,
}

async fn kb_list(State(s): State<Shared>, Params(q): Params<KbQuery>) -> ApiResult {
    let kind = q.kind.as_deref().map(str::parse::<ArtifactKind>).transpose().map_err(Problem::from)?;
    let store = s.store.read().map_err(|_| lock_err())?;
    Ok(reply(StatusCode::OK, &store.query(kind, q.tag.as_deref()), None, None))
}

#[derive(Deserialize)]
struct KbWrite {
    kind: Option<String>,
    payload: Option<String>,
    payload_base64: Option<String>,
    tags: Option<BTreeSet<String>>,
    request_token: Option<String>,
}

impl KbWrite {
    fn bytes(&self) -> Result<Vec<u8>, Problem> {
        match (&self.payload, &self.payload_base64) {
            (Some(p), None) => Ok(p.clone().into_bytes()),
            (None, Some(b)) => base64::engine::general_purpose::STANDARD
                .decode(b)
                .map_err(|e| Problem::invalid(e.to_string(), "payload_base64")),
            _ => Err(Problem::usage("give exactly one of `payload` and `payload_base64`", "payload")),
        }
    }
}

async fn kb_put(State(s): State<Shared>, Body(req): Body<KbWrite>) -> ApiResult {
    let kind: ArtifactKind = req
        .kind
        .as_deref()
        .ok_or_else(|| Problem::usage("missing kind", "kind"))?
        .parse()
        .map_err(Problem::from)?;
    let bytes = req.bytes()?;
    let tags = req.tags.clone().unwrap_or_default();
    let mut store = s.store.write().map_err(|_| lock_err())?;
    let id = match &req.request_token {
        Some(t) => store.put_once(kind, &bytes, tags, t),
        None => store.put(kind, &bytes, tags),
    }
    .map_err(Problem::from)?;
    let meta = store.meta(&id).cloned();
    Ok(reply(StatusCode::CREATED, &serde_json::json!({ "id": id, "meta": meta }), None, None))
}

#[derive(Serialize)]
struct KbArtifact {
    meta: ArtifactMeta,
    payload_base64: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload: Option<String>,
}

async fn kb_get(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let store = s.store.read().map_err(|_| lock_err())?;
    let a = store.get(&id).map_err(Problem::from)?;
    let body = KbArtifact {
        payload_base64: base64::engine::general_purpose::STANDARD.encode(&a.payload),
        payload: String::from_utf8(a.payload).ok(),
        meta: a.meta,
    };
    Ok(reply(StatusCode::OK, &body, None, None))
}

/// Writes a new revision unless payload and tags equal the current one, so
/// retries do not pile up revisions.
async fn kb_update(State(s): State<Shared>, Path(id): Path<String>, Body(req): Body<KbWrite>) -> ApiResult {
    let bytes = req.bytes()?;
    let mut store = s.store.write().map_err(|_| lock_err())?;
    let current = store.get(&id).map_err(Problem::from)?;
    let same_tags = req.tags.as_ref().is_none_or(|t| *t == current.meta.tags);
    let meta = if current.payload == bytes && same_tags {
        current.meta
    } else {
        store.update(&id, &bytes, req.tags.clone()).map_err(Problem::from)?
    };
    Ok(reply(StatusCode::OK, &meta, None, None))
}
