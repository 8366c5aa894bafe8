//! Local HTTP service: datasets, curves, point details, embedding jobs and
//! selection fingerprints.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Context as _;
use axum::extract::{Path as UrlPath, Query, State as AxState};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use trajspace_core::analysis::fingerprint;
use trajspace_core::embed::Coords;
use trajspace_core::geometry::{cardinal_spline, DEFAULT_SAMPLES, DEFAULT_TENSION};
use trajspace_core::model::is_anchor;
use trajspace_core::{
    collapse_duplicates, embed_dataset, EmbeddingConfig, Encoding, Execution, Flow, Init, Method,
    Snapshot, State, StateDataset,
};
use trajspace_domains::{chess, nn, rubik};

use crate::pipeline::Artifact;
use crate::presets;
use crate::projection::import_csv;

/// A dataset as served, with its stored layout if it came with one.
pub struct LoadedDataset {
    pub id: String,
    pub dataset: StateDataset,
    pub coords: Option<Coords>,
    distinct: usize,
}

impl LoadedDataset {
    pub fn new(id: impl Into<String>, dataset: StateDataset, coords: Option<Coords>) -> Self {
        let distinct = if dataset.encoding() == Encoding::Absent {
            0
        } else {
            collapse_duplicates(&dataset).representatives.len()
        };
        LoadedDataset {
            id: id.into(),
            dataset,
            coords,
            distinct,
        }
    }
}

/// Reads every `*.json` (artifact or bare dataset) and `*.csv` file in `dir`.
/// The file stem becomes the dataset id.
pub fn load_data_dir(dir: &Path) -> anyhow::Result<Vec<LoadedDataset>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let artifact = match Artifact::parse(&text) {
                    Ok(a) => a,
                    Err(_) => Artifact::new(
                        serde_json::from_str(&text)
                            .with_context(|| format!("parsing {}", path.display()))?,
                    ),
                };
                let coords = artifact.embedding.map(|e| e.coords);
                out.push(LoadedDataset::new(stem, artifact.dataset, coords));
            }
            Some("csv") => {
                let file = std::fs::File::open(&path)
                    .with_context(|| format!("opening {}", path.display()))?;
                let p = import_csv(std::io::BufReader::new(file))
                    .with_context(|| format!("importing {}", path.display()))?;
                out.push(LoadedDataset::new(stem, p.dataset, Some(p.coords)));
            }
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Cancelled,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobState::Cancelled | JobState::Done | JobState::Failed
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub dataset: String,
    pub state: JobState,
    pub iteration: usize,
    pub total: usize,
    pub objective: Option<f64>,
    pub snapshot: Option<Coords>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job {
    config: EmbeddingConfig,
    cancel: AtomicBool,
    status: Mutex<JobStatus>,
}

#[derive(Default)]
struct JobTable {
    next: u64,
    jobs: HashMap<String, Arc<Job>>,
    queues: HashMap<String, VecDeque<Arc<Job>>>,
    running: HashMap<String, String>,
    layouts: HashMap<String, Arc<Coords>>,
}

pub struct AppState {
    datasets: BTreeMap<String, LoadedDataset>,
    jobs: Mutex<JobTable>,
    default_config: EmbeddingConfig,
    seed: Option<u64>,
    exec: Execution,
}

impl AppState {
    pub fn new(
        datasets: Vec<LoadedDataset>,
        default_config: EmbeddingConfig,
        seed: Option<u64>,
        exec: Execution,
    ) -> Self {
        let mut default_config = default_config;
        if let Some(s) = seed {
            default_config.seed = s;
        }
        AppState {
            datasets: datasets.into_iter().map(|d| (d.id.clone(), d)).collect(),
            jobs: Mutex::new(JobTable::default()),
            default_config,
            seed,
            exec,
        }
    }

    fn dataset(&self, id: &str) -> Result<&LoadedDataset, ApiError> {
        self.datasets
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown dataset '{id}'")))
    }

    fn layout(&self, entry: &LoadedDataset) -> Option<Arc<Coords>> {
        let latest = self.jobs.lock().unwrap().layouts.get(&entry.id).cloned();
        latest.or_else(|| entry.coords.clone().map(Arc::new))
    }
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn build_router(state: Shared) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/points", get(points))
        .route("/datasets/{id}/curves", get(curves))
        .route("/datasets/{id}/detail/{point}", get(detail))
        .route("/jobs", post(create_job).get(list_jobs))
        .route("/jobs/{id}", get(job_status).delete(cancel_job))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/fingerprint", post(selection_fingerprint))
        .route("/presets", get(list_presets))
        .with_state(state)
}

/// Serves on `127.0.0.1:port` until the process ends.
pub async fn serve(port: u16, state: AppState) -> anyhow::Result<()> {
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, build_router(Arc::new(state))).await?;
    Ok(())
}

async fn list_datasets(AxState(state): AxState<Shared>) -> Json<Value> {
    let list: Vec<Value> = state
        .datasets
        .values()
        .map(|d| {
            json!({
                "id": d.id,
                "representation": d.dataset.representation_name(),
                "points": d.dataset.len(),
                "trajectories": d.dataset.trajectories().len(),
                "distinct_states": d.distinct,
                "has_states": d.dataset.encoding() != Encoding::Absent,
                "has_layout": state.layout(d).is_some(),
            })
        })
        .collect();
    Json(Value::Array(list))
}

async fn points(AxState(state): AxState<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let entry = state.dataset(&id)?;
    let layout = state.layout(entry);
    let ds = &entry.dataset;
    let mut points = Vec::with_capacity(ds.len());
    for (i, p) in ds.points().enumerate() {
        let xy = layout.as_ref().map(|c| c[i]);
        points.push(json!({
            "index": i,
            "line": p.trajectory_id,
            "step": p.step_index,
            "x": xy.map(|c| c[0]),
            "y": xy.map(|c| c[1]),
            "metadata": p.metadata,
        }));
    }
    let trajectories: Vec<Value> = ds
        .trajectories()
        .iter()
        .enumerate()
        .map(|(t, traj)| {
            json!({
                "id": traj.id,
                "labels": traj.labels,
                "start": ds.offsets()[t],
                "len": traj.len(),
                "anchor": is_anchor(traj),
            })
        })
        .collect();
    Ok(Json(
        json!({ "dataset": id, "points": points, "trajectories": trajectories }),
    ))
}

#[derive(Deserialize)]
struct CurveQuery {
    tension: Option<f64>,
    samples: Option<usize>,
}

async fn curves(
    AxState(state): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<CurveQuery>,
) -> ApiResult<Value> {
    let entry = state.dataset(&id)?;
    let tension = q.tension.unwrap_or(DEFAULT_TENSION);
    let samples = q.samples.unwrap_or(DEFAULT_SAMPLES);
    if !tension.is_finite() || samples == 0 {
        return Err(ApiError::bad_request(
            "tension must be finite and samples positive",
        ));
    }
    let layout = state.layout(entry).ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            format!("dataset '{id}' has no layout yet"),
        )
    })?;
    let ds = &entry.dataset;
    let mut curves = Vec::new();
    for (t, traj) in ds.trajectories().iter().enumerate() {
        let start = ds.offsets()[t];
        let control = &layout[start..start + traj.len()];
        let polyline = if control.len() >= 2 {
            cardinal_spline(control, tension, samples).polyline
        } else {
            control.to_vec()
        };
        curves.push(json!({
            "id": traj.id,
            "labels": traj.labels,
            "anchor": is_anchor(traj),
            "polyline": polyline,
        }));
    }
    Ok(Json(
        json!({ "dataset": id, "tension": tension, "samples": samples, "curves": curves }),
    ))
}

fn domain_detail(representation: &str, state: &State) -> Value {
    match state {
        State::Symbols(s) if representation == "rubik" => json!({
            "domain": "cube",
            "faces": rubik::FACES.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>(),
            "facets": s,
            "colors": s.iter().map(|&c| rubik::FACES.get(c as usize).map_or("?", |f| f.color_name())).collect::<Vec<_>>(),
        }),
        State::Symbols(s) if representation == "chess" => json!({
            "domain": "board",
            "placement": chess::placement_from_symbols(s),
            "squares": s,
        }),
        State::Symbols(s) if representation.starts_with("sorting-") => json!({
            "domain": "permutation",
            "values": s.iter().map(|&v| v as u32 + 1).collect::<Vec<_>>(),
        }),
        State::Real(v) if representation == "nn-confusion" => {
            let k = (v.len() as f64).sqrt().round() as usize;
            let matrix: Vec<&[f64]> = v.chunks(k.max(1)).collect();
            let totals: Vec<f64> = matrix.iter().map(|r| r.iter().sum()).collect();
            json!({
                "domain": "confusion",
                "matrix": matrix,
                "class_totals": totals,
                "accuracy": nn::accuracy_of(v),
            })
        }
        State::Real(v) => json!({ "domain": "vector", "values": v }),
        State::Symbols(s) => json!({ "domain": "symbols", "values": s }),
        State::Absent => json!({ "domain": "none" }),
    }
}

async fn detail(
    AxState(state): AxState<Shared>,
    UrlPath((id, point)): UrlPath<(String, usize)>,
) -> ApiResult<Value> {
    let entry = state.dataset(&id)?;
    let ds = &entry.dataset;
    let p = ds.point(point).ok_or_else(|| {
        ApiError::not_found(format!(
            "point {point} out of range (dataset has {})",
            ds.len()
        ))
    })?;
    let (t, _) = ds.locate(point).expect("point exists");
    let mut body = domain_detail(ds.representation_name(), &p.state);
    let obj = body.as_object_mut().expect("object");
    obj.insert("point".into(), json!(point));
    obj.insert("line".into(), json!(p.trajectory_id));
    obj.insert("step".into(), json!(p.step_index));
    obj.insert("metadata".into(), json!(p.metadata));
    obj.insert("labels".into(), json!(ds.trajectories()[t].labels));
    Ok(Json(body))
}

#[derive(Deserialize)]
struct SelectionRequest {
    dataset: String,
    points: Vec<usize>,
}

async fn selection_fingerprint(
    AxState(state): AxState<Shared>,
    Json(req): Json<SelectionRequest>,
) -> ApiResult<Value> {
    let entry = state.dataset(&req.dataset)?;
    let ds = &entry.dataset;
    let mut states = Vec::with_capacity(req.points.len());
    for &i in &req.points {
        let p = ds.point(i).ok_or_else(|| {
            ApiError::bad_request(format!("point {i} out of range (dataset has {})", ds.len()))
        })?;
        states.push(&p.state);
    }
    let fp = fingerprint(states)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(json!({
        "dataset": req.dataset,
        "constant_count": fp.constant_count(),
        "constant_fraction": fp.constant_fraction(),
        "fingerprint": fp,
    })))
}

async fn list_presets() -> ApiResult<Value> {
    let mut out = Vec::new();
    for name in presets::names() {
        let config = presets::load(name)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        out.push(json!({ "name": name, "config": config }));
    }
    Ok(Json(Value::Array(out)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    dataset: String,
    preset: Option<String>,
    config: Option<Value>,
}

fn job_config(state: &AppState, req: &JobRequest) -> Result<EmbeddingConfig, ApiError> {
    if let Some(c) = &req.config {
        return serde_json::from_value(c.clone())
            .map_err(|e| ApiError::bad_request(format!("invalid config: {e}")));
    }
    let mut config = match &req.preset {
        Some(p) => presets::load(p).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => state.default_config.clone(),
    };
    if let Some(s) = state.seed {
        config.seed = s;
    }
    Ok(config)
}

async fn create_job(
    AxState(state): AxState<Shared>,
    Json(req): Json<JobRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let entry = state.dataset(&req.dataset)?;
    if entry.dataset.encoding() == Encoding::Absent {
        return Err(ApiError::bad_request(format!(
            "dataset '{}' carries no states and cannot be embedded",
            entry.id
        )));
    }
    let config = job_config(&state, &req)?;
    let n = if config.method == Method::Tsne && config.init == Init::Random {
        entry.dataset.len()
    } else {
        entry.distinct
    };
    config
        .validate(n)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let status = start_job(&state, &entry.id, config);
    Ok((StatusCode::CREATED, Json(status)))
}

fn start_job(state: &Shared, dataset: &str, config: EmbeddingConfig) -> JobStatus {
    let mut table = state.jobs.lock().unwrap();
    table.next += 1;
    let id = format!("job-{}", table.next);
    let total = if config.method == Method::Tsne {
        config.total_iterations
    } else {
        1
    };
    let job = Arc::new(Job {
        config,
        cancel: AtomicBool::new(false),
        status: Mutex::new(JobStatus {
            id: id.clone(),
            dataset: dataset.to_string(),
            state: JobState::Queued,
            iteration: 0,
            total,
            objective: None,
            snapshot: None,
            error: None,
        }),
    });
    table.jobs.insert(id.clone(), job.clone());
    if table.running.contains_key(dataset) {
        table
            .queues
            .entry(dataset.to_string())
            .or_default()
            .push_back(job.clone());
    } else {
        job.status.lock().unwrap().state = JobState::Running;
        table.running.insert(dataset.to_string(), id);
        spawn_job(state.clone(), job.clone());
    }
    let status = job.status.lock().unwrap().clone();
    status
}

fn spawn_job(state: Shared, job: Arc<Job>) {
    std::thread::spawn(move || {
        run_job(&state, &job);
        finish_job(&state, &job);
    });
}

fn run_job(state: &AppState, job: &Job) {
    let dataset_id = job.status.lock().unwrap().dataset.clone();
    let entry = &state.datasets[&dataset_id];
    let mut sink = |s: &Snapshot<'_>| {
        let mut st = job.status.lock().unwrap();
        st.iteration = s.iteration;
        st.total = s.total;
        st.objective = s.objective.or(st.objective);
        st.snapshot = Some(s.coords.to_vec());
        if job.cancel.load(Ordering::SeqCst) {
            Flow::Stop
        } else {
            Flow::Continue
        }
    };
    let result = embed_dataset(&entry.dataset, &job.config, state.exec, &mut sink);
    let mut st = job.status.lock().unwrap();
    match result {
        Ok(e) if e.diagnostics.cancelled => st.state = JobState::Cancelled,
        Ok(e) => {
            st.iteration = st.iteration.max(e.diagnostics.iterations).max(1);
            st.total = st.total.max(st.iteration);
            if let Some(&(_, kl)) = e.diagnostics.objective.last() {
                st.objective = Some(kl);
            }
            st.snapshot = Some(e.coords.clone());
            st.state = JobState::Done;
            drop(st);
            state
                .jobs
                .lock()
                .unwrap()
                .layouts
                .insert(dataset_id, Arc::new(e.coords));
        }
        Err(e) => {
            st.state = JobState::Failed;
            st.error = Some(e.to_string());
        }
    }
}

fn finish_job(state: &Shared, job: &Job) {
    let dataset = job.status.lock().unwrap().dataset.clone();
    let mut table = state.jobs.lock().unwrap();
    table.running.remove(&dataset);
    while let Some(next) = table.queues.get_mut(&dataset).and_then(VecDeque::pop_front) {
        let mut st = next.status.lock().unwrap();
        if st.state != JobState::Queued {
            continue;
        }
        st.state = JobState::Running;
        table.running.insert(dataset.clone(), st.id.clone());
        drop(st);
        spawn_job(state.clone(), next);
        break;
    }
}

fn find_job(state: &AppState, id: &str) -> Result<Arc<Job>, ApiError> {
    state
        .jobs
        .lock()
        .unwrap()
        .jobs
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown job '{id}'")))
}

async fn job_status(
    AxState(state): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<JobStatus> {
    let job = find_job(&state, &id)?;
    let status = job.status.lock().unwrap().clone();
    Ok(Json(status))
}

async fn list_jobs(AxState(state): AxState<Shared>) -> Json<Value> {
    let jobs: Vec<Arc<Job>> = state.jobs.lock().unwrap().jobs.values().cloned().collect();
    let mut list: Vec<Value> = jobs
        .iter()
        .map(|j| {
            let st = j.status.lock().unwrap();
            json!({ "id": st.id, "dataset": st.dataset, "state": st.state, "iteration": st.iteration })
        })
        .collect();
    list.sort_by(|a, b| a["id"].as_str().cmp(&b["id"].as_str()));
    Json(Value::Array(list))
}

/// A queued job is cancelled at once; a running one stops after its current
/// iteration. Finished jobs are left as they are.
async fn cancel_job(
    AxState(state): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<JobStatus> {
    let job = find_job(&state, &id)?;
    let mut st = job.status.lock().unwrap();
    match st.state {
        JobState::Queued => st.state = JobState::Cancelled,
        JobState::Running => job.cancel.store(true, Ordering::SeqCst),
        _ => {}
    }
    Ok(Json(st.clone()))
}
