//! HTTP API over a project store. Every mutation goes through the same core
//! operations as the CLI; mutations are serialized per project while reads see
//! the last committed state.

mod error;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use esgmap_core::adjudication::{CandidateStatus, Decision, Vote};
use esgmap_core::benchmark::export_finetune_string;
use esgmap_core::classifier::InferenceBackend;
use esgmap_core::corpus::{Document, DocumentSource};
use esgmap_core::jsonl;
use esgmap_core::pipeline::{
    annotate, candidate_views, run_pipeline, AnnotationMode, CandidateView, Project, ProjectConfig, RunRecord,
    StandoffAnnotation,
};
use esgmap_core::store::ProjectStore;
use esgmap_core::taxonomy::{EsgActivity, NaceCode, Taxonomy};
use esgmap_core::vecindex::EmbeddingBackend;

pub use error::ApiError;

type ApiResult<T> = Result<T, ApiError>;

struct ProjectSlot {
    /// Held for the whole duration of a mutation, including pipeline runs.
    write: tokio::sync::Mutex<()>,
    current: RwLock<Arc<Project>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub project_id: String,
    pub state: JobState,
    #[serde(default)]
    pub run: Option<RunRecord>,
    #[serde(default)]
    pub failures: Vec<(String, String)>,
    #[serde(default)]
    pub error: Option<String>,
}

pub struct AppState {
    store: ProjectStore,
    token: String,
    embedder: Arc<dyn EmbeddingBackend>,
    backend: Arc<dyn InferenceBackend>,
    projects: Mutex<HashMap<String, Arc<ProjectSlot>>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(
        store: ProjectStore,
        token: impl Into<String>,
        embedder: Arc<dyn EmbeddingBackend>,
        backend: Arc<dyn InferenceBackend>,
    ) -> Arc<Self> {
        Arc::new(AppState {
            store,
            token: token.into(),
            embedder,
            backend,
            projects: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        })
    }

    fn slot(&self, project_id: &str) -> ApiResult<Arc<ProjectSlot>> {
        let mut projects = self.projects.lock().expect("project map poisoned");
        if let Some(slot) = projects.get(project_id) {
            return Ok(slot.clone());
        }
        if !valid_project_id(project_id) || !self.store.exists(project_id) {
            return Err(ApiError::not_found(format!("project {project_id:?}")));
        }
        let project = self.store.load(project_id)?;
        let slot = Arc::new(ProjectSlot {
            write: tokio::sync::Mutex::new(()),
            current: RwLock::new(Arc::new(project)),
        });
        projects.insert(project_id.to_string(), slot.clone());
        Ok(slot)
    }

    fn snapshot(&self, project_id: &str) -> ApiResult<Arc<Project>> {
        let slot = self.slot(project_id)?;
        let current = slot.current.read().expect("project lock poisoned").clone();
        Ok(current)
    }

    fn set_job(&self, status: JobStatus) {
        self.jobs
            .lock()
            .expect("job map poisoned")
            .insert(status.job_id.clone(), status);
    }
}

fn valid_project_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Applies `op` to a copy of the project, persists it, then publishes it.
async fn mutate<R, F>(state: &Arc<AppState>, project_id: &str, op: F) -> ApiResult<R>
where
    R: Send + 'static,
    F: FnOnce(&mut Project, &AppState) -> ApiResult<R> + Send + 'static,
{
    let slot = state.slot(project_id)?;
    let _guard = slot.write.lock().await;
    let mut project = (**slot.current.read().expect("project lock poisoned")).clone();
    let st = state.clone();
    let (project, out) = tokio::task::spawn_blocking(move || {
        let out = op(&mut project, &st)?;
        st.store.save(&project)?;
        Ok::<_, ApiError>((project, out))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    *slot.current.write().expect("project lock poisoned") = Arc::new(project);
    Ok(out)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == state.token);
    if ok {
        next.run(req).await
    } else {
        ApiError::unauthorized().into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/documents", post(add_document))
        .route("/projects/{id}/run", post(start_run))
        .route("/projects/{id}/jobs/{job}", get(job_status))
        .route("/projects/{id}/candidates", get(list_candidates))
        .route("/candidates/{id}/votes", post(cast_vote))
        .route("/projects/{id}/annotations", get(list_annotations))
        .route("/projects/{id}/export/dataset", get(export_dataset))
        .route("/projects/{id}/export/finetune", get(export_finetune))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Deserialize)]
pub struct CreateProject {
    pub project_id: String,
    pub taxonomy: Vec<EsgActivity>,
    #[serde(default)]
    pub taxonomy_version: Option<String>,
    #[serde(default)]
    pub nace_codes: BTreeSet<NaceCode>,
    #[serde(default)]
    pub config: Option<ProjectConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub company: String,
    pub title: String,
    pub chars: usize,
    pub pages: usize,
}

impl From<&Document> for DocumentSummary {
    fn from(d: &Document) -> Self {
        DocumentSummary {
            doc_id: d.doc_id.clone(),
            company: d.company.clone(),
            title: d.title.clone(),
            chars: d.char_len(),
            pages: d.page_offsets.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project_id: String,
    pub taxonomy_version: String,
    pub activities: usize,
    pub nace_codes: BTreeSet<NaceCode>,
    pub documents: Vec<DocumentSummary>,
    pub candidates: BTreeMap<String, usize>,
    pub votes: usize,
    pub config: ProjectConfig,
    pub runs: Vec<RunRecord>,
}

impl From<&Project> for ProjectSummary {
    fn from(p: &Project) -> Self {
        let mut candidates = BTreeMap::new();
        for c in &p.store.candidates {
            let key = serde_json::to_value(c.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            *candidates.entry(key).or_insert(0) += 1;
        }
        ProjectSummary {
            project_id: p.project_id.clone(),
            taxonomy_version: p.taxonomy.version.clone(),
            activities: p.taxonomy.len(),
            nace_codes: p.nace_codes.clone(),
            documents: p.documents.iter().map(DocumentSummary::from).collect(),
            candidates,
            votes: p.store.votes.len(),
            config: p.config.clone(),
            runs: p.runs.clone(),
        }
    }
}

async fn create_project(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateProject>,
) -> ApiResult<(StatusCode, Json<ProjectSummary>)> {
    let taxonomy = Taxonomy::new(req.taxonomy_version.unwrap_or_else(|| "inline".into()), req.taxonomy)?;
    let mut project = Project::new(req.project_id, taxonomy, req.nace_codes)?;
    if let Some(config) = req.config {
        config.policy.validate()?;
        project.config = config;
    }
    let mut projects = state.projects.lock().expect("project map poisoned");
    if projects.contains_key(&project.project_id) || state.store.exists(&project.project_id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("project {:?} already exists", project.project_id),
        ));
    }
    state.store.save(&project)?;
    let summary = ProjectSummary::from(&project);
    projects.insert(
        project.project_id.clone(),
        Arc::new(ProjectSlot {
            write: tokio::sync::Mutex::new(()),
            current: RwLock::new(Arc::new(project)),
        }),
    );
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_projects(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(state.store.list()?))
}

async fn get_project(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ProjectSummary>> {
    Ok(Json(ProjectSummary::from(state.snapshot(&id)?.as_ref())))
}

#[derive(Debug, Deserialize)]
pub struct AddDocument {
    pub company: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(flatten)]
    pub source: DocumentSource,
}

async fn add_document(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<AddDocument>,
) -> ApiResult<(StatusCode, Json<DocumentSummary>)> {
    let title = req.title.clone().unwrap_or_else(|| "untitled".into());
    let mut source = req.source;
    source.company = Some(req.company.clone());
    source.title = Some(title.clone());
    let doc = Document::from_source(source, &req.company, &title)?;
    let summary = DocumentSummary::from(&doc);
    mutate(&state, &id, move |p, _| Ok(p.add_document(doc)?)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn start_run(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let snapshot = state.snapshot(&id)?;
    if snapshot.documents.is_empty() {
        return Err(esgmap_core::Error::NoDocuments.into());
    }
    let job_id = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    let queued = JobStatus {
        job_id: job_id.clone(),
        project_id: id.clone(),
        state: JobState::Queued,
        run: None,
        failures: vec![],
        error: None,
    };
    state.set_job(queued.clone());
    let st = state.clone();
    tokio::spawn(async move {
        let mut status = queued;
        status.state = JobState::Running;
        st.set_job(status.clone());
        let result = mutate(&st, &id, |p, app| {
            Ok(run_pipeline(p, app.embedder.as_ref(), app.backend.as_ref())?)
        })
        .await;
        match result {
            Ok(summary) => {
                status.state = JobState::Succeeded;
                status.run = Some(summary.record);
                status.failures = summary.failures;
            }
            Err(e) => {
                status.state = JobState::Failed;
                status.error = Some(e.message);
            }
        }
        st.set_job(status);
    });
    let current = state.jobs.lock().expect("job map poisoned")[&job_id].clone();
    Ok((StatusCode::ACCEPTED, Json(current)))
}

async fn job_status(
    State(state): State<Arc<AppState>>,
    Path((id, job)): Path<(String, String)>,
) -> ApiResult<Json<JobStatus>> {
    let jobs = state.jobs.lock().expect("job map poisoned");
    match jobs.get(&job) {
        Some(s) if s.project_id == id => Ok(Json(s.clone())),
        _ => Err(ApiError::not_found(format!("job {job:?}"))),
    }
}

#[derive(Debug, Deserialize)]
pub struct CandidateQuery {
    #[serde(default)]
    pub status: Option<String>,
    #[serde(default)]
    pub annotator: Option<String>,
}

async fn list_candidates(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<CandidateQuery>,
) -> ApiResult<Json<Vec<CandidateView>>> {
    let status = q.status.as_deref().map(str::parse::<CandidateStatus>).transpose()?;
    let project = state.snapshot(&id)?;
    Ok(Json(candidate_views(&project, status, q.annotator.as_deref())))
}

#[derive(Debug, Deserialize)]
pub struct CastVote {
    pub annotator_id: String,
    pub decision: Decision,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub candidate_id: String,
    pub status: CandidateStatus,
}

async fn cast_vote(
    State(state): State<Arc<AppState>>,
    Path(candidate_id): Path<String>,
    Json(req): Json<CastVote>,
) -> ApiResult<(StatusCode, Json<VoteOutcome>)> {
    let mut owner = None;
    for pid in state.store.list()? {
        if state.snapshot(&pid)?.store.get(&candidate_id).is_some() {
            owner = Some(pid);
            break;
        }
    }
    let project_id = owner.ok_or_else(|| ApiError::from(esgmap_core::Error::UnknownCandidate(candidate_id.clone())))?;
    let vote = Vote::now(candidate_id.clone(), req.annotator_id, req.decision);
    let status = mutate(&state, &project_id, move |p, _| Ok(p.record_vote(vote)?)).await?;
    Ok((StatusCode::CREATED, Json(VoteOutcome { candidate_id, status })))
}

#[derive(Debug, Deserialize)]
pub struct AnnotationQuery {
    #[serde(default)]
    pub mode: Option<String>,
}

async fn list_annotations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AnnotationQuery>,
) -> ApiResult<Json<Vec<StandoffAnnotation>>> {
    let mode = q.mode.as_deref().unwrap_or("model").parse::<AnnotationMode>()?;
    let project = state.snapshot(&id)?;
    Ok(Json(annotate(&project, mode)?))
}

fn ndjson(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn export_dataset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let project = state.snapshot(&id)?;
    Ok(ndjson(jsonl::to_string(&project.export_dataset()?)))
}

async fn export_finetune(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let project = state.snapshot(&id)?;
    let pairs = project.export_dataset()?;
    Ok(ndjson(export_finetune_string(&pairs, &project.config.template)))
}
