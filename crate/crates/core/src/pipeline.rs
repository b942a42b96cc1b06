//! End-to-end mapping: select activities, chunk and index documents, retrieve
//! top-k chunks per activity, classify each pair, and project the results as
//! standoff annotations.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::adjudication::{AdjudicationPolicy, CandidateMapping, CandidateStatus, CandidateStore, Vote};
use crate::benchmark::LabeledPair;
use crate::classifier::{ClassificationRequest, Classifier, InferenceBackend, PromptTemplate};
use crate::corpus::{chunk_document, hex_digest, Chunk, ChunkParams, Document};
use crate::error::{Error, Result};
use crate::taxonomy::{select_activities, NaceCode, Taxonomy};
use crate::vecindex::{build_index, query_top_k, EmbeddingBackend, VectorIndex};

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub chunking: ChunkParams,
    pub top_k: usize,
    /// Retrieval hits scoring below this are not classified.
    #[serde(default)]
    pub min_score: Option<f64>,
    pub template: PromptTemplate,
    pub policy: AdjudicationPolicy,
    /// Hide other annotators' votes and model verdicts until a candidate is final.
    pub blind_mode: bool,
    pub parallelism: usize,
    pub seed: u64,
    /// Set by the first index build; later runs must use the same embedder.
    #[serde(default)]
    pub embedder_id: Option<String>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            chunking: ChunkParams::default(),
            top_k: DEFAULT_TOP_K,
            min_score: None,
            template: PromptTemplate::default(),
            policy: AdjudicationPolicy::default(),
            blind_mode: true,
            parallelism: 4,
            seed: 0,
            embedder_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub embedder_id: String,
    pub backend_id: String,
    pub template_id: String,
    pub chunking: ChunkParams,
    pub top_k: usize,
    pub min_score: Option<f64>,
    pub activities: Vec<String>,
    pub chunks: usize,
    pub candidates: usize,
    pub classification_failures: usize,
    pub kept_finalized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub taxonomy: Taxonomy,
    pub nace_codes: BTreeSet<NaceCode>,
    pub documents: Vec<Document>,
    #[serde(skip)]
    pub index: Option<VectorIndex>,
    pub store: CandidateStore,
    pub config: ProjectConfig,
    pub runs: Vec<RunRecord>,
}

impl Project {
    pub fn new(project_id: impl Into<String>, taxonomy: Taxonomy, nace_codes: BTreeSet<NaceCode>) -> Result<Self> {
        let project_id = project_id.into();
        if project_id.is_empty() || !project_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::InvalidArgument(format!(
                "project id {project_id:?} must be non-empty ASCII letters, digits, '-' or '_'"
            )));
        }
        taxonomy.validate()?;
        Ok(Project {
            project_id,
            taxonomy,
            nace_codes,
            documents: Vec::new(),
            index: None,
            store: CandidateStore::default(),
            config: ProjectConfig::default(),
            runs: Vec::new(),
        })
    }

    pub fn add_document(&mut self, doc: Document) -> Result<()> {
        doc.validate()?;
        if self.documents.iter().any(|d| d.doc_id == doc.doc_id) {
            return Err(Error::DuplicateId(doc.doc_id));
        }
        self.documents.push(doc);
        Ok(())
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn chunks(&self) -> Result<Vec<Chunk>> {
        let mut out = Vec::new();
        for d in &self.documents {
            out.extend(chunk_document(d, self.config.chunking)?);
        }
        Ok(out)
    }

    fn check_embedder(&self, embedder: &dyn EmbeddingBackend) -> Result<()> {
        match &self.config.embedder_id {
            Some(id) if *id != embedder.embedder_id() => Err(Error::EmbedderMismatch {
                index: id.clone(),
                provider: embedder.embedder_id(),
            }),
            _ => Ok(()),
        }
    }

    /// (Re)builds the vector index over the current chunks unless an index
    /// with the same embedder and chunk set is already present.
    pub fn ensure_index(&mut self, embedder: &dyn EmbeddingBackend) -> Result<&VectorIndex> {
        if self.documents.is_empty() {
            return Err(Error::NoDocuments);
        }
        self.check_embedder(embedder)?;
        let chunks = self.chunks()?;
        let current = self.index.as_ref().is_some_and(|idx| {
            idx.embedder_id() == embedder.embedder_id()
                && idx.len() == chunks.len()
                && idx.entries().iter().zip(&chunks).all(|(e, c)| e.chunk_id == c.chunk_id)
        });
        if !current {
            self.index = Some(build_index(&chunks, embedder)?);
            self.config.embedder_id = Some(embedder.embedder_id());
        }
        Ok(self.index.as_ref().expect("index just ensured"))
    }

    /// Referential integrity across documents, activities, candidates and votes.
    pub fn validate(&self) -> Result<()> {
        self.taxonomy.validate()?;
        self.config.policy.validate()?;
        let mut doc_ids = HashSet::new();
        for d in &self.documents {
            d.validate()?;
            if !doc_ids.insert(d.doc_id.as_str()) {
                return Err(Error::DuplicateId(d.doc_id.clone()));
            }
        }
        let mut cand_ids = HashSet::new();
        for c in &self.store.candidates {
            if !cand_ids.insert(c.candidate_id.as_str()) {
                return Err(Error::DuplicateId(c.candidate_id.clone()));
            }
            let doc = self.document(&c.doc_id).ok_or_else(|| {
                Error::Validation(format!("candidate {:?} references unknown document", c.candidate_id))
            })?;
            if c.char_start >= c.char_end || doc.slice(c.char_start, c.char_end).is_none() {
                return Err(Error::Validation(format!("candidate {:?} has an invalid span", c.candidate_id)));
            }
            if self.taxonomy.get(&c.activity_id).is_none() {
                return Err(Error::Validation(format!(
                    "candidate {:?} references unknown activity",
                    c.candidate_id
                )));
            }
        }
        let mut seen_votes = HashSet::new();
        for v in &self.store.votes {
            if !cand_ids.contains(v.candidate_id.as_str()) {
                return Err(Error::Validation(format!("vote for unknown candidate {:?}", v.candidate_id)));
            }
            if !seen_votes.insert((v.candidate_id.as_str(), v.annotator_id.as_str())) {
                return Err(Error::DuplicateVote {
                    candidate: v.candidate_id.clone(),
                    annotator: v.annotator_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn record_vote(&mut self, vote: Vote) -> Result<CandidateStatus> {
        let policy = self.config.policy;
        self.store.record_vote(vote, &policy)
    }

    /// Adjudicated dataset: one labeled pair per finalized candidate.
    pub fn export_dataset(&self) -> Result<Vec<LabeledPair>> {
        crate::adjudication::export_adjudicated(&self.store.candidates, &self.documents, &self.taxonomy.activities)
    }
}

pub fn candidate_id(project_id: &str, chunk_id: &str, activity_id: &str) -> String {
    let key = format!("{project_id}\u{1f}{chunk_id}\u{1f}{activity_id}");
    format!("cand-{}", &hex_digest(key.as_bytes())[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub record: RunRecord,
    /// `(candidate_id, error)` for pairs the backend could not classify.
    pub failures: Vec<(String, String)>,
}

/// Runs the full mapping flow. Pending candidates from earlier runs are
/// replaced; finalized candidates and their votes are kept untouched.
pub fn run_pipeline(
    project: &mut Project,
    embedder: &dyn EmbeddingBackend,
    backend: &dyn InferenceBackend,
) -> Result<RunSummary> {
    if project.documents.is_empty() {
        return Err(Error::NoDocuments);
    }
    let activities = select_activities(&project.taxonomy, &project.nace_codes);
    if activities.is_empty() {
        return Err(Error::EmptySelection);
    }
    if project.config.top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    let chunks = project.chunks()?;
    let chunk_by_id: HashMap<&str, &Chunk> = chunks.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
    let index = project.ensure_index(embedder)?.clone();

    let finalized: HashMap<String, CandidateMapping> = project
        .store
        .candidates
        .iter()
        .filter(|c| c.status.is_final())
        .map(|c| (c.candidate_id.clone(), c.clone()))
        .collect();

    struct Slot {
        candidate: CandidateMapping,
        request: Option<ClassificationRequest>,
    }
    let template = &project.config.template;
    let mut slots = Vec::new();
    let mut emitted = HashSet::new();
    for act in &activities {
        let hits = query_top_k(&index, &act.short_description, project.config.top_k, embedder)?;
        for (rank, hit) in hits.into_iter().enumerate() {
            if project.config.min_score.is_some_and(|min| hit.score < min) {
                continue;
            }
            let chunk = chunk_by_id[hit.chunk_id.as_str()];
            let id = candidate_id(&project.project_id, &chunk.chunk_id, &act.activity_id);
            emitted.insert(id.clone());
            if let Some(done) = finalized.get(&id) {
                slots.push(Slot {
                    candidate: done.clone(),
                    request: None,
                });
                continue;
            }
            let mut req = ClassificationRequest::new(chunk.text.clone(), act.short_description.clone())
                .with_ids(chunk.chunk_id.clone(), act.activity_id.clone());
            req.prompt_template_id = template.template_id().to_string();
            slots.push(Slot {
                candidate: CandidateMapping {
                    candidate_id: id,
                    doc_id: chunk.doc_id.clone(),
                    chunk_id: chunk.chunk_id.clone(),
                    char_start: chunk.char_start,
                    char_end: chunk.char_end,
                    activity_id: act.activity_id.clone(),
                    retrieval_score: hit.score,
                    rank: rank + 1,
                    model_verdict: None,
                    error: None,
                    status: CandidateStatus::Pending,
                },
                request: Some(req),
            });
        }
    }

    let requests: Vec<ClassificationRequest> = slots.iter().filter_map(|s| s.request.clone()).collect();
    let classifier = Classifier::new(backend, template);
    let mut verdicts = classifier
        .classify_batch(&requests, project.config.parallelism)
        .into_iter();
    let mut failures = Vec::new();
    let mut candidates = Vec::with_capacity(slots.len());
    for mut slot in slots {
        if slot.request.is_some() {
            match verdicts.next().expect("one verdict per request") {
                Ok(v) => slot.candidate.model_verdict = Some(v),
                Err(e) => {
                    failures.push((slot.candidate.candidate_id.clone(), e.to_string()));
                    slot.candidate.error = Some(e.to_string());
                }
            }
        }
        candidates.push(slot.candidate);
    }
    let kept_finalized = finalized.len();
    // finalized candidates this run did not reproduce stay in place
    candidates.extend(
        project
            .store
            .candidates
            .iter()
            .filter(|c| c.status.is_final() && !emitted.contains(&c.candidate_id))
            .cloned(),
    );
    let live: HashSet<&str> = candidates.iter().map(|c| c.candidate_id.as_str()).collect();
    let votes: Vec<Vote> = project
        .store
        .votes
        .iter()
        .filter(|v| live.contains(v.candidate_id.as_str()))
        .cloned()
        .collect();

    let record = RunRecord {
        run: project.runs.len() + 1,
        embedder_id: embedder.embedder_id(),
        backend_id: backend.backend_id(),
        template_id: template.template_id().to_string(),
        chunking: project.config.chunking,
        top_k: project.config.top_k,
        min_score: project.config.min_score,
        activities: activities.iter().map(|a| a.activity_id.clone()).collect(),
        chunks: chunks.len(),
        candidates: candidates.len(),
        classification_failures: failures.len(),
        kept_finalized,
    };
    project.store = CandidateStore { candidates, votes };
    project.runs.push(record.clone());
    Ok(RunSummary { record, failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationMode {
    /// Spans the model labeled 1.
    Model,
    /// Spans humans accepted.
    Adjudicated,
}

impl std::str::FromStr for AnnotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(AnnotationMode::Model),
            "adjudicated" => Ok(AnnotationMode::Adjudicated),
            _ => Err(Error::InvalidArgument(format!("unknown annotation mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandoffAnnotation {
    pub doc_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub activity_id: String,
    pub retrieval_score: f64,
    pub label: u8,
    pub candidate_id: String,
}

pub fn annotate(project: &Project, mode: AnnotationMode) -> Result<Vec<StandoffAnnotation>> {
    if mode == AnnotationMode::Adjudicated {
        let pending = project.store.pending_ids();
        if !pending.is_empty() {
            return Err(Error::PendingCandidates(pending));
        }
    }
    let mut out: Vec<StandoffAnnotation> = project
        .store
        .candidates
        .iter()
        .filter(|c| match mode {
            AnnotationMode::Model => c.model_verdict.as_ref().is_some_and(|v| v.label == 1),
            AnnotationMode::Adjudicated => c.status == CandidateStatus::Accepted,
        })
        .map(|c| StandoffAnnotation {
            doc_id: c.doc_id.clone(),
            char_start: c.char_start,
            char_end: c.char_end,
            activity_id: c.activity_id.clone(),
            retrieval_score: c.retrieval_score,
            label: 1,
            candidate_id: c.candidate_id.clone(),
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.doc_id, a.char_start, a.char_end, &a.activity_id, &a.candidate_id)
            .cmp(&(&b.doc_id, b.char_start, b.char_end, &b.activity_id, &b.candidate_id))
    });
    Ok(out)
}

/// A candidate as shown to one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub candidate: CandidateMapping,
    pub votes: Vec<Vote>,
}

/// Candidates filtered by status. In blind mode, pending candidates carry no
/// model verdict and only `annotator`'s own vote.
pub fn candidate_views(
    project: &Project,
    status: Option<CandidateStatus>,
    annotator: Option<&str>,
) -> Vec<CandidateView> {
    project
        .store
        .candidates
        .iter()
        .filter(|c| status.is_none_or(|s| c.status == s))
        .map(|c| {
            let hidden = project.config.blind_mode && !c.status.is_final();
            let mut candidate = c.clone();
            let votes = project
                .store
                .votes_for(&c.candidate_id)
                .filter(|v| !hidden || Some(v.annotator_id.as_str()) == annotator)
                .cloned()
                .collect();
            if hidden {
                candidate.model_verdict = None;
                candidate.error = None;
            }
            CandidateView { candidate, votes }
        })
        .collect()
}
