use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use esgmap_core::adjudication::{CandidateStatus, Decision, Vote};
use esgmap_core::benchmark::{
    augment, dataset_stats, export_finetune, load_dataset, make_folds, save_dataset, split_train_test,
    AugmentConfig, DatasetRole, DatasetSplit, HyperparameterManifest,
};
use esgmap_core::classifier::{Classifier, ClassificationRequest, InferenceBackend, OracleBackend, RemoteChatBackend};
use esgmap_core::corpus::{ingest_document, ChunkParams};
use esgmap_core::jsonl;
use esgmap_core::metrics::{bce_loss, render_table, weighted_metrics};
use esgmap_core::pipeline::{annotate, candidate_views, run_pipeline, AnnotationMode, Project};
use esgmap_core::store::ProjectStore;
use esgmap_core::taxonomy::{load_taxonomy, NaceCode};
use esgmap_core::vecindex::{EmbeddingBackend, HashedBagOfWords, RemoteEmbedder};

#[derive(Parser)]
#[command(name = "esgmap", version, about = "Map company disclosures to EU taxonomy activities")]
struct Cli {
    /// Directory holding project stores.
    #[arg(long, global = true, env = "ESGMAP_STORE", default_value = "esgmap-store")]
    store: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProjectArg {
    #[arg(long, short, env = "ESGMAP_PROJECT")]
    project: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    /// Deterministic hashed bag-of-words, no network.
    Hashed,
    /// EMBED_ENDPOINT / EMBED_MODEL / EMBED_DIMENSION / EMBED_API_KEY.
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    /// JSONL of {chunk_id, activity_id, label}; uses the oracle backend instead of INFER_ENDPOINT.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Label the oracle gives to pairs it has no entry for.
    #[arg(long, default_value_t = 0)]
    oracle_default: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Create a project from a taxonomy file and the company's NACE codes.
    Init {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long = "nace", required = true, value_delimiter = ',')]
        nace: Vec<NaceCode>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        chunk_size: Option<usize>,
        #[arg(long)]
        overlap: Option<usize>,
        #[arg(long)]
        min_score: Option<f64>,
    },
    /// Add disclosure documents (.txt or structured .json) to a project.
    Ingest {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        company: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Build the project's vector index.
    Index {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, value_enum, default_value = "hashed")]
        embedder: EmbedderKind,
    },
    /// Retrieve and classify candidate (chunk, activity) mappings.
    Map {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, value_enum, default_value = "hashed")]
        embedder: EmbedderKind,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// List candidates as JSONL.
    Candidates {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        status: Option<CandidateStatus>,
        /// Show the blind view for this annotator.
        #[arg(long)]
        annotator: Option<String>,
    },
    /// Record an annotator's vote on a candidate.
    Vote {
        #[command(flatten)]
        project: ProjectArg,
        candidate_id: String,
        #[arg(long)]
        annotator: String,
        #[arg(long, value_parser = parse_decision)]
        decision: Decision,
    },
    /// Emit stand-off annotations as JSONL.
    Annotate {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, default_value = "model")]
        mode: AnnotationMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export adjudicated mappings as a labeled dataset.
    ExportDataset {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class balance of a dataset file.
    Stats { dataset: PathBuf },
    /// Stratified train/test split.
    Split {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Paraphrase-augment a training set through the generation backend.
    Augment {
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Where flagged and failed paraphrases are written.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        max_attempts: u32,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Stratified k-fold assignment of a training set.
    Folds {
        train: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write chat-format fine-tuning records plus a hyperparameter manifest.
    ExportFinetune {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hyperparameter override, `name=value`.
        #[arg(long = "set", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
    /// Classify a held-out set and report precision, recall and F1.
    Eval {
        dataset: PathBuf,
        #[arg(long, default_value = "model")]
        name: String,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        /// Write the report as JSON here too.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "ESGMAP_TOKEN", hide_env_values = true)]
        token: String,
        #[arg(long, value_enum, default_value = "hashed")]
        embedder: EmbedderKind,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

fn parse_decision(s: &str) -> Result<Decision, String> {
    match s {
        "confirm" => Ok(Decision::Confirm),
        "reject" => Ok(Decision::Reject),
        _ => Err(format!("expected confirm or reject, got {s:?}")),
    }
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected name=value, got {s:?}"))
}

#[derive(Deserialize)]
struct OracleEntry {
    chunk_id: String,
    activity_id: String,
    label: u8,
}

fn embedder(kind: EmbedderKind) -> Result<Arc<dyn EmbeddingBackend>> {
    Ok(match kind {
        EmbedderKind::Hashed => Arc::new(HashedBagOfWords),
        EmbedderKind::Remote => Arc::new(RemoteEmbedder::from_env()?),
    })
}

fn backend(args: &BackendArgs) -> Result<Arc<dyn InferenceBackend>> {
    match &args.oracle {
        Some(path) => {
            let mut oracle = OracleBackend::new();
            oracle.default_label = args.oracle_default;
            for e in jsonl::read::<OracleEntry>(path)? {
                oracle.insert(&e.chunk_id, &e.activity_id, e.label);
            }
            Ok(Arc::new(oracle))
        }
        None => Ok(Arc::new(RemoteChatBackend::from_env()?)),
    }
}

fn with_project<R>(store: &ProjectStore, id: &str, f: impl FnOnce(&mut Project) -> Result<R>) -> Result<R> {
    let mut project = store.load(id).with_context(|| format!("loading project {id:?}"))?;
    let out = f(&mut project)?;
    store.save(&project)?;
    Ok(out)
}

fn write_out(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let store = ProjectStore::open(&cli.store)?;

    match cli.command {
        Command::Init { project, taxonomy, nace, top_k, chunk_size, overlap, min_score } => {
            if store.exists(&project.project) {
                bail!("project {:?} already exists", project.project);
            }
            let taxonomy = load_taxonomy(&taxonomy)?;
            let mut p = Project::new(project.project, taxonomy, nace.into_iter().collect::<BTreeSet<_>>())?;
            let defaults = ChunkParams::default();
            p.config.chunking = ChunkParams {
                target_size: chunk_size.unwrap_or(defaults.target_size),
                overlap: overlap.unwrap_or(defaults.overlap),
            };
            if let Some(k) = top_k {
                p.config.top_k = k;
            }
            p.config.min_score = min_score;
            p.validate()?;
            store.save(&p)?;
            println!("created project {} ({} activities)", p.project_id, p.taxonomy.len());
        }
        Command::Ingest { project, company, files } => {
            with_project(&store, &project.project, |p| {
                for f in &files {
                    let doc = ingest_document(f, &company)?;
                    println!("{}\t{}", doc.doc_id, f.display());
                    p.add_document(doc)?;
                }
                Ok(())
            })?;
        }
        Command::Index { project, embedder: kind } => {
            let e = embedder(kind)?;
            with_project(&store, &project.project, |p| {
                let n = p.ensure_index(e.as_ref())?.len();
                println!("indexed {n} chunks with {}", e.embedder_id());
                Ok(())
            })?;
        }
        Command::Map { project, embedder: kind, backend: b } => {
            let e = embedder(kind)?;
            let b = backend(&b)?;
            let summary = with_project(&store, &project.project, |p| Ok(run_pipeline(p, e.as_ref(), b.as_ref())?))?;
            println!("{}", serde_json::to_string_pretty(&summary.record)?);
            for (id, err) in &summary.failures {
                eprintln!("classification failed for {id}: {err}");
            }
        }
        Command::Candidates { project, status, annotator } => {
            let p = store.load(&project.project)?;
            write_out(None, &jsonl::to_string(&candidate_views(&p, status, annotator.as_deref())))?;
        }
        Command::Vote { project, candidate_id, annotator, decision } => {
            let status = with_project(&store, &project.project, |p| {
                Ok(p.record_vote(Vote::now(candidate_id.clone(), annotator, decision))?)
            })?;
            println!("{candidate_id}\t{}", serde_json::to_value(status)?.as_str().unwrap_or_default());
        }
        Command::Annotate { project, mode, out } => {
            let p = store.load(&project.project)?;
            write_out(out.as_deref(), &jsonl::to_string(&annotate(&p, mode)?))?;
        }
        Command::ExportDataset { project, out } => {
            let pairs = store.load(&project.project)?.export_dataset()?;
            save_dataset(&out, &pairs)?;
            println!("wrote {} pairs to {}", pairs.len(), out.display());
        }
        Command::Stats { dataset } => {
            let pairs = load_dataset(&dataset, DatasetRole::Any)?;
            println!("{}", serde_json::to_string_pretty(&dataset_stats(&pairs))?);
        }
        Command::Split { dataset, test_fraction, seed, train_out, test_out } => {
            let pairs = load_dataset(&dataset, DatasetRole::Any)?;
            let DatasetSplit { train, test } = split_train_test(&pairs, test_fraction, seed)?;
            save_dataset(&train_out, &train)?;
            save_dataset(&test_out, &test)?;
            println!("train {} / test {}", train.len(), test.len());
        }
        Command::Augment { dataset, n, out, report, max_attempts, parallelism } => {
            let pairs = load_dataset(&dataset, DatasetRole::Any)?;
            let generator = RemoteChatBackend::from_env()?;
            let outcome = augment(&pairs, &generator, n, AugmentConfig { max_attempts, parallelism })?;
            let mut all = pairs;
            all.extend(outcome.synthetic.iter().cloned());
            save_dataset(&out, &all)?;
            if let Some(r) = report {
                let body = serde_json::json!({ "flagged": outcome.flagged, "failed": outcome.failed });
                std::fs::write(&r, serde_json::to_string_pretty(&body)?)?;
            }
            println!(
                "{} synthetic, {} flagged, {} failed",
                outcome.synthetic.len(),
                outcome.flagged.len(),
                outcome.failed.len()
            );
        }
        Command::Folds { train, k, seed, out } => {
            let pairs = load_dataset(&train, DatasetRole::Any)?;
            let split = DatasetSplit { train: pairs, test: vec![] };
            let plan = make_folds(&split, k, seed)?;
            std::fs::write(&out, serde_json::to_string_pretty(&plan)?)?;
            println!("fold sizes {:?}", plan.fold_sizes());
        }
        Command::ExportFinetune { dataset, out, set } => {
            let pairs = load_dataset(&dataset, DatasetRole::Any)?;
            let mut hp = HyperparameterManifest::default();
            for (k, v) in &set {
                hp.set(k, v)?;
            }
            let manifest = export_finetune(&pairs, &Default::default(), &out, &hp)?;
            println!("wrote {} records to {}", manifest.records, out.display());
        }
        Command::Eval { dataset, name, backend: b, parallelism, json } => {
            let pairs = load_dataset(&dataset, DatasetRole::TestOnly)?;
            let b = backend(&b)?;
            let template = Default::default();
            let reqs: Vec<_> = pairs
                .iter()
                .map(|p| ClassificationRequest::new(&p.chunk_text, &p.activity_text).with_ids(&p.pair_id, &p.activity_id))
                .collect();
            let verdicts = Classifier::new(b.as_ref(), &template)
                .classify_batch(&reqs, parallelism)
                .into_iter()
                .collect::<esgmap_core::Result<Vec<_>>>()?;
            let y_true: Vec<u8> = pairs.iter().map(|p| p.label).collect();
            let y_pred: Vec<u8> = verdicts.iter().map(|v| v.label).collect();
            let mut report = weighted_metrics(&y_true, &y_pred)?;
            if let Some(probs) = verdicts.iter().map(|v| v.probability).collect::<Option<Vec<_>>>() {
                report.bce_loss = Some(bce_loss(&y_true, &probs)?);
            }
            print!("{}", render_table(&[(name, report.clone())]));
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Serve { addr, token, embedder: kind, backend: b } => {
            let state = esgmap_server::AppState::new(store, token, embedder(kind)?, backend(&b)?);
            tokio::runtime::Runtime::new()?.block_on(esgmap_server::serve(state, addr))?;
        }
    }
    Ok(())
}
