//! On-disk project store: one directory per project holding a manifest and
//! one line-delimited record file per entity type.
//!
//! ```text
//! <project>/manifest.json
//! <project>/taxonomy.jsonl
//! <project>/documents.jsonl
//! <project>/candidates.jsonl
//! <project>/votes.jsonl
//! <project>/index.bin        (optional)
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjudication::CandidateStore;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::pipeline::{Project, ProjectConfig, RunRecord};
use crate::taxonomy::{NaceCode, Taxonomy};
use crate::vecindex::VectorIndex;

pub const SCHEMA: &str = "esgmap-project/1";

const MANIFEST: &str = "manifest.json";
const TAXONOMY: &str = "taxonomy.jsonl";
const DOCUMENTS: &str = "documents.jsonl";
const CANDIDATES: &str = "candidates.jsonl";
const VOTES: &str = "votes.jsonl";
const INDEX: &str = "index.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub project_id: String,
    pub taxonomy_version: String,
    pub nace_codes: BTreeSet<NaceCode>,
    pub config: ProjectConfig,
    #[serde(default)]
    pub runs: Vec<RunRecord>,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    let dest = dir.join(name);
    std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
}

pub fn save_project(project: &Project, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        schema: SCHEMA.to_string(),
        project_id: project.project_id.clone(),
        taxonomy_version: project.taxonomy.version.clone(),
        nace_codes: project.nace_codes.clone(),
        config: project.config.clone(),
        runs: project.runs.clone(),
    };
    write_atomic(dir, TAXONOMY, jsonl::to_string(&project.taxonomy.activities).as_bytes())?;
    write_atomic(dir, DOCUMENTS, jsonl::to_string(&project.documents).as_bytes())?;
    write_atomic(dir, CANDIDATES, jsonl::to_string(&project.store.candidates).as_bytes())?;
    write_atomic(dir, VOTES, jsonl::to_string(&project.store.votes).as_bytes())?;
    match &project.index {
        Some(index) => {
            let mut buf = Vec::new();
            index.write_to(&mut buf).map_err(|e| Error::io(dir.join(INDEX), e))?;
            write_atomic(dir, INDEX, &buf)?;
        }
        None => {
            let path = dir.join(INDEX);
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    // manifest last: a store is only complete once it is present
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(dir, MANIFEST, json.as_bytes())
}

pub fn load_project(dir: &Path) -> Result<Project> {
    let manifest_path = dir.join(MANIFEST);
    let raw = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| Error::parse(manifest_path.display(), 1, e))?;
    let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or_default();
    if schema != SCHEMA {
        return Err(Error::SchemaVersion {
            found: schema.to_string(),
            expected: SCHEMA.to_string(),
        });
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::parse(manifest_path.display(), 1, e))?;
    let index_path = dir.join(INDEX);
    let index = if index_path.exists() {
        Some(VectorIndex::load(&index_path)?)
    } else {
        None
    };
    let project = Project {
        project_id: manifest.project_id,
        taxonomy: Taxonomy {
            version: manifest.taxonomy_version,
            activities: jsonl::read(&dir.join(TAXONOMY))?,
        },
        nace_codes: manifest.nace_codes,
        documents: jsonl::read(&dir.join(DOCUMENTS))?,
        index,
        store: CandidateStore {
            candidates: jsonl::read(&dir.join(CANDIDATES))?,
            votes: jsonl::read(&dir.join(VOTES))?,
        },
        config: manifest.config,
        runs: manifest.runs,
    };
    project.validate()?;
    Ok(project)
}

/// A directory of projects, one subdirectory per project id.
#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(ProjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, project_id: &str) -> PathBuf {
        self.root.join(project_id)
    }

    pub fn exists(&self, project_id: &str) -> bool {
        self.project_dir(project_id).join(MANIFEST).exists()
    }

    pub fn load(&self, project_id: &str) -> Result<Project> {
        load_project(&self.project_dir(project_id))
    }

    pub fn save(&self, project: &Project) -> Result<()> {
        save_project(project, &self.project_dir(&project.project_id))
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let entries = std::fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(MANIFEST).exists())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }
}
