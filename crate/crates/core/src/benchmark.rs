//! Labeled (excerpt, activity, class) datasets: validation, stratified
//! train/test splitting, paraphrase augmentation, cross-validation folds and
//! chat-format fine-tuning export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ChatMessage, CompletionRequest, InferenceBackend, PromptTemplate, Role};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::parallel::ordered_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair_id: String,
    pub chunk_text: String,
    pub activity_id: String,
    pub activity_text: String,
    pub label: u8,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl LabeledPair {
    pub fn original(
        pair_id: impl Into<String>,
        chunk_text: impl Into<String>,
        activity_id: impl Into<String>,
        activity_text: impl Into<String>,
        label: u8,
    ) -> Self {
        LabeledPair {
            pair_id: pair_id.into(),
            chunk_text: chunk_text.into(),
            activity_id: activity_id.into(),
            activity_text: activity_text.into(),
            label,
            provenance: Provenance::Original,
            parent_id: None,
        }
    }
}

/// Whether a dataset file may hold synthetic items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetRole {
    Any,
    TestOnly,
}

/// Checks labels, id uniqueness and synthetic-parent consistency.
pub fn validate_pairs(pairs: &[LabeledPair], role: DatasetRole) -> Result<()> {
    let by_id: HashMap<&str, &LabeledPair> = pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    if by_id.len() != pairs.len() {
        let mut seen = HashSet::new();
        let dup = pairs.iter().find(|p| !seen.insert(&p.pair_id)).expect("a duplicate exists");
        return Err(Error::DuplicateId(dup.pair_id.clone()));
    }
    for p in pairs {
        let fail = |m: String| Err(Error::Validation(format!("pair {:?}: {m}", p.pair_id)));
        if p.label > 1 {
            return fail(format!("label {} is not 0 or 1", p.label));
        }
        match (p.provenance, &p.parent_id) {
            (Provenance::Original, None) => {}
            (Provenance::Original, Some(_)) => return fail("original pair has a parent_id".into()),
            (Provenance::Synthetic, None) => return fail("synthetic pair lacks parent_id".into()),
            (Provenance::Synthetic, Some(parent)) => {
                if role == DatasetRole::TestOnly {
                    return fail("synthetic item in a test-only dataset".into());
                }
                let Some(parent) = by_id.get(parent.as_str()) else {
                    return fail(format!("orphan parent_id {parent:?}"));
                };
                if parent.activity_id != p.activity_id || parent.label != p.label {
                    return fail("activity or label differs from parent".into());
                }
            }
        }
    }
    Ok(())
}

pub fn load_dataset(path: &Path, role: DatasetRole) -> Result<Vec<LabeledPair>> {
    let pairs: Vec<LabeledPair> = jsonl::read(path)?;
    validate_pairs(&pairs, role)?;
    Ok(pairs)
}

pub fn save_dataset(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    jsonl::write(path, pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCount {
    pub total: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub positives: usize,
    pub negatives: usize,
    pub original: ClassCount,
    pub synthetic: ClassCount,
    pub per_activity: BTreeMap<String, ClassCount>,
}

pub fn dataset_stats(pairs: &[LabeledPair]) -> DatasetStats {
    let mut s = DatasetStats::default();
    for p in pairs {
        let pos = usize::from(p.label == 1);
        s.total += 1;
        s.positives += pos;
        let bucket = match p.provenance {
            Provenance::Original => &mut s.original,
            Provenance::Synthetic => &mut s.synthetic,
        };
        bucket.total += 1;
        bucket.positives += pos;
        let act = s.per_activity.entry(p.activity_id.clone()).or_default();
        act.total += 1;
        act.positives += pos;
    }
    s.negatives = s.total - s.positives;
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        let train_ids: HashSet<&str> = self.train.iter().map(|p| p.pair_id.as_str()).collect();
        if let Some(p) = self.test.iter().find(|p| train_ids.contains(p.pair_id.as_str())) {
            return Err(Error::Validation(format!("pair {:?} is on both sides", p.pair_id)));
        }
        if let Some(p) = self.test.iter().find(|p| p.provenance == Provenance::Synthetic) {
            return Err(Error::Validation(format!("synthetic pair {:?} in test set", p.pair_id)));
        }
        Ok(())
    }
}

fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// Stratified random split: `round(test_fraction * N)` test items, with the
/// test positive count proportional to the global positive rate.
pub fn split_train_test(pairs: &[LabeledPair], test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    if let Some(p) = pairs.iter().find(|p| p.provenance != Provenance::Original) {
        return Err(Error::InvalidArgument(format!(
            "only original pairs can be split; {:?} is synthetic",
            p.pair_id
        )));
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| pairs[i].label == 1);
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "stratification needs at least 2 items per class ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let n = pairs.len();
    let n_test = round_count(test_fraction * n as f64).clamp(1, n - 1);
    let test_pos = round_count(n_test as f64 * pos.len() as f64 / n as f64)
        .min(pos.len())
        .max(n_test.saturating_sub(neg.len()));
    let test_neg = n_test - test_pos;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut in_test = vec![false; n];
    for &i in pos[..test_pos].iter().chain(&neg[..test_neg]) {
        in_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = pairs.iter().cloned().enumerate().partition(|(i, _)| in_test[*i]);
    Ok(DatasetSplit {
        train: train.into_iter().map(|(_, p)| p).collect(),
        test: test.into_iter().map(|(_, p)| p).collect(),
    })
}

pub const PARAPHRASE_TEMPLATE_ID: &str = "paraphrase-v1";
pub const PARAPHRASE_PROMPT: &str = "Rewrite the following sentence in different words, preserving its exact meaning: {TEXT}. Return only the rewritten sentence.";

pub fn render_paraphrase_prompt(text: &str) -> String {
    PARAPHRASE_PROMPT.replacen("{TEXT}", text, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    /// Generation attempts per paraphrase before it is flagged.
    pub max_attempts: u32,
    pub parallelism: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_attempts: 3,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedParaphrase {
    pub parent_id: String,
    pub variant: usize,
    pub last_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedParaphrase {
    pub parent_id: String,
    pub variant: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    pub synthetic: Vec<LabeledPair>,
    /// Paraphrases that kept echoing the parent text.
    pub flagged: Vec<FlaggedParaphrase>,
    pub failed: Vec<FailedParaphrase>,
}

enum Attempt {
    Ok(String),
    Echo(String),
    Failed(Error),
}

fn paraphrase_once(parent: &LabeledPair, generator: &dyn InferenceBackend, attempts: u32) -> Attempt {
    let req = CompletionRequest {
        messages: vec![ChatMessage::new(Role::User, render_paraphrase_prompt(&parent.chunk_text))],
        chunk_id: Some(parent.pair_id.clone()),
        activity_id: Some(parent.activity_id.clone()),
    };
    let parent_norm = parent.chunk_text.trim().to_lowercase();
    let mut last = String::new();
    for _ in 0..attempts.max(1) {
        match generator.complete(&req) {
            Ok(out) => {
                let text = out.text.trim().to_string();
                if !text.is_empty() && text.to_lowercase() != parent_norm {
                    return Attempt::Ok(text);
                }
                last = text;
            }
            Err(e) => return Attempt::Failed(e),
        }
    }
    Attempt::Echo(last)
}

/// Generates `n_paraphrases` synthetic variants of each original pair. The
/// synthetic pair inherits activity and label; its id is `<parent>#p<j>`.
pub fn augment(
    pairs: &[LabeledPair],
    generator: &dyn InferenceBackend,
    n_paraphrases: usize,
    config: AugmentConfig,
) -> Result<AugmentOutcome> {
    if let Some(p) = pairs.iter().find(|p| p.provenance != Provenance::Original) {
        return Err(Error::InvalidArgument(format!("cannot augment synthetic pair {:?}", p.pair_id)));
    }
    let jobs: Vec<(&LabeledPair, usize)> = pairs
        .iter()
        .flat_map(|p| (1..=n_paraphrases).map(move |j| (p, j)))
        .collect();
    let results = ordered_map(&jobs, config.parallelism, |(p, _)| {
        paraphrase_once(p, generator, config.max_attempts)
    });
    let mut out = AugmentOutcome::default();
    for ((parent, variant), attempt) in jobs.into_iter().zip(results) {
        match attempt {
            Attempt::Ok(text) => out.synthetic.push(LabeledPair {
                pair_id: format!("{}#p{variant}", parent.pair_id),
                chunk_text: text,
                activity_id: parent.activity_id.clone(),
                activity_text: parent.activity_text.clone(),
                label: parent.label,
                provenance: Provenance::Synthetic,
                parent_id: Some(parent.pair_id.clone()),
            }),
            Attempt::Echo(last_output) => out.flagged.push(FlaggedParaphrase {
                parent_id: parent.pair_id.clone(),
                variant,
                last_output,
            }),
            Attempt::Failed(e) => out.failed.push(FailedParaphrase {
                parent_id: parent.pair_id.clone(),
                variant,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

/// One cross-validation round: train on `train`, early-stop on `validation`,
/// score on `heldout`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldData {
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub heldout: Vec<LabeledPair>,
}

/// Stratified k-fold assignment: shuffle each class, lay positives then
/// negatives out round-robin across folds.
pub fn make_folds(split: &DatasetSplit, k: usize, seed: u64) -> Result<FoldPlan> {
    let train = &split.train;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2 (got {k})")));
    }
    if k > train.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} training pairs",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<&LabeledPair>, Vec<&LabeledPair>) = train.iter().partition(|p| p.label == 1);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let assignments = pos
        .into_iter()
        .chain(neg)
        .enumerate()
        .map(|(i, p)| (p.pair_id.clone(), i % k))
        .collect::<BTreeMap<_, _>>();
    if assignments.len() != train.len() {
        return Err(Error::Validation("duplicate pair ids in training set".into()));
    }
    Ok(FoldPlan { k, assignments })
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn fold_members<'a>(&self, train: &'a [LabeledPair], fold: usize) -> Vec<&'a LabeledPair> {
        train
            .iter()
            .filter(|p| self.assignments.get(&p.pair_id) == Some(&fold))
            .collect()
    }

    /// Builds round `fold`, holding out `validation_ratio` of the remaining
    /// training pairs as a validation set.
    pub fn materialize(
        &self,
        train: &[LabeledPair],
        fold: usize,
        validation_ratio: f64,
        seed: u64,
    ) -> Result<FoldData> {
        if fold >= self.k {
            return Err(Error::InvalidArgument(format!("fold {fold} out of range 0..{}", self.k)));
        }
        let (heldout, rest): (Vec<LabeledPair>, Vec<LabeledPair>) = train
            .iter()
            .cloned()
            .partition(|p| self.assignments.get(&p.pair_id) == Some(&fold));
        let (train, validation) = holdout_validation(&rest, validation_ratio, seed)?;
        Ok(FoldData {
            train,
            validation,
            heldout,
        })
    }
}

/// Splits off `round(ratio * N)` random pairs as a validation set.
pub fn holdout_validation(
    pairs: &[LabeledPair],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("validation ratio {ratio} not in [0, 1)")));
    }
    let n_val = round_count(ratio * pairs.len() as f64);
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; pairs.len()];
    for &i in &idx[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = pairs.iter().cloned().enumerate().partition(|(i, _)| is_val[*i]);
    Ok((
        train.into_iter().map(|(_, p)| p).collect(),
        val.into_iter().map(|(_, p)| p).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationPlacement {
    InsideFold,
    BeforeFolding,
}

/// Fine-tuning settings carried alongside every export. Training itself runs elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterManifest {
    pub gradient_accumulation_steps: u32,
    pub learning_rate: f64,
    pub validation_split_ratio: f64,
    pub validation_placement: ValidationPlacement,
    pub cv_folds: u32,
    pub eval_cadence: String,
    pub optimizer: String,
    pub adapter: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub lora_target_modules: Vec<String>,
    /// Fields changed from the defaults, as `name -> value given`.
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
}

impl Default for HyperparameterManifest {
    fn default() -> Self {
        HyperparameterManifest {
            gradient_accumulation_steps: 5,
            learning_rate: 3e-4,
            validation_split_ratio: 0.15,
            validation_placement: ValidationPlacement::InsideFold,
            cv_folds: 10,
            eval_cadence: "every 10% of total steps".into(),
            optimizer: "AdamW".into(),
            adapter: "LoRA".into(),
            lora_rank: 8,
            lora_alpha: 32,
            lora_dropout: 0.05,
            lora_target_modules: vec!["query_key_value".into()],
            overrides: BTreeMap::new(),
        }
    }
}

impl HyperparameterManifest {
    /// Sets one field from its string form and records the override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key}")))
        }
        match key {
            "gradient_accumulation_steps" => self.gradient_accumulation_steps = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "validation_split_ratio" => self.validation_split_ratio = num(key, value)?,
            "validation_placement" => {
                self.validation_placement = serde_json::from_value(value.into())
                    .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))?
            }
            "cv_folds" => self.cv_folds = num(key, value)?,
            "eval_cadence" => self.eval_cadence = value.into(),
            "optimizer" => self.optimizer = value.into(),
            "adapter" => self.adapter = value.into(),
            "lora_rank" => self.lora_rank = num(key, value)?,
            "lora_alpha" => self.lora_alpha = num(key, value)?,
            "lora_dropout" => self.lora_dropout = num(key, value)?,
            "lora_target_modules" => {
                self.lora_target_modules = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            _ => return Err(Error::InvalidArgument(format!("unknown hyperparameter {key:?}"))),
        }
        self.overrides.insert(key.to_string(), value.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub template_id: String,
    pub records: usize,
    pub hyperparameters: HyperparameterManifest,
}

pub fn finetune_record(pair: &LabeledPair, tmpl: &PromptTemplate) -> FinetuneRecord {
    let mut messages = tmpl.messages(&pair.chunk_text, &pair.activity_text);
    messages.push(ChatMessage::new(Role::Assistant, pair.label.to_string()));
    FinetuneRecord { messages }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn export_finetune_string(pairs: &[LabeledPair], tmpl: &PromptTemplate) -> String {
    let records: Vec<FinetuneRecord> = pairs.iter().map(|p| finetune_record(p, tmpl)).collect();
    jsonl::to_string(&records)
}

/// Writes one chat record per pair and a `<path>.manifest.json` sidecar.
pub fn export_finetune(
    pairs: &[LabeledPair],
    tmpl: &PromptTemplate,
    path: &Path,
    hyperparameters: &HyperparameterManifest,
) -> Result<ExportManifest> {
    std::fs::write(path, export_finetune_string(pairs, tmpl)).map_err(|e| Error::io(path, e))?;
    let manifest = ExportManifest {
        template_id: tmpl.template_id().to_string(),
        records: pairs.len(),
        hyperparameters: hyperparameters.clone(),
    };
    let side = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedExample {
    pub chunk_text: String,
    pub activity_text: String,
    pub label: u8,
}

/// Inverse of [`export_finetune`] for records rendered with `tmpl`.
pub fn parse_finetune(text: &str, tmpl: &PromptTemplate) -> Result<Vec<ParsedExample>> {
    let records: Vec<FinetuneRecord> = jsonl::parse_str(text, "finetune export")?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let bad = |m: &str| Error::parse("finetune export", i + 1, m);
            let [system, user, assistant] = r.messages.as_slice() else {
                return Err(bad("expected system, user and assistant messages"));
            };
            if (system.role, user.role, assistant.role) != (Role::System, Role::User, Role::Assistant) {
                return Err(bad("unexpected message roles"));
            }
            let label = match assistant.content.as_str() {
                "1" => 1,
                "0" => 0,
                _ => return Err(bad("assistant content must be \"1\" or \"0\"")),
            };
            let (chunk_text, activity_text) = tmpl.unrender(&user.content)?;
            Ok(ParsedExample {
                chunk_text,
                activity_text,
                label,
            })
        })
        .collect()
}
