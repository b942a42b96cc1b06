#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use esgmap_core::benchmark::{LabeledPair, PARAPHRASE_PROMPT};
use esgmap_core::classifier::{Completion, CompletionRequest, InferenceBackend};
use esgmap_core::corpus::{ingest_document, ChunkParams};
use esgmap_core::pipeline::Project;
use esgmap_core::taxonomy::{load_taxonomy, NaceCode, Taxonomy};
use esgmap_core::Result;

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn transport_taxonomy() -> Taxonomy {
    load_taxonomy(&fixture_path("taxonomy_transport.jsonl")).expect("fixture taxonomy loads")
}

pub const DOCS: [(&str, &str); 4] = [
    ("docs/nordbahn_cargo.txt", "Nordbahn Cargo"),
    ("docs/vela_maritime.txt", "Vela Maritime"),
    ("docs/urbano_transit.txt", "Urbano Transit"),
    ("docs/alpenland.json", "Alpenland Rail & Road"),
];

pub fn fixture_nace() -> BTreeSet<NaceCode> {
    ["H.49", "H.50", "H.52", "F.42", "N.77"]
        .iter()
        .map(|c| c.parse().unwrap())
        .collect()
}

/// Four transport disclosures and the 12-activity taxonomy, chunked at 64
/// tokens with 8 overlap and k = 5.
pub fn fixture_project(project_id: &str) -> Project {
    let mut p = Project::new(project_id, transport_taxonomy(), fixture_nace()).unwrap();
    p.config.chunking = ChunkParams { target_size: 64, overlap: 8 };
    p.config.top_k = 5;
    for (file, company) in DOCS {
        p.add_document(ingest_document(&fixture_path(file), company).unwrap()).unwrap();
    }
    p
}

/// 265 original pairs over 12 activities, 78 of them positive.
pub fn benchmark_sized_pairs() -> Vec<LabeledPair> {
    let acts = transport_taxonomy().activities;
    (0..265)
        .map(|i| {
            let act = &acts[i % acts.len()];
            LabeledPair::original(
                format!("orig-{i:03}"),
                format!("Disclosure segment {i} describing fleet and infrastructure measure number {}.", i * 7 % 31),
                act.activity_id.clone(),
                act.short_description.clone(),
                // 78 is coprime with 265, so exactly 78 residues fall below 78
                u8::from((i * 78) % 265 < 78),
            )
        })
        .collect()
}

/// Deterministic paraphraser: rewrites the sentence with a fixed preamble.
pub struct PrefixRewriter;

impl InferenceBackend for PrefixRewriter {
    fn backend_id(&self) -> String {
        "prefix-rewriter".into()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        let (head, tail) = PARAPHRASE_PROMPT.split_once("{TEXT}").unwrap();
        let prompt = &req.messages[0].content;
        let text = &prompt[head.len()..prompt.len() - tail.len()];
        Ok(Completion::text(format!("Put differently: {text}")))
    }
}
