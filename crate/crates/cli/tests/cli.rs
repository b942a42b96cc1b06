use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn esgmap(store: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_esgmap"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("INFER_ENDPOINT")
        .env_remove("EMBED_ENDPOINT")
        .output()
        .unwrap();
    out
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = esgmap(store, args);
    assert!(
        out.status.success(),
        "esgmap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(s: &str) -> Vec<Value> {
    s.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn end_to_end_mapping_and_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let s = store.as_path();
    let tax = fixture("taxonomy_transport.jsonl");
    let p = ["--project", "acme"];

    ok(s, &["init", p[0], p[1], "--taxonomy", tax.to_str().unwrap(), "--nace", "H.49,H.52", "--top-k", "3", "--chunk-size", "64", "--overlap", "8"]);
    let dup = esgmap(s, &["init", p[0], p[1], "--taxonomy", tax.to_str().unwrap(), "--nace", "H.49"]);
    assert!(!dup.status.success());

    let docs = [fixture("docs/nordbahn_cargo.txt"), fixture("docs/alpenland.json")];
    ok(s, &["ingest", p[0], p[1], "--company", "Acme", docs[0].to_str().unwrap(), docs[1].to_str().unwrap()]);
    assert!(ok(s, &["index", p[0], p[1]]).contains("hashed-bow"));

    let oracle = tmp.path().join("oracle.jsonl");
    std::fs::write(&oracle, "").unwrap();
    ok(s, &["map", p[0], p[1], "--oracle", oracle.to_str().unwrap(), "--oracle-default", "1"]);

    let blind = lines(&ok(s, &["candidates", p[0], p[1], "--status", "pending", "--annotator", "ann1"]));
    assert!(!blind.is_empty());
    assert!(blind.iter().all(|c| c["model_verdict"].is_null()));

    let model = lines(&ok(s, &["annotate", p[0], p[1], "--mode", "model"]));
    assert_eq!(model.len(), blind.len());

    let export = tmp.path().join("dataset.jsonl");
    assert!(!esgmap(s, &["export-dataset", p[0], p[1], "--out", export.to_str().unwrap()]).status.success());

    for (i, c) in blind.iter().enumerate() {
        let id = c["candidate_id"].as_str().unwrap();
        let d = if i % 3 == 0 { "confirm" } else { "reject" };
        for a in ["ann1", "ann2", "ann3"] {
            ok(s, &["vote", p[0], p[1], id, "--annotator", a, "--decision", d]);
        }
    }
    let again = esgmap(s, &["vote", p[0], p[1], blind[0]["candidate_id"].as_str().unwrap(), "--annotator", "ann1", "--decision", "reject"]);
    assert!(!again.status.success());

    ok(s, &["export-dataset", p[0], p[1], "--out", export.to_str().unwrap()]);
    let stats: Value = serde_json::from_str(&ok(s, &["stats", export.to_str().unwrap()])).unwrap();
    assert_eq!(stats["total"].as_u64().unwrap() as usize, blind.len());
    assert_eq!(stats["positives"].as_u64().unwrap() as usize, blind.len().div_ceil(3));

    let train = tmp.path().join("train.jsonl");
    let test = tmp.path().join("test.jsonl");
    ok(s, &["split", export.to_str().unwrap(), "--test-fraction", "0.25", "--seed", "7", "--train-out", train.to_str().unwrap(), "--test-out", test.to_str().unwrap()]);
    let n_train = lines(&std::fs::read_to_string(&train).unwrap()).len();
    let n_test = lines(&std::fs::read_to_string(&test).unwrap()).len();
    assert_eq!(n_train + n_test, blind.len());
    assert_eq!(n_test, (0.25 * blind.len() as f64).round() as usize);

    let folds = tmp.path().join("folds.json");
    ok(s, &["folds", train.to_str().unwrap(), "--k", "2", "--seed", "7", "--out", folds.to_str().unwrap()]);
    let plan: Value = serde_json::from_str(&std::fs::read_to_string(&folds).unwrap()).unwrap();
    assert_eq!(plan["assignments"].as_object().unwrap().len(), n_train);

    let ft = tmp.path().join("ft.jsonl");
    ok(s, &["export-finetune", train.to_str().unwrap(), "--out", ft.to_str().unwrap(), "--set", "learning_rate=0.0001"]);
    assert_eq!(lines(&std::fs::read_to_string(&ft).unwrap()).len(), n_train);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ft.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["hyperparameters"]["learning_rate"], 0.0001);
    assert_eq!(manifest["hyperparameters"]["lora_rank"], 8);

    // Oracle that always says 1: recall of the positive class is 1.
    let report = tmp.path().join("report.json");
    let table = ok(s, &["eval", test.to_str().unwrap(), "--name", "always-yes", "--oracle", oracle.to_str().unwrap(), "--oracle-default", "1", "--json", report.to_str().unwrap()]);
    assert!(table.contains("always-yes"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["confusion"]["fn_"], 0);
    assert_eq!(report["confusion"]["tn"], 0);
}

#[test]
fn missing_project_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = esgmap(tmp.path(), &["candidates", "--project", "nope"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn map_without_backend_config_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path();
    let tax = fixture("taxonomy_transport.jsonl");
    ok(s, &["init", "-p", "x", "--taxonomy", tax.to_str().unwrap(), "--nace", "H.49"]);
    ok(s, &["ingest", "-p", "x", "--company", "N", fixture("docs/vela_maritime.txt").to_str().unwrap()]);
    let out = esgmap(s, &["map", "-p", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("INFER_ENDPOINT"));
}
