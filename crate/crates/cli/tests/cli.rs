use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gig_core::model::ModelConfig;
use gig_core::training::TrainConfig;
use serde::Deserialize;

fn gig(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gig"))
        .args(args)
        .current_dir(dir)
        .env_remove("GIG_OUT")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gig(dir, args);
    assert!(
        out.status.success(),
        "gig {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TRAIN: &str = r#"
data = ["data"]
output = "run"

[model]
d = 8
heads = 2
decoder_layers = 1

[train]
batch_size = 8
epochs = 2
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.toml"), "terms = 30\ngenes = 40\n").unwrap();
    fs::write(dir.path().join("exp.toml"), TRAIN).unwrap();
    ok(dir.path(), &["build-data", "--synth", "synth.toml", "--out", "data", "--min-count", "1"]);
    dir
}

#[test]
fn build_data_writes_the_corpus_and_a_manifest() {
    let dir = workspace();
    let data = dir.path().join("data");
    for f in ["corpus.txt", "split.json", "vocab.txt", "stats.json", "manifest.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "build-data");
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert_eq!(artifacts.len(), 4);
    assert_eq!(artifacts["corpus.txt"].as_str().unwrap().len(), 64);

    // a parsed corpus file round-trips through build-data unchanged
    let again = ok(dir.path(), &["build-data", "--corpus", "data/corpus.txt", "--out", "copy", "--min-count", "1"]);
    assert!(again.contains("30 terms"));
    assert_eq!(
        fs::read(data.join("corpus.txt")).unwrap(),
        fs::read(dir.path().join("copy/corpus.txt")).unwrap()
    );
    assert_eq!(
        fs::read(data.join("vocab.txt")).unwrap(),
        fs::read(dir.path().join("copy/vocab.txt")).unwrap()
    );
}

#[test]
fn train_generate_eval_and_resume() {
    let dir = workspace();
    let p = dir.path();
    ok(p, &["train", "--config", "exp.toml", "--setting", "c"]);
    let run = p.join("run");
    let history = fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().filter(|l| l.contains("\"validation\"")).count(), 2);
    let model: serde_json::Value = serde_json::from_slice(&fs::read(run.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["flags"]["use_child_nodes"], true);
    assert_eq!(model["config"]["flags"]["use_parent_nodes"], false);

    let params = fs::read(run.join("params.bin")).unwrap();
    ok(p, &["train", "--config", "exp.toml", "--setting", "c", "--resume"]);
    assert_eq!(fs::read(run.join("params.bin")).unwrap(), params);
    assert_eq!(fs::read_to_string(run.join("history.jsonl")).unwrap(), history);

    let split: serde_json::Value = serde_json::from_slice(&fs::read(p.join("data/split.json")).unwrap()).unwrap();
    let term = split["test"][0].as_str().unwrap().to_string();
    let out = ok(p, &["generate", "--data", "data", "--model", "run", "--term", &term, "--attention", "--out", "gen"]);
    assert!(out.starts_with(&format!("{term}\t")));
    let tsv = fs::read_to_string(p.join("gen/generations.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1);
    let attention = fs::read_to_string(p.join("gen/attention.jsonl")).unwrap();
    for line in attention.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["term"], term.as_str());
        assert!(rec["nodes"].as_array().unwrap().len() <= 2);
    }

    let summary = ok(p, &["eval", "--data", "data", "--model", "run", "--split", "test"]);
    assert!(summary.contains("BLEU") && summary.contains("METEOR"));
    let report = fs::read_to_string(run.join("eval-test/report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), split["test"].as_array().unwrap().len() + 1);
}

#[test]
fn eval_scores_a_hypothesis_file() {
    let dir = workspace();
    let p = dir.path();
    let corpus = fs::read_to_string(p.join("data/corpus.txt")).unwrap();
    let refs: String = corpus
        .lines()
        .filter_map(|l| l.strip_prefix("DESC "))
        .take(5)
        .map(|l| {
            let (id, text) = l.split_once(' ').unwrap();
            format!("{id}\t{text}\n")
        })
        .collect();
    fs::write(p.join("hyp.tsv"), &refs).unwrap();
    let out = ok(p, &["eval", "--data", "data", "--hypotheses", "hyp.tsv", "--out", "scores"]);
    assert!(out.contains("BLEU 100.00"), "{out}");
    let last = fs::read_to_string(p.join("scores/report.jsonl")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(last.lines().last().unwrap()).unwrap();
    assert_eq!(summary["rouge_l"], 100.0);

    fs::write(p.join("bad.tsv"), "GO:nope\tsome words\n").unwrap();
    assert_eq!(gig(p, &["eval", "--data", "data", "--hypotheses", "bad.tsv"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(gig(p, &["--help"]).status.code(), Some(0));
    assert_eq!(gig(p, &["--version"]).status.code(), Some(0));
    assert_eq!(gig(p, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(gig(p, &["build-data"]).status.code(), Some(1));
    assert_eq!(gig(p, &["eval", "--data", "missing", "--model", "m"]).status.code(), Some(2));

    fs::write(p.join("typo.toml"), "data = [\"d\"]\noutput = \"o\"\nsedes = [1]\n").unwrap();
    let out = gig(p, &["ablate", "--config", "typo.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sedes"));

    fs::write(p.join("broken.txt"), "TERM a NAME x\nISA a b\n").unwrap();
    let out = gig(p, &["build-data", "--corpus", "broken.txt", "--out", "d"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["selftest"]);
    assert!(out.lines().all(|l| !l.starts_with("FAIL")));
    assert!(out.contains("checks passed"));
}

#[derive(Deserialize)]
struct Sections {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if path.file_name().unwrap().to_string_lossy().starts_with("synthetic") {
            toml::from_str::<gig_core::data::SynthConfig>(&text).unwrap();
        } else {
            let s: Sections = toml::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            s.model.unwrap().validate().unwrap();
            s.train.unwrap().validate().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 4);
}
