use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use marn_core::AttentionTrace;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn marn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marn")).args(args).output().expect("spawn marn")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const GEN_50: &str = r#"
n = 50

[task]
min_len = 6
max_len = 8
noise = 0.1
seed = 5
rule = { kind = "co_occurrence", lag = 2, first = { modality = "a", dim = 0 }, second = { modality = "b", dim = 1 } }
modalities = [{ name = "a", d_in = 2 }, { name = "b", d_in = 3 }]
"#;

fn run_config(variant: &str, k: usize, d_mem: usize, epochs: usize) -> String {
    format!(
        r#"
seed = 3
out_dir = "out"

[data]
train = "data/train.jsonl"
validation = "data/validation.jsonl"
test = "data/test.jsonl"

[model]
k = {k}
variant = "{variant}"
task = {{ kind = "classification", classes = 2 }}
modalities = [
  {{ name = "a", d_in = 2, d_mem = {d_mem}, d_local = 2 }},
  {{ name = "b", d_in = 3, d_mem = {d_mem}, d_local = 2 }},
]

[train]
epochs = {epochs}
batch_size = 8
learning_rate = 0.01
"#
    )
}

/// Temp dir holding `gen.toml` and a generated dataset under `data/`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), GEN_50).unwrap();
    let out = marn(&["gen", "--config", p(&dir.path().join("gen.toml")), "--out", p(&dir.path().join("data"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn gen_splits_sixty_twenty_twenty() {
    let dir = workspace();
    let data = dir.path().join("data");
    assert_eq!(lines(&data.join("train.jsonl")), 30);
    assert_eq!(lines(&data.join("validation.jsonl")), 10);
    assert_eq!(lines(&data.join("test.jsonl")), 10);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["task"]["rule"]["kind"], "co_occurrence");
}

#[test]
fn gen_is_reproducible() {
    let dir = workspace();
    let again = dir.path().join("again");
    assert!(marn(&["gen", "--config", p(&dir.path().join("gen.toml")), "--out", p(&again)]).status.success());
    for f in ["train.jsonl", "validation.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join("data").join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_seed_flag_changes_data() {
    let dir = workspace();
    let other = dir.path().join("other");
    assert!(marn(&["gen", "--config", p(&dir.path().join("gen.toml")), "--out", p(&other), "--seed", "6"]).status.success());
    assert_ne!(fs::read(dir.path().join("data/train.jsonl")).unwrap(), fs::read(other.join("train.jsonl")).unwrap());
}

#[test]
fn invalid_spec_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = GEN_50.replace("lag = 2", "lag = 6");
    fs::write(dir.path().join("gen.toml"), bad).unwrap();
    let out_dir = dir.path().join("data");
    let out = marn(&["gen", "--config", p(&dir.path().join("gen.toml")), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn unwritable_output_is_an_input_error() {
    let dir = workspace();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = marn(&["gen", "--config", p(&dir.path().join("gen.toml")), "--out", p(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = workspace();
    let cfg = run_config("full", 2, 3, 1).replace("learning_rate", "learnig_rate");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = marn(&["train", "--config", p(&dir.path().join("run.toml"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learnig_rate"));
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = workspace();
    fs::write(dir.path().join("run.toml"), run_config("full", 2, 3, 1).replace("data/test.jsonl", "data/nope.jsonl")).unwrap();
    let out = marn(&["train", "--config", p(&dir.path().join("run.toml"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn train_then_eval_no_mab() {
    let dir = workspace();
    fs::write(dir.path().join("run.toml"), run_config("no_mab", 2, 3, 2)).unwrap();
    let cfg = dir.path().join("run.toml");
    let out = marn(&["train", "--config", p(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["test"]["n"], 10);
    assert_eq!(report["variant"], "no_mab");
    for f in ["checkpoint.json", "history.csv", "report.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    assert_eq!(lines(&dir.path().join("out/history.csv")), 3);

    let eval = marn(&["eval", "--config", p(&cfg)]);
    assert!(eval.status.success());
    let eval: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(eval, report["test"]);
}

#[test]
fn repeated_training_gives_identical_metrics() {
    let dir = workspace();
    fs::write(dir.path().join("run.toml"), run_config("full", 2, 3, 2)).unwrap();
    let cfg = dir.path().join("run.toml");
    let a = marn(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("a"))]);
    let b = marn(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("b"))]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = marn(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("c")), "--seed", "99"]);
    assert!(c.status.success());
    assert_ne!(fs::read(dir.path().join("a/checkpoint.json")).unwrap(), fs::read(dir.path().join("c/checkpoint.json")).unwrap());
}

#[test]
fn seed_belongs_at_the_top_level() {
    let dir = workspace();
    let cfg = run_config("full", 2, 3, 1).replace("k = 2", "k = 2\nseed = 4");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    assert_eq!(marn(&["train", "--config", p(&dir.path().join("run.toml"))]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three() {
    let dir = workspace();
    let data = dir.path().join("data");
    let train = fs::read_to_string(data.join("train.jsonl")).unwrap();
    let huge = train.replace("\"label\":1.0", "\"label\":1e200").replace("\"label\":0.0", "\"label\":-1e200");
    fs::write(data.join("train.jsonl"), huge).unwrap();
    let cfg = run_config("full", 2, 3, 1).replace(r#"{ kind = "classification", classes = 2 }"#, r#"{ kind = "regression" }"#);
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = marn(&["train", "--config", p(&dir.path().join("run.toml"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch"));
}

#[test]
fn gradcheck_tiny_config() {
    let out = marn(&["gradcheck", "--config", p(&configs().join("tiny.toml"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    // header plus one row per tensor: 3 cells x 16, 4 + 12 + 4 for the block, 4 for the head
    assert_eq!(text.lines().count(), 1 + 48 + 20 + 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(" ok")));
}

#[test]
fn gradcheck_detects_a_corrupted_backward_rule() {
    let out = marn(&["gradcheck", "--config", p(&configs().join("tiny.toml")), "--inject-fault", "tanh"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lsthm."));
}

#[test]
fn gradcheck_refuses_large_models() {
    let out = marn(&["gradcheck", "--config", p(&configs().join("cooccurrence-run.toml"))]);
    assert_eq!(out.status.code(), Some(2));
}

/// Trains a model with `K = 4` and `D_mem = 12` on sequences of length 20.
fn trained_long(variant: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let gen = GEN_50.replace("min_len = 6", "min_len = 20").replace("max_len = 8", "max_len = 20");
    fs::write(dir.path().join("gen.toml"), gen).unwrap();
    assert!(marn(&["gen", "--config", p(&dir.path().join("gen.toml")), "--out", p(&dir.path().join("data"))]).status.success());
    fs::write(dir.path().join("run.toml"), run_config(variant, 4, 6, 1)).unwrap();
    let out = marn(&["train", "--config", p(&dir.path().join("run.toml"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn attn(dir: &Path, id: &str) -> Output {
    marn(&["attn", "--config", p(&dir.join("run.toml")), "--id", id])
}

#[test]
fn attention_export() {
    let dir = trained_long("full");
    let out = attn(dir.path(), "seq-00003");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("out/attention-seq-00003.csv");
    assert_eq!(lines(&path), 1 + 20 * 4 * 12);
    let trace = AttentionTrace::read_csv(std::io::BufReader::new(fs::File::open(&path).unwrap())).unwrap();
    for step in &trace.steps {
        for r in 0..step.rows() {
            assert!((step.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
    assert_eq!(attn(dir.path(), "no-such-id").status.code(), Some(2));
}

#[test]
fn attention_export_without_attention_is_all_ones() {
    let dir = trained_long("no_attention");
    assert!(attn(dir.path(), "seq-00000").status.success());
    let text = fs::read_to_string(dir.path().join("out/attention-seq-00000.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1.0")));
}

#[test]
fn attention_export_needs_a_block() {
    let dir = workspace();
    fs::write(dir.path().join("run.toml"), run_config("ef_lstm", 2, 3, 1)).unwrap();
    assert!(marn(&["train", "--config", p(&dir.path().join("run.toml"))]).status.success());
    assert_eq!(attn(dir.path(), "seq-00000").status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(marn(&["fly"]).status.code(), Some(2));
    assert_eq!(marn(&["train"]).status.code(), Some(2));
    assert_eq!(marn(&["--help"]).status.code(), Some(0));
}
