use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use charnet::synthetic::separable_dataset;

fn charnet(args: &[&str], extra: &[&Path]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_charnet"));
    c.args(args);
    for p in extra {
        c.arg(p);
    }
    c.output().unwrap()
}

fn write_dataset(dir: &Path, n: usize, classes: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("data{seed}.csv"));
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(["text", "label"]).unwrap();
    for r in &separable_dataset(n, classes, seed).records {
        w.write_record([r.text.as_str(), &format!("class{}", r.labels[0])]).unwrap();
    }
    w.flush().unwrap();
    path
}

const SMALL: [&str; 12] = ["--threads", "1", "--scale", "0.05", "--max-chars", "32", "--max-sentences", "4", "--epochs", "2", "--batch-size", "8"];

fn trained(dir: &Path) -> PathBuf {
    let data = write_dataset(dir, 20, 2, 1);
    let out = dir.join("train");
    let mut args = vec!["train"];
    args.extend(SMALL);
    let o = charnet(&args, &[Path::new("--data"), &data, Path::new("--out"), &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    for f in ["model.ckpt", "history.csv", "convergence.svg", "metrics.txt", "metrics.csv", "roc.csv", "roc.svg", "manifest.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,train_acc,val_loss,val_acc"));
    assert_eq!(history.lines().count(), 3);
    let manifest: toml::Table = std::fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["run"]["command"].as_str(), Some("train"));
    assert!(Path::new(manifest["data"]["train"].as_str().unwrap()).is_absolute());
}

#[test]
fn predict_is_repeatable_and_handles_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    let ckpt = out.join("model.ckpt");
    let input = dir.path().join("docs.txt");
    std::fs::write(&input, "wire the funds today.\n\nmeeting at noon.\n").unwrap();
    let run = || charnet(&["predict", "--out"], &[&dir.path().join("p"), Path::new("--checkpoint"), &ckpt, Path::new("--input"), &input]);
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,") && rows[2].starts_with("3,"), "{text}");

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let o = charnet(&["predict", "--out"], &[&dir.path().join("p"), Path::new("--checkpoint"), &ckpt, Path::new("--input"), &empty]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);

    let o = charnet(&["predict", "--max-chars", "40", "--text", "hello.", "--out"], &[&dir.path().join("p"), Path::new("--checkpoint"), &ckpt]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(charnet(&["frobnicate"], &[]).status.code(), Some(1));
    let missing = dir.path().join("nope.ckpt");
    let o = charnet(&["predict", "--text", "x.", "--out"], &[&dir.path().join("p"), Path::new("--checkpoint"), &missing]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"CHARNETM garbage").unwrap();
    let o = charnet(&["predict", "--text", "x.", "--out"], &[&dir.path().join("p"), Path::new("--checkpoint"), &bad]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("broken.toml");
    std::fs::write(&cfg, "seed = \"many\"").unwrap();
    let o = charnet(&["train", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transfer_freezes_encoder_and_fine_tunes() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    let data = write_dataset(dir.path(), 16, 8, 2);
    let args = ["transfer", "--threads", "1", "--classes", "8", "--epochs", "1", "--batch-size", "8"];
    let o = charnet(&args, &[Path::new("--from"), &out.join("model.ckpt"), Path::new("--data"), &data, Path::new("--out"), &dir.path().join("t")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trainable_params"));
    let model = charnet::model::load_checkpoint(&dir.path().join("t/model.ckpt")).unwrap();
    assert_eq!(model.n_classes(), 8);

    let o = charnet(&["transfer", "--classes", "4", "--freeze", "decoder"], &[Path::new("--from"), &out.join("model.ckpt"), Path::new("--out"), &dir.path().join("t2")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn embed_then_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    let data = write_dataset(dir.path(), 30, 2, 3);
    let e = dir.path().join("e");
    let o = charnet(&["embed", "--threads", "1"], &[Path::new("--checkpoint"), &out.join("model.ckpt"), Path::new("--data"), &data, Path::new("--out"), &e]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = dir.path().join("c");
    let o = charnet(&["cluster", "--perplexity", "5", "--iterations", "300"], &[Path::new("--embeddings"), &e.join("embeddings.csv"), Path::new("--out"), &c]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["tsne.svg", "tsne.csv", "cluster.txt", "manifest.toml"] {
        assert!(c.join(f).is_file(), "missing {f}");
    }
    assert_eq!(std::fs::read_to_string(c.join("tsne.csv")).unwrap().lines().count(), 31);
    let o = charnet(&["cluster", "--perplexity", "30"], &[Path::new("--embeddings"), &e.join("embeddings.csv"), Path::new("--out"), &c]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = charnet(&["gradcheck", "--max-chars", "32", "--max-sentences", "4", "--out"], &[&dir.path().join("g")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
}
