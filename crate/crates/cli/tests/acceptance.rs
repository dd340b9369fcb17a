//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The email corpora are read from `CHARNET_ENRON_CSV` (Kaggle `emails.csv`)
//! and `CHARNET_FRAUD_TXT` (`fradulent_emails.txt`). Without them criteria 3
//! and 7b print FAIL as not run; the process exits non-zero only for
//! criteria that ran and failed, or for any FAIL when
//! `CHARNET_ACCEPTANCE_STRICT=1`.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use charnet::embed::{embed_dataset, silhouette, tsne, TsneConfig};
use charnet::model::{build_default_spec, build_spec, from_bytes, gradcheck::random_check, to_bytes, Head, Model};
use charnet::synthetic::{mixed_documents, separable_dataset};
use charnet::tensor::{Mode, RngStream};
use charnet::text::{corpora::load_friend_foe, encode_document, EncodingConfig, LabeledDataset};
use charnet::training::{evaluate, f1, roc_auc, train, Hyperparams, TrainingHistory};
use charnet::transfer::{fine_tune, freeze, head_blocks, projection_task, replace_head, FreezeSpec};

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

struct Report {
    lines: Vec<(String, Outcome)>,
}

impl Report {
    fn record(&mut self, id: &str, o: Outcome) {
        let (tag, detail) = match &o {
            Outcome::Pass(d) => ("PASS", d.clone()),
            Outcome::Fail(d) => ("FAIL", d.clone()),
            Outcome::NotRun(d) => ("FAIL", format!("not run: {d}")),
        };
        println!("criterion {id}: {tag} - {detail}");
        self.lines.push((id.to_string(), o));
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let enc = EncodingConfig::new(64, 8).unwrap();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for draw in 0..20u64 {
        let head = if draw % 2 == 0 { Head::Sigmoid } else { Head::Softmax };
        let spec = build_spec(3, enc, 0.05, head).unwrap();
        match random_check(&spec, 1000 + draw, 2, 3) {
            Ok(r) => {
                worst = worst.max(r.max_relative_error);
                checked += r.checked;
            }
            Err(e) => return Outcome::Fail(format!("draw {draw}: {e}")),
        }
    }
    let el = t.elapsed();
    verdict(
        worst < 1e-3 && el < Duration::from_secs(120),
        format!("max relative error {worst:.3e} over 20 draws ({checked} coordinates), {} (limits 1e-3, 120s)", secs(el)),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let data = separable_dataset(20, 2, 2);
    let spec = build_default_spec(2, EncodingConfig::default(), 0.1).unwrap();
    let mut model = Model::new(spec, vec![], 2).unwrap();
    let hp = Hyperparams { epochs: 200, batch_size: 20, seed: 2, ..Hyperparams::default() };
    let h = match train(&mut model, &data, None, &hp) {
        Ok(h) => h,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let el = t.elapsed();
    let reached = h.epochs_to_accuracy(0.95);
    let last = h.epochs.last().map_or(0.0, |e| e.train_accuracy);
    verdict(
        reached.is_some() && el < Duration::from_secs(300),
        format!("train binary accuracy >= 0.95 first at epoch {reached:?}, final {last:.3}, {} (limit 300s)", secs(el)),
    )
}

fn corpus_paths() -> Option<(PathBuf, PathBuf)> {
    let e = PathBuf::from(std::env::var_os("CHARNET_ENRON_CSV")?);
    let f = PathBuf::from(std::env::var_os("CHARNET_FRAUD_TXT")?);
    (e.is_file() && f.is_file()).then_some((e, f))
}

/// Trains the quarter-scale spam model; returns it with its held-out set.
fn criterion_3() -> (Outcome, Option<(Model, LabeledDataset)>) {
    let Some((enron, fraud)) = corpus_paths() else {
        return (Outcome::NotRun("CHARNET_ENRON_CSV / CHARNET_FRAUD_TXT not set to readable corpus files".into()), None);
    };
    let t = Instant::now();
    let all = match load_friend_foe(&enron, &fraud, 1000, 3) {
        Ok(d) => d,
        Err(e) => return (Outcome::Fail(format!("loading corpora: {e}")), None),
    };
    let (train_part, test) = all.split(0.2, 3);
    let (fit, val) = train_part.split(0.1, 4);
    let spec = build_default_spec(2, EncodingConfig::default(), 0.25).unwrap();
    let mut model = Model::new(spec, vec![], 3).unwrap();
    let hp = Hyperparams { epochs: 15, early_stop_patience: Some(3), seed: 3, ..Hyperparams::default() };
    if let Err(e) = train(&mut model, &fit, Some(&val), &hp) {
        return (Outcome::Fail(e.to_string()), None);
    }
    let m = match evaluate(&model, &test, 0.5) {
        Ok(m) => m,
        Err(e) => return (Outcome::Fail(e.to_string()), None),
    };
    let el = t.elapsed();
    let o = verdict(
        m.binary_accuracy >= 0.90 && el <= Duration::from_secs(3600),
        format!("held-out binary accuracy {:.4} on {} documents, {} (limits 0.90, 3600s)", m.binary_accuracy, test.len(), secs(el)),
    );
    (o, Some((model, test)))
}

fn criterion_4() -> Outcome {
    let enc = EncodingConfig::new(64, 4).unwrap();
    let base = Model::new(build_spec(2, enc, 0.1, Head::Sigmoid).unwrap(), vec!["friend".into(), "foe".into()], 4).unwrap();
    let wide = replace_head(&base, 8, 4).unwrap();
    let head = head_blocks(&wide);
    let body_same = base.weights.iter().filter(|(k, _)| !head.contains(k)).all(|(k, v)| &wide.weights[k] == v);

    let mut tuned = wide.clone();
    let mask = freeze(&tuned, &FreezeSpec::parse("encoder")).unwrap();
    let data = separable_dataset(24, 8, 4);
    let hp = Hyperparams { epochs: 5, batch_size: 8, seed: 4, ..Hyperparams::default() };
    let epochs = fine_tune(&mut tuned, &mask, &data, None, &hp).map(|h| h.epochs.len());
    let encoder_same = wide.weights.iter().filter(|(k, _)| k.starts_with("encoder.")).all(|(k, v)| &tuned.weights[k] == v);

    let spec = build_default_spec(2, EncodingConfig::default(), 1.0).unwrap();
    let full = Model::new(spec.clone(), vec![], 4).unwrap();
    let analytic: usize = spec
        .param_shapes()
        .unwrap()
        .iter()
        .filter(|(n, _)| n.starts_with("classifier."))
        .map(|(_, s)| s.iter().product::<usize>())
        .sum();
    let counted = freeze(&full, &FreezeSpec::parse("encoder")).unwrap().trainable_params(&full);
    verdict(
        body_same && encoder_same && epochs.as_ref().is_ok_and(|&n| n == 5) && counted == analytic,
        format!(
            "non-head blocks unchanged: {body_same}; encoder unchanged after {:?} epochs: {encoder_same}; trainable {counted} vs analytic classifier sum {analytic}",
            epochs.ok()
        ),
    )
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let enc = EncodingConfig::new(64, 4).unwrap();
    let cap = 100;
    let mut pre = Model::new(build_spec(2, enc, 0.1, Head::Sigmoid).unwrap(), vec![], 100).unwrap();
    let pre_hp = Hyperparams { epochs: 30, batch_size: 20, seed: 100, ..Hyperparams::default() };
    if let Err(e) = train(&mut pre, &separable_dataset(40, 2, 100), None, &pre_hp) {
        return Outcome::Fail(format!("pretraining: {e}"));
    }
    let needed = |h: &TrainingHistory| h.epochs_to_accuracy(0.9).unwrap_or(cap + 1);
    let (mut ft, mut rnd) = (Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let texts = mixed_documents(64, 8, 200 + seed);
        let task = projection_task(&pre, &texts, 3, seed).unwrap();
        let hp = Hyperparams { epochs: cap, batch_size: 16, learning_rate: 1e-2, seed, ..Hyperparams::default() };
        let mut tuned = replace_head(&pre, 8, seed).unwrap();
        let mask = freeze(&tuned, &FreezeSpec::parse("encoder")).unwrap();
        let mut fresh = Model::new(build_spec(8, enc, 0.1, Head::Sigmoid).unwrap(), vec![], 1000 + seed).unwrap();
        match (fine_tune(&mut tuned, &mask, &task, None, &hp), train(&mut fresh, &task, None, &hp)) {
            (Ok(a), Ok(b)) => {
                ft.push(needed(&a));
                rnd.push(needed(&b));
            }
            (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("seed {seed}: {e}")),
        }
    }
    let (mf, mr) = (median(ft.clone()), median(rnd.clone()));
    verdict(
        mf <= cap && 2 * mf <= mr,
        format!(
            "epochs to 0.9 train binary accuracy, fine-tune {ft:?} (median {mf}) vs random init {rnd:?} (median {mr}; {} = not reached in {cap}); {}",
            cap + 1,
            secs(t.elapsed())
        ),
    )
}

fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut tot, mut n) = (0.0, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                n += 1;
                tot += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    tot / n as f64
}

fn criterion_6() -> Outcome {
    let v = f1(0.96, 0.49);
    let mut rng = RngStream::new(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 2 + rng.below(80);
        let scores: Vec<f64> = (0..n).map(|_| (rng.uniform() * 20.0).floor() / 20.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        let (pts, a) = roc_auc(&scores, &labels).unwrap();
        let trap: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
        worst = worst.max((a - pair_auc(&scores, &labels)).abs()).max((a - trap).abs());
    }
    let perfect = roc_auc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap().1;
    let constant = roc_auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap().1;
    verdict(
        (v - 0.6488).abs() <= 0.0005 && worst <= 1e-9 && perfect == 1.0 && constant == 0.5,
        format!("F1(0.96, 0.49) = {v:.4}; max |trapezoid - pair count| {worst:.1e} over 100 instances; perfect {perfect}, constant {constant}"),
    )
}

fn criterion_7a() -> Outcome {
    let t = Instant::now();
    let mut rng = RngStream::new(7);
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let x: Vec<Vec<f64>> = labels.iter().map(|&l| (0..64).map(|d| rng.normal() + if d == 0 && l == 1 { 10.0 } else { 0.0 }).collect()).collect();
    let ids: Vec<String> = (0..100).map(|i| i.to_string()).collect();
    let r = match tsne(&x, &ids, &TsneConfig { seed: 7, ..TsneConfig::default() }) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let y: Vec<Vec<f64>> = r.coords.iter().map(|c| c.to_vec()).collect();
    let s = silhouette(&y, &labels).unwrap();
    let el = t.elapsed();
    verdict(
        s >= 0.8 && r.kl_final < r.kl_initial && el < Duration::from_secs(300),
        format!("blob embedding silhouette {s:.4}, KL {:.3} -> {:.3}, {} (limits 0.8, 300s)", r.kl_initial, r.kl_final, secs(el)),
    )
}

fn criterion_7b(trained: Option<&(Model, LabeledDataset)>) -> Outcome {
    let Some((model, held_out)) = trained else {
        return Outcome::NotRun("needs the criterion 3 model and held-out corpus documents".into());
    };
    let t = Instant::now();
    let mut subset = held_out.clone();
    subset.records.truncate(200);
    let set = match embed_dataset(model, &subset) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let r = match tsne(&set.matrix, &set.ids, &TsneConfig { seed: 7, ..TsneConfig::default() }) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let y: Vec<Vec<f64>> = r.coords.iter().map(|c| c.to_vec()).collect();
    let s = silhouette(&y, set.labels.as_ref().unwrap()).unwrap();
    let el = t.elapsed();
    verdict(
        s > 0.2 && el < Duration::from_secs(300),
        format!("silhouette {s:.4} on {} held-out documents, {} (limits > 0.2, 300s)", set.len(), secs(el)),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    let mut csv = String::from("text,label\n");
    for r in &separable_dataset(24, 2, 8).records {
        csv.push_str(&format!("\"{}\",class{}\n", r.text, r.labels[0]));
    }
    std::fs::write(&data, csv).unwrap();
    let bin = env!("CARGO_BIN_EXE_charnet");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let status = Command::new(bin)
        .args(["train", "--threads", "1", "--seed", "8", "--scale", "0.1", "--max-chars", "64", "--max-sentences", "4"])
        .args(["--epochs", "4", "--batch-size", "8", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    if !status.status.success() {
        return Outcome::Fail(format!("train exited {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    let replay = Command::new(bin)
        .args(["train", "--threads", "1", "--config"])
        .arg(first.join("manifest.toml"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    if !replay.status.success() {
        return Outcome::Fail(format!("replay exited {:?}: {}", replay.status.code(), String::from_utf8_lossy(&replay.stderr)));
    }
    let a = std::fs::read(first.join("model.ckpt")).unwrap();
    let b = std::fs::read(second.join("model.ckpt")).unwrap();
    verdict(a == b, format!("replayed checkpoint {} ({} bytes)", if a == b { "bitwise identical" } else { "differs" }, a.len()))
}

fn criterion_9() -> Outcome {
    let enc = EncodingConfig::new(64, 6).unwrap();
    let model = Model::new(build_spec(2, enc, 0.1, Head::Sigmoid).unwrap(), vec!["friend".into(), "foe".into()], 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    charnet::model::save_checkpoint(&model, &path).unwrap();
    let back = charnet::model::load_checkpoint(&path).unwrap();
    let texts = mixed_documents(10, 8, 9);
    let mut identical = 0;
    for t in &texts {
        let d = encode_document(t, &model.alphabet, &enc);
        let a = model.classify_document(&d, Mode::Eval).unwrap();
        let b = back.classify_document(&d, Mode::Eval).unwrap();
        identical += usize::from(a.iter().map(|v| v.to_bits()).eq(b.iter().map(|v| v.to_bits())));
    }
    let bytes_stable = to_bytes(&from_bytes(&to_bytes(&model)).unwrap()) == to_bytes(&model);
    verdict(
        identical == 10 && bytes_stable && back == model,
        format!("{identical}/10 documents bitwise identical after save/load; re-serialized bytes stable: {bytes_stable}"),
    )
}

fn main() {
    let t = Instant::now();
    let mut report = Report { lines: Vec::new() };
    report.record("1", criterion_1());
    report.record("2", criterion_2());
    let (c3, trained) = criterion_3();
    report.record("3", c3);
    report.record("4", criterion_4());
    report.record("5", criterion_5());
    report.record("6", criterion_6());
    report.record("7a", criterion_7a());
    report.record("7b", criterion_7b(trained.as_ref()));
    report.record("8", criterion_8());
    report.record("9", criterion_9());

    let failed: Vec<&str> = report.lines.iter().filter(|(_, o)| matches!(o, Outcome::Fail(_))).map(|(id, _)| id.as_str()).collect();
    let not_run: Vec<&str> = report.lines.iter().filter(|(_, o)| matches!(o, Outcome::NotRun(_))).map(|(id, _)| id.as_str()).collect();
    let passed = report.lines.len() - failed.len() - not_run.len();
    println!(
        "acceptance: {passed} passed, {} failed {failed:?}, {} not run {not_run:?}, {}",
        failed.len(),
        not_run.len(),
        secs(t.elapsed())
    );
    let strict = std::env::var("CHARNET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if !failed.is_empty() || (strict && !not_run.is_empty()) {
        std::process::exit(1);
    }
}
