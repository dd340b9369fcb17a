use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use charnet::embed::{class_variance, embed_dataset, emit_scatter, silhouette, tsne, EmbeddingSet, TsneConfig};
use charnet::model::{build_spec, gradcheck::random_check, load_checkpoint, save_checkpoint, Model, FORMAT_VERSION};
use charnet::text::{corpora::load_friend_foe, encode_document, load_dataset, LabeledDataset};
use charnet::training::{self, report, TrainableMask, TrainingHistory};
use charnet::transfer::{fine_tune, freeze, replace_head, FreezeSpec};

use crate::config::{manifest_text, Manifest, RunConfig, RunInfo};
use crate::CliError;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(charnet::Error::Io { path: path.to_path_buf(), source: e })
}

struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    fn checkpoint(&mut self, model: &Model) -> Result<(), CliError> {
        let p = self.path("model.ckpt");
        Ok(save_checkpoint(model, &p)?)
    }

    fn history(&mut self, h: &TrainingHistory) -> Result<(), CliError> {
        self.text("history.csv", &report::history_csv(h))?;
        self.text("convergence.svg", &report::history_svg(h))
    }

    fn metrics(&mut self, m: &training::Metrics) -> Result<(), CliError> {
        self.text("metrics.txt", &report::metrics_text(m))?;
        self.text("metrics.csv", &report::metrics_csv(m))?;
        self.text("roc.csv", &report::roc_csv(m))?;
        self.text("roc.svg", &report::roc_svg(m))
    }

    fn finish(mut self, cfg: &RunConfig, command: &str, argv: &[String]) -> Result<(), CliError> {
        let mut outputs = std::mem::take(&mut self.written);
        outputs.push("manifest.toml".into());
        let m = Manifest {
            config: cfg.clone(),
            run: RunInfo {
                command: command.into(),
                argv: argv.to_vec(),
                charnet_version: env!("CARGO_PKG_VERSION").into(),
                checkpoint_format: FORMAT_VERSION,
                outputs,
            },
        };
        let p = self.dir.join("manifest.toml");
        std::fs::write(&p, manifest_text(&m)).map_err(|e| io_err(&p, e))
    }
}

fn labeled_file(cfg: &RunConfig, what: &str) -> Result<LabeledDataset, CliError> {
    let path = cfg.data.train.as_ref().ok_or_else(|| CliError::Usage(format!("{what} needs --data")))?;
    Ok(load_dataset(path, cfg.data.format)?)
}

fn training_data(cfg: &RunConfig) -> Result<(LabeledDataset, Option<LabeledDataset>), CliError> {
    let d = &cfg.data;
    let all = match (&d.enron, &d.fraud, &d.train) {
        (Some(e), Some(f), None) => load_friend_foe(e, f, d.per_class, cfg.seed)?,
        (None, None, Some(_)) => labeled_file(cfg, "train")?,
        (None, None, None) => return Err(CliError::Usage("train needs --data, or --enron with --fraud".into())),
        _ => return Err(CliError::Usage("use either --data or the --enron/--fraud pair".into())),
    };
    match &d.val {
        Some(v) => Ok((all, Some(load_dataset(v, d.format)?))),
        None if d.val_fraction > 0.0 => {
            let (train, val) = all.split(d.val_fraction, cfg.seed);
            Ok((train, if val.is_empty() { None } else { Some(val) }))
        }
        None => Ok((all, None)),
    }
}

fn summary(h: &TrainingHistory) -> String {
    match h.epochs.last() {
        Some(e) => {
            let mut s = format!("epochs: {}\ntrain_loss: {:.6}\ntrain_acc: {:.6}\n", h.epochs.len(), e.train_loss, e.train_accuracy);
            if let (Some(l), Some(a)) = (e.val_loss, e.val_accuracy) {
                let _ = write!(s, "val_loss: {l:.6}\nval_acc: {a:.6}\n");
            }
            if let Some(r) = h.restored_epoch {
                let _ = writeln!(s, "restored_epoch: {r}");
            }
            s
        }
        None => "epochs: 0\n".into(),
    }
}

pub fn train(cfg: &RunConfig, argv: &[String]) -> Result<(), CliError> {
    let (train_set, val_set) = training_data(cfg)?;
    let n_classes = cfg.model.n_classes.unwrap_or(train_set.label_vocab.len());
    let spec = build_spec(n_classes, cfg.encoding, cfg.model.scale, cfg.model.head)?;
    let mut model = Model::new(spec, Vec::new(), cfg.seed)?;
    let history = training::train(&mut model, &train_set, val_set.as_ref(), &cfg.hyperparams)?;
    let mut out = Out::create(&cfg.output_dir)?;
    out.checkpoint(&model)?;
    out.history(&history)?;
    if let Some(v) = &val_set {
        let m = training::evaluate(&model, v, 0.5)?;
        out.metrics(&m)?;
    }
    print!("{}", summary(&history));
    out.finish(cfg, "train", argv)
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, threshold: f64, argv: &[String]) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    let data = labeled_file(cfg, "evaluate")?;
    let m = training::evaluate(&model, &data, threshold)?;
    let mut out = Out::create(&cfg.output_dir)?;
    out.metrics(&m)?;
    print!("{}", report::metrics_text(&m));
    out.finish(cfg, "evaluate", argv)
}

pub enum Input {
    File(PathBuf),
    Text(String),
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path, input: Input, shape: (Option<usize>, Option<usize>), argv: &[String]) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    let enc = model.spec.encoding;
    if shape.0.is_some_and(|c| c != enc.max_chars) || shape.1.is_some_and(|s| s != enc.max_sentences) {
        return Err(charnet::Error::Shape(format!(
            "checkpoint encodes {}×{} (max_chars × max_sentences), flags ask for {:?}×{:?}",
            enc.max_chars, enc.max_sentences, shape.0, shape.1
        ))
        .into());
    }
    let docs: Vec<(String, String)> = match input {
        Input::Text(t) => vec![("0".into(), t)],
        Input::File(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| ((i + 1).to_string(), l.to_string())).collect()
        }
    };
    let encoded: Vec<_> = docs.iter().map(|(_, t)| encode_document(t, &model.alphabet, &enc)).collect();
    let probs = training::predict_all(&model, &encoded, 32)?;
    let mut csv = String::from("id");
    for c in 0..model.n_classes() {
        let name = model.labels.get(c).cloned().unwrap_or_else(|| c.to_string());
        csv.push(',');
        csv.push_str(&csv_field(&name));
    }
    csv.push('\n');
    for ((id, _), p) in docs.iter().zip(&probs) {
        csv.push_str(id);
        for v in p {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    print!("{csv}");
    Out::create(&cfg.output_dir)?.finish(cfg, "predict", argv)
}

pub fn transfer(cfg: &RunConfig, from: &Path, classes: usize, freeze_arg: &str, argv: &[String]) -> Result<(), CliError> {
    let base = load_checkpoint(from)?;
    let mut model = replace_head(&base, classes, cfg.seed)?;
    let mask = match freeze_arg.trim() {
        "none" | "" => TrainableMask::all(),
        "head" => freeze(&model, &FreezeSpec::all_but_head(&model))?,
        p => freeze(&model, &FreezeSpec::parse(p))?,
    };
    let mut out = Out::create(&cfg.output_dir)?;
    println!("trainable_params: {} of {}", mask.trainable_params(&model), model.param_count());
    if cfg.data.train.is_some() {
        let (train_set, val_set) = training_data(cfg)?;
        let h = fine_tune(&mut model, &mask, &train_set, val_set.as_ref(), &cfg.hyperparams)?;
        out.history(&h)?;
        print!("{}", summary(&h));
    }
    out.checkpoint(&model)?;
    out.finish(cfg, "transfer", argv)
}

fn embeddings_csv(set: &EmbeddingSet) -> String {
    let dim = set.matrix.first().map_or(0, Vec::len);
    let mut s = String::from("id,label");
    (0..dim).for_each(|d| _ = write!(s, ",f{d}"));
    s.push('\n');
    for (i, (id, row)) in set.ids.iter().zip(&set.matrix).enumerate() {
        let label = set.labels.as_ref().map(|l| set.label_names.get(l[i]).cloned().unwrap_or_else(|| l[i].to_string())).unwrap_or_default();
        let _ = write!(s, "{},{}", csv_field(id), csv_field(&label));
        row.iter().for_each(|v| _ = write!(s, ",{v}"));
        s.push('\n');
    }
    s
}

fn read_embeddings(path: &Path) -> Result<EmbeddingSet, CliError> {
    let parse = |line: u64, message: String| CliError::Core(charnet::Error::Parse { path: path.to_path_buf(), line, message });
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse(0, e.to_string()))?;
    let mut set = EmbeddingSet { ids: Vec::new(), matrix: Vec::new(), labels: None, label_names: Vec::new() };
    let mut labels = Vec::new();
    let mut any_label = false;
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| parse(n as u64 + 2, e.to_string()))?;
        let line = n as u64 + 2;
        set.ids.push(row.get(0).unwrap_or_default().to_string());
        let name = row.get(1).unwrap_or_default();
        any_label |= !name.is_empty();
        let id = match set.label_names.iter().position(|l| l == name) {
            Some(i) => i,
            None => {
                set.label_names.push(name.to_string());
                set.label_names.len() - 1
            }
        };
        labels.push(id);
        let v = row.iter().skip(2).map(|x| x.parse::<f64>().map_err(|e| parse(line, e.to_string()))).collect::<Result<Vec<_>, _>>()?;
        set.matrix.push(v);
    }
    if any_label {
        set.labels = Some(labels);
    } else {
        set.label_names.clear();
    }
    set.check()?;
    Ok(set)
}

pub fn embed(cfg: &RunConfig, checkpoint: &Path, argv: &[String]) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    let data = labeled_file(cfg, "embed")?;
    let set = embed_dataset(&model, &data)?;
    let mut out = Out::create(&cfg.output_dir)?;
    out.text("embeddings.csv", &embeddings_csv(&set))?;
    println!("documents: {}\ndimensions: {}", set.len(), model.spec.feature_dim);
    out.finish(cfg, "embed", argv)
}

pub enum Source {
    Checkpoint(PathBuf),
    Embeddings(PathBuf),
}

pub fn cluster(cfg: &RunConfig, source: Source, tsne_cfg: &TsneConfig, argv: &[String]) -> Result<(), CliError> {
    let set = match source {
        Source::Checkpoint(c) => embed_dataset(&load_checkpoint(&c)?, &labeled_file(cfg, "cluster")?)?,
        Source::Embeddings(p) => read_embeddings(&p)?,
    };
    let r = tsne(&set.matrix, &set.ids, tsne_cfg)?;
    let mut out = Out::create(&cfg.output_dir)?;
    let (svg, csv) = (out.path("tsne.svg"), out.path("tsne.csv"));
    emit_scatter(&set.ids, &r.coords, set.labels.as_deref(), &set.label_names, &svg, &csv)?;
    let mut text = format!("points: {}\nkl_initial: {:.6}\nkl_final: {:.6}\n", set.len(), r.kl_initial, r.kl_final);
    if let Some(labels) = &set.labels {
        let coords: Vec<Vec<f64>> = r.coords.iter().map(|c| c.to_vec()).collect();
        match silhouette(&coords, labels) {
            Ok(s) => _ = writeln!(text, "silhouette_2d: {s:.6}"),
            Err(e) => _ = writeln!(text, "silhouette_2d: undefined ({e})"),
        }
        if let Ok(s) = silhouette(&set.matrix, labels) {
            let _ = writeln!(text, "silhouette_features: {s:.6}");
        }
        let name = |l: usize| set.label_names.get(l).cloned().unwrap_or_else(|| l.to_string());
        for (l, v) in class_variance(&set.matrix, labels) {
            let _ = writeln!(text, "variance_features[{}]: {v:.6}", name(l));
        }
        for (l, v) in class_variance(&coords, labels) {
            let _ = writeln!(text, "variance_2d[{}]: {v:.6}", name(l));
        }
    }
    out.text("cluster.txt", &text)?;
    print!("{text}");
    out.finish(cfg, "cluster", argv)
}

pub fn gradcheck(cfg: &RunConfig, draws: usize, docs: usize, per_block: usize, argv: &[String]) -> Result<(), CliError> {
    if draws == 0 || docs == 0 {
        return Err(CliError::Usage("--draws and --docs must be at least 1".into()));
    }
    let spec = build_spec(2, cfg.encoding, cfg.model.scale, cfg.model.head)?;
    let mut text = String::new();
    let mut worst = 0.0f64;
    for d in 0..draws {
        let r = random_check(&spec, cfg.seed.wrapping_add(d as u64), docs, per_block)?;
        worst = worst.max(r.max_relative_error);
        let _ = writeln!(text, "draw {d}: max_relative_error {:.3e} over {} coordinates", r.max_relative_error, r.checked);
    }
    let _ = writeln!(text, "max relative error: {worst:.6e}");
    let mut out = Out::create(&cfg.output_dir)?;
    out.text("gradcheck.txt", &text)?;
    print!("{text}");
    out.finish(cfg, "gradcheck", argv)?;
    if worst < 1e-3 {
        Ok(())
    } else {
        Err(charnet::Error::Numeric(format!("max relative error {worst:.3e} >= 1e-3")).into())
    }
}
