//! `charnet` command line: train, evaluate, predict, transfer, embed,
//! cluster and gradcheck.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use charnet::model::Head;
use charnet::text::DatasetFormat;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] charnet::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(charnet::Error::InvalidArgument(_)) => 1,
            CliError::Core(charnet::Error::Numeric(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "charnet", version, about = "Character-level CNN/BiLSTM document classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a fresh model; writes a checkpoint, history and convergence plot.
    Train(TrainArgs),
    /// Metrics of a checkpoint on a labeled file.
    Evaluate(EvaluateArgs),
    /// Per-class probabilities as CSV on standard output.
    Predict(PredictArgs),
    /// Replace the head of a checkpoint, optionally fine-tuning it.
    Transfer(TransferArgs),
    /// Write 128-d document features as CSV.
    Embed(EmbedArgs),
    /// t-SNE of document features with silhouette score and scatter plot.
    Cluster(ClusterArgs),
    /// Compare analytic gradients with finite differences on random draws.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: charnet-out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 makes every run bitwise reproducible.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
struct DataFlags {
    /// Labeled training (or evaluation) file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// csv (columns text,label) or jsonl ({"text", "labels"}) [default: csv].
    #[arg(long)]
    format: Option<DatasetFormat>,
}

#[derive(Debug, Args, Clone, Default)]
struct ModelFlags {
    #[arg(long)]
    scale: Option<f64>,
    /// sigmoid or softmax [default: sigmoid].
    #[arg(long)]
    head: Option<Head>,
    #[arg(long)]
    max_chars: Option<usize>,
    #[arg(long)]
    max_sentences: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
struct HpFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping patience in epochs on validation loss.
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataFlags,
    /// Validation file; otherwise --val-fraction of the data is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Enron emails.csv (class "friend"); use with --fraud.
    #[arg(long)]
    enron: Option<PathBuf>,
    /// 419 fraud corpus (class "foe"); use with --enron.
    #[arg(long)]
    fraud: Option<PathBuf>,
    /// Records per class drawn from the corpora [default: 1000].
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    hp: HpFlags,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataFlags,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Text file with one document per line.
    #[arg(long, conflicts_with = "text")]
    input: Option<PathBuf>,
    /// A single document.
    #[arg(long)]
    text: Option<String>,
    /// Must match the checkpoint when given.
    #[arg(long)]
    max_chars: Option<usize>,
    /// Must match the checkpoint when given.
    #[arg(long)]
    max_sentences: Option<usize>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "from")]
    from: PathBuf,
    #[arg(long)]
    classes: usize,
    /// Comma-separated block-name prefixes, `head` for everything but the
    /// head, or `none`.
    #[arg(long, default_value = "encoder")]
    freeze: String,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    hp: HpFlags,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataFlags,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to embed --data with; alternatively --embeddings.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
    /// CSV written by `embed`.
    #[arg(long, conflicts_with = "checkpoint")]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    tsne_lr: f64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.05)]
    scale: f64,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    #[arg(long, default_value_t = 2)]
    docs: usize,
    /// Coordinates sampled per weight block.
    #[arg(long, default_value_t = 3)]
    per_block: usize,
    #[arg(long, default_value_t = 64)]
    max_chars: usize,
    #[arg(long, default_value_t = 8)]
    max_sentences: usize,
    #[arg(long, default_value = "sigmoid")]
    head: Head,
}

fn base_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.hyperparams.seed = s;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn apply_hp(cfg: &mut RunConfig, hp: &HpFlags) {
    let h = &mut cfg.hyperparams;
    h.epochs = hp.epochs.unwrap_or(h.epochs);
    h.batch_size = hp.batch_size.unwrap_or(h.batch_size);
    h.learning_rate = hp.lr.unwrap_or(h.learning_rate);
    if hp.patience.is_some() {
        h.early_stop_patience = hp.patience;
    }
}

fn apply_model(cfg: &mut RunConfig, m: &ModelFlags) {
    cfg.model.scale = m.scale.unwrap_or(cfg.model.scale);
    if let Some(h) = m.head {
        cfg.model.head = h;
        cfg.hyperparams.head = h;
    }
    cfg.encoding.max_chars = m.max_chars.unwrap_or(cfg.encoding.max_chars);
    cfg.encoding.max_sentences = m.max_sentences.unwrap_or(cfg.encoding.max_sentences);
}

fn apply_data(cfg: &mut RunConfig, d: &DataFlags) {
    if d.data.is_some() {
        cfg.data.train = d.data.clone();
    }
    cfg.data.format = d.format.unwrap_or(cfg.data.format);
}

/// Data paths are stored absolute so a manifest replays from anywhere.
fn absolutize(cfg: &mut RunConfig) {
    let d = &mut cfg.data;
    for p in [&mut d.train, &mut d.val, &mut d.enron, &mut d.fraud].into_iter().flatten() {
        if let Ok(abs) = std::path::absolute(&*p) {
            *p = abs;
        }
    }
}

fn set_threads(n: usize) {
    if n > 0 {
        // A second call in one process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            absolutize(&mut cfg);
            apply_model(&mut cfg, &a.model);
            apply_hp(&mut cfg, &a.hp);
            if a.val.is_some() {
                cfg.data.val = a.val.clone();
            }
            cfg.data.val_fraction = a.val_fraction.unwrap_or(cfg.data.val_fraction);
            if a.enron.is_some() {
                cfg.data.enron = a.enron.clone();
            }
            if a.fraud.is_some() {
                cfg.data.fraud = a.fraud.clone();
            }
            cfg.data.per_class = a.per_class.unwrap_or(cfg.data.per_class);
            if a.classes.is_some() {
                cfg.model.n_classes = a.classes;
            }
            if a.common.seed.is_none() {
                cfg.hyperparams.seed = cfg.seed;
            }
            absolutize(&mut cfg);
            cfg.validate()?;
            set_threads(cfg.threads);
            commands::train(&cfg, argv)
        }
        Command::Evaluate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            absolutize(&mut cfg);
            set_threads(cfg.threads);
            commands::evaluate(&cfg, &a.checkpoint, a.threshold, argv)
        }
        Command::Predict(a) => {
            let cfg = base_config(&a.common)?;
            set_threads(cfg.threads);
            let input = match (&a.input, &a.text) {
                (Some(p), None) => commands::Input::File(p.clone()),
                (None, Some(t)) => commands::Input::Text(t.clone()),
                _ => return Err(CliError::Usage("predict needs exactly one of --input or --text".into())),
            };
            commands::predict(&cfg, &a.checkpoint, input, (a.max_chars, a.max_sentences), argv)
        }
        Command::Transfer(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            absolutize(&mut cfg);
            apply_hp(&mut cfg, &a.hp);
            if a.common.seed.is_none() {
                cfg.hyperparams.seed = cfg.seed;
            }
            cfg.hyperparams.validate()?;
            set_threads(cfg.threads);
            commands::transfer(&cfg, &a.from, a.classes, &a.freeze, argv)
        }
        Command::Embed(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            absolutize(&mut cfg);
            set_threads(cfg.threads);
            commands::embed(&cfg, &a.checkpoint, argv)
        }
        Command::Cluster(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            absolutize(&mut cfg);
            set_threads(cfg.threads);
            let tsne = charnet::embed::TsneConfig {
                perplexity: a.perplexity,
                iterations: a.iterations,
                learning_rate: a.tsne_lr,
                seed: cfg.seed,
                ..Default::default()
            };
            let source = match (&a.checkpoint, &a.embeddings) {
                (Some(c), None) => commands::Source::Checkpoint(c.clone()),
                (None, Some(e)) => commands::Source::Embeddings(e.clone()),
                _ => return Err(CliError::Usage("cluster needs --checkpoint with --data, or --embeddings".into())),
            };
            commands::cluster(&cfg, source, &tsne, argv)
        }
        Command::Gradcheck(a) => {
            let mut cfg = base_config(&a.common)?;
            cfg.model.scale = a.scale;
            cfg.model.head = a.head;
            cfg.encoding = charnet::text::EncodingConfig::new(a.max_chars, a.max_sentences)?;
            set_threads(cfg.threads);
            commands::gradcheck(&cfg, a.draws, a.docs, a.per_block, argv)
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors go to standard error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let strings: Vec<String> = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    match dispatch(cli, &strings) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("charnet: {e}");
            e.exit_code()
        }
    }
}
