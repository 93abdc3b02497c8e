//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::embfile::{read_dataset, write_embeddings, EmbeddingFile};
use super::synth::{generate_synthetic, SyntheticSpec};
use crate::dataset::{Dataset, EpisodeShape};
use crate::embed::AggregationMode;
use crate::error::{MneError, Result};
use crate::evalmetrics::{
    csv_table, evaluate_fewshot, evaluate_retrieval, EmbedConfig, FewShotReport, RetrievalProtocol,
    RetrievalReport,
};
use crate::trainer::{
    gradcheck_instance, pretrain_encoder, train_episodic, train_retrieval, write_log, Checkpoint,
    EncoderKind, GradcheckCase, LogRecord, ModelParams, TrainConfig, GRADCHECK_STEP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "mne", version, about = "Memory-based neighbourhood embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled embedding file
    Gen(GenArgs),
    /// Train the feature encoder with plain cross-entropy
    Pretrain(PretrainArgs),
    /// Retrieval-mode training against a replaced-in-place memory
    TrainRetrieval(TrainCmd),
    /// Episodic few-shot training
    TrainFewshot(TrainCmd),
    /// mAP and rank-1 on a query/gallery split
    EvalRetrieval(EvalRetrievalArgs),
    /// Transductive N-way M-shot accuracy
    EvalFewshot(EvalFewshotArgs),
    /// Train and evaluate one configuration per sweep value, emitting CSV
    Ablate(AblateArgs),
    /// Finite-difference check of the full training gradient
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Distance between two sub-modes per class
    #[arg(long)]
    bimodal: Option<f64>,
    /// Rank of the subspace shared by all class centers
    #[arg(long)]
    signal_rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderArg {
    Identity,
    Mlp,
}

#[derive(Debug, Clone, Args)]
struct ModelFlags {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long = "lambda-bce")]
    lambda_bce: Option<f64>,
    /// attention, mean or max
    #[arg(long, value_parser = parse_mode)]
    mode: Option<AggregationMode>,
    #[arg(long)]
    lr_encoder: Option<f64>,
    #[arg(long)]
    lr_model: Option<f64>,
    /// Learning-rate decay factor
    #[arg(long)]
    decay: Option<f64>,
    /// Epochs or episodes between decays (0 disables decay)
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_memory_update: bool,
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    way: Option<usize>,
    #[arg(long)]
    shot: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Norm of class-mean classifier rows at initialization
    #[arg(long, conflicts_with = "random_classifier")]
    imprint_scale: Option<f64>,
    /// Random classifier initialization instead of class means
    #[arg(long)]
    random_classifier: bool,
}

impl ModelFlags {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set!(
            k => c.k,
            depth => c.depth,
            lambda_bce => c.lambda_bce,
            mode => c.aggregation,
            lr_encoder => c.lr_encoder,
            lr_model => c.lr_model,
            decay => c.lr_decay,
            decay_every => c.decay_every,
            epochs => c.epochs,
            episodes => c.episodes,
            batch => c.batch_size,
            hidden => c.hidden_dim,
            way => c.episode.way,
            shot => c.episode.shot,
            queries => c.episode.queries,
            pretrain_epochs => c.pretrain_epochs,
        );
        if let Some(e) = self.encoder {
            c.encoder = match e {
                EncoderArg::Identity => EncoderKind::Identity,
                EncoderArg::Mlp => EncoderKind::Mlp,
            };
        }
        if self.embed_dim.is_some() {
            c.embed_dim = self.embed_dim;
        }
        if self.imprint_scale.is_some() {
            c.imprint_scale = self.imprint_scale;
        }
        if self.random_classifier {
            c.imprint_scale = None;
        }
        c.seed = self.seed;
        c.memory_update = !self.no_memory_update;
        c
    }
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    flags: ModelFlags,
    /// Learning rate of the pretraining head and encoder
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainCmd {
    #[arg(long)]
    data: PathBuf,
    /// Initial parameters (e.g. from `pretrain`)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    flags: ModelFlags,
    /// Where to write the trained checkpoint
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the JSON-lines training log
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct EvalFlags {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<AggregationMode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalRetrievalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Labeled training features that seed the memory
    #[arg(long)]
    train: Option<PathBuf>,
    /// Labeled test set split into queries and gallery
    #[arg(long, conflicts_with_all = ["query", "gallery"])]
    test: Option<PathBuf>,
    #[arg(long, requires = "gallery")]
    query: Option<PathBuf>,
    #[arg(long, requires = "query")]
    gallery: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    queries_per_class: usize,
    #[arg(long)]
    memory_sample_ratio: Option<f64>,
    #[command(flatten)]
    eval: EvalFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalFewshotArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 5)]
    way: usize,
    #[arg(long, default_value_t = 1)]
    shot: usize,
    #[arg(long, default_value_t = 15)]
    queries: usize,
    #[command(flatten)]
    eval: EvalFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Retrieval,
    Fewshot,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Retrieval)]
    task: Task,
    /// `key=v1,v2,...`; repeat for a grid
    #[arg(long, required = true)]
    sweep: Vec<String>,
    #[command(flatten)]
    flags: ModelFlags,
    #[arg(long, default_value_t = 1)]
    queries_per_class: usize,
    #[arg(long)]
    memory_sample_ratio: Option<f64>,
    /// Test episodes per row (few-shot task)
    #[arg(long, default_value_t = 1000)]
    eval_episodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Central-difference step
    #[arg(long, default_value_t = GRADCHECK_STEP)]
    step: f64,
}

fn parse_mode(s: &str) -> std::result::Result<AggregationMode, String> {
    s.parse()
}

/// Parses `argv` (including the program name) and runs one command.
/// Returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Gen(a) => gen(a, out),
        Command::Pretrain(a) => pretrain(a, out),
        Command::TrainRetrieval(a) => train(a, false, out),
        Command::TrainFewshot(a) => train(a, true, out),
        Command::EvalRetrieval(a) => eval_retrieval(a, out),
        Command::EvalFewshot(a) => eval_fewshot(a, out),
        Command::Ablate(a) => ablate(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    out.write_all(text.as_bytes())?;
    if let Some(p) = path {
        fs::write(p, text)?;
    }
    Ok(())
}

fn gen(a: GenArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = SyntheticSpec {
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        sigma: a.sigma,
        bimodal: a.bimodal,
        signal_rank: a.signal_rank,
        seed: a.seed,
    };
    let data = generate_synthetic(&spec)?;
    write_embeddings(&a.out, &EmbeddingFile::from_dataset(&data))?;
    writeln!(
        out,
        "items={}\nclasses={}\ndim={}",
        data.len(),
        data.num_classes(),
        data.dim()
    )?;
    Ok(EXIT_OK)
}

fn pretrain(a: PretrainArgs, out: &mut dyn Write) -> Result<i32> {
    let data = read_dataset(&a.data)?;
    let mut cfg = a.flags.apply(TrainConfig::retrieval());
    if let Some(lr) = a.lr {
        cfg.pretrain_lr = lr;
    }
    let report = pretrain_encoder(&data, &cfg)?;
    let mut params = cfg.init_params_with_encoder(report.encoder, data.num_classes().max(2))?;
    cfg.imprint_classifier(&mut params, &data)?;
    Checkpoint::new(cfg, params).save(&a.out)?;
    writeln!(
        out,
        "epochs={}\ntrain_accuracy={:.6}",
        report.epoch_losses.len(),
        report.train_accuracy
    )?;
    Ok(EXIT_OK)
}

/// Initial parameters for training: the checkpoint's own when they fit the
/// config, otherwise its encoder with fresh ASA rounds and classifier.
fn initial_params(
    cfg: &mut TrainConfig,
    data: &Dataset,
    ckpt: Option<&Path>,
) -> Result<ModelParams> {
    let classes = data.num_classes().max(2);
    let Some(path) = ckpt else {
        return cfg.init_params_for(data);
    };
    let c = Checkpoint::load(path)?;
    cfg.encoder = c.params.encoder.kind();
    if c.params.depth() == cfg.depth && c.params.classifier.num_classes() == classes {
        Ok(c.params)
    } else {
        let mut params = cfg.init_params_with_encoder(c.params.encoder, classes)?;
        cfg.imprint_classifier(&mut params, data)?;
        Ok(params)
    }
}

fn summary(log: &[LogRecord]) -> String {
    match log.last() {
        Some(r) => format!(
            "{}={}\nce={:.6}\nbce={:.6}\nbce_per_pair={:.6}\ntotal={:.6}\n",
            r.phase, r.index, r.ce, r.bce, r.bce_per_pair, r.total
        ),
        None => "steps=0\n".to_string(),
    }
}

fn train(a: TrainCmd, episodic: bool, out: &mut dyn Write) -> Result<i32> {
    let data = read_dataset(&a.data)?;
    let base = if episodic {
        TrainConfig::episodic()
    } else {
        TrainConfig::retrieval()
    };
    let mut cfg = a.flags.apply(base);
    let init = initial_params(&mut cfg, &data, a.checkpoint.as_deref())?;
    let (params, log) = if episodic {
        train_episodic(&data, &cfg, Some(init))?
    } else {
        let o = train_retrieval(&data, &cfg, Some(init))?;
        (o.params, o.log)
    };
    if let Some(p) = &a.log {
        write_log(&log, fs::File::create(p)?)?;
    }
    if let Some(p) = &a.out {
        Checkpoint::new(cfg, params).save(p)?;
    }
    out.write_all(summary(&log).as_bytes())?;
    Ok(EXIT_OK)
}

/// Parameters and embedding settings for evaluation. Without a checkpoint
/// the identity encoder with freshly initialized rounds is used.
fn eval_setup(
    ckpt: Option<&Path>,
    flags: &EvalFlags,
    dim: usize,
) -> Result<(ModelParams, EmbedConfig)> {
    let (params, base) = match ckpt {
        Some(p) => {
            let c = Checkpoint::load(p)?;
            if c.params.encoder.in_dim() != dim {
                return Err(MneError::shape(format!(
                    "checkpoint input dimension: expected {dim}, found {}",
                    c.params.encoder.in_dim()
                )));
            }
            (c.params, c.config)
        }
        None => {
            let cfg = TrainConfig {
                depth: flags.depth.unwrap_or(0),
                seed: flags.seed,
                ..TrainConfig::retrieval()
            };
            (cfg.init_params(dim, 2)?, cfg)
        }
    };
    let cfg = EmbedConfig {
        k: flags.k.unwrap_or(base.k),
        depth: flags.depth.unwrap_or(base.depth),
        mode: flags.mode.unwrap_or(base.aggregation),
    };
    Ok((params, cfg))
}

fn eval_retrieval(a: EvalRetrievalArgs, out: &mut dyn Write) -> Result<i32> {
    let (queries, gallery) = match (&a.test, &a.query, &a.gallery) {
        (Some(t), _, _) => {
            let (q, g, _, _) = read_dataset(t)?.split_queries(a.queries_per_class);
            (q, g)
        }
        (None, Some(q), Some(g)) => (read_dataset(q)?, read_dataset(g)?),
        _ => {
            return Err(MneError::Lookup(
                "either --test or --query with --gallery is required".into(),
            ))
        }
    };
    let train = a.train.as_ref().map(read_dataset).transpose()?;
    let (params, cfg) = eval_setup(a.checkpoint.as_deref(), &a.eval, gallery.dim())?;
    let protocol = RetrievalProtocol {
        memory_sample_ratio: a.memory_sample_ratio,
        sample_seed: a.eval.seed,
        ..Default::default()
    };
    let ev = evaluate_retrieval(train.as_ref(), &queries, &gallery, &params, &cfg, &protocol)?;
    emit(&ev.report.to_kv(), a.out.as_deref(), out)?;
    Ok(EXIT_OK)
}

fn eval_fewshot(a: EvalFewshotArgs, out: &mut dyn Write) -> Result<i32> {
    let data = read_dataset(&a.data)?;
    let (params, cfg) = eval_setup(a.checkpoint.as_deref(), &a.eval, data.dim())?;
    let shape = EpisodeShape {
        way: a.way,
        shot: a.shot,
        queries: a.queries,
    };
    let report = evaluate_fewshot(&data, &params, shape, a.episodes, a.eval.seed, &cfg)?;
    emit(&report.to_kv(), a.out.as_deref(), out)?;
    Ok(EXIT_OK)
}

const SWEEP_KEYS: &[&str] = &[
    "k",
    "depth",
    "lambda-bce",
    "mode",
    "memory-update",
    "memory-sample-ratio",
    "lr-encoder",
    "lr-model",
    "epochs",
    "episodes",
];

fn parse_sweep(s: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = s
        .split_once('=')
        .ok_or_else(|| MneError::Lookup(format!("sweep '{s}' is not key=v1,v2,...")))?;
    if !SWEEP_KEYS.contains(&key) {
        return Err(MneError::Lookup(format!(
            "unknown sweep key '{key}' (known: {})",
            SWEEP_KEYS.join(", ")
        )));
    }
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(String::is_empty) {
        return Err(MneError::Lookup(format!("sweep '{s}' has an empty value")));
    }
    Ok((key.to_string(), values))
}

/// One ablation row's settings beyond the training config.
#[derive(Debug, Clone, Copy)]
struct RowExtras {
    memory_sample_ratio: Option<f64>,
}

fn set_key(cfg: &mut TrainConfig, extras: &mut RowExtras, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| MneError::Lookup(format!("bad value '{v}' for sweep key '{key}'")))
    }
    match key {
        "k" => cfg.k = num(key, value)?,
        "depth" => cfg.depth = num(key, value)?,
        "lambda-bce" => cfg.lambda_bce = num(key, value)?,
        "mode" => cfg.aggregation = value.parse().map_err(MneError::Lookup)?,
        "memory-update" => cfg.memory_update = num(key, value)?,
        "memory-sample-ratio" => extras.memory_sample_ratio = Some(num(key, value)?),
        "lr-encoder" => cfg.lr_encoder = num(key, value)?,
        "lr-model" => cfg.lr_model = num(key, value)?,
        "epochs" => cfg.epochs = num(key, value)?,
        "episodes" => cfg.episodes = num(key, value)?,
        _ => unreachable!("sweep keys are validated"),
    }
    Ok(())
}

/// Trains one configuration from scratch and evaluates it on `test`.
fn ablation_row(
    task: Task,
    cfg: &TrainConfig,
    extras: RowExtras,
    train: &Dataset,
    test: &Dataset,
    queries_per_class: usize,
    eval_episodes: usize,
) -> Result<Vec<String>> {
    let eval_cfg = EmbedConfig {
        k: cfg.k,
        depth: cfg.depth,
        mode: cfg.aggregation,
    };
    match task {
        Task::Retrieval => {
            let params = train_retrieval(train, cfg, None)?.params;
            let (q, g, _, _) = test.split_queries(queries_per_class);
            let protocol = RetrievalProtocol {
                memory_sample_ratio: extras.memory_sample_ratio,
                sample_seed: cfg.seed,
                ..Default::default()
            };
            let RetrievalReport { map, rank1, .. } =
                evaluate_retrieval(Some(train), &q, &g, &params, &eval_cfg, &protocol)?.report;
            Ok(vec![format!("{map:.6}"), format!("{rank1:.6}")])
        }
        Task::Fewshot => {
            let (params, _) = train_episodic(train, cfg, None)?;
            let FewShotReport { mean, ci95, .. } = evaluate_fewshot(
                test,
                &params,
                cfg.episode,
                eval_episodes,
                cfg.seed,
                &eval_cfg,
            )?;
            Ok(vec![format!("{mean:.6}"), format!("{ci95:.6}")])
        }
    }
}

fn ablate(a: AblateArgs, out: &mut dyn Write) -> Result<i32> {
    let sweeps: Vec<(String, Vec<String>)> = a
        .sweep
        .iter()
        .map(|s| parse_sweep(s))
        .collect::<Result<_>>()?;
    let train = read_dataset(&a.train)?;
    let test = read_dataset(&a.test)?;
    let base = a.flags.apply(match a.task {
        Task::Retrieval => TrainConfig::retrieval(),
        Task::Fewshot => TrainConfig::episodic(),
    });

    // cartesian product, first sweep varying slowest
    let mut grid: Vec<Vec<&str>> = vec![Vec::new()];
    for (_, values) in &sweeps {
        grid = grid
            .into_iter()
            .flat_map(|row| {
                values.iter().map(move |v| {
                    let mut r = row.clone();
                    r.push(v.as_str());
                    r
                })
            })
            .collect();
    }

    let mut header: Vec<&str> = sweeps.iter().map(|(k, _)| k.as_str()).collect();
    header.extend(match a.task {
        Task::Retrieval => ["map", "rank1"],
        Task::Fewshot => ["accuracy", "ci95"],
    });
    let mut rows = Vec::with_capacity(grid.len());
    for values in &grid {
        let mut cfg = base.clone();
        let mut extras = RowExtras {
            memory_sample_ratio: a.memory_sample_ratio,
        };
        for ((key, _), v) in sweeps.iter().zip(values) {
            set_key(&mut cfg, &mut extras, key, v)?;
        }
        let mut row: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        row.extend(ablation_row(
            a.task,
            &cfg,
            extras,
            &train,
            &test,
            a.queries_per_class,
            a.eval_episodes,
        )?);
        rows.push(row);
    }
    emit(&csv_table(&header, &rows), a.out.as_deref(), out)?;
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(MneError::Numeric(format!(
            "step {} must be finite and > 0",
            a.step
        )));
    }
    let case = GradcheckCase {
        step: a.step,
        ..GradcheckCase::new(a.seed, a.dim, a.k, a.depth)
    };
    let report = gradcheck_instance(&case)?;
    let err = report.max_rel_error();
    writeln!(
        out,
        "max_rel_error={err:.3e}\ntolerance={GRADCHECK_TOLERANCE:.0e}"
    )?;
    Ok(if err < GRADCHECK_TOLERANCE {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}
