// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Settings resolve as flags over the `--config` TOML file over built-in
//! defaults. Every command that writes files writes them under `--out` only and
//! finishes with `manifest.json`, which lists each output with its SHA-256.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, CheckpointMeta};
use crate::error::{Error, Result};
use crate::harness::{
    ablation_run, evaluate, gradcheck, shifted_test_set, sweep, train_observed, AblationReport, AblationSetup,
    DataLayout, LossKind, LossSteps, Metric, ModelKind, ModelSpec, OptimizerConfig, TrainConfig,
};
use crate::numerics::streams;
use crate::tasks::{
    chronological_split, draw_segments, gen_spiky, load_csv_series, window_series, write_csv_series,
    SeriesWindowSpec, SpikyConfig, TargetStat, TaskDataset, TaskKind, TaskSpec,
};

/// Exit code of a gradient check that ran but exceeded its tolerance.
pub const EXIT_CHECK_FAILED: i32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "equilibria", version, about = "Train and stress-test implicit models against explicit baselines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training and test datasets for a task.
    GenData(GenDataArgs),
    /// Train a model and save a checkpoint with its run record.
    Train(TrainArgs),
    /// Score a checkpoint on a saved dataset.
    Eval(EvalArgs),
    /// Score a checkpoint on test sets drawn at increasing distribution shift.
    Sweep(SweepArgs),
    /// Train with and without feedback from the same seed and compare the sweeps.
    Ablate(AblateArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct TaskFlags {
    /// identity, add, sub, rolling-average, rolling-argmax, spiky or series.
    #[arg(long)]
    pub task: Option<String>,
    /// Training samples for sampled tasks.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Identity dimension, arithmetic input length or rolling sequence length.
    #[arg(long)]
    pub size: Option<usize>,
    /// Window length for series tasks.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// next-value or variance.
    #[arg(long)]
    pub target_stat: Option<String>,
    /// CSV file for the series task.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub column: Option<String>,
    /// Fraction of the series used for training windows (series task).
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    /// implicit, implicit-rnn, mlp or elman.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub state_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Comma-separated MLP hidden widths.
    #[arg(long, value_delimiter = ',')]
    pub mlp_hidden: Option<Vec<usize>>,
    /// Affine readout after the implicitRNN hidden output.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub readout: Option<bool>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr", alias = "learning-rate")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Initialization and shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// mse or cross-entropy.
    #[arg(long)]
    pub loss: Option<String>,
    /// all or final.
    #[arg(long)]
    pub loss_steps: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub feedback: Option<bool>,
    #[arg(long)]
    pub norm_bound: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub warm_start: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub parallel: Option<bool>,
    /// Worker threads for `--parallel`.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub task: TaskFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a test set at each of these shifts.
    #[arg(long, value_delimiter = ',')]
    pub shifts: Option<Vec<f64>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskFlags,
    /// Train on a saved dataset instead of generating one.
    #[arg(long, conflicts_with = "task")]
    pub data: Option<PathBuf>,
    /// Seed for generated training data; defaults to the training seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subset of mse, log_mse, rmse, mape, accuracy.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    /// Also write metrics.json and metrics.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    /// Defaults to the task stored in the checkpoint.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub shifts: Option<Vec<f64>>,
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Test data seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub task: TaskFlags,
    #[arg(long, value_delimiter = ',')]
    pub shifts: Option<Vec<f64>>,
    /// One paired run per seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Configuration file

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    task: TaskSection,
    model: ModelSection,
    train: toml::Table,
    optimizer: OptimizerSection,
    sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TaskSection {
    name: Option<String>,
    samples: Option<usize>,
    test_samples: Option<usize>,
    size: Option<usize>,
    seed: Option<u64>,
    window: Option<usize>,
    horizon: Option<usize>,
    target_stat: Option<String>,
    series: Option<PathBuf>,
    column: Option<String>,
    split: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    kind: Option<String>,
    state_dim: Option<usize>,
    hidden_dim: Option<usize>,
    mlp_hidden: Option<Vec<usize>>,
    readout: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OptimizerSection {
    kind: Option<String>,
    momentum: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    shifts: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    test_samples: Option<usize>,
    seed: Option<u64>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Resolution of tasks, models and training settings

/// Effective task settings after merging flags, file and defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskPlan {
    pub kind: TaskKind,
    pub size: Option<usize>,
    pub samples: usize,
    pub test_samples: usize,
    pub window: usize,
    pub horizon: usize,
    pub target_stat: TargetStat,
    pub series: Option<PathBuf>,
    pub column: String,
    pub split: f64,
}

fn parse_target_stat(s: &str) -> Result<TargetStat> {
    match s {
        "next-value" | "next_value" => Ok(TargetStat::NextValue),
        "variance" => Ok(TargetStat::Variance),
        other => Err(Error::Unknown {
            what: "target statistic",
            name: other.to_string(),
        }),
    }
}

impl TaskPlan {
    fn resolve(flags: &TaskFlags, file: &TaskSection) -> Result<Self> {
        let name = flags
            .task
            .clone()
            .or_else(|| file.name.clone())
            .ok_or_else(|| Error::Usage("no task given (use --task or [task] name)".into()))?;
        let stat = flags.target_stat.clone().or_else(|| file.target_stat.clone());
        let plan = Self {
            kind: TaskKind::parse(&name)?,
            size: flags.size.or(file.size),
            samples: flags.samples.or(file.samples).unwrap_or(10_000),
            test_samples: flags.test_samples.or(file.test_samples).unwrap_or(3_000),
            window: flags.window.or(file.window).unwrap_or(50),
            horizon: flags.horizon.or(file.horizon).unwrap_or(1),
            target_stat: stat.as_deref().map(parse_target_stat).transpose()?.unwrap_or(TargetStat::NextValue),
            series: flags.series.clone().or_else(|| file.series.clone()),
            column: flags.column.clone().or_else(|| file.column.clone()).unwrap_or_else(|| "value".into()),
            split: flags.split.or(file.split).unwrap_or(0.7),
        };
        if !(plan.split > 0.0 && plan.split < 1.0) {
            return Err(Error::Parameter(format!("split must lie in (0, 1), got {}", plan.split)));
        }
        if plan.kind == TaskKind::Series && plan.series.is_none() {
            return Err(Error::Usage("the series task needs --series <csv>".into()));
        }
        Ok(plan)
    }

    /// The regenerable description of a sampled task; `None` for series tasks.
    pub fn task_spec(&self, seed: u64) -> Result<Option<TaskSpec>> {
        if !self.kind.supports_shift() {
            return Ok(None);
        }
        let mut spec = TaskSpec::standard(self.kind, seed)?;
        if let Some(size) = self.size {
            if size == 0 {
                return Err(Error::Parameter("task size must be at least 1".into()));
            }
            spec.size = size;
            if spec.segments.is_some() {
                spec.segments = Some(draw_segments(size, seed)?);
            }
        }
        Ok(Some(spec))
    }

    fn window_spec(&self) -> SeriesWindowSpec {
        SeriesWindowSpec {
            window: self.window,
            horizon: self.horizon,
            target_stat: self.target_stat,
        }
    }
}

/// Datasets produced from a task plan, plus extra files (raw series) to write.
pub struct Generated {
    pub spec: Option<TaskSpec>,
    pub train: TaskDataset,
    pub test: TaskDataset,
    pub series: Vec<(String, Vec<f64>)>,
}

/// Training data on the DATA stream and an in-distribution test set on the
/// TEST_DATA stream, both from `seed`.
pub fn generate(plan: &TaskPlan, seed: u64) -> Result<Generated> {
    if let Some(spec) = plan.task_spec(seed)? {
        let train = spec.generate(plan.samples, &plan.kind.train_distribution()?, seed, streams::DATA)?;
        let test = shifted_test_set(&spec, 0.0, seed, plan.test_samples)?;
        return Ok(Generated {
            spec: Some(spec),
            train,
            test,
            series: Vec::new(),
        });
    }
    let ws = plan.window_spec();
    if plan.kind == TaskKind::Spiky {
        let s = gen_spiky(&SpikyConfig::default(), seed)?;
        let mut train = window_series(&s.train, &ws, TaskKind::Spiky)?;
        let mut test = window_series(&s.test, &ws, TaskKind::Spiky)?;
        train.seed = seed;
        test.seed = seed;
        train.layout = Some(s.layout.clone());
        test.layout = Some(s.layout);
        return Ok(Generated {
            spec: None,
            train,
            test,
            series: vec![("train.csv".into(), s.train), ("test.csv".into(), s.test)],
        });
    }
    let path = plan.series.as_ref().expect("checked in resolve");
    let values = load_csv_series(path, &plan.column)?;
    let all = window_series(&values, &ws, TaskKind::Series)?;
    let cutoff = (plan.split * values.len() as f64).round() as usize;
    let (train, test) = chronological_split(&all, cutoff, plan.horizon)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty(format!(
            "split at {cutoff} of {} leaves no training or no test windows",
            values.len()
        )));
    }
    Ok(Generated {
        spec: None,
        train,
        test,
        series: Vec::new(),
    })
}

/// Architecture used when only the model family is given.
///
/// | task | implicit `n` | implicitRNN `(n, hidden, readout)` | MLP | Elman hidden |
/// |---|---|---|---|---|
/// | identity | 4 | (20, 10, yes) | 9, 9 | 20 |
/// | add / sub | 20 | (20, 10, yes) | 20, 20 | 20 |
/// | rolling average | 32 | (20, 10, yes) | 20, 20 | 20 |
/// | rolling argmax | 36 | (21, 10, no) | 20, 20 | 21 |
/// | spiky / series | 20 | (20, 20, yes) | 20, 20 | 20 |
pub fn default_model_spec(kind: ModelKind, task: TaskKind) -> ModelSpec {
    match kind {
        ModelKind::Implicit => ModelSpec::implicit(match task {
            TaskKind::Identity => 4,
            TaskKind::RollingAverage => 32,
            TaskKind::RollingArgmax => 36,
            _ => 20,
        }),
        ModelKind::ImplicitRnn => match task {
            TaskKind::RollingArgmax => ModelSpec::implicit_rnn(21, 10, false),
            TaskKind::Spiky | TaskKind::Series => ModelSpec::implicit_rnn(20, 20, true),
            _ => ModelSpec::implicit_rnn(20, 10, true),
        },
        ModelKind::Mlp => ModelSpec::mlp(if task == TaskKind::Identity { &[9, 9] } else { &[20, 20] }),
        ModelKind::Elman => ModelSpec::elman(if task == TaskKind::RollingArgmax { 21 } else { 20 }),
    }
}

fn resolve_model(flags: &ModelFlags, file: &ModelSection, task: TaskKind) -> Result<ModelSpec> {
    let name = flags.model.clone().or_else(|| file.kind.clone()).unwrap_or_else(|| "implicit".into());
    let mut spec = default_model_spec(ModelKind::parse(&name)?, task);
    if let Some(n) = flags.state_dim.or(file.state_dim) {
        spec.state_dim = n;
    }
    if let Some(h) = flags.hidden_dim.or(file.hidden_dim) {
        spec.hidden_dim = h;
    }
    if let Some(w) = flags.mlp_hidden.clone().or_else(|| file.mlp_hidden.clone()) {
        spec.mlp_hidden = w;
    }
    if let Some(r) = flags.readout.or(file.readout) {
        spec.readout = r;
    }
    Ok(spec)
}

fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "mse" => Ok(LossKind::Mse),
        "cross-entropy" | "cross_entropy" | "softmax-cross-entropy" | "softmax_cross_entropy" | "ce" => {
            Ok(LossKind::SoftmaxCrossEntropy)
        }
        other => Err(Error::Unknown {
            what: "loss",
            name: other.to_string(),
        }),
    }
}

fn parse_loss_steps(s: &str) -> Result<LossSteps> {
    match s {
        "all" => Ok(LossSteps::All),
        "final" => Ok(LossSteps::Final),
        other => Err(Error::Unknown {
            what: "loss steps",
            name: other.to_string(),
        }),
    }
}

fn optimizer_of(kind: &str) -> Result<OptimizerConfig> {
    match kind {
        "adam" => Ok(OptimizerConfig::default()),
        "sgd" => Ok(OptimizerConfig::sgd()),
        other => Err(Error::Unknown {
            what: "optimizer",
            name: other.to_string(),
        }),
    }
}

fn overlay_optimizer(opt: &mut OptimizerConfig, momentum: Option<f64>, betas: [Option<f64>; 3]) -> Result<()> {
    match opt {
        OptimizerConfig::Sgd { momentum: m } => {
            if betas.iter().any(Option::is_some) {
                return Err(Error::Usage("beta1, beta2 and eps apply to adam only".into()));
            }
            if let Some(v) = momentum {
                *m = v;
            }
        }
        OptimizerConfig::Adam { beta1, beta2, eps } => {
            if momentum.is_some() {
                return Err(Error::Usage("momentum applies to sgd only".into()));
            }
            for (slot, v) in [beta1, beta2, eps].into_iter().zip(betas) {
                if let Some(v) = v {
                    *slot = v;
                }
            }
        }
    }
    Ok(())
}

/// Built-in defaults (cross-entropy for classification tasks, final-step loss for
/// series forecasting), then the file's `[train]` and `[optimizer]` sections, then flags.
fn resolve_train(flags: &TrainFlags, file: &FileConfig, task: TaskKind) -> Result<TrainConfig> {
    let mut base = TrainConfig::default();
    if task.is_classification() {
        base.loss = LossKind::SoftmaxCrossEntropy;
    }
    if matches!(task, TaskKind::Spiky | TaskKind::Series) {
        base.loss_steps = LossSteps::Final;
    }
    let mut table = toml::Table::try_from(&base).map_err(|e| Error::Format(format!("config: {e}")))?;
    for (k, v) in &file.train {
        table.insert(k.clone(), v.clone());
    }
    let mut cfg: TrainConfig =
        TrainConfig::deserialize(table).map_err(|e| Error::Format(format!("[train] section: {e}")))?;

    let o = &file.optimizer;
    if let Some(kind) = &o.kind {
        cfg.optimizer = optimizer_of(kind)?;
    }
    if let Some(kind) = &flags.optimizer {
        cfg.optimizer = optimizer_of(kind)?;
    }
    overlay_optimizer(&mut cfg.optimizer, o.momentum, [o.beta1, o.beta2, o.eps])?;
    overlay_optimizer(&mut cfg.optimizer, flags.momentum, [None; 3])?;

    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = flags.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(epochs, learning_rate, batch_size, seed, feedback, norm_bound, max_iterations, epsilon, warm_start, parallel);
    if let Some(l) = &flags.loss {
        cfg.loss = parse_loss(l)?;
    }
    if let Some(s) = &flags.loss_steps {
        cfg.loss_steps = parse_loss_steps(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_shifts(kind: TaskKind) -> Vec<f64> {
    match kind {
        TaskKind::Identity => vec![0.0, 10.0, 20.0, 40.0, 80.0],
        TaskKind::Addition | TaskKind::Subtraction => vec![0.0, 10.0, 100.0, 1000.0],
        _ => vec![0.0, 5.0, 10.0, 100.0],
    }
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Outputs and manifest

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to `--out` for outputs, as given on the command line for inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub command_line: Vec<String>,
    /// Effective settings after merging flags, config file and defaults.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path, label: String) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: label,
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Digests of a dataset directory's files, labelled relative to the invocation.
fn dataset_digests(dir: &Path) -> Result<Vec<FileDigest>> {
    ["inputs.bin", "targets.bin", "dataset.json"]
        .iter()
        .map(|name| {
            let p = dir.join(name);
            digest_file(&p, p.display().to_string())
        })
        .collect()
}

struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.files.push(p);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }

    fn finish(self, ctx: &Context, config: serde_json::Value, seeds: BTreeMap<String, u64>, inputs: Vec<FileDigest>) -> Result<PathBuf> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for p in &self.files {
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            outputs.push(digest_file(p, rel.to_string_lossy().replace('\\', "/"))?);
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: "equilibria".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: ctx.command.into(),
            command_line: ctx.argv.clone(),
            config,
            seeds,
            inputs,
            outputs,
            wall_time_secs: ctx.started.elapsed().as_secs_f64(),
        };
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

struct Context {
    command: &'static str,
    argv: Vec<String>,
    started: Instant,
}

fn seeds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_gen_data(args: GenDataArgs, ctx: &Context) -> Result<i32> {
    let file = read_config(args.config.as_deref())?;
    let plan = TaskPlan::resolve(&args.task, &file.task)?;
    let seed = args.seed.or(file.task.seed).unwrap_or(0);
    let shifts = args.shifts.or(file.sweep.shifts).unwrap_or_default();
    if !shifts.is_empty() && !plan.kind.supports_shift() {
        return Err(Error::Usage(format!("task '{}' has no shifted test sets", plan.kind.name())));
    }
    let g = generate(&plan, seed)?;
    let mut out = Outputs::create(&args.out)?;
    out.record(g.train.save(&out.path("train"))?);
    out.record(g.test.save(&out.path("test"))?);
    for (name, values) in &g.series {
        let p = out.path(&format!("series/{name}"));
        fs::create_dir_all(out.path("series")).map_err(|e| Error::io(out.path("series"), e))?;
        write_csv_series(&p, "value", values)?;
        out.record([p]);
    }
    if let Some(spec) = &g.spec {
        for &k in &shifts {
            let ds = shifted_test_set(spec, k, seed, plan.test_samples)?;
            out.record(ds.save(&out.path(&format!("test-kappa-{k}")))?);
        }
    }
    let config = serde_json::json!({ "task": plan, "task_spec": g.spec, "shifts": shifts });
    let manifest = out.finish(ctx, config, seeds(&[("data", seed)]), Vec::new())?;
    println!("{}", manifest.display());
    Ok(0)
}

/// A dataset directory, or a gen-data output directory holding `train/`.
fn dataset_dir(path: &Path) -> PathBuf {
    if !path.join("dataset.json").exists() && path.join("train").join("dataset.json").exists() {
        path.join("train")
    } else {
        path.to_path_buf()
    }
}

fn cmd_train(args: TrainArgs, ctx: &Context) -> Result<i32> {
    let file = read_config(args.config.as_deref())?;
    configure_threads(args.train.threads)?;
    let (dataset, task_spec, plan, inputs, data_seed) = match &args.data {
        Some(dir) => {
            let dir = dataset_dir(dir);
            let ds = TaskDataset::load(&dir)?;
            let spec = TaskSpec::from_dataset(&ds).ok();
            let seed = ds.seed;
            (ds, spec, None, dataset_digests(&dir)?, seed)
        }
        None => {
            let plan = TaskPlan::resolve(&args.task, &file.task)?;
            let train_seed = args.train.seed.or_else(|| file.train.get("seed").and_then(|v| v.as_integer()).map(|v| v as u64));
            let seed = args.data_seed.or(file.task.seed).or(train_seed).unwrap_or(0);
            let g = generate(&plan, seed)?;
            (g.train, g.spec, Some(plan), Vec::new(), seed)
        }
    };
    let spec = resolve_model(&args.model, &file.model, dataset.kind)?;
    let cfg = resolve_train(&args.train, &file, dataset.kind)?;
    let quiet = args.quiet;
    let (model, mut record) = train_observed(&spec, &dataset, &cfg, &mut |r, _| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  loss {:.6e}{}",
                r.epoch,
                r.train_loss,
                r.mean_iterations.map(|m| format!("  mean iterations {m:.2}")).unwrap_or_default()
            );
        }
        Ok(())
    })?;
    let mut out = Outputs::create(&args.out)?;
    let meta = CheckpointMeta {
        task: task_spec,
        layout: Some(DataLayout::of(&dataset)),
        train_seed: Some(cfg.seed),
    };
    out.write("model.ckpt", &checkpoint::to_bytes(&model, &meta)?)?;
    record.checkpoint = Some("model.ckpt".into());
    out.write_json("run.json", &record)?;
    out.write("run.csv", record.to_csv().as_bytes())?;
    let config = serde_json::json!({ "task": plan, "task_spec": task_spec, "model": spec, "train": cfg });
    let manifest = out.finish(ctx, config, seeds(&[("data", data_seed), ("init", cfg.seed)]), inputs)?;
    println!("{}", manifest.display());
    Ok(0)
}

fn cmd_eval(args: EvalArgs, ctx: &Context) -> Result<i32> {
    let (model, _) = checkpoint::load(&args.model_file)?;
    let dir = dataset_dir(&args.data);
    let ds = TaskDataset::load(&dir)?;
    let eval = evaluate(&model, &ds)?;
    let metrics: Vec<Metric> = match &args.metrics {
        Some(names) => names.iter().map(|n| Metric::parse(n)).collect::<Result<_>>()?,
        None => vec![Metric::Mse, Metric::LogMse, Metric::Rmse, Metric::Mape, Metric::Accuracy],
    };
    let mut values = serde_json::Map::new();
    let mut csv = String::from("metric,value\n");
    for m in &metrics {
        let v = eval.metrics.get(*m);
        values.insert(m.name().into(), serde_json::json!(v));
        csv.push_str(&format!("{},{}\n", m.name(), v.map(|x| format!("{x:?}")).unwrap_or_default()));
    }
    let report = serde_json::json!({
        "samples": eval.metrics.samples,
        "metrics": values,
        "mape_excluded": eval.metrics.mape_excluded,
        "iterations": eval.iterations,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(root) = &args.out {
        let mut out = Outputs::create(root)?;
        out.write_json("metrics.json", &report)?;
        out.write("metrics.csv", csv.as_bytes())?;
        let mut inputs = dataset_digests(&dir)?;
        inputs.push(digest_file(&args.model_file, args.model_file.display().to_string())?);
        let config = serde_json::json!({ "metrics": metrics });
        out.finish(ctx, config, BTreeMap::new(), inputs)?;
    }
    Ok(0)
}

fn cmd_sweep(args: SweepArgs, ctx: &Context) -> Result<i32> {
    let file = read_config(args.config.as_deref())?;
    let (model, meta) = checkpoint::load(&args.model_file)?;
    let name = args.task.clone().or_else(|| file.task.name.clone());
    let task = match (name, meta.task) {
        (None, Some(t)) => t,
        (Some(n), Some(t)) => {
            let kind = TaskKind::parse(&n)?;
            if kind != t.kind {
                return Err(Error::Usage(format!(
                    "checkpoint was trained on '{}', not '{}'",
                    t.kind.name(),
                    kind.name()
                )));
            }
            t
        }
        (Some(n), None) => {
            let kind = TaskKind::parse(&n)?;
            let seed = meta.train_seed.unwrap_or(0);
            let plan = TaskPlan::resolve(
                &TaskFlags {
                    task: Some(n),
                    ..TaskFlags::default()
                },
                &file.task,
            )?;
            plan.task_spec(seed)?.ok_or_else(|| {
                Error::Usage(format!("task '{}' does not support distribution shift", kind.name()))
            })?
        }
        (None, None) => return Err(Error::Usage("checkpoint records no task; pass --task".into())),
    };
    let shifts = args.shifts.or(file.sweep.shifts).unwrap_or_else(|| default_shifts(task.kind));
    let n_test = args.test_samples.or(file.sweep.test_samples).or(file.task.test_samples).unwrap_or(3_000);
    let seed = args.seed.or(file.sweep.seed).unwrap_or(0);
    let report = sweep(&model, &task, &shifts, seed, n_test)?;
    let mut out = Outputs::create(&args.out)?;
    out.write_json("sweep.json", &report)?;
    out.write("sweep.csv", report.to_csv().as_bytes())?;
    let inputs = vec![digest_file(&args.model_file, args.model_file.display().to_string())?];
    let config = serde_json::json!({ "task_spec": task, "shifts": shifts, "test_samples": n_test });
    let manifest = out.finish(ctx, config, seeds(&[("test_data", seed)]), inputs)?;
    println!("{}", manifest.display());
    Ok(0)
}

fn cmd_ablate(args: AblateArgs, ctx: &Context) -> Result<i32> {
    let file = read_config(args.config.as_deref())?;
    configure_threads(args.train.threads)?;
    let plan = TaskPlan::resolve(&args.task, &file.task)?;
    if !plan.kind.supports_shift() {
        return Err(Error::Usage(format!("the ablation needs a sampled task, not '{}'", plan.kind.name())));
    }
    let model = resolve_model(&args.model, &file.model, plan.kind)?;
    if !matches!(model.kind, ModelKind::Implicit | ModelKind::ImplicitRnn) {
        return Err(Error::Usage("the feedback ablation needs an implicit or implicit-rnn model".into()));
    }
    let cfg = resolve_train(&args.train, &file, plan.kind)?;
    let shifts = args.shifts.or(file.sweep.shifts).unwrap_or_else(|| default_shifts(plan.kind));
    let run_seeds = args.seeds.or(file.sweep.seeds).unwrap_or_else(|| vec![cfg.seed]);
    let mut out = Outputs::create(&args.out)?;
    let mut summary = String::from("seed,");
    summary.push_str(AblationReport::CSV_HEADER);
    summary.push('\n');
    let mut seed_map = BTreeMap::new();
    for &seed in &run_seeds {
        let task = plan.task_spec(seed)?.expect("sampled task");
        let setup = AblationSetup {
            task,
            model: model.clone(),
            train_samples: plan.samples,
            test_samples: plan.test_samples,
            shifts: shifts.clone(),
        };
        eprintln!("seed {seed}: training with and without feedback");
        let report = ablation_run(&setup, &cfg, seed)?;
        let dir = format!("seed-{seed}");
        out.write_json(&format!("{dir}/ablation.json"), &report)?;
        out.write(&format!("{dir}/comparison.csv"), report.comparison_csv().as_bytes())?;
        out.write(&format!("{dir}/with_feedback.csv"), report.with_feedback.to_csv().as_bytes())?;
        out.write(&format!("{dir}/without_feedback.csv"), report.without_feedback.to_csv().as_bytes())?;
        for line in report.comparison_csv().lines().skip(1) {
            summary.push_str(&format!("{seed},{line}\n"));
        }
        seed_map.insert(format!("seed-{seed}"), seed);
    }
    out.write("comparison.csv", summary.as_bytes())?;
    let config = serde_json::json!({ "task": plan, "model": model, "train": cfg, "shifts": shifts, "seeds": run_seeds });
    let manifest = out.finish(ctx, config, seed_map, Vec::new())?;
    println!("{}", manifest.display());
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs, ctx: &Context) -> Result<i32> {
    let kind = ModelKind::parse(&args.model)?;
    let report = gradcheck(kind, args.trials, args.tol, args.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    eprintln!(
        "{}: {} max relative error {:.3e} (tolerance {:.1e})",
        kind.name(),
        if report.passed { "PASS" } else { "FAIL" },
        report.max_relative_error,
        report.tolerance
    );
    if let Some(root) = &args.out {
        let mut out = Outputs::create(root)?;
        out.write_json("gradcheck.json", &report)?;
        let config = serde_json::json!({ "model": kind, "trials": args.trials, "tol": args.tol });
        out.finish(ctx, config, seeds(&[("gradcheck", args.seed)]), Vec::new())?;
    }
    Ok(if report.passed { 0 } else { EXIT_CHECK_FAILED })
}

/// Runs a parsed command and returns its exit code.
pub fn execute(cli: Cli, argv: Vec<String>) -> Result<i32> {
    let started = Instant::now();
    let ctx = |command| Context {
        command,
        argv: argv.clone(),
        started,
    };
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a, &ctx("gen-data")),
        Command::Train(a) => cmd_train(a, &ctx("train")),
        Command::Eval(a) => cmd_eval(a, &ctx("eval")),
        Command::Sweep(a) => cmd_sweep(a, &ctx("sweep")),
        Command::Ablate(a) => cmd_ablate(a, &ctx("ablate")),
        Command::Gradcheck(a) => cmd_gradcheck(a, &ctx("gradcheck")),
    }
}

/// Parses `args` (including the program name), runs the command and maps every
/// failure to its exit code. Argument errors exit with the usage code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Error::Usage(String::new()).exit_code() } else { 0 };
        }
    };
    match execute(cli, argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
