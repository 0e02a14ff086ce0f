//! Command-line front end.
//!
//! Every command writes a JSON manifest before doing any work. The manifest
//! records the fully defaulted command, the SHA-256 of each input file and
//! the tool version; `confcal rerun --manifest <file>` replays it.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical abort.
//! `CONFCAL_OUT_DIR`, when set, is prepended to relative output paths.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{reliability_export, CalibrationReport, DEFAULT_BINS};
use crate::confidence::{precompute_model_confidence, ConfidenceKind, ConfidenceTable};
use crate::dataset::{generate_synthetic, load_dataset, split, SyntheticConfig};
use crate::error::Error;
use crate::smoothing::SmoothingConfig;
use crate::trainer::{
    predict_all, train, ConfidenceTables, CurriculumConfig, LossKind, ModelParams, Strategy, TrainConfig,
};

pub const OUT_DIR_ENV: &str = "CONFCAL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "confcal", version, about = "Confidence-aware label smoothing and curriculum training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic multi-rater dataset.
    GenData(GenDataArgs),
    /// Shuffle and split a dataset into train and test files.
    Split(SplitArgs),
    /// Write a model- or human-confidence sidecar for a dataset.
    PrecomputeConfidence(PrecomputeArgs),
    /// Train a classifier under one (strategy, loss) combination.
    Train(TrainArgs),
    /// Accuracy, ECE and reliability bins of a trained model.
    Evaluate(EvaluateArgs),
    /// Re-run a command from its manifest.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub per_class: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub raters: u64,
    #[arg(long)]
    pub noise: f64,
    #[arg(long)]
    pub seed: u64,
    /// Standard deviation of centroid coordinates.
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    /// Standard deviation of samples around their centroid.
    #[arg(long, default_value_t = 1.0)]
    pub cluster_std: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Model,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Iid,
    Mccl,
    Hccl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    Ce,
    Ls,
    Mcls,
    Hcls,
}

/// Optimizer and architecture flags shared by `train` and the baseline run
/// of `precompute-confidence`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Multiplier applied to the learning rate every `--lr-decay-every` epochs.
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 10)]
    pub lr_decay_every: usize,
    /// Comma-separated hidden layer widths; pass an empty string for none.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl OptimArgs {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            momentum: self.momentum,
            lr_decay_factor: self.lr_decay,
            lr_decay_every: self.lr_decay_every,
            hidden_dims: self.hidden.clone(),
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PrecomputeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to keep the baseline model (model kind only).
    #[arg(long)]
    pub baseline_out: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "iid")]
    pub strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "ce")]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Fraction of samples admitted in the first curriculum epoch.
    #[arg(long = "r", default_value_t = 0.5)]
    pub easy_ratio: f64,
    /// Epoch from which the curriculum admits every sample.
    #[arg(long, default_value_t = 5)]
    pub end_epoch: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub model_confidence: Option<PathBuf>,
    #[arg(long)]
    pub human_confidence: Option<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub out_history: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Evaluation record (one JSON line).
    #[arg(long)]
    pub out: PathBuf,
    /// Reliability rows (CSV).
    #[arg(long)]
    pub reliability: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub command: Command,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(Error),
    #[error(transparent)]
    Numerical(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalAbort { .. } => CliError::Numerical(e),
            Error::InvalidParameter { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl Command {
    fn seed(&self) -> Option<u64> {
        match self {
            Command::GenData(a) => Some(a.seed),
            Command::Split(a) => Some(a.seed),
            Command::PrecomputeConfidence(a) => match a.kind {
                KindArg::Model => Some(a.optim.seed),
                KindArg::Human => None,
            },
            Command::Train(a) => Some(a.optim.seed),
            Command::Evaluate(_) | Command::Rerun(_) => None,
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Command::GenData(_) | Command::Rerun(_) => vec![],
            Command::Split(a) => vec![a.data.clone()],
            Command::PrecomputeConfidence(a) => vec![a.data.clone()],
            Command::Train(a) => std::iter::once(a.data.clone())
                .chain(a.model_confidence.clone())
                .chain(a.human_confidence.clone())
                .collect(),
            Command::Evaluate(a) => vec![a.model.clone(), a.data.clone()],
        }
    }

    fn manifest_path(&self) -> Option<PathBuf> {
        let (explicit, primary) = match self {
            Command::GenData(a) => (&a.manifest, &a.out),
            Command::Split(a) => (&a.manifest, &a.train_out),
            Command::PrecomputeConfidence(a) => (&a.manifest, &a.out),
            Command::Train(a) => (&a.manifest, &a.out_model),
            Command::Evaluate(a) => (&a.manifest, &a.out),
            Command::Rerun(_) => return None,
        };
        Some(explicit.clone().unwrap_or_else(|| {
            let mut name = primary.clone().into_os_string();
            name.push(".manifest.json");
            PathBuf::from(name)
        }))
    }

    /// Prefixes relative output paths with `out_dir`.
    fn resolve_outputs(&mut self, out_dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = out_dir.join(&*p);
            }
        };
        match self {
            Command::GenData(a) => {
                fix(&mut a.out);
                a.manifest.as_mut().map(fix);
            }
            Command::Split(a) => {
                fix(&mut a.train_out);
                fix(&mut a.test_out);
                a.manifest.as_mut().map(fix);
            }
            Command::PrecomputeConfidence(a) => {
                fix(&mut a.out);
                a.baseline_out.as_mut().map(fix);
                a.manifest.as_mut().map(fix);
            }
            Command::Train(a) => {
                fix(&mut a.out_model);
                fix(&mut a.out_history);
                a.manifest.as_mut().map(fix);
            }
            Command::Evaluate(a) => {
                fix(&mut a.out);
                fix(&mut a.reliability);
                a.manifest.as_mut().map(fix);
            }
            Command::Rerun(_) => {}
        }
    }
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(Error::io(path, e)))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_manifest(command: &Command) -> CliResult<()> {
    let Some(path) = command.manifest_path() else { return Ok(()) };
    let inputs = command
        .inputs()
        .into_iter()
        .map(|p| Ok(InputDigest { sha256: sha256_file(&p)?, path: p }))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: command.seed(),
        inputs,
        command: command.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Data(Error::io(&path, e)))
}

pub fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(Error::io(path, e)))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(Error::parse(path, e.line(), e)))
}

/// Runs an already resolved command; this is what a manifest replays.
pub fn execute(command: &Command) -> CliResult<()> {
    if let Command::Rerun(args) = command {
        let manifest = load_manifest(&args.manifest)?;
        for input in &manifest.inputs {
            let now = sha256_file(&input.path)?;
            if now != input.sha256 {
                return Err(CliError::Data(Error::MissingInput(format!(
                    "{} with digest {} (file changed since the manifest was written)",
                    input.path.display(),
                    input.sha256
                ))));
            }
        }
        return execute(&manifest.command);
    }
    write_manifest(command)?;
    match command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Split(a) => cmd_split(a),
        Command::PrecomputeConfidence(a) => cmd_precompute_confidence(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Rerun(_) => unreachable!("handled above"),
    }
}

pub fn cmd_gen_data(a: &GenDataArgs) -> CliResult<()> {
    let cfg = SyntheticConfig {
        centroid_spread: a.spread,
        cluster_std: a.cluster_std,
        ..SyntheticConfig::new(a.classes, a.per_class, a.dim, a.raters, a.noise, a.seed)
    };
    generate_synthetic(&cfg)?.save(&a.out)?;
    Ok(())
}

pub fn cmd_split(a: &SplitArgs) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let (train_part, test_part) = split(&data, a.train_fraction, a.seed)?;
    train_part.save(&a.train_out)?;
    test_part.save(&a.test_out)?;
    Ok(())
}

pub fn cmd_precompute_confidence(a: &PrecomputeArgs) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let table = match a.kind {
        KindArg::Human => ConfidenceTable::human(&data),
        KindArg::Model => {
            let cfg = a.optim.to_config();
            let (baseline, _) = train(&data, &cfg, ConfidenceTables::none())?;
            if let Some(path) = &a.baseline_out {
                baseline.save(path)?;
            }
            precompute_model_confidence(&baseline, &data)?
        }
    };
    table.save(&a.out)?;
    Ok(())
}

fn load_sidecar(path: &Option<PathBuf>, flag: &str, kind: ConfidenceKind, why: &str) -> CliResult<ConfidenceTable> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{why} needs the {kind} confidence sidecar ({flag} <file>)")))?;
    if !path.exists() {
        return Err(CliError::Data(Error::MissingInput(format!(
            "{kind} confidence sidecar {}",
            path.display()
        ))));
    }
    Ok(ConfidenceTable::load(path)?)
}

pub fn train_config(a: &TrainArgs) -> TrainConfig {
    let strategy = match a.strategy {
        StrategyArg::Iid => Strategy::Iid,
        StrategyArg::Mccl => Strategy::Mccl,
        StrategyArg::Hccl => Strategy::Hccl,
    };
    let loss = match a.loss {
        LossArg::Ce => LossKind::Ce,
        LossArg::Ls => LossKind::Ls,
        LossArg::Mcls => LossKind::Mcls,
        LossArg::Hcls => LossKind::Hcls,
    };
    TrainConfig {
        loss,
        strategy,
        smoothing: SmoothingConfig { alpha: a.alpha, gamma: a.gamma },
        curriculum: (strategy != Strategy::Iid)
            .then_some(CurriculumConfig { easy_ratio: a.easy_ratio, end_epoch: a.end_epoch }),
        ..a.optim.to_config()
    }
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(a);
    let needs = |kind| cfg.loss.confidence() == Some(kind) || cfg.strategy.criterion() == Some(kind);
    let why = format!("--strategy {:?} --loss {:?}", cfg.strategy, cfg.loss).to_lowercase();
    let model_table = needs(ConfidenceKind::Model)
        .then(|| load_sidecar(&a.model_confidence, "--model-confidence", ConfidenceKind::Model, &why))
        .transpose()?;
    let human_table = needs(ConfidenceKind::Human)
        .then(|| load_sidecar(&a.human_confidence, "--human-confidence", ConfidenceKind::Human, &why))
        .transpose()?;
    let data = load_dataset(&a.data)?;
    let tables = ConfidenceTables { model: model_table.as_ref(), human: human_table.as_ref() };
    let (model, history) = train(&data, &cfg, tables)?;
    model.save(&a.out_model)?;
    history.save(&a.out_history)?;
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let model = ModelParams::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    let preds = predict_all(&model, &data)?;
    let probs: Vec<_> = preds.into_iter().map(|p| p.probs).collect();
    let report = CalibrationReport::compute(&probs, &data.modal_labels(), a.bins)?;
    fs::write(&a.out, report.to_json() + "\n").map_err(|e| CliError::Data(Error::io(&a.out, e)))?;
    reliability_export(&report, &a.reliability)?;
    Ok(())
}

/// Parses `args`, resolves output paths and runs. Returns the exit code.
pub fn run_with_args<I, T>(args: I, out_dir: Option<&Path>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut command = cli.command;
    if let Some(dir) = out_dir {
        command.resolve_outputs(dir);
    }
    match execute(&command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main_from_env() -> i32 {
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    run_with_args(std::env::args_os(), out_dir.as_deref())
}
