//! The `ddrnn` command-line front end.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage, 3 I/O or malformed
//! file, 4 non-finite numerics, 5 shape mismatch.

mod bench;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use bench::{bench_forward, run_bench, BenchReport, BenchRow};
pub use config::{RunConfig, RUN_CONFIG_KEYS};

use crate::data::{
    features_from_tensor, gen_blob_task, gen_chain_task, gen_marker_task, load_dataset, load_tensor, palette,
    save_dataset, export_color_map, export_label_map, BlobSpec, ChainSpec, MarkerSpec, Sample,
};
use crate::error::Error;
use crate::field::Field;
use crate::grid::{parse_directions, GridDims};
use crate::model::{
    load_model, model_forward, predict_labels, save_model, AnyParams, ModelConfig, ModelParams, SavedModel,
    Variant,
};
use crate::numerics::{Precision, Real, Rng};
use crate::training::{evaluate, gradient_check, train, GradCheckSpec, MetricsReport, TrainConfig, TrainHistory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_SHAPE: i32 = 5;

/// Noise level at which the plain-DAG baseline stays below 70% accuracy on
/// the ambiguous region of the 16×16 marker task.
pub const MARKER_NOISE: f64 = 1.3;
pub const HISTORY_FILE: &str = "history.txt";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Format { .. } | Error::Empty(_) => EXIT_IO,
        Error::NonFinite(_) => EXIT_NUMERIC,
        Error::Shape(_) => EXIT_SHAPE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "ddrnn", version, about = "Dense DAG recurrent networks over 2D grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train a model and write its parameters and history.
    Train(Box<TrainArgs>),
    /// Print labelling metrics of a model on a dataset.
    Eval(EvalArgs),
    /// Label one feature file.
    Predict(PredictArgs),
    /// Time forward passes across grid sizes and variants.
    Bench(BenchArgs),
}

#[derive(clap::Args, Debug)]
pub struct GradcheckArgs {
    /// Variant name or `all`.
    #[arg(long, default_value = "all")]
    pub variant: String,
    /// Comma-separated directions or `all`.
    #[arg(long, default_value = "all")]
    pub direction: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted elementwise relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Marker,
    Blob,
    Chain,
}

#[derive(clap::Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "marker")]
    pub task: Task,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid rows (marker and blob tasks).
    #[arg(long, default_value_t = 16)]
    pub rows: usize,
    /// Grid columns (marker and blob tasks).
    #[arg(long, default_value_t = 16)]
    pub cols: usize,
    /// Gaussian noise standard deviation [default: 1.3 for marker, 0.3 otherwise].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Side of the square marker patch.
    #[arg(long, default_value_t = 3)]
    pub marker_extent: usize,
    /// Class count (blob and chain tasks).
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Chain length (chain task).
    #[arg(long, default_value_t = 16)]
    pub len: usize,
}

#[derive(clap::Args, Debug, Default)]
#[command(after_help = config::CONFIG_HELP)]
pub struct TrainArgs {
    /// key=value file; flags given here override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation dataset directory [default: none].
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    /// Output model directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// chain, plain-dag, dense-sum or dense-attention [default: dense-attention].
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated directions or `all` [default: all].
    #[arg(long)]
    pub directions: Option<String>,
    /// Hidden width D [default: 32].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Class count K [default: largest label in the data plus one].
    #[arg(long)]
    pub classes: Option<usize>,
    /// standard (32-bit) or extended (64-bit) [default: standard].
    #[arg(long)]
    pub precision: Option<String>,
    /// Initial rate of recurrence and output parameters [default: 0.01].
    #[arg(long)]
    pub lr_rnn: Option<f64>,
    /// Initial rate of the embedding [default: 0.0001].
    #[arg(long)]
    pub lr_embed: Option<f64>,
    /// Per-epoch decay factor [default: 0.9].
    #[arg(long)]
    pub decay_rate: Option<f64>,
    /// Last epoch at the initial rates [default: 10].
    #[arg(long)]
    pub decay_start_epoch: Option<usize>,
    /// [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed of initialisation and shuffling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Global gradient-norm ceiling [default: off].
    #[arg(long)]
    pub clip_threshold: Option<f64>,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rank-3 `H×W×C` feature tensor.
    #[arg(long)]
    pub input: PathBuf,
    /// Label map written as binary PGM.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional palette rendering written as binary PPM.
    #[arg(long)]
    pub color: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated grid sides; each side `n` is an `n×n` grid.
    #[arg(long, default_value = "8,16")]
    pub sizes: String,
    /// Comma-separated variants.
    #[arg(long, default_value = "plain-dag,dense-attention")]
    pub variant: String,
    /// Timed repetitions per cell; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::GenData(a) => cmd_gen_data(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            let code = exit_code(&e);
            if code == EXIT_USAGE {
                let _ = writeln!(err, "\nFor more information, try '--help'.");
            }
            code
        }
    }
}

type CmdResult = crate::Result<i32>;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn parse_variants(s: &str) -> crate::Result<Vec<Variant>> {
    if s.trim() == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',').map(|v| v.trim().parse()).collect()
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    let variants = parse_variants(&a.variant)?;
    let directions = parse_directions(&a.direction)?;
    if !(a.eps > 0.0) || !(a.tol >= 0.0) {
        return Err(Error::invalid("--eps must be positive and --tol non-negative"));
    }
    let mut all_pass = true;
    for &variant in &variants {
        for &dir in &directions {
            let mut spec = GradCheckSpec::standard(variant, dir, a.seed);
            spec.eps = a.eps;
            spec.tol = a.tol;
            let report = gradient_check(&spec)?;
            all_pass &= report.passed;
            writeln!(
                out,
                "{:<16} {:<3} max_rel_error={:.3e} compared={}/{} {}",
                variant.as_str(),
                dir.as_str(),
                report.max_rel_error,
                report.compared,
                report.total,
                if report.passed { "PASS" } else { "FAIL" }
            )
            .map_err(io_err)?;
        }
    }
    Ok(if all_pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_gen_data(a: &GenDataArgs, out: &mut dyn Write) -> CmdResult {
    let samples = match a.task {
        Task::Marker => gen_marker_task(&MarkerSpec {
            dims: GridDims::new(a.rows, a.cols)?,
            noise_sigma: a.noise.unwrap_or(MARKER_NOISE),
            marker_extent: a.marker_extent,
            n_samples: a.samples,
            seed: a.seed,
        })?,
        Task::Blob => gen_blob_task(&BlobSpec {
            dims: GridDims::new(a.rows, a.cols)?,
            classes: a.classes,
            noise_sigma: a.noise.unwrap_or(0.3),
            n_samples: a.samples,
            seed: a.seed,
        })?,
        Task::Chain => gen_chain_task(&ChainSpec {
            len: a.len,
            classes: a.classes,
            noise_sigma: a.noise.unwrap_or(0.3),
            n_samples: a.samples,
            seed: a.seed,
        })?,
    };
    save_dataset(&a.out, &samples)?;
    writeln!(out, "wrote {} samples to {}", samples.len(), a.out.display()).map_err(io_err)?;
    Ok(EXIT_OK)
}

/// Class count implied by the labels of `samples`.
fn infer_classes(samples: &[Sample]) -> usize {
    let max = samples
        .iter()
        .flat_map(|s| s.labels.as_slice().iter().copied())
        .filter(|&l| l != crate::field::IGNORE_LABEL)
        .max()
        .unwrap_or(0);
    (max as usize + 1).max(2)
}

/// Resolved training run: model configuration, optimiser settings, paths.
#[derive(Clone, Debug)]
pub struct TrainPlan {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub precision: Precision,
    pub data: PathBuf,
    pub val_data: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.override_with(&RunConfig::from_args(a)?);
    let data = cfg.data.clone().ok_or_else(|| Error::invalid("no training data: pass --data or set `data`"))?;
    let train_set = load_dataset(&data)?;
    let val_set = match &cfg.val_data {
        Some(p) => load_dataset(p)?,
        None => Vec::new(),
    };
    let plan = cfg.resolve(&train_set)?;
    let history = train_to_dir(&plan, &train_set, &val_set)?;
    let last = history.epochs.last().map_or(f64::NAN, |e| e.loss);
    writeln!(out, "trained {} epochs, final loss {last:.6}, model in {}", history.epochs.len(), plan.out.display())
        .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn train_at<T: Real>(plan: &TrainPlan, train_set: &[Sample], val_set: &[Sample]) -> crate::Result<(TrainHistory, ModelParams<T>)> {
    let mut root = Rng::new(plan.train.seed);
    let params = ModelParams::<T>::init(&plan.model, &mut root.fork());
    let train_cfg = TrainConfig { seed: root.next_u64(), ..plan.train.clone() };
    train(&plan.model, params, train_set, val_set, &train_cfg)
}

/// Trains per `plan` and writes the model directory with its history log.
pub fn train_to_dir(plan: &TrainPlan, train_set: &[Sample], val_set: &[Sample]) -> crate::Result<TrainHistory> {
    let (history, params) = match plan.precision {
        Precision::Standard => {
            let (h, p) = train_at::<f32>(plan, train_set, val_set)?;
            (h, AnyParams::Standard(p))
        }
        Precision::Extended => {
            let (h, p) = train_at::<f64>(plan, train_set, val_set)?;
            (h, AnyParams::Extended(p))
        }
    };
    save_model(&plan.out, &SavedModel { config: plan.model.clone(), params })?;
    let path = plan.out.join(HISTORY_FILE);
    std::fs::write(&path, history.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(history)
}

/// Metrics of a stored model, computed at its own precision.
pub fn evaluate_model(model: &SavedModel, samples: &[Sample]) -> crate::Result<MetricsReport> {
    if let Some(s) = samples.iter().find(|s| s.features.channels() != model.config.in_channels) {
        return Err(Error::shape(format!(
            "data has {} channels, model expects {}",
            s.features.channels(),
            model.config.in_channels
        )));
    }
    match &model.params {
        AnyParams::Standard(p) => evaluate(&model.config, p, samples),
        AnyParams::Extended(p) => evaluate(&model.config, p, samples),
    }
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let model = load_model(&a.model)?;
    let samples = load_dataset(&a.data)?;
    let report = evaluate_model(&model, &samples)?;
    writeln!(out, "{report}\n\n{}", report.key_values()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn predict_at<T: Real>(config: &ModelConfig, params: &ModelParams<T>, features: &Field<f64>) -> crate::Result<crate::LabelMap> {
    let trace = model_forward(&features.cast::<T>(), config, params)?;
    Ok(predict_labels(&trace.probs))
}

/// Argmax labels of a stored model for one feature field.
pub fn predict_model(model: &SavedModel, features: &Field<f64>) -> crate::Result<crate::LabelMap> {
    if features.channels() != model.config.in_channels {
        return Err(Error::shape(format!(
            "input has {} channels, model expects {}",
            features.channels(),
            model.config.in_channels
        )));
    }
    match &model.params {
        AnyParams::Standard(p) => predict_at(&model.config, p, features),
        AnyParams::Extended(p) => predict_at(&model.config, p, features),
    }
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> CmdResult {
    let model = load_model(&a.model)?;
    let tensor = load_tensor(&a.input)?;
    let features = features_from_tensor(&tensor, &a.input)?;
    let labels = predict_model(&model, &features)?;
    export_label_map(&labels, &a.out)?;
    if let Some(color) = &a.color {
        export_color_map(&labels, &palette(), color)?;
    }
    writeln!(out, "wrote {} label map to {}", labels.dims(), a.out.display()).map_err(io_err)?;
    Ok(EXIT_OK)
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CmdResult {
    let sizes = a
        .sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad size `{s}`"))))
        .collect::<crate::Result<Vec<_>>>()?;
    let variants = parse_variants(&a.variant)?;
    let report = run_bench(&sizes, &variants, a.reps, a.hidden, a.seed)?;
    write!(out, "{report}").map_err(io_err)?;
    Ok(EXIT_OK)
}

/// Entry point of the binary.
pub fn main_from_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
