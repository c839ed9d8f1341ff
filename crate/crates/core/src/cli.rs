//! Batch command front end.
//!
//! Every command resolves its parameters from defaults, then an optional
//! JSON config file (`--config`), then explicit flags, writes the result
//! to `config.resolved` in the output directory, and emits its artifacts
//! under fixed names there (`metrics.csv`, `summary.csv`, `dataset.bin`,
//! `checkpoint.bin`, `field_*.pgm`). Reruns with the same resolved
//! config produce byte-identical artifacts; wall-clock timestamps go
//! only to the appended sidecar `run.log`. Commands without a random
//! element accept and ignore `--seed` and `--precision`.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    basis_comparison, continuity_probe, encoding_error_with, fit_rate, write_csv, write_pgm,
    ENCODING_SUPERSAMPLE,
};
use crate::data::{self, ExperimentKind, ExperimentSpec, FilePrecision};
use crate::encode::GeometryScheme;
use crate::error::{Error, Result};
use crate::fno::{
    checkpoint, evaluate, relative_l2, train, Arch, FnoModel, HeadKind, Precision, Staged,
    TrainConfig,
};
use crate::geometry::{ClosedCurve, Geometry, Outer};
use crate::grid::{ChannelTensor, GridSpec};
use crate::problem::InterfaceProblem;
use crate::tfpm;

pub const TRAIN_CSV_HEADER: [&str; 2] = ["epoch", "loss"];
pub const TRAIN_SUMMARY_HEADER: [&str; 3] = ["final_train_loss", "test_rel_l2", "test_degenerate"];
pub const EVAL_CSV_HEADER: [&str; 3] = ["sample", "rel_l2", "degenerate"];
pub const EVAL_SUMMARY_HEADER: [&str; 3] = ["mean_rel_l2", "evaluated", "degenerate"];
pub const ENCODE_CSV_HEADER: [&str; 4] = ["resolution", "error", "fitted_slope", "fit_r2"];
pub const PROBE_SUMMARY_HEADER: [&str; 3] = ["max_ratio", "min_ratio", "slope"];
pub const SOLVE_CSV_HEADER: [&str; 5] = ["ix", "iy", "x", "y", "u"];
pub const COMPARE_SUMMARY_HEADER: [&str; 2] = ["mean_field_rel_l2", "mean_tfpm_rel_l2"];

#[derive(Parser)]
#[command(name = "ifop", version, about = "Interface-operator batch runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on the worker pool for parallel sections.
    #[arg(long)]
    workers: Option<usize>,
    /// Stored or trained parameter precision.
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Output directory, created if missing. Default: `<command>.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

impl PrecisionArg {
    fn file(self) -> FilePrecision {
        match self {
            PrecisionArg::F32 => FilePrecision::F32,
            PrecisionArg::F64 => FilePrecision::F64,
        }
    }

    fn train(self) -> Precision {
        match self {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Debug)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a dataset file from one experiment family.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Family: outer-star, inner-star, square-tfpm, planar3d, transport.
        #[arg(long)]
        experiment: Option<String>,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Grid points per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Fraction of samples assigned to the training split.
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Fit a model; writes checkpoint.bin and the loss history.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output head: field or tfpm.
        #[arg(long)]
        head: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        dv: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        /// Keep every k-th input grid point per axis before training.
        #[arg(long)]
        downsample: Option<usize>,
    },
    /// Score a checkpoint; writes per-sample errors and field images.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Number of samples rendered as field_*.pgm triplets.
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        downsample: Option<usize>,
    },
    /// Encoding discrepancy over a resolution ladder, with a fitted rate.
    EncodeStudy {
        #[command(flatten)]
        common: Common,
        /// circle, square, or star.
        #[arg(long)]
        shape: Option<String>,
        /// char or sdf.
        #[arg(long)]
        scheme: Option<String>,
        /// Doubling range `a..b` or comma list `a,b,c`.
        #[arg(long)]
        res: Option<String>,
        /// Circle radius, square side, or star mean radius.
        #[arg(long)]
        size: Option<f64>,
        /// Quadrature points per cell per axis.
        #[arg(long)]
        supersample: Option<usize>,
    },
    /// Solution response to normal perturbations of the interface.
    ContinuityStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
        /// Comma list of perturbation amplitudes.
        #[arg(long)]
        amplitudes: Option<String>,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        size: Option<f64>,
    },
    /// One-shot exponential-basis solve written to field files.
    TfpmSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        size: Option<f64>,
    },
    /// Paired coarse-model scoring against fine ground truth.
    BasisCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        field_checkpoint: Option<PathBuf>,
        #[arg(long)]
        tfpm_checkpoint: Option<PathBuf>,
        /// Input coarsening factor applied before the forward passes.
        #[arg(long)]
        factor: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum ShapeKind {
    Circle,
    Square,
    Star,
}

/// One closed interface for the study commands. `size` is the circle
/// radius, the square side, or the star mean radius; stars draw their
/// radius profile from `shape_seed` within `size * (1 ± star_relief)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeConfig {
    shape: ShapeKind,
    center: [f64; 2],
    size: f64,
    star_points: usize,
    star_relief: f64,
    shape_seed: u64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            shape: ShapeKind::Circle,
            center: [0.5, 0.5],
            size: 0.3,
            star_points: 100,
            star_relief: 0.3,
            shape_seed: 0,
        }
    }
}

impl ShapeConfig {
    fn build(&self) -> Result<ClosedCurve> {
        match self.shape {
            ShapeKind::Circle => ClosedCurve::circle(self.center, self.size),
            ShapeKind::Square => ClosedCurve::axis_square(self.center, self.size),
            ShapeKind::Star => {
                if !(self.star_relief >= 0.0 && self.star_relief < 1.0) {
                    return Err(Error::invalid("star relief must lie in [0, 1)"));
                }
                let mut rng = ChaCha20Rng::seed_from_u64(self.shape_seed);
                let radii = crate::data::gp::star_radii(
                    self.star_points,
                    self.size * (1.0 - self.star_relief),
                    self.size * (1.0 + self.star_relief),
                    &mut rng,
                );
                ClosedCurve::star(self.center, radii)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientsConfig {
    a: f64,
    b: f64,
    f: f64,
    g: f64,
}

impl Default for CoefficientsConfig {
    fn default() -> Self {
        CoefficientsConfig { a: 1.0, b: 1.0, f: 1.0, g: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    experiment: ExperimentKind,
    n_samples: usize,
    grid_points: usize,
    seed: u64,
    precision: FilePrecision,
    /// `None` keeps the family preset.
    train_fraction: Option<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            experiment: ExperimentKind::InnerStar,
            n_samples: 10,
            grid_points: 33,
            seed: 0,
            precision: FilePrecision::F64,
            train_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    dataset: PathBuf,
    head: HeadKind,
    d_v: usize,
    k_max: usize,
    layers: usize,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    precision: Precision,
    downsample: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            dataset: PathBuf::from("dataset.bin"),
            head: HeadKind::Field,
            d_v: 24,
            k_max: 8,
            layers: 3,
            learning_rate: 1e-3,
            batch_size: 5,
            epochs: 300,
            seed: 0,
            precision: Precision::F64,
            downsample: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    dataset: PathBuf,
    checkpoint: PathBuf,
    split: SplitArg,
    images: usize,
    downsample: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            dataset: PathBuf::from("dataset.bin"),
            checkpoint: PathBuf::from("checkpoint.bin"),
            split: SplitArg::Test,
            images: 4,
            downsample: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeStudyConfig {
    shape: ShapeConfig,
    scheme: GeometryScheme,
    resolutions: Vec<usize>,
    supersample: usize,
    canvas: [f64; 2],
}

impl Default for EncodeStudyConfig {
    fn default() -> Self {
        EncodeStudyConfig {
            shape: ShapeConfig::default(),
            scheme: GeometryScheme::Sdf,
            resolutions: vec![16, 32, 64, 128, 256],
            supersample: ENCODING_SUPERSAMPLE,
            canvas: [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityStudyConfig {
    shape: ShapeConfig,
    canvas: [f64; 2],
    grid_points: usize,
    amplitudes: Vec<f64>,
    directions: usize,
    seed: u64,
    coefficients: CoefficientsConfig,
    alpha: f64,
    beta: f64,
}

impl Default for ContinuityStudyConfig {
    fn default() -> Self {
        ContinuityStudyConfig {
            shape: ShapeConfig::default(),
            canvas: [0.0, 1.0],
            grid_points: 65,
            amplitudes: vec![0.002, 0.004, 0.008, 0.016],
            directions: 3,
            seed: 0,
            coefficients: CoefficientsConfig::default(),
            alpha: 0.1,
            beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfpmSolveConfig {
    shape: ShapeConfig,
    canvas: [f64; 2],
    grid_points: usize,
    coefficients: CoefficientsConfig,
    alpha: f64,
    beta: f64,
}

impl Default for TfpmSolveConfig {
    fn default() -> Self {
        TfpmSolveConfig {
            shape: ShapeConfig {
                shape: ShapeKind::Square,
                size: 0.4,
                ..ShapeConfig::default()
            },
            canvas: [0.0, 1.0],
            grid_points: 41,
            coefficients: CoefficientsConfig::default(),
            alpha: 0.02,
            beta: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisCompareConfig {
    dataset: PathBuf,
    field_checkpoint: PathBuf,
    tfpm_checkpoint: PathBuf,
    factor: usize,
}

impl Default for BasisCompareConfig {
    fn default() -> Self {
        BasisCompareConfig {
            dataset: PathBuf::from("dataset.bin"),
            field_checkpoint: PathBuf::from("checkpoint_field.bin"),
            tfpm_checkpoint: PathBuf::from("checkpoint_tfpm.bin"),
            factor: 3,
        }
    }
}

/// Parses and executes one invocation. `--help`/`--version` print and
/// succeed; anything else runs to completion or returns the first error.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::invalid(e.to_string())),
    };
    match cli.cmd {
        Cmd::Gen { common, experiment, n, grid, train_fraction } => {
            let mut cfg: GenConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = experiment {
                cfg.experiment = parse_experiment(&v)?;
            }
            if let Some(v) = n {
                cfg.n_samples = v;
            }
            if let Some(v) = grid {
                cfg.grid_points = v;
            }
            if let Some(v) = train_fraction {
                cfg.train_fraction = Some(v);
            }
            if let Some(v) = common.seed {
                cfg.seed = v;
            }
            if let Some(p) = common.precision {
                cfg.precision = p.file();
            }
            execute(&common, "gen", &cfg, |out| gen_run(&cfg, out))
        }
        Cmd::Train { common, dataset, head, epochs, lr, batch, dv, kmax, layers, downsample } => {
            let mut cfg: TrainRunConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = dataset {
                cfg.dataset = v;
            }
            if let Some(v) = head {
                cfg.head = parse_head(&v)?;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = lr {
                cfg.learning_rate = v;
            }
            if let Some(v) = batch {
                cfg.batch_size = v;
            }
            if let Some(v) = dv {
                cfg.d_v = v;
            }
            if let Some(v) = kmax {
                cfg.k_max = v;
            }
            if let Some(v) = layers {
                cfg.layers = v;
            }
            if let Some(v) = downsample {
                cfg.downsample = v;
            }
            if let Some(v) = common.seed {
                cfg.seed = v;
            }
            if let Some(p) = common.precision {
                cfg.precision = p.train();
            }
            execute(&common, "train", &cfg, |out| train_run(&cfg, out))
        }
        Cmd::Eval { common, dataset, checkpoint, split, images, downsample } => {
            let mut cfg: EvalConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = dataset {
                cfg.dataset = v;
            }
            if let Some(v) = checkpoint {
                cfg.checkpoint = v;
            }
            if let Some(v) = split {
                cfg.split = v;
            }
            if let Some(v) = images {
                cfg.images = v;
            }
            if let Some(v) = downsample {
                cfg.downsample = v;
            }
            execute(&common, "eval", &cfg, |out| eval_run(&cfg, out))
        }
        Cmd::EncodeStudy { common, shape, scheme, res, size, supersample } => {
            let mut cfg: EncodeStudyConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = shape {
                cfg.shape.shape = parse_shape(&v)?;
            }
            if let Some(v) = scheme {
                cfg.scheme = parse_scheme(&v)?;
            }
            if let Some(v) = res {
                cfg.resolutions = parse_resolutions(&v)?;
            }
            if let Some(v) = size {
                cfg.shape.size = v;
            }
            if let Some(v) = supersample {
                cfg.supersample = v;
            }
            if let Some(v) = common.seed {
                cfg.shape.shape_seed = v;
            }
            execute(&common, "encode-study", &cfg, |out| encode_study_run(&cfg, out))
        }
        Cmd::ContinuityStudy { common, shape, grid, amplitudes, directions, alpha, beta, size } => {
            let mut cfg: ContinuityStudyConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = shape {
                cfg.shape.shape = parse_shape(&v)?;
            }
            if let Some(v) = grid {
                cfg.grid_points = v;
            }
            if let Some(v) = amplitudes {
                cfg.amplitudes = parse_amplitudes(&v)?;
            }
            if let Some(v) = directions {
                cfg.directions = v;
            }
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            if let Some(v) = beta {
                cfg.beta = v;
            }
            if let Some(v) = size {
                cfg.shape.size = v;
            }
            if let Some(v) = common.seed {
                cfg.seed = v;
            }
            execute(&common, "continuity-study", &cfg, |out| continuity_study_run(&cfg, out))
        }
        Cmd::TfpmSolve { common, shape, grid, alpha, beta, size } => {
            let mut cfg: TfpmSolveConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = shape {
                cfg.shape.shape = parse_shape(&v)?;
            }
            if let Some(v) = grid {
                cfg.grid_points = v;
            }
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            if let Some(v) = beta {
                cfg.beta = v;
            }
            if let Some(v) = size {
                cfg.shape.size = v;
            }
            if let Some(v) = common.seed {
                cfg.shape.shape_seed = v;
            }
            execute(&common, "tfpm-solve", &cfg, |out| tfpm_solve_run(&cfg, out))
        }
        Cmd::BasisCompare { common, dataset, field_checkpoint, tfpm_checkpoint, factor } => {
            let mut cfg: BasisCompareConfig = load_or_default(common.config.as_deref())?;
            if let Some(v) = dataset {
                cfg.dataset = v;
            }
            if let Some(v) = field_checkpoint {
                cfg.field_checkpoint = v;
            }
            if let Some(v) = tfpm_checkpoint {
                cfg.tfpm_checkpoint = v;
            }
            if let Some(v) = factor {
                cfg.factor = v;
            }
            execute(&common, "basis-compare", &cfg, |out| basis_compare_run(&cfg, out))
        }
    }
}

fn load_or_default<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::format(format!("config {}: {e}", p.display())))
        }
    }
}

/// Creates the output directory, records the resolved config, runs the
/// body (inside a capped worker pool when `--workers` is given), and
/// logs the outcome with the only timestamps of the run.
fn execute<C: Serialize>(
    common: &Common,
    name: &str,
    cfg: &C,
    body: impl FnOnce(&Path) -> Result<String> + Send,
) -> Result<()> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.out")));
    fs::create_dir_all(&out)?;
    write_resolved(&out, name, cfg)?;
    log_line(&out, &format!("start {name}"))?;
    let started = Instant::now();
    let result = match common.workers {
        Some(0) => Err(Error::invalid("workers must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            pool.install(|| body(&out))
        }
        None => body(&out),
    };
    match result {
        Ok(note) => {
            log_line(&out, &format!("done {name} elapsed_ms={} {note}", started.elapsed().as_millis()))?;
            println!("{note}");
            Ok(())
        }
        Err(e) => {
            let _ = log_line(&out, &format!("failed {name}: {e}"));
            Err(e)
        }
    }
}

fn write_resolved<C: Serialize>(out: &Path, command: &str, cfg: &C) -> Result<()> {
    #[derive(Serialize)]
    struct Resolved<'a, C> {
        command: &'a str,
        config: &'a C,
    }
    let mut text = serde_json::to_string_pretty(&Resolved { command, config: cfg })
        .map_err(|e| Error::format(format!("config encoding: {e}")))?;
    text.push('\n');
    fs::write(out.join("config.resolved"), text)?;
    Ok(())
}

fn log_line(out: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(out.join("run.log"))?;
    let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    writeln!(f, "{t:.3} {line}")?;
    Ok(())
}

fn parse_experiment(text: &str) -> Result<ExperimentKind> {
    Ok(match text {
        "outer-star" => ExperimentKind::OuterStar,
        "inner-star" => ExperimentKind::InnerStar,
        "square-tfpm" => ExperimentKind::SquareTfpm,
        "planar3d" => ExperimentKind::Planar3D,
        "transport" => ExperimentKind::Transport,
        other => {
            return Err(Error::invalid(format!(
                "experiment {other:?}; expected outer-star, inner-star, square-tfpm, planar3d, or transport"
            )))
        }
    })
}

fn parse_head(text: &str) -> Result<HeadKind> {
    Ok(match text {
        "field" => HeadKind::Field,
        "tfpm" => HeadKind::TfpmCoeffs,
        other => return Err(Error::invalid(format!("head {other:?}; expected field or tfpm"))),
    })
}

fn parse_shape(text: &str) -> Result<ShapeKind> {
    Ok(match text {
        "circle" => ShapeKind::Circle,
        "square" => ShapeKind::Square,
        "star" => ShapeKind::Star,
        other => {
            return Err(Error::invalid(format!("shape {other:?}; expected circle, square, or star")))
        }
    })
}

fn parse_scheme(text: &str) -> Result<GeometryScheme> {
    Ok(match text {
        "char" | "characteristic" => GeometryScheme::Characteristic,
        "sdf" => GeometryScheme::Sdf,
        other => return Err(Error::invalid(format!("scheme {other:?}; expected char or sdf"))),
    })
}

/// `a..b` doubles from `a` while staying at or below `b`; otherwise a
/// comma list.
fn parse_resolutions(text: &str) -> Result<Vec<usize>> {
    let one = |s: &str| {
        s.trim().parse::<usize>().map_err(|_| Error::invalid(format!("resolution {s:?}")))
    };
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (one(a)?, one(b)?);
        if a < 2 || b < a {
            return Err(Error::invalid(format!("resolution range {text:?}")));
        }
        let mut v = vec![a];
        let mut n = a;
        while n <= b / 2 {
            n *= 2;
            v.push(n);
        }
        Ok(v)
    } else {
        text.split(',').map(one).collect()
    }
}

fn parse_amplitudes(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("amplitude {s:?}")))
        })
        .collect()
}

fn gen_run(cfg: &GenConfig, out: &Path) -> Result<String> {
    let mut spec =
        ExperimentSpec::preset(cfg.experiment, cfg.n_samples, cfg.grid_points, cfg.seed)?;
    if let Some(tf) = cfg.train_fraction {
        spec.train_fraction = tf;
    }
    let ds = data::generate(&spec)?;
    let path = out.join("dataset.bin");
    data::save_with_precision(&ds, &path, cfg.precision)?;
    Ok(format!(
        "wrote {} samples ({} train, {} test) to {}",
        ds.samples.len(),
        ds.split.0.len(),
        ds.split.1.len(),
        path.display()
    ))
}

fn train_run(cfg: &TrainRunConfig, out: &Path) -> Result<String> {
    let ds = data::load(&cfg.dataset)?;
    let ds = data::downsample(&ds, cfg.downsample)?;
    let first = ds
        .samples
        .first()
        .ok_or_else(|| Error::invalid("dataset holds no samples"))?;
    let manifest = first.input.manifest.clone();
    let arch = Arch {
        d: ds.spec.grid.d,
        in_channels: manifest.len(),
        d_v: cfg.d_v,
        k_max: cfg.k_max,
        layers: cfg.layers,
        head: cfg.head,
        channels: manifest,
    };
    let mut model = FnoModel::new(arch, cfg.seed)?;
    let staged = Staged::prepare(&ds, cfg.head)?;
    let train_set = staged.samples(&ds, &ds.split.0);
    let test_set = staged.samples(&ds, &ds.split.1);
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        precision: cfg.precision,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &train_set, &test_set, &tc)?;
    checkpoint::save(&model, &out.join("checkpoint.bin"))?;
    let rows: Vec<Vec<String>> = report
        .epoch_loss
        .iter()
        .enumerate()
        .map(|(e, l)| vec![e.to_string(), format!("{l:e}")])
        .collect();
    write_csv(out.join("metrics.csv"), &TRAIN_CSV_HEADER, &rows)?;
    let summary = vec![vec![
        report.epoch_loss.last().map(|l| format!("{l:e}")).unwrap_or_default(),
        report.test_rel_l2.map(|v| format!("{v:e}")).unwrap_or_default(),
        report.test_degenerate.to_string(),
    ]];
    write_csv(out.join("summary.csv"), &TRAIN_SUMMARY_HEADER, &summary)?;
    Ok(format!(
        "trained {} epochs; final loss {}, test rel L2 {}",
        report.epoch_loss.len(),
        report.epoch_loss.last().map(|l| format!("{l:.3e}")).unwrap_or_else(|| "-".into()),
        report.test_rel_l2.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into()),
    ))
}

fn eval_run(cfg: &EvalConfig, out: &Path) -> Result<String> {
    let ds = data::load(&cfg.dataset)?;
    let ds = data::downsample(&ds, cfg.downsample)?;
    let model = checkpoint::load(&cfg.checkpoint)?;
    let staged = Staged::prepare(&ds, model.arch.head)?;
    let idx: &[usize] = match cfg.split {
        SplitArg::Train => &ds.split.0,
        SplitArg::Test => &ds.split.1,
    };
    if idx.is_empty() {
        return Err(Error::invalid("selected split is empty"));
    }
    let samples = staged.samples(&ds, idx);
    let mut rows = Vec::with_capacity(samples.len());
    for (&i, sample) in idx.iter().zip(&samples) {
        let pred = match model.arch.head {
            HeadKind::Field => model.forward(sample.input)?,
            HeadKind::TfpmCoeffs => {
                let ctx = sample.ctx.expect("staging provides coefficient context");
                model.forward_tfpm(sample.input, ctx, &sample.target.grid)?
            }
        };
        let rel = relative_l2(&pred, sample.target)?;
        rows.push(vec![
            i.to_string(),
            if rel.degenerate { String::new() } else { format!("{:e}", rel.value) },
            rel.degenerate.to_string(),
        ]);
        if rows.len() <= cfg.images && sample.target.grid.d == 2 {
            let mut err = ChannelTensor::zeros(pred.grid, 1);
            for k in 0..pred.grid.num_points() {
                err.channel_mut(0)[k] = pred.channel(0)[k] - sample.target.channel(0)[k];
            }
            write_pgm(out.join(format!("field_true_{i}.pgm")), sample.target, 0)?;
            write_pgm(out.join(format!("field_pred_{i}.pgm")), &pred, 0)?;
            write_pgm(out.join(format!("field_err_{i}.pgm")), &err, 0)?;
        }
    }
    write_csv(out.join("metrics.csv"), &EVAL_CSV_HEADER, &rows)?;
    let (mean, degenerate) = evaluate(&model, &samples)?;
    let summary = vec![vec![
        mean.map(|v| format!("{v:e}")).unwrap_or_default(),
        (samples.len() - degenerate).to_string(),
        degenerate.to_string(),
    ]];
    write_csv(out.join("summary.csv"), &EVAL_SUMMARY_HEADER, &summary)?;
    Ok(format!(
        "evaluated {} samples; mean rel L2 {}",
        samples.len(),
        mean.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into())
    ))
}

fn encode_study_run(cfg: &EncodeStudyConfig, out: &Path) -> Result<String> {
    let curve = cfg.shape.build()?;
    let errors: Vec<f64> = cfg
        .resolutions
        .par_iter()
        .map(|&n| {
            let grid = GridSpec::new(cfg.canvas[0], cfg.canvas[1], n, 2)?;
            encoding_error_with(&curve, &grid, cfg.scheme, cfg.supersample)
        })
        .collect::<Result<_>>()?;
    let rec = fit_rate(&cfg.resolutions, &errors)?;
    let rows: Vec<Vec<String>> = rec
        .resolutions
        .iter()
        .zip(&rec.errors)
        .map(|(n, e)| {
            vec![
                n.to_string(),
                format!("{e:e}"),
                format!("{:e}", rec.fitted_slope),
                format!("{:e}", rec.fit_r2),
            ]
        })
        .collect();
    write_csv(out.join("metrics.csv"), &ENCODE_CSV_HEADER, &rows)?;
    Ok(format!("fitted slope {:.4} (r2 {:.4})", rec.fitted_slope, rec.fit_r2))
}

fn study_problem(
    shape: &ShapeConfig,
    canvas: [f64; 2],
    coeffs: &CoefficientsConfig,
    alpha: f64,
    beta: f64,
) -> Result<InterfaceProblem> {
    let curve = shape.build()?;
    let geom = Geometry::new(canvas[0], canvas[1], 2, Outer::Canvas, vec![curve])?;
    geom.validate()?;
    Ok(InterfaceProblem::with_constants(
        geom,
        coeffs.a,
        coeffs.b,
        coeffs.f,
        coeffs.g,
        vec![alpha],
        vec![beta],
    ))
}

fn continuity_study_run(cfg: &ContinuityStudyConfig, out: &Path) -> Result<String> {
    let p = study_problem(&cfg.shape, cfg.canvas, &cfg.coefficients, cfg.alpha, cfg.beta)?;
    let grid = GridSpec::new(cfg.canvas[0], cfg.canvas[1], cfg.grid_points, 2)?;
    let rep = continuity_probe(&p, &grid, &cfg.amplitudes, cfg.directions, cfg.seed)?;
    rep.write_csv(out.join("metrics.csv"))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let summary =
        vec![vec![fmt(rep.max_ratio), fmt(rep.min_ratio), fmt(rep.slope)]];
    write_csv(out.join("summary.csv"), &PROBE_SUMMARY_HEADER, &summary)?;
    let skipped = rep.rows.iter().filter(|r| r.skipped).count();
    Ok(format!(
        "probed {} cells ({} skipped); slope {}",
        rep.rows.len(),
        skipped,
        rep.slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into())
    ))
}

fn tfpm_solve_run(cfg: &TfpmSolveConfig, out: &Path) -> Result<String> {
    let p = study_problem(&cfg.shape, cfg.canvas, &cfg.coefficients, cfg.alpha, cfg.beta)?;
    let grid = GridSpec::new(cfg.canvas[0], cfg.canvas[1], cfg.grid_points, 2)?;
    let field = tfpm::solve(&p, &grid)?;
    let values = field.sample_on(&grid)?;
    let tensor = ChannelTensor::single(grid, values)?;
    let mut rows = Vec::with_capacity(grid.num_points());
    for k in 0..grid.num_points() {
        let [ix, iy, _] = grid.multi_index(k);
        let pt = grid.point(k);
        rows.push(vec![
            ix.to_string(),
            iy.to_string(),
            format!("{:e}", pt[0]),
            format!("{:e}", pt[1]),
            format!("{:e}", tensor.channel(0)[k]),
        ]);
    }
    write_csv(out.join("metrics.csv"), &SOLVE_CSV_HEADER, &rows)?;
    write_pgm(out.join("field_solution.pgm"), &tensor, 0)?;
    Ok(format!("solved on {} points", grid.num_points()))
}

fn basis_compare_run(cfg: &BasisCompareConfig, out: &Path) -> Result<String> {
    let fine_ds = data::load(&cfg.dataset)?;
    let coarse = data::downsample(&fine_ds, cfg.factor)?;
    let field_model = checkpoint::load(&cfg.field_checkpoint)?;
    let tfpm_model = checkpoint::load(&cfg.tfpm_checkpoint)?;
    let rep = basis_comparison(&coarse, &field_model, &tfpm_model, &fine_ds.spec.grid)?;
    rep.write_csv(out.join("metrics.csv"))?;
    let summary =
        vec![vec![format!("{:e}", rep.mean_field), format!("{:e}", rep.mean_tfpm)]];
    write_csv(out.join("summary.csv"), &COMPARE_SUMMARY_HEADER, &summary)?;
    Ok(format!(
        "mean rel L2: field {:.4e}, reconstruction {:.4e} over {} samples",
        rep.mean_field,
        rep.mean_tfpm,
        rep.rows.len()
    ))
}
