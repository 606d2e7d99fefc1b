//! `ktfield` command-line interface.

mod commands;
mod config;
mod manifest;
mod overlay;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::FileConfig;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad value)
  3  invalid parameter or configuration
  4  missing input file or other I/O failure
  5  malformed or unsupported file format
  6  geometry or shape mismatch
  7  FE solver failure
  8  training failure
  9  calibration or precondition failure

Errors are reported on stderr as one JSON object:
  {\"error\": <kind>, \"message\": <text>, \"exit_code\": <n>}";

#[derive(Parser, Debug)]
#[command(name = "ktfield", version, about = "Stress-concentration maps of rough bore surfaces", after_help = EXIT_CODES)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, env = "KTFIELD_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = one per core). Overrides `threads` in the config.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Root seed. Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic rough-bore slice (PGM + sidecar).
    GenSurface(GenSurfaceArgs),
    /// Solve a slice with the FE oracle and write its K_t field (PFM + sidecar).
    FemSolve(FemSolveArgs),
    /// Generate an FE-labelled training dataset (resumable).
    MakeDataset(MakeDatasetArgs),
    /// Train the surrogate on a dataset.
    Train(TrainArgs),
    /// Predict a K_t field with a trained surrogate.
    Predict(PredictArgs),
    /// Exceedance curve of a K_t field (CSV + SVG).
    Exceedance(ExceedanceArgs),
    /// Label clusters above a K_t threshold (JSON, histogram CSV, PNG overlay).
    Clusters(ClustersArgs),
    /// Fit the life model to a coupon table.
    LifeCalibrate(LifeCalibrateArgs),
    /// Predict cycles to failure from cluster features or a coupon table.
    LifePredict(LifePredictArgs),
    /// Time FE against the surrogate on identical generated slices.
    Bench(BenchArgs),
    /// Run gen → fem → train → predict → clusters → life end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct GenSurfaceArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// µm
    #[arg(long)]
    pub pixel_pitch: Option<f64>,
    /// µm
    #[arg(long)]
    pub r_inner: Option<f64>,
    /// µm
    #[arg(long)]
    pub rms: Option<f64>,
    /// µm
    #[arg(long)]
    pub correlation: Option<f64>,
    /// µm
    #[arg(long)]
    pub mean_offset: Option<f64>,
    /// Import an existing mask instead of generating one (PGM, 255 = material).
    #[arg(long)]
    pub import: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Axisymmetric,
    PlaneStress,
}

impl From<ModeArg> for ktfield::fem::AnalysisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Axisymmetric => Self::Axisymmetric,
            ModeArg::PlaneStress => Self::PlaneStress,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct FemFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub youngs_modulus: Option<f64>,
    #[arg(long)]
    pub poisson_ratio: Option<f64>,
    /// Uniform axial traction on the top edge.
    #[arg(long, conflicts_with = "displacement")]
    pub traction: Option<f64>,
    /// Uniform axial displacement of the top edge, µm.
    #[arg(long)]
    pub displacement: Option<f64>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FemSolveArgs {
    #[arg(long)]
    pub slice: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fem: FemFlags,
}

#[derive(Args, Debug)]
pub struct MakeDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// µm, as `min,max`
    #[arg(long, value_parser = parse_range)]
    pub rms: Option<(f64, f64)>,
    /// µm, as `min,max`
    #[arg(long, value_parser = parse_range)]
    pub correlation: Option<(f64, f64)>,
    /// µm, as `min,max`
    #[arg(long, value_parser = parse_range)]
    pub mean_offset: Option<(f64, f64)>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[command(flatten)]
    pub fem: FemFlags,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Add the signed-distance input channel.
    #[arg(long)]
    pub sdf: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub slice: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExceedanceArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub slice: PathBuf,
    /// Second field (e.g. FE) to compare against; its curve and the gap are reported.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Curve CSV to write; an SVG is written alongside.
    #[arg(long)]
    pub out: PathBuf,
    /// Lowest threshold of the 0.05-spaced grid.
    #[arg(long, default_value_t = 0.0)]
    pub threshold_min: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConnectivityArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

#[derive(Args, Debug, Clone)]
pub struct ClusterFlags {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub connectivity: Option<ConnectivityArg>,
    /// Ignore pixels deeper than this below the bore wall, µm.
    #[arg(long)]
    pub max_depth: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ClustersArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub slice: PathBuf,
    /// Report JSON; histogram CSV and overlay PNG are written alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cluster: ClusterFlags,
}

#[derive(Args, Debug)]
pub struct LifeCalibrateArgs {
    /// Coupon table (CSV) with observed lives.
    #[arg(long)]
    pub coupons: PathBuf,
    /// Calibration JSON; a fitted table CSV and scatter SVG are written alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub v_ref: Option<f64>,
    #[arg(long)]
    pub quantile: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LifePredictArgs {
    /// Calibration JSON from `life-calibrate`; otherwise the configured parameters.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Cluster report JSON to derive features from.
    #[arg(long, conflicts_with = "coupons", required_unless_present = "coupons")]
    pub clusters: Option<PathBuf>,
    /// Coupon table to predict row by row.
    #[arg(long)]
    pub coupons: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stress_amplitude: Option<f64>,
    #[arg(long)]
    pub stress_ratio: Option<f64>,
    #[arg(long)]
    pub temperature: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 8)]
    pub slices: usize,
    #[arg(long, default_value_t = 1024)]
    pub rows: usize,
    #[arg(long, default_value_t = 256)]
    pub cols: usize,
    /// Trained model; an untrained default network is timed otherwise
    /// (inference cost does not depend on the weights).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub sections: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dataset_samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected min,max, got {s:?}"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Debug)]
pub enum CliError {
    Core(ktfield::Error),
    MissingInput(PathBuf),
}

impl From<ktfield::Error> for CliError {
    fn from(e: ktfield::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::MissingInput(_) => "missing_input",
        }
    }

    fn code(&self) -> u8 {
        use ktfield::Error as E;
        match self {
            CliError::MissingInput(_) => 4,
            CliError::Core(e) => match e {
                E::Parameter(_) | E::Config(_) => 3,
                E::Io(_) => 4,
                E::Format(_) | E::UnsupportedVersion(_) | E::Json(_) | E::Csv(_) => 5,
                E::Geometry(_) | E::Shape(_) => 6,
                E::Solver { .. } => 7,
                E::Training(_) => 8,
                E::Calibration(_) | E::Precondition(_) => 9,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::MissingInput(p) => format!("input file not found: {}", p.display()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| ktfield::Error::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::GenSurface(a) => commands::gen_surface(&cfg, a),
        Command::FemSolve(a) => commands::fem_solve(&cfg, a),
        Command::MakeDataset(a) => commands::make_dataset(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Predict(a) => commands::predict(&cfg, a),
        Command::Exceedance(a) => commands::exceedance(&cfg, a),
        Command::Clusters(a) => commands::clusters(&cfg, a),
        Command::LifeCalibrate(a) => commands::life_calibrate(&cfg, a),
        Command::LifePredict(a) => commands::life_predict(&cfg, a),
        Command::Bench(a) => pipeline::bench(&cfg, a),
        Command::Pipeline(a) => pipeline::pipeline(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            return report("usage", first, 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), &e.message(), e.code()),
    }
}
