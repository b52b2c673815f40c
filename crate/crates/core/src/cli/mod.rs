//! Command-line surface: train, eval, bench, gradcheck and geom
//! subcommands with machine-readable JSON outputs.
//!
//! Hyperparameters resolve in three layers: built-in defaults, then a
//! TOML config file (`--config`), then explicit flags.

pub mod bench;
pub mod gradcheck;
pub mod model_io;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::classifier;
use crate::dataio::{self, RawDataset, StatsMode};
use crate::geometry::{self, Ball, Segment};
use crate::trainer::{train, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
    GradcheckFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::GradcheckFailed => EXIT_GRADCHECK,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m.clone(),
            CliError::GradcheckFailed => "gradient check failed".into(),
        }
    }
}

fn train_error(err: TrainError) -> CliError {
    match err {
        TrainError::InvalidConfig(m) => CliError::Usage(m),
        e @ TrainError::NonFiniteObjective { .. } => CliError::Numeric(e.to_string()),
        e @ TrainError::InvariantViolated { .. } => CliError::Numeric(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "regionlearn",
    version,
    about = "Local metric learning with ball-shaped regions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on the train side of a seeded split and save it.
    Train(TrainArgs),
    /// Evaluate a saved model on the test side of a seeded split.
    Eval(EvalArgs),
    /// Repeated splits: learned model vs identity baseline.
    Bench(BenchArgs),
    /// Finite-difference verification of all gradient paths.
    Gradcheck(GradcheckArgs),
    /// Segment/ball intersection for one configuration.
    Geom(GeomArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum StatsFlag {
    #[default]
    TrainOnly,
    Global,
}

impl From<StatsFlag> for StatsMode {
    fn from(flag: StatsFlag) -> Self {
        match flag {
            StatsFlag::TrainOnly => StatsMode::TrainOnly,
            StatsFlag::Global => StatsMode::Global,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file path.
    #[arg(long)]
    pub data: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// Label column name (CSV only).
    #[arg(long, default_value = "label")]
    pub label_col: String,
}

#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    /// TOML config file (key = value); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Regularization weight on metric norms.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Margin constant C in [0, 1).
    #[arg(long)]
    pub margin: Option<f64>,
    /// Neighbor count for pairs and the classifier.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of regions S.
    #[arg(long)]
    pub regions: Option<usize>,
    /// Gradient-descent learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// RNG seed (also selects the split).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Fraction of instances assigned to the train side.
    #[arg(long, default_value_t = 0.6)]
    pub split_frac: f64,
    /// Source of standardization statistics.
    #[arg(long, value_enum, default_value_t)]
    pub stats: StatsFlag,
    /// Model output path; the objective history lands next to it.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Saved model to evaluate.
    #[arg(long)]
    pub model: PathBuf,
    /// Split seed; must match the training run to reproduce its split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.6)]
    pub split_frac: f64,
    #[arg(long, value_enum, default_value_t)]
    pub stats: StatsFlag,
    /// Neighbor count for the classifier.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Number of seeded repetitions (seeds 0..repeats).
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.6)]
    pub split_frac: f64,
    #[arg(long, value_enum, default_value_t)]
    pub stats: StatsFlag,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Dimensions to sweep, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 8, 30])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kink-free configurations per dimension and group.
    #[arg(long, default_value_t = 50)]
    pub configs: usize,
}

#[derive(Debug, Args)]
pub struct GeomArgs {
    /// Segment start, comma-separated coordinates.
    #[arg(long, value_delimiter = ',', required = true)]
    pub start: Vec<f64>,
    /// Segment end.
    #[arg(long, value_delimiter = ',', required = true)]
    pub end: Vec<f64>,
    /// Ball center.
    #[arg(long, value_delimiter = ',', required = true)]
    pub center: Vec<f64>,
    /// Ball radius.
    #[arg(long)]
    pub radius: f64,
}

/// Parses the command line and runs it, translating every failure into
/// the documented exit codes.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Geom(args) => cmd_geom(args),
    }
}

fn infer_format(path: &Path, explicit: Option<DataFormat>) -> DataFormat {
    explicit.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DataFormat::Csv,
            _ => DataFormat::Libsvm,
        }
    })
}

fn load_dataset(args: &DataArgs) -> Result<RawDataset, CliError> {
    let text = fs::read_to_string(&args.data)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.data.display())))?;
    let parsed = match infer_format(&args.data, args.format) {
        DataFormat::Libsvm => dataio::parse_libsvm(&text),
        DataFormat::Csv => dataio::parse_csv(&text, &args.label_col),
    };
    parsed.map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))
}

/// Defaults, overlaid by the TOML config file, overlaid by flags.
fn resolve_config(hyper: &HyperArgs) -> Result<TrainConfig, CliError> {
    let mut config = TrainConfig::default();
    if let Some(path) = &hyper.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        apply_toml(&mut config, &text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    }
    if let Some(v) = hyper.alpha {
        config.alpha = v;
    }
    if let Some(v) = hyper.margin {
        config.margin_c = v;
    }
    if let Some(v) = hyper.k {
        config.k_neighbors = v;
    }
    if let Some(v) = hyper.regions {
        config.num_regions = v;
    }
    if let Some(v) = hyper.lr {
        config.learning_rate = v;
    }
    if let Some(v) = hyper.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = hyper.seed {
        config.seed = v;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn apply_toml(config: &mut TrainConfig, text: &str) -> Result<(), String> {
    let table: toml::Table = text.parse().map_err(|e| format!("invalid TOML: {e}"))?;
    let as_f64 = |v: &toml::Value, key: &str| {
        v.as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| format!("key `{key}` must be a number"))
    };
    let as_usize = |v: &toml::Value, key: &str| {
        v.as_integer()
            .filter(|&i| i >= 0)
            .map(|i| i as usize)
            .ok_or_else(|| format!("key `{key}` must be a non-negative integer"))
    };
    for (key, value) in &table {
        match key.as_str() {
            "alpha" => config.alpha = as_f64(value, key)?,
            "margin_c" => config.margin_c = as_f64(value, key)?,
            "k_neighbors" => config.k_neighbors = as_usize(value, key)?,
            "num_regions" => config.num_regions = as_usize(value, key)?,
            "learning_rate" => config.learning_rate = as_f64(value, key)?,
            "max_epochs" => config.max_epochs = as_usize(value, key)?,
            "tol" => config.tol = as_f64(value, key)?,
            "seed" => {
                config.seed = value
                    .as_integer()
                    .filter(|&i| i >= 0)
                    .map(|i| i as u64)
                    .ok_or_else(|| "key `seed` must be a non-negative integer".to_string())?
            }
            "radius_floor" => config.radius_floor = as_f64(value, key)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model_path: &'a str,
    report_path: &'a str,
    dim: usize,
    num_regions: usize,
    epochs_run: usize,
    initial_objective: f64,
    final_objective: f64,
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.hyper)?;
    let raw = load_dataset(&args.data)?;
    let (train_raw, test_raw) = dataio::split(&raw, args.split_frac, config.seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let (trainset, _) = dataio::preprocess(&train_raw, &test_raw, args.stats.into());

    let report = train(&trainset, &config).map_err(train_error)?;

    let report_path = args.out.with_extension("report.json");
    fs::write(&args.out, model_io::model_to_json(&report.final_model))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", args.out.display())))?;
    fs::write(&report_path, model_io::report_to_json(&report, &config))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", report_path.display())))?;

    let summary = TrainSummary {
        model_path: &args.out.display().to_string(),
        report_path: &report_path.display().to_string(),
        dim: report.final_model.dim(),
        num_regions: report.final_model.num_regions(),
        epochs_run: report.epochs_run,
        initial_objective: report.objective_history[0],
        final_objective: *report.objective_history.last().expect("non-empty history"),
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serialization"));
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    accuracy: f64,
    n_train: usize,
    n_test: usize,
    k: usize,
    seed: u64,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let raw = load_dataset(&args.data)?;
    let (train_raw, test_raw) = dataio::split(&raw, args.split_frac, args.seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let (trainset, testset) = dataio::preprocess(&train_raw, &test_raw, args.stats.into());

    let text = fs::read_to_string(&args.model)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.model.display())))?;
    let model = model_io::model_from_json(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.model.display())))?;
    if model.dim() != trainset.dim() {
        return Err(CliError::Data(format!(
            "model dimension {} does not match dataset dimension {}",
            model.dim(),
            trainset.dim()
        )));
    }

    let accuracy = classifier::evaluate(&testset, &trainset, &model, args.k);
    let summary = EvalSummary {
        accuracy,
        n_train: trainset.len(),
        n_test: testset.len(),
        k: args.k,
        seed: args.seed,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serialization"));
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let config = resolve_config(&args.hyper)?;
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let raw = load_dataset(&args.data)?;
    let name = args
        .data
        .data
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();

    let report = bench::run_benchmark(
        &raw,
        &name,
        &config,
        args.repeats,
        args.split_frac,
        args.stats.into(),
    )
    .map_err(|e| match e {
        bench::BenchError::Split(e) => CliError::Data(e.to_string()),
        bench::BenchError::Train(e) => train_error(e),
    })?;

    let json = report.to_json();
    match &args.out {
        Some(path) => fs::write(path, &json)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if args.dims.is_empty() {
        return Err(CliError::Usage("--dims must name at least one dimension".into()));
    }
    for &d in &args.dims {
        if d < 2 {
            return Err(CliError::Usage("gradcheck dimensions must be >= 2".into()));
        }
    }
    let report = gradcheck::run(&args.dims, args.seed, args.configs, 1e-4);
    for r in &report.results {
        println!(
            "{:<9} d={:<3} configs={:<3} max_rel_err={:.3e}  {}",
            r.group,
            r.dim,
            r.configs,
            r.max_rel_err,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    if report.all_pass() {
        println!("gradcheck: all groups within {:.0e}", report.tolerance);
        Ok(())
    } else {
        Err(CliError::GradcheckFailed)
    }
}

#[derive(Serialize)]
struct GeomReport {
    a: f64,
    b: f64,
    c: f64,
    delta: f64,
    lambda_u: Option<f64>,
    lambda_v: Option<f64>,
    lambda_p: f64,
    lambda_q: f64,
    gamma: f64,
    case: &'static str,
}

fn cmd_geom(args: GeomArgs) -> Result<(), CliError> {
    let d = args.start.len();
    if d == 0 || args.end.len() != d || args.center.len() != d {
        return Err(CliError::Usage(
            "--start, --end and --center must share a non-zero dimension".into(),
        ));
    }
    if !(args.radius > 0.0) || !args.radius.is_finite() {
        return Err(CliError::Usage("--radius must be positive and finite".into()));
    }
    let all_finite = args
        .start
        .iter()
        .chain(&args.end)
        .chain(&args.center)
        .all(|v| v.is_finite());
    if !all_finite {
        return Err(CliError::Usage("coordinates must be finite".into()));
    }

    let segment = Segment::new(
        DVector::from_vec(args.start.clone()),
        DVector::from_vec(args.end.clone()),
    );
    let ball = Ball::new(DVector::from_vec(args.center.clone()), args.radius);
    let result = geometry::intersect(&segment, &ball);

    let to_opt = |v: f64| if v.is_nan() { None } else { Some(v) };
    let report = GeomReport {
        a: result.a,
        b: result.b,
        c: result.c,
        delta: result.delta,
        lambda_u: to_opt(result.lambda_u),
        lambda_v: to_opt(result.lambda_v),
        lambda_p: result.lambda_p,
        lambda_q: result.lambda_q,
        gamma: result.gamma,
        case: geometry::case_label(&result),
    };
    println!("{}", serde_json::to_string(&report).expect("geom serialization"));
    Ok(())
}
