//! Command-line front end. Usage errors exit 2, runtime errors exit 1.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use phosforge_core::baselines::{ForestConfig, SvrConfig};
use phosforge_core::ingest::{read_csv, write_csv, RowError, SynthConfig};
use phosforge_core::metallurgy::{
    partition_coefficient, partition_from_capacity, phosphate_capacity_from_partition, phosphate_capacity_gas,
    phosphate_capacity_ionic, SlagMetalState, PARTITION_BAND,
};
use phosforge_core::metrics::DEFAULT_THRESHOLDS;
use phosforge_core::nn::{EarlyStopping, TrainConfig};
use phosforge_core::preprocess::remove_outliers;
use phosforge_core::stats::correlation_report;
use phosforge_core::{Dataset, ModelArtifact, SplitSpec};

use crate::pipeline::{self, ModelSpec};
use crate::service::{self, PredictResponse};

#[derive(Debug, Parser)]
#[command(name = "phosforge", version, about = "End-point phosphorus models for scrap-based EAF steelmaking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic heat dataset as CSV.
    GenerateData(GenerateArgs),
    /// Drop heats with any feature outside the 1.5 IQR box-plot fences.
    Clean(CleanArgs),
    /// Correlation of each feature with end-point P.
    Analyze(AnalyzeArgs),
    /// Split, normalize and fit a model.
    Train(TrainArgs),
    /// Score a model on its recorded test split.
    Evaluate(EvaluateArgs),
    /// Predict end-point P for new heats.
    Predict(PredictArgs),
    /// Slag/metal partition and phosphate capacity.
    #[command(subcommand)]
    Metallurgy(MetallurgyCommand),
    /// Serve predictions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1700)]
    pub n: usize,
    /// Noise on end-point P, wt%.
    #[arg(long, default_value_t = 0.0002)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add interaction terms to the otherwise affine target.
    #[arg(long)]
    pub interactions: bool,
    /// Destination CSV, stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Ann,
    Rf,
    Svr,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Training summary (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ann")]
    pub model: ModelKind,
    /// Hidden layer widths.
    #[arg(long, value_parser = parse_arch, default_value = "128,128,128,64")]
    pub arch: std::vec::Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Early-stopping patience in epochs; needs a validation share.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Train, validation and test percentages.
    #[arg(long, value_parser = parse_split, default_value = "80,0,20")]
    pub split: [f64; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    pub feature_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0 / 12.0)]
    pub gamma: f64,
    /// Half-width of the SVR insensitive tube, normalized scale.
    #[arg(long, default_value_t = 0.01)]
    pub svr_epsilon: f64,
    /// Also run seeded k-fold cross-validation on the non-test rows.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub cv_folds: Option<u64>,
    #[arg(long, value_parser = parse_thresholds)]
    pub thresholds: Option<std::vec::Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "PHOSFORGE_MODEL")]
    pub model: PathBuf,
    /// The CSV the model was trained from.
    #[arg(long)]
    pub input: PathBuf,
    /// Score every row instead of the recorded test split.
    #[arg(long)]
    pub all: bool,
    #[arg(long, value_parser = parse_thresholds)]
    pub thresholds: Option<std::vec::Vec<f64>>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, env = "PHOSFORGE_MODEL")]
    pub model: PathBuf,
    /// CSV of heats; end-point column optional.
    #[arg(long, required_unless_present = "example", conflicts_with = "example")]
    pub input: Option<PathBuf>,
    /// Predict the test heat recorded in the model file.
    #[arg(long)]
    pub example: bool,
}

#[derive(Debug, Subcommand)]
pub enum MetallurgyCommand {
    /// L_p = (%P) / [%P].
    Partition {
        #[arg(long)]
        slag_p: f64,
        #[arg(long)]
        metal_p: f64,
    },
    /// C = (%PO4) / (p_P2^1/2 p_O2^5/4).
    CapacityGas {
        #[arg(long)]
        po4: f64,
        #[arg(long)]
        p_p2: f64,
        #[arg(long)]
        p_o2: f64,
    },
    /// C = K2 a_O^3/2 / gamma0_PO4.
    CapacityIonic {
        #[arg(long)]
        k2: f64,
        #[arg(long)]
        a_o2minus: f64,
        #[arg(long)]
        gamma0: f64,
    },
    /// C = L_p k_p / (f_p p_O2^5/4).
    Capacity {
        #[arg(long)]
        l_p: f64,
        #[arg(long, default_value_t = 1.0)]
        k_p: f64,
        #[arg(long, default_value_t = 1.0)]
        f_p: f64,
        #[arg(long, default_value_t = 1.0)]
        p_o2: f64,
    },
    /// L_p from a capacity, inverting the relation above.
    PartitionFromCapacity {
        #[arg(long)]
        capacity: f64,
        #[arg(long, default_value_t = 1.0)]
        k_p: f64,
        #[arg(long, default_value_t = 1.0)]
        f_p: f64,
        #[arg(long, default_value_t = 1.0)]
        p_o2: f64,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PHOSFORGE_MODEL")]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|part| part.trim().parse::<T>().map_err(|_| format!("`{}` is not a valid number", part.trim())))
        .collect()
}

fn parse_arch(s: &str) -> Result<Vec<usize>, String> {
    let widths = parse_list::<usize>(s)?;
    if widths.contains(&0) {
        return Err("layer widths must be positive".into());
    }
    Ok(widths)
}

fn parse_split(s: &str) -> Result<[f64; 3], String> {
    let parts = parse_list::<f64>(s)?;
    let [train, val, test] = parts[..] else {
        return Err("expected three percentages, e.g. 60,20,20".into());
    };
    let spec = SplitSpec::new(train / 100.0, val / 100.0, test / 100.0, 0).map_err(|e| e.to_string())?;
    Ok([spec.train_fraction, spec.val_fraction, spec.test_fraction])
}

fn parse_thresholds(s: &str) -> Result<Vec<f64>, String> {
    let values = parse_list::<f64>(s)?;
    if values.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err("thresholds must be finite and non-negative".into());
    }
    Ok(values)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenerateData(args) => generate(args),
        Command::Clean(args) => clean(args),
        Command::Analyze(args) => analyze(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Predict(args) => predict(args),
        Command::Metallurgy(cmd) => metallurgy(cmd),
        Command::Serve(args) => serve(args),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = sink(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn warn_rows(path: &Path, errors: &[RowError]) {
    for e in errors {
        eprintln!("warning: {}: {e}", path.display());
    }
}

/// Loads a CSV, reporting bad rows on stderr.
fn load(path: &Path) -> Result<(Dataset, Vec<RowError>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (data, errors) = read_csv(file).with_context(|| format!("reading {}", path.display()))?;
    warn_rows(path, &errors);
    Ok((data, errors))
}

fn load_model(path: &Path) -> Result<ModelArtifact> {
    ModelArtifact::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config = SynthConfig {
        n_records: args.n,
        noise_sd: args.noise_sd,
        outlier_fraction: args.outlier_fraction,
        seed: args.seed,
        interactions: args.interactions,
        ..Default::default()
    };
    let data = pipeline::load_source(&pipeline::DataSource::Synthetic(config))?;
    let mut out = sink(args.output.as_deref())?;
    write_csv(&data, &mut out)?;
    out.flush()?;
    Ok(())
}

fn clean(args: CleanArgs) -> Result<()> {
    let (data, _) = load(&args.input)?;
    let (kept, removed) = remove_outliers(&data)?;
    eprintln!("kept {} of {} heats, removed {removed}", kept.len(), data.len());
    let mut out = sink(args.output.as_deref())?;
    write_csv(&kept, &mut out)?;
    out.flush()?;
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let (data, _) = load(&args.input)?;
    let report = correlation_report(&data)?;
    emit(args.output.as_deref(), &report.to_csv())
}

fn model_spec(args: &TrainArgs) -> Result<ModelSpec> {
    Ok(match args.model {
        ModelKind::Ann => {
            let early_stopping = args.patience.map(|patience| EarlyStopping { patience, restore_best: true });
            let config = TrainConfig {
                epochs: args.epochs,
                batch_size: args.batch,
                learning_rate: args.lr,
                early_stopping,
                seed: args.seed,
                ..Default::default()
            };
            ModelSpec::ann(args.arch.clone(), config)?
        }
        ModelKind::Rf => ModelSpec::Rf {
            forest: ForestConfig {
                n_trees: args.trees,
                max_depth: args.max_depth,
                min_samples_leaf: args.min_leaf,
                feature_fraction: args.feature_fraction,
                seed: args.seed,
                ..Default::default()
            },
        },
        ModelKind::Svr => ModelSpec::Svr {
            svr: SvrConfig { c: args.c, gamma: args.gamma, epsilon_tube: args.svr_epsilon, ..Default::default() },
        },
    })
}

fn thresholds(given: &Option<Vec<f64>>) -> Vec<f64> {
    given.clone().unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec())
}

fn train(args: TrainArgs) -> Result<()> {
    let spec = model_spec(&args)?;
    let [train, val, test] = args.split;
    let split = SplitSpec::new(train, val, test, args.seed)?;
    if args.patience.is_some() && split.val_fraction == 0.0 {
        bail!("--patience needs a validation share in --split");
    }
    let (data, _) = load(&args.input)?;
    let folds = args.cv_folds.map(|k| k as usize);
    let (artifact, summary, _) = pipeline::train_on_split(&data, &spec, &split, folds, &thresholds(&args.thresholds))?;
    artifact.save(&args.output).with_context(|| format!("writing {}", args.output.display()))?;
    if let Some(path) = &args.report {
        emit(Some(path), &summary.to_json())?;
    }
    eprintln!(
        "trained {} on {} heats ({} validation, {} held out for test)",
        artifact.body.kind(),
        summary.n_train,
        summary.n_val,
        summary.n_test
    );
    if let Some(cv) = &summary.cross_validation {
        eprintln!("{}-fold cross-validation: mean R2 {}, mean MSE {}", cv.folds, cv.mean_r2, cv.mean_mse);
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let artifact = load_model(&args.model)?;
    let (data, _) = load(&args.input)?;
    let test = if args.all { data } else { pipeline::recorded_test_split(&artifact, &data)? };
    let report = pipeline::score(&artifact, &test, &thresholds(&args.thresholds))?;
    let text = match args.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => report.to_csv(),
    };
    emit(args.output.as_deref(), &text)
}

fn predict(args: PredictArgs) -> Result<()> {
    let artifact = load_model(&args.model)?;
    if args.example {
        let Some(example) = &artifact.metadata.example else {
            bail!("{} records no example heat", args.model.display());
        };
        let response = PredictResponse::from(artifact.predict(example)?);
        return emit(None, &(response.to_json() + "\n"));
    }
    let path = args.input.expect("clap requires --input or --example");
    let (data, errors) = load(&path)?;
    let mut out = String::from("heat_id,p_wtpct,p_ppm,out_of_range\n");
    for record in data.records() {
        let p = PredictResponse::from(artifact.predict(record)?);
        let flags: Vec<&str> = p.out_of_range.iter().map(|f| f.name()).collect();
        out.push_str(&format!("{},{},{},{}\n", record.heat_id, p.p_wtpct, p.p_ppm, flags.join(";")));
    }
    emit(None, &out)?;
    if !errors.is_empty() {
        bail!("{} rows could not be read", errors.len());
    }
    Ok(())
}

fn metallurgy(command: MetallurgyCommand) -> Result<()> {
    let value = match command {
        MetallurgyCommand::Partition { slag_p, metal_p } => {
            let state = SlagMetalState { pct_p_slag: slag_p, pct_p_metal: metal_p, ..Default::default() };
            let partition = partition_coefficient(&state)?;
            if partition.out_of_band {
                let (lo, hi) = PARTITION_BAND;
                eprintln!("note: L_p outside the usual {lo} to {hi} band");
            }
            partition.l_p
        }
        MetallurgyCommand::CapacityGas { po4, p_p2, p_o2 } => {
            phosphate_capacity_gas(&SlagMetalState { pct_po4_slag: Some(po4), p_p2, p_o2, ..Default::default() })?
        }
        MetallurgyCommand::CapacityIonic { k2, a_o2minus, gamma0 } => phosphate_capacity_ionic(&SlagMetalState {
            k2: Some(k2),
            a_o2minus: Some(a_o2minus),
            gamma0_po4: Some(gamma0),
            ..Default::default()
        })?,
        MetallurgyCommand::Capacity { l_p, k_p, f_p, p_o2 } => {
            phosphate_capacity_from_partition(&SlagMetalState { k_p, f_p, p_o2, ..Default::default() }, l_p)?
        }
        MetallurgyCommand::PartitionFromCapacity { capacity, k_p, f_p, p_o2 } => {
            partition_from_capacity(&SlagMetalState { k_p, f_p, p_o2, ..Default::default() }, capacity)?
        }
    };
    emit(None, &format!("{value}\n"))
}

fn serve(args: ServeArgs) -> Result<()> {
    let artifact = load_model(&args.model)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(service::serve(artifact, &args.bind)).with_context(|| format!("serving on {}", args.bind))
}
