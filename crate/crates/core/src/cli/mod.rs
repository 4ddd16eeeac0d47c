//! Command-line front end: `synth`, `train`, `calibrate`, `predict`,
//! `evaluate` and `sweep`, all driven by one JSON config plus flag overrides.

mod config;

pub use config::{ConformalSection, DataPaths, ModelSection, RunConfig, SplitSection, SynthSection};

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::conformal::{calibrate, load_calibration, save_calibration, AssignmentMode, ConformalError, SacpCalibration};
use crate::dataset::{
    generate_scans, generate_synthetic, load_fingerprints, load_inventory, split_train_calibration, write_fingerprints,
    write_inventory, ApInventory, CoordNormalizer, DatasetError, FingerprintSample, Point,
};
use crate::evalreport::{
    alpha_sweep, coverage_by_region, emit_report, error_map, point_metrics, weighted_centroid_baseline, EvalError,
    Report,
};
use crate::graphbuild::{GraphBuilder, GraphConfig, GraphError};
use crate::gtmodel::{
    load_checkpoint, save_checkpoint, train_samples, write_loss_log, Checkpoint, GtModel, ModelError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing {what} at {}", path.display())]
    MissingArtifact { what: &'static str, path: PathBuf },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Wi-Fi RSSI localization with conformal confidence radii.
///
/// Settings come from built-in defaults, then the `--config` JSON file, then
/// command-line flags (later sources win). Set `SACLOC_LOG=info` or `debug`
/// for progress logging.
#[derive(Debug, Parser)]
#[command(name = "sacloc", version)]
pub struct Cli {
    /// JSON run configuration; omitted keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for checkpoints, calibration files and reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Directory holding `inventory.csv`, `fingerprints.csv` and `test.csv`.
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic path-loss dataset into the data directory.
    Synth(SynthArgs),
    /// Train the graph model on the training split and write a checkpoint.
    Train(TrainArgs),
    /// Fit regions and conformal radii on the calibration split.
    Calibrate(CalibrateArgs),
    /// Predict a location and confidence radius for one RSSI scan.
    Predict(PredictArgs),
    /// Evaluate on the test file and write the report.
    Evaluate(EvaluateArgs),
    /// Recalibrate over a grid of alphas and write sweep plot data.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Labelled pool size (training + calibration).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Held-out test scans.
    #[arg(long)]
    pub test_samples: Option<usize>,
    #[arg(long)]
    pub ap_count: Option<usize>,
    /// Shadowing noise standard deviation in dB.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Seed for the environment and the labelled pool.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Threads sharing each mini-batch.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Target miscoverage rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of regions.
    #[arg(long)]
    pub k: Option<usize>,
    /// Region assignment: mixed, ground_truth or predicted.
    #[arg(long)]
    pub assignment: Option<AssignmentMode>,
    /// K-Means restarts (best objective wins).
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Comma-separated RSSI values in inventory order; 100 marks an undetected AP.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "rssi_file")]
    pub rssi: Option<String>,
    /// File holding one comma-separated RSSI vector.
    #[arg(long, value_name = "FILE")]
    pub rssi_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Region assignment for coverage rows (defaults to the calibration's).
    #[arg(long)]
    pub assignment: Option<AssignmentMode>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated, strictly increasing alphas.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Region assignment (defaults to the calibration's).
    #[arg(long)]
    pub assignment: Option<AssignmentMode>,
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(d) = &self.data_dir {
            cfg.data = DataPaths::in_dir(d);
        }
        match &self.command {
            Command::Synth(a) => {
                let env = &mut cfg.synthetic.environment;
                set(&mut env.samples, a.samples);
                set(&mut env.ap_count, a.ap_count);
                set(&mut env.noise_std_db, a.noise_std);
                set(&mut env.seed, a.seed);
                set(&mut cfg.synthetic.test_samples, a.test_samples);
            }
            Command::Train(a) => {
                set(&mut cfg.train.epochs, a.epochs);
                set(&mut cfg.train.batch_size, a.batch_size);
                set(&mut cfg.train.base_lr, a.lr);
                set(&mut cfg.train.weight_decay, a.weight_decay);
                set(&mut cfg.train.dropout, a.dropout);
                set(&mut cfg.train.workers, a.workers);
                set(&mut cfg.train.seed, a.seed);
                set(&mut cfg.model.hidden, a.hidden);
                set(&mut cfg.model.heads, a.heads);
            }
            Command::Calibrate(a) => {
                set(&mut cfg.conformal.alpha, a.alpha);
                set(&mut cfg.conformal.k, a.k);
                set(&mut cfg.conformal.assignment, a.assignment);
                set(&mut cfg.conformal.restarts, a.restarts);
            }
            Command::Sweep(a) => {
                if let Some(g) = &a.alphas {
                    cfg.conformal.alpha_grid = g.clone();
                }
            }
            Command::Predict(_) | Command::Evaluate(_) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require(what: &'static str, path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn load_inventory_checked(cfg: &RunConfig) -> Result<ApInventory, CliError> {
    require("AP inventory", &cfg.data.inventory)?;
    Ok(load_inventory(&cfg.data.inventory)?)
}

fn load_split(cfg: &RunConfig, inv: &ApInventory) -> Result<(Vec<FingerprintSample>, Vec<FingerprintSample>), CliError> {
    require("fingerprint file", &cfg.data.fingerprints)?;
    let pool = load_fingerprints(&cfg.data.fingerprints, inv)?;
    Ok(split_train_calibration(&pool, cfg.split.train_fraction, cfg.split.seed)?)
}

fn load_test(cfg: &RunConfig, inv: &ApInventory) -> Result<Vec<FingerprintSample>, CliError> {
    require("test file", &cfg.data.test)?;
    Ok(load_fingerprints(&cfg.data.test, inv)?)
}

fn load_model(cfg: &RunConfig) -> Result<(GtModel, GraphConfig), CliError> {
    let path = cfg.checkpoint_path();
    require("checkpoint (run `train` first)", &path)?;
    let ckpt = load_checkpoint(&path)?;
    if ckpt.graph != cfg.graph {
        log::warn!(
            "graph thresholds in the config differ from the checkpoint's; using the checkpoint's {:?}",
            ckpt.graph
        );
    }
    Ok((ckpt.to_model()?, ckpt.graph))
}

fn load_calibration_checked(cfg: &RunConfig) -> Result<SacpCalibration, CliError> {
    let path = cfg.calibration_path();
    require("calibration file (run `calibrate` first)", &path)?;
    Ok(load_calibration(&path)?)
}

fn predict_samples(
    model: &GtModel,
    graph: GraphConfig,
    inv: &ApInventory,
    samples: &[FingerprintSample],
) -> Result<Vec<Point>, CliError> {
    let graphs = GraphBuilder::new(inv, graph)?.build_all(samples)?;
    Ok(model.predict_all(&graphs)?)
}

fn truths(samples: &[FingerprintSample]) -> Vec<Point> {
    samples.iter().map(|s| s.truth).collect()
}

fn fmt_radius(r: f64) -> String {
    if r.is_infinite() {
        "inf".into()
    } else {
        r.to_string()
    }
}

fn run_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (inv, pool) = generate_synthetic(&cfg.synthetic.environment)?;
    let test = generate_scans(
        &inv,
        &cfg.synthetic.environment,
        cfg.synthetic.test_samples,
        cfg.synthetic.test_seed,
    )?;
    for p in [&cfg.data.inventory, &cfg.data.fingerprints, &cfg.data.test] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_inventory(&cfg.data.inventory, &inv)?;
    write_fingerprints(&cfg.data.fingerprints, &inv, &pool)?;
    write_fingerprints(&cfg.data.test, &inv, &test)?;
    writeln!(
        out,
        "wrote {} APs, {} labelled and {} test scans",
        inv.len(),
        pool.len(),
        test.len()
    )?;
    Ok(())
}

fn run_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let inv = load_inventory_checked(cfg)?;
    let (train, cal) = load_split(cfg, &inv)?;
    log::info!("training on {} scans ({} held for calibration)", train.len(), cal.len());
    let mut model = GtModel::new(
        cfg.model.model_config(inv.len()),
        CoordNormalizer::from_inventory(&inv),
        cfg.model.init_seed,
    )?;
    let outcome = train_samples(&mut model, &train, &cfg.train, &cfg.graph, &inv)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let ckpt = Checkpoint::from_model(&model, cfg.graph, Some(outcome.optimizer));
    save_checkpoint(&cfg.checkpoint_path(), &ckpt)?;
    write_loss_log(&cfg.loss_log_path(), &outcome.log)?;
    let last = outcome.log.last().map_or(f64::NAN, |e| e.train_mae);
    writeln!(
        out,
        "trained {} parameters for {} epochs, final train MAE {last:.3} m; wrote {}",
        model.parameter_count(),
        outcome.log.len(),
        cfg.checkpoint_path().display()
    )?;
    Ok(())
}

fn run_calibrate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, graph) = load_model(cfg)?;
    let inv = load_inventory_checked(cfg)?;
    let (_, cal_samples) = load_split(cfg, &inv)?;
    let preds = predict_samples(&model, graph, &inv, &cal_samples)?;
    let cal = calibrate(
        &preds,
        &truths(&cal_samples),
        cfg.conformal.alpha,
        &cfg.conformal.kmeans(),
        cfg.conformal.assignment,
    )?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    save_calibration(&cfg.calibration_path(), &cal)?;
    for (i, r) in cal.regions.iter().enumerate() {
        writeln!(out, "region {i}: {} scores, radius {}", r.count, fmt_radius(r.radius))?;
    }
    writeln!(
        out,
        "global: {} scores, radius {}; wrote {}",
        cal.global.count,
        fmt_radius(cal.global.radius),
        cfg.calibration_path().display()
    )?;
    Ok(())
}

fn parse_rssi(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Config(format!("cannot parse RSSI value `{t}`")))
        })
        .collect()
}

fn run_predict(cfg: &RunConfig, args: &PredictArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let text = match (&args.rssi, &args.rssi_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => {
            require("RSSI file", p)?;
            std::fs::read_to_string(p)?
        }
        (None, None) => return Err(CliError::Config("pass --rssi or --rssi-file".into())),
    };
    let rssi = parse_rssi(&text)?;
    let (model, graph_cfg) = load_model(cfg)?;
    let cal = load_calibration_checked(cfg)?;
    let inv = load_inventory_checked(cfg)?;
    let graph = GraphBuilder::new(&inv, graph_cfg)?.build_rssi(&rssi)?;
    if graph.user_links().is_empty() {
        writeln!(
            err,
            "warning: no_connected_aps: no AP reaches {} dBm; prediction uses the RSSI vector alone",
            graph_cfg.min_rssi_dbm
        )?;
    }
    let set = crate::conformal::predict_set(&model, &cal, &graph)?;
    writeln!(out, "x,y,region,radius")?;
    writeln!(
        out,
        "{},{},{},{}",
        set.center[0],
        set.center[1],
        set.region,
        fmt_radius(set.radius)
    )?;
    Ok(())
}

fn run_evaluate(cfg: &RunConfig, args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, graph) = load_model(cfg)?;
    let cal = load_calibration_checked(cfg)?;
    let inv = load_inventory_checked(cfg)?;
    let test = load_test(cfg, &inv)?;
    let preds = predict_samples(&model, graph, &inv, &test)?;
    let truth = truths(&test);
    let baseline: Vec<Point> = test
        .iter()
        .map(|s| weighted_centroid_baseline(s, &inv, &cfg.baseline))
        .collect();
    let mode = args.assignment.unwrap_or(cal.assignment);
    let report = Report {
        point_metrics: Some(point_metrics(&preds, &truth)?),
        baseline_metrics: Some(point_metrics(&baseline, &truth)?),
        coverage: Some(coverage_by_region(&preds, &truth, &cal, mode)?),
        sweep: None,
        error_map: error_map(&preds, &truth, &cal.region_model, mode)?,
    };
    let files = emit_report(&report, &cfg.report_dir())?;
    out.write_all(crate::evalreport::render_text(&report).as_bytes())?;
    for f in files {
        writeln!(out, "wrote {}", f.display())?;
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, graph) = load_model(cfg)?;
    let cal = load_calibration_checked(cfg)?;
    let inv = load_inventory_checked(cfg)?;
    let (_, cal_samples) = load_split(cfg, &inv)?;
    let test = load_test(cfg, &inv)?;
    let cal_preds = predict_samples(&model, graph, &inv, &cal_samples)?;
    let test_preds = predict_samples(&model, graph, &inv, &test)?;
    let mode = args.assignment.unwrap_or(cal.assignment);
    let sweep = alpha_sweep(
        &cal_preds,
        &truths(&cal_samples),
        &test_preds,
        &truths(&test),
        &cfg.conformal.alpha_grid,
        &cal.region_model,
        mode,
    )?;
    if !sweep.radii_monotone() {
        log::warn!("radii are not monotone in alpha; this indicates a bug");
    }
    let report = Report {
        sweep: Some(sweep),
        ..Report::default()
    };
    let files = emit_report(&report, &cfg.sweep_dir())?;
    out.write_all(crate::evalreport::render_text(&report).as_bytes())?;
    for f in files {
        writeln!(out, "wrote {}", f.display())?;
    }
    Ok(())
}

/// Runs a parsed command line, writing normal output to `out` and warnings
/// to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Synth(_) => run_synth(&cfg, out),
        Command::Train(_) => run_train(&cfg, out),
        Command::Calibrate(_) => run_calibrate(&cfg, out),
        Command::Predict(a) => run_predict(&cfg, a, out, err),
        Command::Evaluate(a) => run_evaluate(&cfg, a, out),
        Command::Sweep(a) => run_sweep(&cfg, a, out),
    }
}

/// Process entry point; returns the exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SACLOC_LOG", "warn")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    match run(&cli, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
