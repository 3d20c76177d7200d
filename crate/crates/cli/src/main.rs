//! `qmluq`: run, checkpoint and evaluate uncertainty-aware quantum circuit models.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qmluq::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use qmluq::config::{ExperimentConfig, Method};
use qmluq::data::write_dataset_csv;
use qmluq::experiment::{evaluate, fit, prepare_data, run_experiment, run_table1, FitOutcome};
use qmluq::output::{self, write_atomic};
use qmluq::{Error, Result};

#[derive(Parser)]
#[command(name = "qmluq", version, about = "Uncertainty quantification for data re-uploading quantum circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and evaluation sets as CSV.
    Dataset(ConfigArgs),
    /// Train a model and save a checkpoint and its loss traces.
    Train(ConfigArgs),
    /// Predict on the evaluation grid from a checkpoint.
    Predict(CheckpointArgs),
    /// Compute the calibration curve of a checkpoint on the evaluation grid.
    Calibrate(CheckpointArgs),
    /// Train, predict and calibrate in one go, writing every output.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
    },
    /// ECE of all six uncertainty methods over several seeds, as Markdown and CSV.
    Table1 {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated root seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Band and calibration plots for every method.
    Figures(ConfigArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable and applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the checkpoint's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            config.apply_str(&std::fs::read_to_string(path)?)?;
        }
        let flags = [
            ("method", self.method.clone()),
            ("task", self.task.clone()),
            ("variant", self.variant.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("num_qubits", self.qubits.map(|v| v.to_string())),
            ("num_layers", self.layers.map(|v| v.to_string())),
            ("max_epochs", self.epochs.map(|v| v.to_string())),
            ("output_dir", self.out_dir.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        config.apply_overrides(&self.overrides)?;
        config.validate()?;
        Ok(config)
    }
}

fn stem(config: &ExperimentConfig) -> String {
    let tag = match config.task {
        qmluq::Task::Regression => config.variant.as_str(),
        qmluq::Task::Classification => "moons",
    };
    format!("{}_{}_seed{}", config.method, tag, config.seed)
}

fn paths_json(paths: &[PathBuf]) -> serde_json::Value {
    json!(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

fn cmd_dataset(args: &ConfigArgs) -> Result<serde_json::Value> {
    let config = args.resolve()?;
    let data = prepare_data(&config)?;
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &[("train", &data.train), ("eval", &data.eval)])?;
    let path = config.output_dir.join(format!("dataset_{}.csv", stem(&config)));
    write_atomic(&path, &buf)?;
    Ok(json!({ "files": paths_json(&[path]), "train_points": data.train.len(), "eval_points": data.eval.len() }))
}

fn cmd_train(args: &ConfigArgs) -> Result<serde_json::Value> {
    let config = args.resolve()?;
    let data = prepare_data(&config)?;
    let fitted = fit(&config, &data.train)?;
    let dir = &config.output_dir;
    let ckpt_path = dir.join(format!("{}_checkpoint.json", stem(&config)));
    save_checkpoint(&ckpt_path, &Checkpoint::new(&config, fitted.model.clone()))?;
    let mut files = vec![ckpt_path];
    if !fitted.traces.is_empty() {
        let trace_path = dir.join(format!("{}_trace.csv", stem(&config)));
        write_atomic(&trace_path, &output::traces_csv(&fitted.traces)?)?;
        files.push(trace_path);
    }
    let finals: Vec<f64> = fitted.traces.iter().filter_map(|t| t.last().copied()).collect();
    Ok(json!({ "files": paths_json(&files), "final_losses": finals, "gp_diagnostics": fitted.gp_diagnostics }))
}

fn record_from_checkpoint(args: &CheckpointArgs) -> Result<(ExperimentConfig, qmluq::ResultRecord)> {
    let started = Instant::now();
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut config = ckpt.config.clone();
    if let Some(dir) = &args.out_dir {
        config.output_dir = dir.clone();
    }
    let data = prepare_data(&config)?;
    let fitted = FitOutcome { model: ckpt.model, traces: Vec::new(), gp_diagnostics: None };
    let record = evaluate(&config, &fitted, &data, started)?;
    Ok((config, record))
}

fn cmd_predict(args: &CheckpointArgs) -> Result<serde_json::Value> {
    let (config, record) = record_from_checkpoint(args)?;
    let path = config.output_dir.join(format!("{}_band.csv", stem(&config)));
    write_atomic(&path, &output::band_csv(&record)?)?;
    Ok(json!({ "files": paths_json(&[path]), "points": record.points.len() }))
}

fn cmd_calibrate(args: &CheckpointArgs) -> Result<serde_json::Value> {
    let (config, record) = record_from_checkpoint(args)?;
    let mut files = Vec::new();
    let summary = json!({
        "config": config,
        "calibration": record.calibration,
        "classification": record.classification,
        "ece": record.ece(),
    });
    let json_path = config.output_dir.join(format!("{}_calibration.json", stem(&config)));
    write_atomic(&json_path, format!("{}\n", serde_json::to_string_pretty(&summary)?).as_bytes())?;
    files.push(json_path);
    if let Some(report) = &record.calibration {
        let csv_path = config.output_dir.join(format!("{}_calibration.csv", stem(&config)));
        write_atomic(&csv_path, &output::calibration_csv(report)?)?;
        files.push(csv_path);
    }
    Ok(json!({ "files": paths_json(&files), "ece": record.ece() }))
}

fn cmd_run(args: &ConfigArgs, svg: bool) -> Result<serde_json::Value> {
    let config = args.resolve()?;
    let run = run_experiment(&config)?;
    let mut files = output::emit_outputs(&run.record, &config.output_dir, svg)?;
    let ckpt_path = config.output_dir.join(format!("{}_checkpoint.json", stem(&config)));
    save_checkpoint(&ckpt_path, &Checkpoint::new(&config, run.model))?;
    files.push(ckpt_path);
    Ok(json!({ "files": paths_json(&files), "ece": run.record.ece(), "wall_clock_seconds": run.record.wall_clock_seconds }))
}

fn cmd_table1(args: &ConfigArgs, seeds: &[u64]) -> Result<serde_json::Value> {
    let config = args.resolve()?;
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    let started = Instant::now();
    let rows = run_table1(&config, seeds)?;
    let md = config.output_dir.join("table1.md");
    let csv = config.output_dir.join("table1.csv");
    write_atomic(&md, output::table1_markdown(&rows).as_bytes())?;
    write_atomic(&csv, &output::table1_csv(&rows)?)?;
    let medians: serde_json::Map<String, serde_json::Value> =
        rows.iter().map(|r| (r.method.as_str().to_string(), json!(r.median()))).collect();
    Ok(json!({
        "files": paths_json(&[md, csv]),
        "median_ece": medians,
        "config": config,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    }))
}

fn cmd_figures(args: &ConfigArgs) -> Result<serde_json::Value> {
    let base = args.resolve()?;
    let mut files = Vec::new();
    for method in Method::ALL {
        let config = ExperimentConfig { method, ..base.clone() };
        let record = run_experiment(&config)?.record;
        files.extend(output::emit_outputs(&record, &config.output_dir, true)?);
    }
    Ok(json!({ "files": paths_json(&files) }))
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut details = serde_json::Map::new();
    match e {
        Error::Diverged { epoch, loss } => {
            details.insert("epoch".into(), json!(epoch));
            details.insert("loss".into(), json!(loss.to_string()));
        }
        Error::Member { member, source } => {
            details.insert("member".into(), json!(member));
            details.insert("cause".into(), error_json(source));
        }
        Error::SingularKernel { jitter } => {
            details.insert("jitter".into(), json!(jitter));
        }
        Error::NoConvergence { iterations, residual } => {
            details.insert("iterations".into(), json!(iterations));
            details.insert("residual".into(), json!(residual));
        }
        Error::SchemaVersion { found, expected } => {
            details.insert("found".into(), json!(found));
            details.insert("expected".into(), json!(expected));
        }
        Error::Parse { offset, .. } => {
            details.insert("offset".into(), json!(offset));
        }
        _ => {}
    }
    json!({ "kind": e.kind(), "message": e.to_string(), "details": details })
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Dataset(a) => cmd_dataset(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Run { config, svg } => cmd_run(config, *svg),
        Command::Table1 { config, seeds } => cmd_table1(config, seeds),
        Command::Figures(a) => cmd_figures(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": error_json(&e) }));
            ExitCode::FAILURE
        }
    }
}
