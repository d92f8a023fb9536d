//! `dropdyn` command-line interface.
//!
//! Exit codes: 0 success, 1 validation error (bad flags or config),
//! 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dropdyn_core::checkpoint::load_model_params;
use dropdyn_core::compare::compare_runs;
use dropdyn_core::config::{dataset_manifest, dataset_spec_from_str, parse_kv, ExperimentConfig};
use dropdyn_core::data::{generate, save};
use dropdyn_core::diagnostics::DIAGNOSTICS_CSV_HEADER;
use dropdyn_core::harness::{diagnose_checkpoint, run_experiment};
use dropdyn_core::landscape::{model_landscape, write_landscape_artifacts};
use dropdyn_core::model::build_model;
use dropdyn_core::plot::{emit_plot, series_from_csv, PlotSpec, Series};
use dropdyn_core::sweep::{run_sweep, SweepAxis};
use dropdyn_core::CoreError;

#[derive(Parser)]
#[command(
    name = "dropdyn",
    version,
    about = "Train small models with scheduled dropout / stochastic depth and measure their gradient dynamics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (train.dds, test.dds, manifest.txt)
    GenData {
        /// Config file with the data.* keys
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one experiment and write metrics, diagnostics, checkpoints
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a training checkpoint (.ddck)
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Grid sweep: one run per override combination per seed
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sweep axis as key=v1,v2,... (repeatable)
        #[arg(long = "axis")]
        axes: Vec<String>,
        /// Seeds to run per combination
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Gradient-dynamics metrics for a saved checkpoint
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Loss-landscape grid and curvature score around a checkpoint
    Landscape {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Grid points per axis (odd)
        #[arg(long, default_value_t = 25)]
        resolution: usize,
        /// Coordinate range: the grid covers [-span, span] on both axes
        #[arg(long, default_value_t = 1.0)]
        span: f64,
        /// Seed for the two random directions
        #[arg(long, default_value_t = 0)]
        direction_seed: u64,
    },
    /// Compare two completed runs
    Compare {
        /// First run directory (A)
        #[arg(long)]
        a: PathBuf,
        /// Second run directory (B)
        #[arg(long)]
        b: PathBuf,
        /// Report file to write
        #[arg(long)]
        out: PathBuf,
        /// Config keys the comparison is expected to vary (repeatable)
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// Render an SVG line plot from run CSVs
    Plot {
        /// Plot spec file: plot.x, plot.y, plot.title, plot.inputs, plot.names
        #[arg(long)]
        config: PathBuf,
        /// SVG file to write
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_to_string(path: &Path) -> Result<String, CoreError> {
    std::fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))
}

fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, CoreError> {
    let (cfg, warnings) = ExperimentConfig::from_file(path)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn cmd_gen_data(config: &Path, out: &Path) -> Result<(), CoreError> {
    let spec = dataset_spec_from_str(&read_to_string(config)?)?;
    let (train, test) = generate::<f64>(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out.display().to_string(), e))?;
    save(&train, &out.join("train.dds"))?;
    save(&test, &out.join("test.dds"))?;
    std::fs::write(out.join("manifest.txt"), dataset_manifest(&spec))
        .map_err(|e| CoreError::io(out.display().to_string(), e))?;
    println!(
        "wrote {} train / {} test examples to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(config: &Path, out: &Path, resume: Option<&Path>) -> Result<(), CoreError> {
    let cfg = load_experiment_config(config)?;
    let summary = run_experiment(&cfg, out, resume)?;
    print!("{}", summary.to_text());
    Ok(())
}

fn parse_axis(raw: &str) -> Result<SweepAxis, CoreError> {
    let (key, values) = raw
        .split_once('=')
        .ok_or_else(|| CoreError::InvalidConfig(format!("axis '{raw}' is not key=v1,v2,...")))?;
    let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
    if values.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(CoreError::InvalidConfig(format!("axis '{raw}' has empty values")));
    }
    Ok(SweepAxis {
        key: key.trim().to_string(),
        values,
    })
}

fn cmd_sweep(config: &Path, out: &Path, axes: &[String], seeds: &[u64]) -> Result<(), CoreError> {
    let cfg = load_experiment_config(config)?;
    let axes: Vec<SweepAxis> = axes.iter().map(|a| parse_axis(a)).collect::<Result<_, _>>()?;
    let table = run_sweep(&cfg, &axes, seeds, out)?;
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_diagnose(config: &Path, out: &Path, checkpoint: &Path) -> Result<(), CoreError> {
    let cfg = load_experiment_config(config)?;
    let record = diagnose_checkpoint(&cfg, checkpoint)?;
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out.display().to_string(), e))?;
    let text = format!("{}\n{}\n", DIAGNOSTICS_CSV_HEADER, record.csv_row());
    std::fs::write(out.join("diagnose.csv"), &text)
        .map_err(|e| CoreError::io(out.display().to_string(), e))?;
    print!("{text}");
    Ok(())
}

fn cmd_landscape(
    config: &Path,
    out: &Path,
    checkpoint: &Path,
    resolution: usize,
    span: f64,
    direction_seed: u64,
) -> Result<(), CoreError> {
    let cfg = load_experiment_config(config)?;
    let (train, _) = dropdyn_core::harness::materialize_data(&cfg)?;
    let mut model = build_model::<f64>(&cfg.model_config(cfg.seed))?;
    load_model_params(&mut model, checkpoint)?;
    let (grid, _d1, _d2, delta) = model_landscape(&model, &train, resolution, span, direction_seed)?;
    write_landscape_artifacts(&grid, delta, out)?;
    if grid.non_finite > 0 {
        eprintln!("warning: {} grid points had non-finite loss", grid.non_finite);
    }
    println!("delta={delta}");
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, out: &Path, axes: &[String]) -> Result<(), CoreError> {
    let report = compare_runs(a, b, axes)?;
    let text = report.to_text();
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CoreError::io(out.display().to_string(), e))?;
        }
    }
    std::fs::write(out, &text).map_err(|e| CoreError::io(out.display().to_string(), e))?;
    print!("{text}");
    Ok(())
}

fn cmd_plot(config: &Path, out: &Path) -> Result<(), CoreError> {
    let map = parse_kv(&read_to_string(config)?)?;
    let get = |k: &str| map.get(k).map(|s| s.as_str());
    let y = get("plot.y")
        .ok_or_else(|| CoreError::InvalidConfig("plot spec needs plot.y".into()))?
        .to_string();
    let x = get("plot.x").unwrap_or("iteration").to_string();
    let title = get("plot.title").unwrap_or(&y).to_string();
    let inputs: Vec<PathBuf> = get("plot.inputs")
        .ok_or_else(|| CoreError::InvalidConfig("plot spec needs plot.inputs".into()))?
        .split(',')
        .map(|s| PathBuf::from(s.trim()))
        .collect();
    let names: Vec<String> = match get("plot.names") {
        Some(ns) => ns.split(',').map(|s| s.trim().to_string()).collect(),
        None => inputs
            .iter()
            .map(|p| {
                p.parent()
                    .and_then(|d| d.file_name())
                    .or_else(|| p.file_stem())
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| p.display().to_string())
            })
            .collect(),
    };
    if names.len() != inputs.len() {
        return Err(CoreError::InvalidConfig(format!(
            "plot.names has {} entries for {} inputs",
            names.len(),
            inputs.len()
        )));
    }
    let spec = PlotSpec {
        x_column: x,
        y_column: y,
        title,
    };
    let series: Vec<Series> = inputs
        .iter()
        .zip(&names)
        .map(|(p, n)| series_from_csv(p, &spec, n))
        .collect::<Result<_, _>>()?;
    emit_plot(&series, &spec, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CoreError> {
    match &cli.cmd {
        Cmd::GenData { config, out } => cmd_gen_data(config, out),
        Cmd::Train { config, out, resume } => cmd_train(config, out, resume.as_deref()),
        Cmd::Sweep {
            config,
            out,
            axes,
            seeds,
        } => cmd_sweep(config, out, axes, seeds),
        Cmd::Diagnose {
            config,
            out,
            checkpoint,
        } => cmd_diagnose(config, out, checkpoint),
        Cmd::Landscape {
            config,
            out,
            checkpoint,
            resolution,
            span,
            direction_seed,
        } => cmd_landscape(config, out, checkpoint, *resolution, *span, *direction_seed),
        Cmd::Compare { a, b, out, axes } => cmd_compare(a, b, out, axes),
        Cmd::Plot { config, out } => cmd_plot(config, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version exit 0; real usage problems are validation
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
