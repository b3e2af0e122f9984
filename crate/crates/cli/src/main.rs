use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use potgame::experiments::{emit_csv, emit_plot, read_aggregate_csv, sweep, ExperimentConfig, PlotAxis};
use potgame::linalg::{Mat, Tolerances};
use potgame::potential::{check_assumptions, AssumptionMode};
use potgame::{run_online, solve_feedback_nash, Error, GameSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "potgame", version, about = "LQ feedback potential games with preview")]
struct Cli {
    /// Override a tolerance, e.g. --tol pd_pivot=1e-12 (repeatable).
    #[arg(long = "tol", global = true, value_name = "KEY=VALUE")]
    tol: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every assumption and print the report as JSON.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        /// Exit with status 2 unless every assumption holds.
        #[arg(long)]
        strict: bool,
    },
    /// Solve for the feedback Nash equilibrium.
    Solve {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play the game online with a preview window.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        preview: usize,
        /// JSON file holding a 2m x n tracking gain.
        #[arg(long)]
        gain: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo sweep; writes rows.csv and agg.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Render an aggregate CSV as an SVG chart.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = ["T", "W"])]
        x: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Strict(serde_json::Value),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn tolerances(overrides: &[String]) -> Result<Tolerances, Failure> {
    let mut tol = Tolerances::default();
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--tol expects KEY=VALUE, got {item:?}")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Failure::Usage(format!("--tol value {value:?} is not a number")))?;
        tol.set(key, value).map_err(Failure::Usage)?;
    }
    Ok(tol)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let tol = tolerances(&cli.tol)?;
    match cli.command {
        Command::Validate { spec, strict } => {
            let spec: GameSpec = read_json(&spec)?;
            let report = check_assumptions(&spec, AssumptionMode::Warn, &tol)?;
            let value = serde_json::to_value(&report).map_err(Error::from)?;
            if strict && !report.overall {
                return Err(Failure::Strict(value));
            }
            println!("{}", serde_json::to_string_pretty(&value).map_err(Error::from)?);
        }
        Command::Solve { spec, out } => {
            let spec: GameSpec = read_json(&spec)?;
            write_json(&out, &solve_feedback_nash(&spec, &tol)?)?;
        }
        Command::Run {
            spec,
            preview,
            gain,
            out,
        } => {
            let spec: GameSpec = read_json(&spec)?;
            let gain: Option<Mat> = gain.as_deref().map(read_json).transpose()?;
            write_json(&out, &run_online(&spec, preview, gain.as_ref(), &tol)?)?;
        }
        Command::Sweep {
            config,
            out_dir,
            seed,
            runs,
        } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            let result = sweep(&cfg, &tol)?;
            emit_csv(&result, &out_dir)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            let summary = json!({
                "rows": result.rows.len(),
                "failed_rows": failed,
                "assumption_warnings": result.assumption_warnings,
                "aggregates": result.aggregates,
            });
            println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
        }
        Command::Plot { input, x, out } => {
            let axis: PlotAxis = x.parse()?;
            emit_plot(&read_aggregate_csv(&input)?, axis, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(detail)) => {
            eprintln!("{}", json!({"code": "usage", "stage": null, "detail": detail}));
            ExitCode::from(1)
        }
        Err(Failure::Strict(report)) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            eprintln!("{}", json!({"code": "assumption_violated", "stage": null, "detail": "strict validation failed"}));
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("{}", json!({"code": e.code(), "stage": e.stage(), "detail": e.to_string()}));
            let status = match &e {
                Error::AssumptionViolated { .. } => 2,
                e if e.is_numerical() => 3,
                _ => 1,
            };
            ExitCode::from(status)
        }
    }
}
