//! Command-line front end: simulate runs, estimate dimensions, score
//! bounds, and drive coverage/sweep/validation experiments.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when more than
//! a tenth of an experiment's replicates fail, 1 otherwise.

use clap::{Parser, Subcommand};
use genbounds::dynamics::{read_trajectory_csv, write_trajectory_csv};
use genbounds::fractal::estimate_trajectory_dimension;
use genbounds::harness::{
    coverage_csv, evaluate_run, lemma_csv, run_coverage, run_lemma_validation, run_simulation,
    run_sweep, svg_plot, sweep_csv, sweep_svg, to_json_pretty, write_text, ExperimentConfig,
    HarnessError, PlotSeries, SweepParam,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "genbounds",
    version,
    about = "Coupled heavy-tailed learning dynamics and generalization-bound experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one coupled run and persist every artifact to a directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the box dimension of a trajectory CSV's empirical path.
    Dim {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 9)]
        levels: usize,
        /// JSON output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score the bounds on a directory produced by `simulate`.
    Bounds {
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated theorem ids; defaults to the run's config.
        #[arg(long, value_delimiter = ',')]
        theorems: Option<Vec<u8>>,
        /// JSON output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated coverage experiment: hold rates per theorem.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one parameter and record medians/IQRs per value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of: n, alpha, t, s.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a CSV (first column x, remaining columns series) as an SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// log10-scale both axes.
        #[arg(long)]
        loglog: bool,
    },
    /// Check the occupation-divergence lemmas against quadrature oracles.
    ValidateLemmas {
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) | HarnessError::BadSweepParam(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), HarnessError> {
    let json = to_json_pretty(value);
    match out {
        Some(path) => write_text(path, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let artifacts = run_simulation(&cfg)?;
            write_text(&out.join("config.json"), &to_json_pretty(&cfg))?;
            write_text(&out.join("problem.json"), &to_json_pretty(&artifacts.problem))?;
            write_text(&out.join("dataset.json"), &to_json_pretty(&artifacts.dataset))?;
            write_trajectory_csv(&artifacts.trajectory, &out.join("traj.csv"))
                .map_err(HarnessError::Dynamics)?;
            write_text(&out.join("summary.json"), &to_json_pretty(&artifacts.summary))?;
            println!(
                "simulate: {} steps, geometric gap {:.6e}, artifacts in {}",
                artifacts.summary.steps,
                artifacts.summary.geometric_gap,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Dim { traj, levels, out } => {
            let trajectory = read_trajectory_csv(&traj).map_err(HarnessError::Dynamics)?;
            let estimate = estimate_trajectory_dimension(&trajectory.w, levels)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!(
                "dim: gamma_hat {:.4} (r^2 {:.4}, window {:?})",
                estimate.gamma_hat, estimate.r_squared, estimate.fit_window
            );
            emit_json(&estimate, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds { run, theorems, out } => {
            let mut cfg = ExperimentConfig::load(&run.join("config.json"))?;
            if let Some(t) = theorems {
                cfg.experiment.theorems = t;
                cfg.validate()?;
            }
            let problem = read_json(&run.join("problem.json"))?;
            let dataset = read_json(&run.join("dataset.json"))?;
            let trajectory =
                read_trajectory_csv(&run.join("traj.csv")).map_err(HarnessError::Dynamics)?;
            let outcome = evaluate_run(&cfg, &problem, &dataset, &trajectory)?;
            for report in &outcome.reports {
                let verdict = match report.holds {
                    Some(true) => "holds",
                    Some(false) => "VIOLATED",
                    None => "rhs only",
                };
                println!(
                    "{}: lhs {:?} rhs {:.6e} [{verdict}]",
                    report.theorem, report.lhs, report.rhs
                );
            }
            emit_json(&outcome, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Coverage {
            config,
            replicates,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = replicates {
                cfg.experiment.replicates = r;
            }
            let report = run_coverage(&cfg)?;
            write_text(&out.join("coverage.json"), &to_json_pretty(&report))?;
            write_text(&out.join("coverage.csv"), &coverage_csv(&report))?;
            for (name, cov) in &report.theorems {
                println!(
                    "{name}: {}/{} hold ({:.1}%), mean ratio {:.3e}",
                    cov.holds,
                    cov.evaluated,
                    100.0 * cov.hold_rate,
                    cov.mean_ratio
                );
            }
            if report.errors * 10 > report.replicates {
                eprintln!(
                    "coverage: {} of {} replicates failed",
                    report.errors, report.replicates
                );
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let param: SweepParam = param.parse()?;
            let table = run_sweep(&cfg, param, &values)?;
            write_text(&out.join("sweep.json"), &to_json_pretty(&table))?;
            write_text(&out.join("sweep.csv"), &sweep_csv(&table))?;
            write_text(&out.join("sweep.svg"), &sweep_svg(&table))?;
            if let Some(slope) = table.loglog_slope_geometric_gap {
                println!("sweep: log-log slope of median geometric gap = {slope:.4}");
            }
            println!("sweep: {} values, artifacts in {}", table.rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { input, out, loglog } => {
            let series = read_plot_csv(&input)?;
            write_text(&out, &svg_plot(&series, "x", "value", loglog))?;
            println!("plot: {} series written to {}", series.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateLemmas { cases, seed, out } => {
            let rows = run_lemma_validation(cases, seed)?;
            write_text(&out, &lemma_csv(&rows))?;
            // quadrature resolution, not a real crossing, below this
            let violations = rows.iter().filter(|r| r.margin < -1e-9).count();
            println!(
                "validate-lemmas: {} rows, {} violations, min margin {:.3e}",
                rows.len(),
                violations,
                rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Generic plot input: header row, first column x, one series per
/// remaining column. Rows with unparseable cells are skipped per series.
fn read_plot_csv(path: &Path) -> Result<Vec<PlotSeries>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{}: empty csv", path.display())))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() < 2 {
        return Err(HarnessError::Config(format!(
            "{}: need an x column and at least one series",
            path.display()
        )));
    }
    let mut series: Vec<PlotSeries> = names[1..]
        .iter()
        .map(|n| PlotSeries {
            name: n.trim().to_string(),
            points: Vec::new(),
        })
        .collect();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let Some(Ok(x)) = cells.first().map(|c| c.trim().parse::<f64>()) else {
            continue;
        };
        for (i, s) in series.iter_mut().enumerate() {
            if let Some(Ok(y)) = cells.get(i + 1).map(|c| c.trim().parse::<f64>()) {
                s.points.push((x, y));
            }
        }
    }
    Ok(series)
}
