use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use manyworlds::harness::{self, Experiment, SolverChoice};

#[derive(Parser)]
#[command(
    name = "manyworlds",
    version,
    about = "Primal-dual bandit learner with long-term constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and cross-check a configuration, then print the resolved parameters.
    Validate { config: PathBuf },
    /// Play one seed and write its trajectory and summary.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory (defaults to the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (horizon, seed) pair and report mean regret and its log-log slope.
    Sweep {
        config: PathBuf,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        /// Seed range `a..b` (inclusive) or comma-separated list.
        #[arg(long, default_value = "0..19")]
        seeds: String,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Write the report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve the hindsight problem at the configured horizon.
    Opt {
        config: PathBuf,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Re-validate a trajectory file against its summary.
    Check {
        trajectory: PathBuf,
        summary: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Grid,
    Dual,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().parse().context("seed range end")?;
        if b < a {
            bail!("empty seed range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed {s:?}"))
        })
        .collect()
}

fn load(path: &std::path::Path) -> Result<Experiment> {
    Experiment::load(path).with_context(|| format!("configuration {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { config } => {
            let exp = load(&config)?;
            let params = exp.params(exp.horizon())?;
            println!("{}", serde_json::to_string_pretty(&params)?);
        }
        Command::Run { config, seed, out } => {
            let exp = load(&config)?;
            let t = exp.horizon();
            let opt = exp.opt(t)?;
            let output = harness::run(&exp, t, seed, opt.as_ref())?;
            let dir = out.unwrap_or_else(|| exp.config.run.output_dir.clone());
            let (traj, summary) = harness::write_run(&dir, &output, opt.as_ref())?;
            let r = &output.result;
            println!("trajectory {}", traj.display());
            println!("summary    {}", summary.display());
            println!(
                "tau {}  reward {:.6}  violations {:?}",
                r.tau, r.cumulative_reward, r.violations
            );
            if let Some(regret) = r.regret {
                println!("regret {regret:.6}");
            }
            println!(
                "complementary slackness ok: {} (worst slack {:.3e})",
                r.cs_check.ok, r.cs_check.worst_slack
            );
            eprintln!("wall time {:.3}s", r.wall_time_secs);
        }
        Command::Sweep {
            config,
            horizons,
            seeds,
            jobs,
            report,
        } => {
            let exp = load(&config)?;
            let seeds = parse_seeds(&seeds)?;
            let rep = harness::sweep(&exp, &horizons, &seeds, jobs)?;
            println!(
                "{:>8} {:>6} {:>14} {:>12} {:>12}",
                "T", "runs", "mean_regret", "stderr", "regret/T"
            );
            for row in &rep.rows {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:>8} {:>6} {:>14} {:>12} {:>12}",
                    row.horizon,
                    row.completed,
                    fmt(row.mean_regret),
                    fmt(row.stderr_regret),
                    fmt(row.mean_regret.map(|m| m / row.horizon as f64)),
                );
            }
            match (rep.slope, rep.degenerate) {
                (_, true) => println!("slope: degenerate, regret below gap"),
                (Some(s), false) => println!("slope: {s:.4}"),
                (None, false) => println!("slope: unavailable"),
            }
            for f in &rep.failures {
                eprintln!("failed T = {} seed {}: {}", f.horizon, f.seed, f.message);
            }
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&rep)? + "\n")?;
            }
            if rep.failed() {
                eprintln!("{} of {} runs failed", rep.failures.len(), rep.total_runs);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Opt {
            config,
            solver,
            resolution,
        } => {
            let mut cfg = harness::ExperimentConfig::load(&config)?;
            if let Some(s) = solver {
                cfg.run.solver = match s {
                    SolverArg::Grid => SolverChoice::Grid,
                    SolverArg::Dual => SolverChoice::Dual,
                };
            }
            if let Some(r) = resolution {
                cfg.run.resolution = r;
            }
            if cfg.run.solver == SolverChoice::None {
                cfg.run.solver = SolverChoice::Grid;
            }
            let exp = Experiment::new(cfg)?;
            let opt = exp.opt(exp.horizon())?.expect("solver selected");
            println!("value {:.10}", opt.value);
            println!("certified_gap {:.10}", opt.certified_gap);
            if !opt.converged {
                println!(
                    "warning: dual solver hit its iteration cap; value is the best dual bound"
                );
            }
        }
        Command::Check {
            trajectory,
            summary,
        } => {
            let chk = harness::check_files(&trajectory, &summary)?;
            println!(
                "complementary slackness: {} (worst slack {:.3e} over {} prefixes)",
                if chk.cs.ok { "ok" } else { "FAILED" },
                chk.cs.worst_slack,
                chk.cs.prefixes_checked
            );
            println!(
                "long-term constraints: {} {:?}",
                if chk.constraints_satisfied {
                    "ok"
                } else {
                    "FAILED"
                },
                chk.violations
            );
            println!(
                "summary reward matches trajectory: {}",
                chk.reward_mismatch <= 1e-12
            );
            if !chk.complete {
                println!("trajectory is incomplete");
            }
            if !chk.ok() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
