//! Experiment execution: single runs, multi-seed sweeps and offline checks.

mod config;
mod io;

pub use config::{
    AdversarialSpec, CorruptedRounds, Experiment, ExperimentConfig, Phase, RandomRounds, RunSpec,
    SolverChoice, WorldSpec,
};
pub use io::{
    read_summary, read_trajectory, trajectory_header, write_summary, write_trajectory, RunSummary,
};

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoParams, AlgoState, Feedback, Trajectory};
use crate::benchmark::{check_cs, regret, CsCheck, OptResult};
use crate::error::{Error, Result};

/// Stream ids split from the per-run root seed.
const ENV_STREAM: u64 = 0;
const PERTURBATION_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub horizon: usize,
    pub world: String,
    /// First stopped round, `T + 1` if never stopped.
    pub tau: usize,
    pub cumulative_reward: f64,
    /// `Σ_t g_{k,t}(x_t)`; positive means satisfied.
    pub violations: Vec<f64>,
    pub regret: Option<f64>,
    pub cs_check: CsCheck,
    /// Excluded from the summary file so identical runs serialise identically.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub params: AlgoParams,
    pub trajectory: Trajectory,
}

/// Per-run RNG streams `(environment, perturbation)`.
pub fn rng_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(ENV_STREAM);
    let mut pert = ChaCha8Rng::seed_from_u64(seed);
    pert.set_stream(PERTURBATION_STREAM);
    (env, pert)
}

/// Plays one full horizon. Fails with an invariant error if any long-term
/// constraint ends non-positive.
pub fn run(
    exp: &Experiment,
    horizon: usize,
    seed: u64,
    opt: Option<&OptResult>,
) -> Result<RunOutput> {
    let started = Instant::now();
    let params = exp.params(horizon)?;
    let world = exp.world(horizon)?;
    let set = exp.set();
    let scenarios = exp.support.scenarios();
    let (mut env, mut pert) = rng_streams(seed);

    let mut state = AlgoState::new(&params, set)?;
    let mut trajectory = Trajectory::new(set.dim(), params.constraints);
    trajectory.rows.reserve(horizon);
    let mut cursor = world.start(&mut env);
    for _ in 0..horizon {
        let x = state.decide(&params, set, &mut pert)?;
        let (s, next) = world.sample(&cursor, &mut env)?;
        cursor = next;
        let (f_val, g_vals) = scenarios[s].evaluate(&x)?;
        trajectory
            .rows
            .push(state.observe(&params, set, &Feedback { f_val, g_vals })?);
    }

    let violations = trajectory.constraint_totals();
    if let Some(k) = violations.iter().position(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Invariant(format!(
            "seed {seed}, T = {horizon}: constraint {} ended at {} despite a validated safe action",
            k + 1,
            violations[k]
        )));
    }
    let regret = opt
        .map(|o| regret(o, &trajectory))
        .transpose()?
        .map(|(r, _)| r);
    let result = RunResult {
        seed,
        horizon,
        world: world.model().kind().to_string(),
        tau: trajectory.stopping_time(),
        cumulative_reward: trajectory.cumulative_reward(),
        violations,
        regret,
        cs_check: check_cs(&trajectory, &params),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        result,
        params,
        trajectory,
    })
}

/// File names for one run inside `dir`.
pub fn run_paths(dir: &Path, horizon: usize, seed: u64) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("trajectory_T{horizon}_seed{seed}.csv")),
        dir.join(format!("summary_T{horizon}_seed{seed}.json")),
    )
}

/// Writes the trajectory CSV and summary JSON, returning their paths.
pub fn write_run(
    dir: &Path,
    output: &RunOutput,
    opt: Option<&OptResult>,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let (traj_path, summary_path) = run_paths(dir, output.result.horizon, output.result.seed);
    write_trajectory(
        BufWriter::new(File::create(&traj_path)?),
        &output.trajectory,
    )?;
    let summary = RunSummary {
        result: output.result.clone(),
        params: output.params.clone(),
        opt: opt.cloned(),
    };
    write_summary(&summary_path, &summary)?;
    Ok((traj_path, summary_path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon: usize,
    pub completed: usize,
    pub opt_value: Option<f64>,
    pub certified_gap: Option<f64>,
    pub mean_regret: Option<f64>,
    pub stderr_regret: Option<f64>,
    pub mean_reward: f64,
    pub min_violation: f64,
    pub cs_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub horizon: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln mean R_T` on `ln T`.
    pub slope: Option<f64>,
    /// Mean regret never exceeded the certified gap, so the slope is noise.
    pub degenerate: bool,
    pub failures: Vec<RunFailure>,
    pub total_runs: usize,
    #[serde(skip)]
    pub results: Vec<RunResult>,
}

impl SweepReport {
    /// More than a tenth of the runs failed.
    pub fn failed(&self) -> bool {
        self.failures.len() * 10 > self.total_runs
    }
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ys` on `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let (mx, _) = mean_and_stderr(xs);
    let (my, _) = mean_and_stderr(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs every `(T, seed)` pair on a pool of `jobs` threads.
pub fn sweep(
    exp: &Experiment,
    horizons: &[usize],
    seeds: &[u64],
    jobs: usize,
) -> Result<SweepReport> {
    if horizons.is_empty() || seeds.is_empty() {
        return Err(Error::usage(
            "sweep needs at least one horizon and one seed",
        ));
    }
    for &t in horizons {
        exp.params(t)?;
        exp.world(t)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let opts: Vec<Option<OptResult>> = horizons
            .par_iter()
            .map(|&t| exp.opt(t))
            .collect::<Result<Vec<_>>>()?;
        let tasks: Vec<(usize, u64)> = (0..horizons.len())
            .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
            .collect();
        let outcomes: Vec<Result<RunResult>> = tasks
            .par_iter()
            .map(|&(i, s)| run(exp, horizons[i], s, opts[i].as_ref()).map(|o| o.result))
            .collect();

        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let mut results = Vec::new();
        for (i, &t) in horizons.iter().enumerate() {
            let mut done = Vec::new();
            for ((j, s), outcome) in tasks.iter().zip(&outcomes) {
                if *j != i {
                    continue;
                }
                match outcome {
                    Ok(r) => done.push(r.clone()),
                    Err(e) => failures.push(RunFailure {
                        horizon: t,
                        seed: *s,
                        message: e.to_string(),
                    }),
                }
            }
            let regrets: Vec<f64> = done.iter().filter_map(|r| r.regret).collect();
            let stats = (!regrets.is_empty()).then(|| mean_and_stderr(&regrets));
            let rewards: Vec<f64> = done.iter().map(|r| r.cumulative_reward).collect();
            rows.push(SweepRow {
                horizon: t,
                completed: done.len(),
                opt_value: opts[i].as_ref().map(|o| o.value),
                certified_gap: opts[i].as_ref().map(|o| o.certified_gap),
                mean_regret: stats.map(|s| s.0),
                stderr_regret: stats.map(|s| s.1),
                mean_reward: if rewards.is_empty() {
                    f64::NAN
                } else {
                    mean_and_stderr(&rewards).0
                },
                min_violation: done
                    .iter()
                    .flat_map(|r| r.violations.iter().copied())
                    .fold(f64::INFINITY, f64::min),
                cs_ok: done.iter().all(|r| r.cs_check.ok),
            });
            results.extend(done);
        }

        let degenerate = rows.iter().all(|r| match (r.mean_regret, r.certified_gap) {
            (Some(m), Some(g)) => m <= g,
            _ => false,
        });
        let points: Option<Vec<(f64, f64)>> = rows
            .iter()
            .map(|r| {
                r.mean_regret
                    .filter(|m| *m > 0.0)
                    .map(|m| ((r.horizon as f64).ln(), m.ln()))
            })
            .collect();
        let slope = points.and_then(|p| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = p.into_iter().unzip();
            fit_slope(&xs, &ys)
        });
        Ok(SweepReport {
            rows,
            slope,
            degenerate,
            failures,
            total_runs: tasks.len(),
            results,
        })
    })
}

/// Result of re-validating persisted run files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineCheck {
    pub cs: CsCheck,
    pub constraints_satisfied: bool,
    pub violations: Vec<f64>,
    /// `|summary reward − Σ f column|`.
    pub reward_mismatch: f64,
    pub complete: bool,
}

impl OfflineCheck {
    pub fn ok(&self) -> bool {
        self.cs.ok && self.constraints_satisfied && self.complete && self.reward_mismatch <= 1e-12
    }
}

/// Re-runs the complementary-slackness validator and the constraint monitor
/// on a trajectory file and its summary.
pub fn check_files(trajectory: &Path, summary: &Path) -> Result<OfflineCheck> {
    let traj = read_trajectory(trajectory)?;
    let summary = read_summary(summary)?;
    if traj.dim != summary.params.dim || traj.constraints != summary.params.constraints {
        return Err(Error::data(
            "trajectory shape does not match the summary parameters",
        ));
    }
    let violations = traj.constraint_totals();
    let reward = traj.cumulative_reward();
    Ok(OfflineCheck {
        cs: check_cs(&traj, &summary.params),
        constraints_satisfied: violations.iter().all(|v| *v > 0.0),
        violations,
        reward_mismatch: (reward - summary.result.cumulative_reward).abs() / reward.abs().max(1.0),
        complete: traj.len() == summary.params.horizon,
    })
}
