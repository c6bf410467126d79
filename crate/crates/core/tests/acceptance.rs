//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use manyworlds::benchmark::{
    check_flaxman, competitive_xi, opt_dual, opt_grid, HindsightProblem, LagrangianTarget,
};
use manyworlds::harness::{
    self, CorruptedRounds, Experiment, ExperimentConfig, RandomRounds, WorldSpec,
};
use manyworlds::scenarios::{AffinePiece, ConcaveFunction, Scenario, Support};
use manyworlds::worlds::{Distribution, World, WorldModel};
use manyworlds::DecisionSet;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn experiment(cfg: ExperimentConfig) -> Experiment {
    Experiment::new(cfg).expect("valid configuration")
}

fn with_world(mut cfg: ExperimentConfig, world: WorldSpec) -> Experiment {
    cfg.world = world;
    experiment(cfg)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, started: Instant, outcome: Outcome) -> bool {
    println!(
        "criterion {id} [{}] {name}: {} ({:.1}s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
    outcome.pass
}

const WORLDS: [&str; 5] = [
    "reference_stochastic.json",
    "reference_corrupted.json",
    "reference_adversarial.json",
    "reference_periodic.json",
    "reference_ergodic.json",
];

/// Criteria 1 and 2 share their runs.
fn constraints_and_slackness() -> (Outcome, Outcome) {
    let mut runs = 0;
    let mut satisfied = 0;
    let mut cs_ok = 0;
    let mut worst_margin = f64::INFINITY;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for name in WORLDS {
        let exp = experiment(config(name));
        for horizon in [1000, 4000] {
            for seed in 0..50 {
                runs += 1;
                match harness::run(&exp, horizon, seed, None) {
                    Ok(out) => {
                        satisfied += 1;
                        let m = out
                            .result
                            .violations
                            .iter()
                            .copied()
                            .fold(f64::INFINITY, f64::min);
                        worst_margin = worst_margin.min(m);
                        worst_slack = worst_slack.max(out.result.cs_check.worst_slack);
                        cs_ok += out.result.cs_check.ok as usize;
                    }
                    Err(e) => failures.push(format!("{name} T={horizon} seed={seed}: {e}")),
                }
            }
        }
    }
    let c1 = Outcome {
        pass: satisfied == runs,
        detail: format!(
            "{satisfied}/{runs} runs with every long-term constraint positive, smallest total {worst_margin:.4}{}",
            failures.first().map_or(String::new(), |f| format!("; first failure {f}"))
        ),
    };
    let c2 = Outcome {
        pass: cs_ok == runs,
        detail: format!("{cs_ok}/{runs} runs within 1e-6, worst slack {worst_slack:.3e}"),
    };
    (c1, c2)
}

fn estimator() -> Outcome {
    let q = ConcaveFunction::quadratic(0.0, vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]])
        .unwrap();
    let target = LagrangianTarget {
        f: q,
        g: vec![],
        lambda: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let chk = check_flaxman(&target, &[0.5, 0.0], 0.1, 1_000_000, &mut rng).unwrap();
    let err = (chk.mc_grad[0] + 1.0).abs().max(chk.mc_grad[1].abs());
    Outcome {
        pass: err <= 0.02,
        detail: format!(
            "estimate ({:.4}, {:.4}) vs (-1, 0), max error {err:.4}",
            chk.mc_grad[0], chk.mc_grad[1]
        ),
    }
}

fn stochastic_trend() -> Outcome {
    let exp = experiment(config("reference_stochastic.json"));
    let horizons = [1000, 2000, 4000, 8000];
    let seeds: Vec<u64> = (0..20).collect();
    let rep = harness::sweep(&exp, &horizons, &seeds, 1).unwrap();
    let per_round: Vec<f64> = rep
        .rows
        .iter()
        .map(|r| r.mean_regret.unwrap() / r.horizon as f64)
        .collect();
    let decreasing = per_round.windows(2).all(|w| w[1] < w[0]);
    let slope = rep.slope.unwrap_or(f64::NAN);
    Outcome {
        pass: slope <= 0.90 && decreasing && rep.failures.is_empty(),
        detail: format!(
            "slope {slope:.4}, mean R_T/T {}",
            per_round
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" > ")
        ),
    }
}

fn mean_regret(
    exp: &Experiment,
    horizon: usize,
    seeds: &[u64],
) -> (f64, f64, Vec<harness::RunOutput>) {
    let opt = exp.opt(horizon).unwrap().unwrap();
    let outs: Vec<_> = seeds
        .iter()
        .map(|&s| harness::run(exp, horizon, s, Some(&opt)).unwrap())
        .collect();
    let regrets: Vec<f64> = outs.iter().map(|o| o.result.regret.unwrap()).collect();
    let (m, se) = harness::mean_and_stderr(&regrets);
    (m, se, outs)
}

fn monotone_within_stderr(stats: &[(f64, f64)]) -> bool {
    stats
        .windows(2)
        .all(|w| w[1].0 >= w[0].0 - w[0].1.max(w[1].1))
}

fn corruption() -> Outcome {
    let horizon = 4000;
    let seeds: Vec<u64> = (0..20).collect();
    let base = config("reference_corrupted.json");
    let WorldSpec::Corrupted {
        base: probs,
        replacement,
        ..
    } = base.world.clone()
    else {
        panic!("corrupted configuration expected");
    };
    let corrupted = |rounds| {
        with_world(
            base.clone(),
            WorldSpec::Corrupted {
                base: probs.clone(),
                rounds,
                replacement: replacement.clone(),
            },
        )
    };
    let mut stats = Vec::new();
    let mut clean = Vec::new();
    for delta in [0usize, 40, 400] {
        let rounds = if delta == 0 {
            CorruptedRounds::Explicit(Vec::new())
        } else {
            CorruptedRounds::Random {
                random: RandomRounds {
                    count: delta,
                    seed: 7,
                },
            }
        };
        let (m, se, outs) = mean_regret(&corrupted(rounds), horizon, &seeds);
        if delta == 0 {
            clean = outs;
        }
        stats.push((m, se));
    }
    let stochastic = with_world(
        base.clone(),
        WorldSpec::Stochastic {
            probs: probs.clone(),
        },
    );
    let identical = clean.iter().all(|o| {
        let s = harness::run(&stochastic, horizon, o.result.seed, None).unwrap();
        s.trajectory == o.trajectory
    });
    Outcome {
        pass: identical && monotone_within_stderr(&stats),
        detail: format!(
            "mean R_T (stderr) at delta 0/40/400: {}; delta 0 identical to stochastic: {identical}",
            stats
                .iter()
                .map(|(m, s)| format!("{m:.1} ({s:.1})"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

fn periodic() -> Outcome {
    let horizon = 4000;
    let seeds: Vec<u64> = (0..20).collect();
    let stoch_cfg = config("reference_stochastic.json");
    let WorldSpec::Stochastic { probs } = stoch_cfg.world.clone() else {
        panic!("stochastic configuration expected")
    };
    let stochastic = experiment(stoch_cfg.clone());
    let one_cycle = with_world(stoch_cfg, WorldSpec::Periodic { cycle: vec![probs] });
    let identical = seeds.iter().all(|&s| {
        harness::run(&stochastic, horizon, s, None)
            .unwrap()
            .trajectory
            == harness::run(&one_cycle, horizon, s, None)
                .unwrap()
                .trajectory
    });
    let q2 = mean_regret(
        &experiment(config("reference_periodic.json")),
        horizon,
        &seeds,
    );
    let q8 = mean_regret(
        &experiment(config("reference_periodic_q8.json")),
        horizon,
        &seeds,
    );
    let stats = [(q2.0, q2.1), (q8.0, q8.1)];
    let finite = stats.iter().all(|(m, s)| m.is_finite() && s.is_finite());
    Outcome {
        pass: identical && finite && monotone_within_stderr(&stats),
        detail: format!(
            "q=1 identical to stochastic: {identical}; mean R_T (stderr) q=2 {:.1} ({:.1}), q=8 {:.1} ({:.1})",
            q2.0, q2.1, q8.0, q8.1
        ),
    }
}

fn adversarial() -> Outcome {
    let exp = experiment(config("reference_adversarial.json"));
    let horizon = 8000;
    let xi = competitive_xi(&exp.support, exp.set(), &exp.config.safe_action, 100);
    let opt = exp.opt(horizon).unwrap().unwrap();
    let rewards: Vec<f64> = (0..20)
        .map(|s| {
            harness::run(&exp, horizon, s, Some(&opt))
                .unwrap()
                .result
                .cumulative_reward
        })
        .collect();
    let (mean, _) = harness::mean_and_stderr(&rewards);
    let floor = opt.value / xi.xi - 0.1 * opt.value;
    Outcome {
        pass: !xi.degenerate && mean >= floor,
        detail: format!(
            "xi {:.4}, OPT {:.1}, mean reward {mean:.1} >= floor {floor:.1}",
            xi.xi, opt.value
        ),
    }
}

/// Random instance with `d, K ≤ 2`: min-affine rewards shifted to be
/// nonnegative, affine resource constraints strictly slack at the origin.
fn random_instance(rng: &mut ChaCha8Rng) -> (DecisionSet, Support, Vec<Distribution>) {
    let d = rng.random_range(1..=2);
    let k = rng.random_range(1..=2);
    let set = DecisionSet::new_box(vec![0.0; d], vec![1.0; d]).unwrap();
    let mut vec_in = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    };
    let mut scenarios = Vec::new();
    for _ in 0..2 {
        let pieces: Vec<AffinePiece> = (0..2)
            .map(|_| AffinePiece {
                w: vec_in(-1.0, 1.0, d),
                b: vec_in(0.2, 1.2, 1)[0],
            })
            .collect();
        let f = ConcaveFunction::min_affine(pieces.clone()).unwrap();
        let shift = (-f.lower_bound(&set)).max(0.0);
        let f = ConcaveFunction::min_affine(
            pieces
                .into_iter()
                .map(|p| AffinePiece {
                    w: p.w,
                    b: p.b + shift,
                })
                .collect(),
        )
        .unwrap();
        let g = (0..k)
            .map(|_| {
                let w: Vec<f64> = vec_in(0.0, 1.0, d).into_iter().map(|v| -v).collect();
                ConcaveFunction::affine(w, vec_in(0.1, 0.9, 1)[0]).unwrap()
            })
            .collect();
        scenarios.push(Scenario { f, g });
    }
    let support = Support::new(scenarios, &set).unwrap();
    let horizon = 100;
    let p = rng.random_range(0.1..0.9);
    let first = Distribution::new(vec![p, 1.0 - p]).unwrap();
    let model = if rng.random_bool(0.5) {
        WorldModel::Stochastic(first)
    } else {
        let q = rng.random_range(0.1..0.9);
        WorldModel::Periodic(vec![first, Distribution::new(vec![q, 1.0 - q]).unwrap()])
    };
    let marginals = World::new(model, horizon, 2).unwrap().marginals();
    (set, support, marginals)
}

fn solver_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agree = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let (set, support, marginals) = random_instance(&mut rng);
        let problem = HindsightProblem::new(marginals, &support, &set).unwrap();
        let resolution = if set.dim() == 1 { 1000 } else { 100 };
        let grid = opt_grid(&problem, resolution).unwrap();
        let dual = opt_dual(&problem, 1e-6).unwrap();
        let allowed = grid.certified_gap + 1e-3 * grid.value.abs();
        let diff = (dual.value - grid.value).abs();
        worst = worst.max(diff / allowed);
        agree += (diff <= allowed) as usize;
    }
    Outcome {
        pass: agree == 50,
        detail: format!("{agree}/50 instances agree; worst |difference| / allowance {worst:.3}"),
    }
}

fn determinism() -> Outcome {
    let exp = experiment(config("reference_stochastic.json"));
    let horizon = exp.horizon();
    let opt = exp.opt(horizon).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let files: Vec<(Vec<u8>, Vec<u8>)> = dirs
        .iter()
        .map(|dir| {
            let out = harness::run(&exp, horizon, 0, opt.as_ref()).unwrap();
            let (t, s) = harness::write_run(dir.path(), &out, opt.as_ref()).unwrap();
            (std::fs::read(t).unwrap(), std::fs::read(s).unwrap())
        })
        .collect();
    let same = files[0] == files[1];
    Outcome {
        pass: same,
        detail: format!(
            "trajectory ({} bytes) and summary ({} bytes) byte-identical across two runs: {same}",
            files[0].0.len(),
            files[0].1.len()
        ),
    }
}

type Check = (u32, &'static str, fn() -> Outcome);

fn main() {
    let mut all = true;
    let t = Instant::now();
    let (c1, c2) = constraints_and_slackness();
    all &= report(1, "strict constraint satisfaction", t, c1);
    all &= report(2, "complementary slackness", t, c2);
    let checks: [Check; 7] = [
        (3, "gradient estimator", estimator),
        (4, "stochastic regret trend", stochastic_trend),
        (5, "corruption degradation", corruption),
        (6, "periodic recovery", periodic),
        (7, "adversarial competitive floor", adversarial),
        (8, "solver cross-validation", solver_agreement),
        (9, "determinism", determinism),
    ];
    for (id, name, check) in checks {
        let t = Instant::now();
        all &= report(id, name, t, check());
    }
    if !all {
        std::process::exit(1);
    }
}
