use std::path::PathBuf;

use manyworlds::harness::{self, Experiment, ExperimentConfig};
use manyworlds::Error;

fn reference_config(world: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("reference_{world}.json"));
    ExperimentConfig::load(&path).unwrap()
}

const SINGLE: &str = r#"{
    "set": {"box": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]}},
    "support": [{
        "f": {"min_affine": [{"w": [0.5, 0.2], "b": 0.3}]},
        "g": [{"min_affine": [{"w": [-100.0, 0.0], "b": 0.5}]}]
    }],
    "safe_action": {"point": [0.0, 0.0], "beta_bar": 0.45},
    "world": {"stochastic": {"probs": [1.0]}},
    "run": {"horizon": 10, "solver": "none"},
    "overrides": {"rho": 0.2}
}"#;

#[test]
fn huge_constraint_range_plays_safe_action_throughout() {
    let exp = Experiment::new(ExperimentConfig::from_json(SINGLE).unwrap()).unwrap();
    let out = harness::run(&exp, 10, 0, None).unwrap();
    assert_eq!(out.result.tau, 1);
    assert!(out
        .trajectory
        .rows
        .iter()
        .all(|r| r.x == vec![0.0, 0.0] && r.stopped));
    assert_eq!(out.result.violations, vec![10.0 * 0.5]);
    assert!((out.result.cumulative_reward - 3.0).abs() < 1e-12);
}

#[test]
fn seeds_differ_and_reruns_repeat() {
    let exp = Experiment::new(reference_config("stochastic")).unwrap();
    let runs: Vec<_> = (0..3)
        .map(|s| harness::run(&exp, 1000, s, None).unwrap().trajectory)
        .collect();
    assert_ne!(runs[0], runs[1]);
    assert_ne!(runs[1], runs[2]);
    assert_ne!(runs[0], runs[2]);
    for (s, t) in runs.iter().enumerate() {
        assert_eq!(
            &harness::run(&exp, 1000, s as u64, None).unwrap().trajectory,
            t
        );
    }
}

/// Column sums straight from the CSV text, without the library reader.
fn column_sum(csv_text: &str, column: &str) -> f64 {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().parse::<f64>().unwrap())
        .sum()
}

#[test]
fn persisted_files_reproduce_summary_values() {
    let exp = Experiment::new(reference_config("stochastic")).unwrap();
    let horizon = 1000;
    let opt = exp.opt(horizon).unwrap().unwrap();
    let out = harness::run(&exp, horizon, 0, Some(&opt)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (traj, summary) = harness::write_run(dir.path(), &out, Some(&opt)).unwrap();

    let text = std::fs::read_to_string(&traj).unwrap();
    let reward = column_sum(&text, "f");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let recorded = json["result"]["cumulative_reward"].as_f64().unwrap();
    assert_eq!(reward, recorded);
    let regret = json["result"]["regret"].as_f64().unwrap();
    let opt_value = json["opt"]["value"].as_f64().unwrap();
    assert_eq!(regret, opt_value - reward);
    assert_eq!(
        column_sum(&text, "g_1"),
        json["result"]["violations"][0].as_f64().unwrap()
    );
    assert!(json["result"].get("wall_time_secs").is_none());
    assert_eq!(json["params"]["horizon"].as_u64(), Some(horizon as u64));

    // The library reader restores the rows bit for bit.
    let back = harness::read_trajectory(&traj).unwrap();
    for (a, b) in back.rows.iter().zip(&out.trajectory.rows) {
        assert_eq!(
            (&a.x, a.f, &a.g, &a.lambda, &a.balances, a.stopped),
            (&b.x, b.f, &b.g, &b.lambda, &b.balances, b.stopped)
        );
    }
    let chk = harness::check_files(&traj, &summary).unwrap();
    assert!(chk.ok(), "{chk:?}");
}

/// Feedback `g = −Ḡ` for `n` rounds then `+Ḡ` for `n` rounds drives the dual
/// up and back down; the zero probe is then tight at prefix `2n`.
fn tight_trajectory() -> (
    manyworlds::algorithm::Trajectory,
    manyworlds::algorithm::AlgoParams,
) {
    use manyworlds::algorithm::{AlgoState, Feedback, Trajectory};
    use rand::SeedableRng;

    let exp = Experiment::new(reference_config("stochastic")).unwrap();
    let params = exp.params(4000).unwrap();
    let set = exp.set();
    let g_bar = params.bounds.g_bar;
    let mut state = AlgoState::new(&params, set).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut traj = Trajectory::new(2, 2);
    let n = 100;
    for t in 0..2 * n {
        state.decide(&params, set, &mut rng).unwrap();
        let g = if t < n { -g_bar } else { g_bar };
        let fb = Feedback {
            f_val: 0.5,
            g_vals: vec![g, g],
        };
        traj.rows.push(state.observe(&params, set, &fb).unwrap());
    }
    (traj, params)
}

#[test]
fn inflated_duals_are_caught() {
    let (mut traj, params) = tight_trajectory();
    let honest = manyworlds::benchmark::check_cs(&traj, &params);
    assert!(honest.ok && honest.worst_slack > -1e-6, "{honest:?}");
    for row in &mut traj.rows {
        row.lambda.iter_mut().for_each(|l| *l *= 2.0);
    }
    let doubled = manyworlds::benchmark::check_cs(&traj, &params);
    assert!(!doubled.ok, "{doubled:?}");
}

#[test]
fn sweep_bookkeeping() {
    let exp = Experiment::new(reference_config("stochastic")).unwrap();
    let rep = harness::sweep(&exp, &[1000, 2000], &[0, 1], 2).unwrap();
    assert_eq!(rep.total_runs, 4);
    assert_eq!(rep.rows.len(), 2);
    assert!(rep
        .rows
        .iter()
        .all(|r| r.completed == 2 && r.mean_regret.is_some()));
    assert!(rep.failures.is_empty() && !rep.failed());
    let again = harness::sweep(&exp, &[1000, 2000], &[0, 1], 1).unwrap();
    assert_eq!(rep.slope, again.slope);
    assert!(rep.slope.is_some());
}

#[test]
fn indifferent_instance_is_degenerate() {
    // Constant reward: every decision is optimal, so regret is exactly zero.
    let text = SINGLE
        .replace(
            r#"{"w": [0.5, 0.2], "b": 0.3}"#,
            r#"{"w": [0.0, 0.0], "b": 0.5}"#,
        )
        .replace(
            r#"{"w": [-100.0, 0.0], "b": 0.5}"#,
            r#"{"w": [-0.1, 0.0], "b": 1.0}"#,
        )
        .replace(r#""beta_bar": 0.45"#, r#""beta_bar": 0.8"#)
        .replace(r#""solver": "none""#, r#""solver": "grid""#);
    let exp = Experiment::new(ExperimentConfig::from_json(&text).unwrap()).unwrap();
    let rep = harness::sweep(&exp, &[100, 200], &[0, 1], 1).unwrap();
    assert!(rep.degenerate);
    assert!(rep.rows.iter().all(|r| r.mean_regret == Some(0.0)));
    assert!(rep.slope.is_none());
}

#[test]
fn configuration_errors_abort_before_any_round() {
    let bad_beta = SINGLE.replace(r#""beta_bar": 0.45"#, r#""beta_bar": 0.3"#);
    let err = Experiment::new(ExperimentConfig::from_json(&bad_beta).unwrap()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));

    let mut periodic = reference_config("periodic");
    periodic.run.horizon = 1001;
    assert!(matches!(Experiment::new(periodic), Err(Error::Config(_))));

    let mut corrupted = reference_config("corrupted");
    corrupted.world = serde_json::from_str(
        r#"{"corrupted": {"base": [0.3, 0.4, 0.3, 0.0], "rounds": [0, 5], "replacement": [0, 0, 0, 1]}}"#,
    )
    .unwrap();
    assert!(matches!(Experiment::new(corrupted), Err(Error::Config(_))));

    let mut mismatched = reference_config("stochastic");
    mismatched.run.constraints = Some(3);
    assert!(Experiment::new(mismatched).is_err());
}

#[test]
fn sweep_rejects_invalid_horizon() {
    let exp = Experiment::new(reference_config("periodic")).unwrap();
    assert!(harness::sweep(&exp, &[1001], &[0], 1).is_err());
}
