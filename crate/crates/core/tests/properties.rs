use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use manyworlds::algorithm::{aggregate, AlgoState, Feedback};
use manyworlds::benchmark::{opt_grid, HindsightProblem};
use manyworlds::harness::{self, Experiment, ExperimentConfig};
use manyworlds::scenarios::{compute_bounds, AffinePiece, ConcaveFunction, Scenario, Support};
use manyworlds::worlds::{tv_distance, Distribution, MarkovChain, World, WorldCursor, WorldModel};
use manyworlds::DecisionSet;

fn reference(world: &str) -> Experiment {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("reference_{world}.json"));
    Experiment::new(ExperimentConfig::load(&path).unwrap()).unwrap()
}

#[test]
fn recorded_runs_respect_learner_invariants() {
    for world in [
        "stochastic",
        "corrupted",
        "adversarial",
        "periodic",
        "ergodic",
    ] {
        let exp = reference(world);
        for seed in 0..10 {
            let out = harness::run(&exp, 1000, seed, None).unwrap();
            let cap = out.params.dual_cap;
            let set = exp.set();
            let mut stopped_at = None;
            for row in &out.trajectory.rows {
                assert!(row.lambda.iter().all(|l| (0.0..=cap).contains(l)));
                assert!(set.contains(0.0, &row.x, 1e-9));
                if row.stopped {
                    stopped_at.get_or_insert(row.t);
                    assert_eq!(row.x, exp.config.safe_action.point);
                } else {
                    assert!(stopped_at.is_none(), "running after a hard stop");
                }
            }
            assert!(out.result.violations.iter().all(|v| *v > 0.0));
            assert!(
                out.result.cs_check.ok,
                "{world} seed {seed}: {:?}",
                out.result.cs_check
            );
        }
    }
}

#[test]
fn forced_stop_is_absorbing() {
    // A large constraint range makes the safety condition fail in round 1.
    let exp = reference("stochastic");
    let mut params = exp.params(1000).unwrap();
    params.bounds.g_bar = 1e6;
    let set = exp.set();
    let mut state = AlgoState::new(&params, set).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let x = state.decide(&params, set, &mut rng).unwrap();
        assert_eq!(x, params.safe_action.point);
        let (f_val, g_vals) = exp.support.scenarios()[0].evaluate(&x).unwrap();
        let lambda = state.lambda().to_vec();
        let rec = state
            .observe(&params, set, &Feedback { f_val, g_vals })
            .unwrap();
        assert!(rec.stopped);
        assert_eq!(state.lambda(), &lambda[..]);
    }
}

#[test]
fn support_bounds_hold_on_samples() {
    let exp = reference("stochastic");
    let set = exp.set();
    let b = compute_bounds(&exp.support, set).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100_000 {
        let x = set.sample_uniform(&mut rng);
        for sc in exp.support.scenarios() {
            let (f, g) = sc.evaluate(&x).unwrap();
            assert!(f.abs() <= b.f_bar + 1e-9);
            assert!(g.iter().all(|v| v.abs() <= b.g_bar + 1e-9));
        }
    }
}

fn affine_instance(w: f64, b: f64, scale: f64, budget: f64) -> (DecisionSet, Support) {
    let set = DecisionSet::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let f = ConcaveFunction::min_affine(vec![
        AffinePiece {
            w: vec![scale * w, scale * 0.3],
            b: scale * b,
        },
        AffinePiece {
            w: vec![0.0, -scale * 0.2],
            b: scale * (b + 0.4),
        },
    ])
    .unwrap();
    let g = ConcaveFunction::budget(2, budget, 0).unwrap();
    (
        set.clone(),
        Support::new(vec![Scenario { f, g: vec![g] }], &set).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn aggregate_ignores_common_weight_shift(
        a in -3.0f64..3.0, b in -3.0f64..3.0, shift in -500.0f64..500.0,
        p in proptest::collection::vec(0.0f64..1.0, 4),
    ) {
        let pts = vec![vec![p[0], p[1]], vec![p[2], p[3]]];
        let x = aggregate(&pts, &[a, b]);
        let y = aggregate(&pts, &[a + shift, b + shift]);
        for (u, v) in x.iter().zip(&y) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
        // Convex combination of the expert points.
        for j in 0..2 {
            prop_assert!(x[j] >= pts[0][j].min(pts[1][j]) - 1e-15 && x[j] <= pts[0][j].max(pts[1][j]) + 1e-15);
        }
    }

    #[test]
    fn opt_scales_with_reward(w in 0.1f64..2.0, b in 0.1f64..1.0, c in 0.1f64..5.0, budget in 0.1f64..0.9) {
        let marg = vec![Distribution::point_mass(1, 0).unwrap(); 50];
        let (set, base) = affine_instance(w, b, 1.0, budget);
        let (_, scaled) = affine_instance(w, b, c, budget);
        let p = opt_grid(&HindsightProblem::new(marg.clone(), &base, &set).unwrap(), 40).unwrap();
        let q = opt_grid(&HindsightProblem::new(marg, &scaled, &set).unwrap(), 40).unwrap();
        prop_assert_eq!(&p.points, &q.points);
        prop_assert!((q.value - c * p.value).abs() <= 1e-9 * q.value.abs().max(1.0));
    }

    #[test]
    fn dropping_a_constraint_never_lowers_opt(w in 0.1f64..2.0, b in 0.1f64..1.0, budget in 0.1f64..0.9, periodic in any::<bool>()) {
        let (set, support) = affine_instance(w, b, 1.0, budget);
        let g_bar = compute_bounds(&support, &set).unwrap().g_bar;
        let relaxed = Support::new(
            vec![Scenario {
                f: support.scenarios()[0].f.clone(),
                g: vec![ConcaveFunction::affine(vec![0.0, 0.0], g_bar).unwrap()],
            }],
            &set,
        )
        .unwrap();
        let marg = if periodic {
            let two = |sup: &Support| {
                Support::new(vec![sup.scenarios()[0].clone(), sup.scenarios()[0].clone()], &set).unwrap()
            };
            let (s1, s2) = (two(&support), two(&relaxed));
            let m: Vec<Distribution> = (0..40)
                .map(|t| Distribution::new(if t % 2 == 0 { vec![0.3, 0.7] } else { vec![0.8, 0.2] }).unwrap())
                .collect();
            let a = opt_grid(&HindsightProblem::new(m.clone(), &s1, &set).unwrap(), 40).unwrap();
            let r = opt_grid(&HindsightProblem::new(m, &s2, &set).unwrap(), 40).unwrap();
            prop_assert!(r.value >= a.value - 1e-9);
            return Ok(());
        } else {
            vec![Distribution::point_mass(1, 0).unwrap(); 40]
        };
        let a = opt_grid(&HindsightProblem::new(marg.clone(), &support, &set).unwrap(), 40).unwrap();
        let r = opt_grid(&HindsightProblem::new(marg, &relaxed, &set).unwrap(), 40).unwrap();
        prop_assert!(r.value >= a.value - 1e-9);
    }

    #[test]
    fn periodic_world_repeats(q in 1usize..5, reps in 2usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cycle: Vec<Distribution> = (0..q)
            .map(|_| {
                let p: f64 = rng.random_range(0.0..1.0);
                Distribution::new(vec![p, 1.0 - p]).unwrap()
            })
            .collect();
        let horizon = q * reps;
        let world = World::new(WorldModel::Periodic(cycle), horizon, 2).unwrap();
        for t in 1..=horizon - q {
            prop_assert_eq!(
                world.distribution_at(t, &WorldCursor::at(t)).unwrap(),
                world.distribution_at(t + q, &WorldCursor::at(t + q)).unwrap()
            );
        }
        for d in world.marginals() {
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn corrupted_world_matches_base_elsewhere(count in 0usize..20, seed in any::<u64>()) {
        let horizon = 50;
        let base = Distribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let rounds = manyworlds::worlds::draw_corrupted_rounds(horizon, count, seed).unwrap();
        let replacement = rounds.iter().map(|&t| (t, Distribution::point_mass(3, 2).unwrap())).collect();
        let world = World::new(WorldModel::Corrupted { base: base.clone(), replacement }, horizon, 3).unwrap();
        for t in 1..=horizon {
            let d = world.distribution_at(t, &WorldCursor::at(t)).unwrap();
            if !rounds.contains(&t) {
                prop_assert_eq!(tv_distance(d, &base).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn ergodic_marginals_approach_stationarity(a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let emission = vec![Distribution::point_mass(2, 0).unwrap(), Distribution::point_mass(2, 1).unwrap()];
        let chain = MarkovChain::new(
            vec![vec![1.0 - a, a], vec![b, 1.0 - b]],
            emission,
            Distribution::point_mass(2, 0).unwrap(),
        )
        .unwrap();
        prop_assume!(chain.diagnostics().ergodic());
        let pi = Distribution::new(chain.stationary().unwrap()).unwrap();
        let world = World::new(WorldModel::Ergodic(chain), 60, 2).unwrap();
        let tvs: Vec<f64> = world.marginals().iter().map(|m| tv_distance(m, &pi).unwrap()).collect();
        for w in tvs.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
