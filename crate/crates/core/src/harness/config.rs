//! Experiment configuration: one JSON document with top-level keys
//! `set`, `support`, `safe_action`, `world`, `run` and `overrides`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithm::{default_schedule, AlgoParams, ParamOverrides};
use crate::benchmark::{opt_dual, opt_grid, HindsightProblem, OptResult};
use crate::error::{Error, Result};
use crate::geometry::DecisionSet;
use crate::scenarios::{
    compute_bounds, validate_safe_action, SafeAction, Scenario, ScenarioBounds, Support,
};
use crate::worlds::{draw_corrupted_rounds, Distribution, MarkovChain, World, WorldModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub set: DecisionSet,
    pub support: Vec<Scenario>,
    pub safe_action: SafeAction,
    pub world: WorldSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldSpec {
    Stochastic {
        probs: Distribution,
    },
    Corrupted {
        base: Distribution,
        rounds: CorruptedRounds,
        replacement: Distribution,
    },
    Adversarial(AdversarialSpec),
    Periodic {
        cycle: Vec<Distribution>,
    },
    Ergodic {
        transition: Vec<Vec<f64>>,
        emission: Vec<Distribution>,
        initial: Distribution,
    },
}

/// Corrupted rounds, 1-based: an explicit list or a seeded random draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorruptedRounds {
    Explicit(Vec<usize>),
    Random { random: RandomRounds },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomRounds {
    pub count: usize,
    pub seed: u64,
}

/// A full per-round sequence, or phases covering fractions of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarialSpec {
    Sequence(Vec<Distribution>),
    Phases(Vec<Phase>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub fraction: f64,
    pub probs: Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Grid,
    Dual,
    None,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_resolution() -> usize {
    200
}

fn default_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: usize,
    /// Declared constraint count, checked against the support.
    #[serde(default)]
    pub constraints: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A cross-validated configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub support: Support,
    pub bounds: ScenarioBounds,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let set = &config.set;
        let support = Support::new(config.support.clone(), set)?;
        if let Some(k) = config.run.constraints {
            if k != support.constraints() {
                return Err(Error::config(format!(
                    "run declares K = {k}, support has {} constraints",
                    support.constraints()
                )));
            }
        }
        let check = validate_safe_action(&support, set, &config.safe_action);
        if !check.inside {
            return Err(Error::config("safe action lies outside the decision set"));
        }
        if !check.ok {
            return Err(Error::config(format!(
                "safe action margin {} does not exceed beta_bar = {}",
                check.realized_margin, config.safe_action.beta_bar
            )));
        }
        let bounds = compute_bounds(&support, set)?;
        if config.run.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if config.run.resolution == 0 {
            return Err(Error::config("solver resolution must be positive"));
        }
        let exp = Experiment {
            config,
            support,
            bounds,
        };
        exp.params(exp.config.run.horizon)?;
        exp.world(exp.config.run.horizon)?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?)
    }

    pub fn set(&self) -> &DecisionSet {
        &self.config.set
    }

    pub fn horizon(&self) -> usize {
        self.config.run.horizon
    }

    /// Default schedule for `horizon` with the configured overrides applied.
    pub fn params(&self, horizon: usize) -> Result<AlgoParams> {
        default_schedule(
            horizon,
            self.support.constraints(),
            self.set(),
            self.bounds,
            &self.config.safe_action,
        )?
        .with_overrides(&self.config.overrides, self.set())
    }

    pub fn world(&self, horizon: usize) -> Result<World> {
        let n = self.support.len();
        let model = match &self.config.world {
            WorldSpec::Stochastic { probs } => WorldModel::Stochastic(probs.clone()),
            WorldSpec::Corrupted {
                base,
                rounds,
                replacement,
            } => {
                let rounds: Vec<usize> = match rounds {
                    CorruptedRounds::Explicit(list) => list.clone(),
                    CorruptedRounds::Random { random } => {
                        draw_corrupted_rounds(horizon, random.count, random.seed)?
                            .into_iter()
                            .collect()
                    }
                };
                let replacement: BTreeMap<usize, Distribution> = rounds
                    .into_iter()
                    .map(|t| (t, replacement.clone()))
                    .collect();
                WorldModel::Corrupted {
                    base: base.clone(),
                    replacement,
                }
            }
            WorldSpec::Adversarial(AdversarialSpec::Sequence(seq)) => {
                WorldModel::Adversarial(seq.clone())
            }
            WorldSpec::Adversarial(AdversarialSpec::Phases(phases)) => {
                WorldModel::Adversarial(expand_phases(phases, horizon)?)
            }
            WorldSpec::Periodic { cycle } => WorldModel::Periodic(cycle.clone()),
            WorldSpec::Ergodic {
                transition,
                emission,
                initial,
            } => WorldModel::Ergodic(MarkovChain::new(
                transition.clone(),
                emission.clone(),
                initial.clone(),
            )?),
        };
        World::new(model, horizon, n)
    }

    /// Hindsight optimum for `horizon` with the configured solver.
    pub fn opt(&self, horizon: usize) -> Result<Option<OptResult>> {
        let choice = self.config.run.solver;
        if choice == SolverChoice::None {
            return Ok(None);
        }
        let world = self.world(horizon)?;
        let problem = HindsightProblem::new(world.marginals(), &self.support, self.set())?;
        let opt = match choice {
            SolverChoice::Grid => opt_grid(&problem, self.config.run.resolution)?,
            SolverChoice::Dual => opt_dual(&problem, self.config.run.tolerance)?,
            SolverChoice::None => unreachable!(),
        };
        Ok(Some(opt))
    }
}

/// Phase `i` covers rounds up to `round(T · Σ_{j≤i} fraction_j)`; the last
/// phase always runs to `T`.
fn expand_phases(phases: &[Phase], horizon: usize) -> Result<Vec<Distribution>> {
    if phases.is_empty() {
        return Err(Error::config("adversarial phases must be non-empty"));
    }
    let total: f64 = phases.iter().map(|p| p.fraction).sum();
    if phases
        .iter()
        .any(|p| p.fraction.is_nan() || p.fraction <= 0.0)
        || (total - 1.0).abs() > 1e-9
    {
        return Err(Error::config(
            "adversarial phase fractions must be positive and sum to 1",
        ));
    }
    let mut seq = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    for (i, p) in phases.iter().enumerate() {
        cum += p.fraction;
        let end = if i + 1 == phases.len() {
            horizon
        } else {
            (cum * horizon as f64).round() as usize
        };
        while seq.len() < end.min(horizon) {
            seq.push(p.probs.clone());
        }
    }
    Ok(seq)
}
