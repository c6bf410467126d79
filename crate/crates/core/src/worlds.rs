//! Input models: how the per-round distribution over the scenario support
//! evolves across the horizon.
//!
//! Rounds are 1-based throughout, `t ∈ [1, T]`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability vector over support indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

impl Distribution {
    /// Accepts nonnegative entries summing to one within `1e-9`, then renormalises.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::config("distribution is empty"));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::config(format!(
                "distribution entry {bad} is not a probability"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "distribution sums to {total}, not 1"
            )));
        }
        Ok(Distribution(probs.into_iter().map(|p| p / total).collect()))
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::config(format!(
                "point mass index {at} out of range for size {n}"
            )));
        }
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Ok(Distribution(v))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("distribution is empty"));
        }
        Ok(Distribution(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse-CDF draw using exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.0.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// `½·Σ|p − q|`.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::usage(format!(
            "total variation between distributions of sizes {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5
        * p.0
            .iter()
            .zip(&q.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Hidden Markov chain driving the ergodic world.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    transition: Vec<Distribution>,
    emission: Vec<Distribution>,
    initial: Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub irreducible: bool,
    /// gcd of cycle lengths through state 0's communicating class.
    pub period: usize,
    /// Second-largest eigenvalue modulus of the transition matrix.
    pub slem: f64,
}

impl ChainDiagnostics {
    pub fn ergodic(&self) -> bool {
        self.irreducible && self.period == 1
    }
}

impl MarkovChain {
    pub fn new(
        transition: Vec<Vec<f64>>,
        emission: Vec<Distribution>,
        initial: Distribution,
    ) -> Result<Self> {
        let m = transition.len();
        if m == 0 {
            return Err(Error::config("Markov chain has no states"));
        }
        if emission.len() != m || initial.len() != m {
            return Err(Error::config(format!(
                "Markov chain with {m} states needs {m} emissions and an initial distribution of size {m}"
            )));
        }
        let transition = transition
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != m {
                    return Err(Error::config(format!(
                        "transition row {i} has length {}",
                        row.len()
                    )));
                }
                Distribution::new(row)
                    .map_err(|e| Error::config(format!("transition row {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = emission[0].len();
        if emission.iter().any(|e| e.len() != n) {
            return Err(Error::config("emission distributions differ in size"));
        }
        Ok(MarkovChain {
            transition,
            emission,
            initial,
        })
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn emission(&self, state: usize) -> &Distribution {
        &self.emission[state]
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    fn matrix(&self) -> DMatrix<f64> {
        let m = self.states();
        DMatrix::from_fn(m, m, |i, j| self.transition[i].0[j])
    }

    /// `μ P`.
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        let m = self.states();
        (0..m)
            .map(|j| (0..m).map(|i| mu[i] * self.transition[i].0[j]).sum())
            .collect()
    }

    /// Mixes state probabilities through the emissions into a scenario distribution.
    pub fn emit(&self, mu: &[f64]) -> Distribution {
        let n = self.emission[0].len();
        let mut out = vec![0.0; n];
        for (w, e) in mu.iter().zip(&self.emission) {
            for (o, p) in out.iter_mut().zip(&e.0) {
                *o += w * p;
            }
        }
        let total: f64 = out.iter().sum();
        Distribution(out.into_iter().map(|p| p / total).collect())
    }

    /// Solution of `πP = π`, `Σπ = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let m = self.states();
        let mut a = self.matrix().transpose() - DMatrix::identity(m, m);
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(m);
        b[m - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::config("stationary distribution is not unique"))?;
        Ok(pi.iter().map(|v| v.max(0.0)).collect())
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let m = self.states();
        let edges = |i: usize| (0..m).filter(move |&j| self.transition[i].0[j] > 0.0);
        let reach = |forward: bool| {
            let mut seen = vec![false; m];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                for (v, seen_v) in seen.iter_mut().enumerate() {
                    let edge = if forward {
                        self.transition[u].0[v] > 0.0
                    } else {
                        self.transition[v].0[u] > 0.0
                    };
                    if edge && !*seen_v {
                        *seen_v = true;
                        queue.push_back(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        let irreducible = reach(true) && reach(false);

        let mut level = vec![usize::MAX; m];
        level[0] = 0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for v in edges(u) {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut period = 0usize;
        for u in (0..m).filter(|&u| level[u] != usize::MAX) {
            for v in edges(u) {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }

        let mut moduli: Vec<f64> = self
            .matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let slem = moduli.get(1).copied().unwrap_or(0.0);
        ChainDiagnostics {
            irreducible,
            period,
            slem,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldModel {
    Stochastic(Distribution),
    /// `replacement` keys are the corrupted rounds.
    Corrupted {
        base: Distribution,
        replacement: BTreeMap<usize, Distribution>,
    },
    Adversarial(Vec<Distribution>),
    Periodic(Vec<Distribution>),
    Ergodic(MarkovChain),
}

impl WorldModel {
    pub fn kind(&self) -> &'static str {
        match self {
            WorldModel::Stochastic(_) => "stochastic",
            WorldModel::Corrupted { .. } => "corrupted",
            WorldModel::Adversarial(_) => "adversarial",
            WorldModel::Periodic(_) => "periodic",
            WorldModel::Ergodic(_) => "ergodic",
        }
    }
}

/// Sequential sampling state: the current round and, for the ergodic world,
/// the hidden chain state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldCursor {
    pub t: usize,
    pub state: Option<usize>,
}

impl WorldCursor {
    /// Cursor at round `t` without hidden state (non-ergodic worlds).
    pub fn at(t: usize) -> Self {
        WorldCursor { t, state: None }
    }
}

/// A world model bound to a horizon and a support size.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    model: WorldModel,
    horizon: usize,
}

impl World {
    pub fn new(model: WorldModel, horizon: usize, support_size: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        let check = |d: &Distribution, what: &str| {
            if d.len() != support_size {
                Err(Error::config(format!(
                    "{what} has {} entries, support has {support_size} scenarios",
                    d.len()
                )))
            } else {
                Ok(())
            }
        };
        match &model {
            WorldModel::Stochastic(p) => check(p, "stochastic distribution")?,
            WorldModel::Corrupted { base, replacement } => {
                check(base, "corrupted base distribution")?;
                for (&t, d) in replacement {
                    if t == 0 || t > horizon {
                        return Err(Error::config(format!(
                            "corrupted round {t} outside [1, {horizon}]"
                        )));
                    }
                    check(d, "corrupted replacement")?;
                }
            }
            WorldModel::Adversarial(seq) => {
                if seq.len() != horizon {
                    return Err(Error::config(format!(
                        "adversarial sequence has {} rounds, horizon is {horizon}",
                        seq.len()
                    )));
                }
                seq.iter()
                    .try_for_each(|d| check(d, "adversarial distribution"))?;
            }
            WorldModel::Periodic(cycle) => {
                let q = cycle.len();
                if q == 0 || !horizon.is_multiple_of(q) || horizon / q < 2 {
                    return Err(Error::config(format!(
                        "periodic world needs T = c·q with integer c >= 2 (T = {horizon}, q = {q})"
                    )));
                }
                cycle
                    .iter()
                    .try_for_each(|d| check(d, "periodic distribution"))?;
            }
            WorldModel::Ergodic(chain) => {
                check(chain.emission(0), "ergodic emission")?;
                let diag = chain.diagnostics();
                if !diag.ergodic() {
                    log::warn!(
                        "ergodic world chain is not irreducible and aperiodic (irreducible = {}, period = {})",
                        diag.irreducible,
                        diag.period
                    );
                }
            }
        }
        Ok(World { model, horizon })
    }

    pub fn model(&self) -> &WorldModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Cursor for round 1. Draws the initial hidden state for the ergodic world
    /// and consumes no randomness otherwise.
    pub fn start<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldCursor {
        match &self.model {
            WorldModel::Ergodic(chain) => WorldCursor {
                t: 1,
                state: Some(chain.initial.sample(rng)),
            },
            _ => WorldCursor::at(1),
        }
    }

    pub fn distribution_at(&self, t: usize, cursor: &WorldCursor) -> Result<&Distribution> {
        if t == 0 || t > self.horizon {
            return Err(Error::usage(format!(
                "round {t} outside [1, {}]",
                self.horizon
            )));
        }
        if cursor.t != t {
            return Err(Error::usage(format!(
                "cursor is at round {}, asked for round {t}",
                cursor.t
            )));
        }
        Ok(match &self.model {
            WorldModel::Stochastic(p) => p,
            WorldModel::Corrupted { base, replacement } => replacement.get(&t).unwrap_or(base),
            WorldModel::Adversarial(seq) => &seq[t - 1],
            WorldModel::Periodic(cycle) => &cycle[(t - 1) % cycle.len()],
            WorldModel::Ergodic(chain) => {
                let s = cursor
                    .state
                    .filter(|&s| s < chain.states())
                    .ok_or_else(|| Error::usage("ergodic cursor has no valid hidden state"))?;
                chain.emission(s)
            }
        })
    }

    /// Draws the round's scenario index and advances the cursor.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        cursor: &WorldCursor,
        rng: &mut R,
    ) -> Result<(usize, WorldCursor)> {
        let idx = self.distribution_at(cursor.t, cursor)?.sample(rng);
        let state = match (&self.model, cursor.state) {
            (WorldModel::Ergodic(chain), Some(s)) => Some(chain.transition[s].sample(rng)),
            _ => None,
        };
        Ok((
            idx,
            WorldCursor {
                t: cursor.t + 1,
                state,
            },
        ))
    }

    /// Unconditional marginal distribution of the scenario index at each round.
    pub fn marginals(&self) -> Vec<Distribution> {
        match &self.model {
            WorldModel::Ergodic(chain) => {
                let mut mu = chain.initial.0.clone();
                let mut out = Vec::with_capacity(self.horizon);
                for _ in 0..self.horizon {
                    out.push(chain.emit(&mu));
                    mu = chain.step(&mu);
                }
                out
            }
            _ => (1..=self.horizon)
                .map(|t| {
                    self.distribution_at(t, &WorldCursor::at(t))
                        .expect("round within horizon")
                        .clone()
                })
                .collect(),
        }
    }
}

/// `count` distinct rounds of `[1, horizon]`, drawn uniformly with their own seed.
pub fn draw_corrupted_rounds(horizon: usize, count: usize, seed: u64) -> Result<BTreeSet<usize>> {
    if count > horizon {
        return Err(Error::config(format!(
            "cannot corrupt {count} of {horizon} rounds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, horizon, count)
        .into_iter()
        .map(|i| i + 1)
        .collect())
}
