//! The learner: a decide → observe state machine.
//!
//! Each round the learner either plays the exponentially weighted average of
//! its primal-ascent experts perturbed on a sphere of radius `ρ`, or, once the
//! safety condition on the constraint balances has failed, the safe action
//! for the rest of the horizon. Feedback drives a one-point gradient estimate
//! of the Lagrangian `f + λᵀg`, which updates expert weights, expert points and
//! the dual variables.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, DecisionSet, Point};
use crate::scenarios::{SafeAction, ScenarioBounds};
use crate::vecops::dot;

/// Hyperparameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub horizon: usize,
    pub constraints: usize,
    pub dim: usize,
    /// Dual descent step.
    pub eta: f64,
    /// Perturbation radius.
    pub rho: f64,
    /// Expert learning rate.
    pub epsilon: f64,
    /// Safety buffer.
    pub beta: f64,
    /// Shrink factor for the expert domain.
    pub alpha: f64,
    /// Dual variables live in `[0, dual_cap]`.
    pub dual_cap: f64,
    pub gamma_max: f64,
    /// Primal step sizes, `gamma_max · 2^{-i}` for `i = 0..N`.
    pub gammas: Vec<f64>,
    pub safe_action: SafeAction,
    pub bounds: ScenarioBounds,
}

/// Optional replacements for any derived hyperparameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub eta: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub dual_cap: Option<f64>,
    pub gamma_max: Option<f64>,
    pub experts: Option<usize>,
}

impl ParamOverrides {
    pub fn is_empty(&self) -> bool {
        *self == ParamOverrides::default()
    }
}

fn dyadic_grid(gamma_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| gamma_max * 0.5f64.powi(i as i32)).collect()
}

/// Default schedule for horizon `T` and `K` constraints.
///
/// `η = 1/√(KT)`, `ρ = K^{1/3} T^{-1/4}`, `ε = T^{-1/2}`, `β = 1/ln T`,
/// `C = F̄/β`, `γ_max = K^{-1/6} (1 + DT)^{1/2} T^{-3/4}`,
/// `N = max(1, ⌈½ log₂(1 + DT)⌉)` and `α = min(ρ/r, ½)` with `r` the inradius
/// about the set's centre.
pub fn params_from_theorem(
    horizon: usize,
    constraints: usize,
    set: &DecisionSet,
    bounds: ScenarioBounds,
    safe: &SafeAction,
) -> Result<AlgoParams> {
    let params = default_schedule(horizon, constraints, set, bounds, safe)?;
    params.validate(set)?;
    Ok(params)
}

/// The default schedule before validation, so overrides can repair it.
pub fn default_schedule(
    horizon: usize,
    constraints: usize,
    set: &DecisionSet,
    bounds: ScenarioBounds,
    safe: &SafeAction,
) -> Result<AlgoParams> {
    if horizon < 3 {
        return Err(Error::config(format!(
            "horizon must be at least 3, got {horizon}"
        )));
    }
    if constraints == 0 {
        return Err(Error::config("at least one constraint is required"));
    }
    let t = horizon as f64;
    let k = constraints as f64;
    let diameter = set.diameter();
    let beta = 1.0 / t.ln();
    let rho = k.cbrt() * t.powf(-0.25);
    let gamma_max = k.powf(-1.0 / 6.0) * (1.0 + diameter * t).sqrt() * t.powf(-0.75);
    let experts = ((0.5 * (1.0 + diameter * t).log2()).ceil() as usize).max(1);
    let params = AlgoParams {
        horizon,
        constraints,
        dim: set.dim(),
        eta: 1.0 / (k * t).sqrt(),
        rho,
        epsilon: 1.0 / t.sqrt(),
        beta,
        alpha: (rho / set.inradius()).min(0.5),
        dual_cap: bounds.f_bar / beta,
        gamma_max,
        gammas: dyadic_grid(gamma_max, experts),
        safe_action: safe.clone(),
        bounds,
    };
    Ok(params)
}

impl AlgoParams {
    pub fn experts(&self) -> usize {
        self.gammas.len()
    }

    /// Applies overrides and re-checks every invariant.
    pub fn with_overrides(mut self, o: &ParamOverrides, set: &DecisionSet) -> Result<Self> {
        if let Some(v) = o.eta {
            self.eta = v;
        }
        if let Some(v) = o.rho {
            self.rho = v;
        }
        if let Some(v) = o.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = o.beta {
            self.beta = v;
        }
        if let Some(v) = o.alpha {
            self.alpha = v;
        }
        if let Some(v) = o.dual_cap {
            self.dual_cap = v;
        }
        if let Some(v) = o.gamma_max {
            self.gamma_max = v;
        }
        let n = o.experts.unwrap_or(self.gammas.len());
        if n == 0 {
            return Err(Error::config("expert count must be positive"));
        }
        self.gammas = dyadic_grid(self.gamma_max, n);
        self.validate(set)?;
        Ok(self)
    }

    pub fn validate(&self, set: &DecisionSet) -> Result<()> {
        if self.dim != set.dim() || self.safe_action.point.len() != self.dim {
            return Err(Error::config(
                "parameter dimension does not match the decision set",
            ));
        }
        for (name, v) in [
            ("eta", self.eta),
            ("rho", self.rho),
            ("epsilon", self.epsilon),
            ("beta", self.beta),
            ("dual_cap", self.dual_cap),
            ("gamma_max", self.gamma_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let reach = self.alpha * set.inradius();
        if self.rho > reach * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "perturbation radius {} exceeds alpha·inradius = {reach}; the horizon is too small for this decision set",
                self.rho
            )));
        }
        if self.beta >= self.safe_action.beta_bar {
            return Err(Error::config(format!(
                "strict constraint satisfaction requires the safety buffer beta = {} to be below the safe-action margin beta_bar = {}",
                self.beta, self.safe_action.beta_bar
            )));
        }
        if self.gammas.is_empty() {
            return Err(Error::config("expert count must be positive"));
        }
        Ok(())
    }
}

/// `B_k − Ḡ + β(T − t − 1) ≥ 0` for every `k`.
pub fn safety_condition(balances: &[f64], g_bar: f64, beta: f64, horizon: usize, t: usize) -> bool {
    let remaining = horizon as f64 - t as f64 - 1.0;
    balances.iter().all(|b| b - g_bar + beta * remaining >= 0.0)
}

/// Weighted average of expert points; weights given as logarithms.
pub fn aggregate(points: &[Point], log_weights: &[f64]) -> Point {
    let shift = log_weights.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    let d = points[0].len();
    let mut out = vec![0.0; d];
    for (wi, p) in w.iter().zip(points) {
        for (o, x) in out.iter_mut().zip(p) {
            *o += wi * x;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

fn normalized(log_weights: &[f64]) -> Vec<f64> {
    let shift = log_weights.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// One-point estimate `(d/ρ)(f + λᵀg)·u` of the Lagrangian gradient.
pub fn gradient_estimate(
    f_val: f64,
    g_vals: &[f64],
    lambda: &[f64],
    u: &[f64],
    rho: f64,
    dim: usize,
) -> Point {
    let scale = dim as f64 / rho * (f_val + dot(lambda, g_vals));
    u.iter().map(|ui| scale * ui).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Running,
    /// Hard-stopped at round `tau`; the safe action is played from `tau` on.
    Stopped {
        tau: usize,
    },
}

/// Values revealed after playing `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub f_val: f64,
    pub g_vals: Vec<f64>,
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Point,
    pub f: f64,
    pub g: Vec<f64>,
    /// Duals in force during the round (before this round's update).
    pub lambda: Vec<f64>,
    /// Cumulative constraint values including this round.
    pub balances: Vec<f64>,
    /// Normalised expert weights used for this round's aggregate.
    pub weights: Vec<f64>,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub constraints: usize,
    pub rows: Vec<RoundRecord>,
}

impl Trajectory {
    pub fn new(dim: usize, constraints: usize) -> Self {
        Trajectory {
            dim,
            constraints,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// First stopped round, or `T + 1` when the learner never stopped.
    pub fn stopping_time(&self) -> usize {
        self.rows
            .iter()
            .find(|r| r.stopped)
            .map_or(self.rows.len() + 1, |r| r.t)
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.f).sum()
    }

    /// `Σ_t g_{k,t}(x_t)` per constraint.
    pub fn constraint_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.constraints];
        for r in &self.rows {
            for (o, g) in out.iter_mut().zip(&r.g) {
                *o += g;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoState {
    lambda: Vec<f64>,
    experts: Vec<Point>,
    log_weights: Vec<f64>,
    aggregate: Point,
    balances: Vec<f64>,
    t: usize,
    phase: Phase,
    last_u: Option<Point>,
    last_x: Option<Point>,
    awaiting_feedback: bool,
}

impl AlgoState {
    /// Initial state: zero duals, unit weights, zero balances, every expert at
    /// the projection of the origin onto the shrunk set.
    pub fn new(params: &AlgoParams, set: &DecisionSet) -> Result<Self> {
        params.validate(set)?;
        let start = set.project(params.alpha, &vec![0.0; params.dim])?;
        Ok(AlgoState {
            lambda: vec![0.0; params.constraints],
            experts: vec![start.clone(); params.experts()],
            log_weights: vec![0.0; params.experts()],
            aggregate: start,
            balances: vec![0.0; params.constraints],
            t: 1,
            phase: Phase::Running,
            last_u: None,
            last_x: None,
            awaiting_feedback: false,
        })
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn balances(&self) -> &[f64] {
        &self.balances
    }

    pub fn experts(&self) -> &[Point] {
        &self.experts
    }

    pub fn weights(&self) -> Vec<f64> {
        normalized(&self.log_weights)
    }

    pub fn last_decision(&self) -> Option<&Point> {
        self.last_x.as_ref()
    }

    /// Chooses `x_t`, hard-stopping first if the safety condition fails.
    pub fn decide<R: Rng + ?Sized>(
        &mut self,
        params: &AlgoParams,
        set: &DecisionSet,
        rng: &mut R,
    ) -> Result<Point> {
        if self.awaiting_feedback {
            return Err(Error::usage(format!(
                "decide called twice in round {} without observe",
                self.t
            )));
        }
        if self.t > params.horizon {
            return Err(Error::usage(format!(
                "horizon {} already exhausted",
                params.horizon
            )));
        }
        if self.phase == Phase::Running
            && !safety_condition(
                &self.balances,
                params.bounds.g_bar,
                params.beta,
                params.horizon,
                self.t,
            )
        {
            self.phase = Phase::Stopped { tau: self.t };
        }
        let x = match self.phase {
            Phase::Stopped { .. } => {
                self.last_u = None;
                params.safe_action.point.clone()
            }
            Phase::Running => {
                self.aggregate = aggregate(&self.experts, &self.log_weights);
                let u = sample_unit_sphere(rng, params.dim)?;
                let raw: Point = self
                    .aggregate
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| a + params.rho * b)
                    .collect();
                let x = set.project(0.0, &raw)?;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical {
                        round: self.t,
                        message: "non-finite decision".into(),
                    });
                }
                self.last_u = Some(u);
                x
            }
        };
        self.last_x = Some(x.clone());
        self.awaiting_feedback = true;
        Ok(x)
    }

    /// Applies the round's feedback and advances to the next round.
    pub fn observe(
        &mut self,
        params: &AlgoParams,
        set: &DecisionSet,
        fb: &Feedback,
    ) -> Result<RoundRecord> {
        if !self.awaiting_feedback {
            return Err(Error::usage(format!(
                "observe called in round {} without a decision",
                self.t
            )));
        }
        check_feedback(params, fb)?;
        let lambda_t = self.lambda.clone();
        let weights_t = normalized(&self.log_weights);
        for (b, g) in self.balances.iter_mut().zip(&fb.g_vals) {
            *b += g;
        }

        if self.phase == Phase::Running {
            let u = self
                .last_u
                .as_ref()
                .expect("running decision stores its perturbation");
            let grad = gradient_estimate(
                fb.f_val,
                &fb.g_vals,
                &self.lambda,
                u,
                params.rho,
                params.dim,
            );

            for (lw, xi) in self.log_weights.iter_mut().zip(&self.experts) {
                let loss: f64 = grad
                    .iter()
                    .zip(self.aggregate.iter().zip(xi))
                    .map(|(g, (a, x))| g * (a - x))
                    .sum();
                *lw -= params.epsilon * loss;
            }
            let shift = self
                .log_weights
                .iter()
                .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            self.log_weights.iter_mut().for_each(|lw| *lw -= shift);

            for (xi, gamma) in self.experts.iter_mut().zip(&params.gammas) {
                let stepped: Point = xi.iter().zip(&grad).map(|(x, g)| x + gamma * g).collect();
                *xi = set.project(params.alpha, &stepped)?;
            }

            for (l, g) in self.lambda.iter_mut().zip(&fb.g_vals) {
                *l = (*l - params.eta * g).clamp(0.0, params.dual_cap);
            }

            if self.log_weights.iter().any(|v| !v.is_finite())
                || self.experts.iter().flatten().any(|v| !v.is_finite())
            {
                return Err(Error::Numerical {
                    round: self.t,
                    message: "non-finite learner state".into(),
                });
            }
        }

        let record = RoundRecord {
            t: self.t,
            x: self.last_x.clone().expect("decision stored"),
            f: fb.f_val,
            g: fb.g_vals.clone(),
            lambda: lambda_t,
            balances: self.balances.clone(),
            weights: weights_t,
            stopped: matches!(self.phase, Phase::Stopped { .. }),
        };
        self.t += 1;
        self.awaiting_feedback = false;
        Ok(record)
    }
}

fn check_feedback(params: &AlgoParams, fb: &Feedback) -> Result<()> {
    let tol = 1e-9;
    if fb.g_vals.len() != params.constraints {
        return Err(Error::data(format!(
            "feedback has {} constraint values, expected {}",
            fb.g_vals.len(),
            params.constraints
        )));
    }
    if !(fb.f_val >= -tol && fb.f_val <= params.bounds.f_bar + tol) {
        return Err(Error::data(format!(
            "conversion value {} outside [0, F̄ = {}]",
            fb.f_val, params.bounds.f_bar
        )));
    }
    if let Some((k, g)) = fb
        .g_vals
        .iter()
        .enumerate()
        .find(|(_, g)| g.is_nan() || g.abs() > params.bounds.g_bar + tol)
    {
        return Err(Error::data(format!(
            "constraint {k} value {g} exceeds Ḡ = {}",
            params.bounds.g_bar
        )));
    }
    Ok(())
}
