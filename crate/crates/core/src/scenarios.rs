//! Conversion and constraint functions, scenario supports and their bound
//! constants.
//!
//! Every function is concave by construction: either a minimum of affine
//! pieces or `c0 + w·x − xᵀQx` with `Q` positive semidefinite. All bounds are
//! computed in closed form and are valid upper bounds (they may be loose).

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DecisionSet, Point};
use crate::vecops::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub w: Vec<f64>,
    pub b: f64,
}

/// `c0 + w·x − xᵀQx`, `Q` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveQuadratic {
    c0: f64,
    w: Vec<f64>,
    q: Vec<Vec<f64>>,
    q_min_eig: f64,
    q_norm: f64,
}

impl ConcaveQuadratic {
    pub fn new(c0: f64, w: Vec<f64>, q: Vec<Vec<f64>>) -> Result<Self> {
        let d = w.len();
        if d == 0 {
            return Err(Error::config("quadratic: empty linear term"));
        }
        if q.len() != d || q.iter().any(|row| row.len() != d) {
            return Err(Error::config(format!("quadratic: Q must be {d}x{d}")));
        }
        let scale = q.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for (i, row) in q.iter().enumerate() {
            for (j, qij) in row.iter().enumerate().take(i) {
                if (qij - q[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::config(format!(
                        "quadratic: Q not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if !c0.is_finite() || w.iter().chain(q.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::config("quadratic: non-finite coefficient"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| q[i][j]);
        let eig = SymmetricEigen::new(m).eigenvalues;
        let q_min_eig = eig.min();
        if q_min_eig < -1e-10 {
            return Err(Error::config(format!(
                "quadratic: Q has eigenvalue {q_min_eig:.3e} < 0, function is not concave"
            )));
        }
        let q_norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(ConcaveQuadratic {
            c0,
            w,
            q,
            q_min_eig,
            q_norm,
        })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn q(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Spectral norm of `Q`.
    pub fn q_norm(&self) -> f64 {
        self.q_norm
    }

    fn quad_form(&self, x: &[f64]) -> f64 {
        self.q.iter().zip(x).map(|(row, xi)| xi * dot(row, x)).sum()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.c0 + dot(&self.w, x) - self.quad_form(x)
    }

    /// `w − 2Qx`.
    pub fn gradient(&self, x: &[f64]) -> Point {
        self.w
            .iter()
            .zip(&self.q)
            .map(|(wi, row)| wi - 2.0 * dot(row, x))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunction", into = "RawFunction")]
pub enum ConcaveFunction {
    MinAffine(Vec<AffinePiece>),
    Quadratic(ConcaveQuadratic),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawFunction {
    MinAffine(Vec<AffinePiece>),
    Quadratic {
        c0: f64,
        w: Vec<f64>,
        q: Vec<Vec<f64>>,
    },
}

impl TryFrom<RawFunction> for ConcaveFunction {
    type Error = Error;

    fn try_from(raw: RawFunction) -> Result<Self> {
        match raw {
            RawFunction::MinAffine(pieces) => ConcaveFunction::min_affine(pieces),
            RawFunction::Quadratic { c0, w, q } => {
                Ok(ConcaveFunction::Quadratic(ConcaveQuadratic::new(c0, w, q)?))
            }
        }
    }
}

impl From<ConcaveFunction> for RawFunction {
    fn from(f: ConcaveFunction) -> Self {
        match f {
            ConcaveFunction::MinAffine(p) => RawFunction::MinAffine(p),
            ConcaveFunction::Quadratic(q) => RawFunction::Quadratic {
                c0: q.c0,
                w: q.w,
                q: q.q,
            },
        }
    }
}

impl ConcaveFunction {
    pub fn min_affine(pieces: Vec<AffinePiece>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::config(
                "min-affine function needs at least one piece",
            ));
        };
        let d = first.w.len();
        if d == 0 {
            return Err(Error::config("min-affine piece has empty weight vector"));
        }
        for (j, p) in pieces.iter().enumerate() {
            if p.w.len() != d {
                return Err(Error::config(format!(
                    "min-affine piece {j} has dimension {}, expected {d}",
                    p.w.len()
                )));
            }
            if !p.b.is_finite() || p.w.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("min-affine piece {j} is not finite")));
            }
        }
        Ok(ConcaveFunction::MinAffine(pieces))
    }

    /// Single affine piece `w·x + b`.
    pub fn affine(w: Vec<f64>, b: f64) -> Result<Self> {
        Self::min_affine(vec![AffinePiece { w, b }])
    }

    pub fn quadratic(c0: f64, w: Vec<f64>, q: Vec<Vec<f64>>) -> Result<Self> {
        Ok(ConcaveFunction::Quadratic(ConcaveQuadratic::new(c0, w, q)?))
    }

    /// Long-term budget constraint `budget − x[coord]`.
    pub fn budget(dim: usize, budget: f64, coord: usize) -> Result<Self> {
        if coord >= dim {
            return Err(Error::config(format!(
                "budget lever {coord} out of range for dimension {dim}"
            )));
        }
        let mut w = vec![0.0; dim];
        w[coord] = -1.0;
        Self::affine(w, budget)
    }

    /// Return-on-investment constraint `f(x) − gamma·x[coord]`.
    pub fn roi(f: &ConcaveFunction, gamma: f64, coord: usize) -> Result<Self> {
        if coord >= f.dim() {
            return Err(Error::config(format!("ROI lever {coord} out of range")));
        }
        Ok(match f {
            ConcaveFunction::MinAffine(pieces) => ConcaveFunction::MinAffine(
                pieces
                    .iter()
                    .map(|p| {
                        let mut w = p.w.clone();
                        w[coord] -= gamma;
                        AffinePiece { w, b: p.b }
                    })
                    .collect(),
            ),
            ConcaveFunction::Quadratic(q) => {
                let mut w = q.w.clone();
                w[coord] -= gamma;
                ConcaveFunction::Quadratic(ConcaveQuadratic { w, ..q.clone() })
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConcaveFunction::MinAffine(p) => p[0].w.len(),
            ConcaveFunction::Quadratic(q) => q.w.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ConcaveFunction::MinAffine(pieces) => pieces
                .iter()
                .map(|p| dot(&p.w, x) + p.b)
                .fold(f64::INFINITY, f64::min),
            ConcaveFunction::Quadratic(q) => q.eval(x),
        }
    }

    /// Lipschitz constant over the set.
    pub fn lipschitz(&self, set: &DecisionSet) -> f64 {
        match self {
            ConcaveFunction::MinAffine(pieces) => {
                pieces.iter().map(|p| norm(&p.w)).fold(0.0, f64::max)
            }
            ConcaveFunction::Quadratic(q) => norm(&q.w) + 2.0 * q.q_norm * set.max_norm(),
        }
    }

    /// Valid upper bound on `sup_{x ∈ X} self(x)`.
    pub fn upper_bound(&self, set: &DecisionSet) -> f64 {
        match self {
            ConcaveFunction::MinAffine(pieces) => min_affine_sup_bound(pieces, set),
            ConcaveFunction::Quadratic(q) => q.c0 + linear_sup(&q.w, set),
        }
    }

    /// Valid lower bound on `inf_{x ∈ X} self(x)`.
    ///
    /// Exact for min-affine functions on boxes and balls, and for quadratics on
    /// boxes small enough for vertex enumeration.
    pub fn lower_bound(&self, set: &DecisionSet) -> f64 {
        match self {
            ConcaveFunction::MinAffine(pieces) => pieces
                .iter()
                .map(|p| p.b - linear_sup(&p.w.iter().map(|v| -v).collect::<Vec<_>>(), set))
                .fold(f64::INFINITY, f64::min),
            ConcaveFunction::Quadratic(q) => match set.vertices() {
                Some(vs) => vs.iter().map(|v| q.eval(v)).fold(f64::INFINITY, f64::min),
                None => {
                    let neg_w: Vec<f64> = q.w.iter().map(|v| -v).collect();
                    q.c0 - linear_sup(&neg_w, set) - q.q_norm * set.max_norm().powi(2)
                }
            },
        }
    }

    /// `min_{x ∈ X} self(x)`, exact where a closed form or vertex enumeration
    /// applies and otherwise searched on a grid of the given resolution
    /// (radially pushed to the boundary for balls).
    pub fn minimum(&self, set: &DecisionSet, resolution: usize) -> f64 {
        match (self, set) {
            (ConcaveFunction::MinAffine(_), _) => self.lower_bound(set),
            (ConcaveFunction::Quadratic(_), DecisionSet::Box { .. })
                if set.vertices().is_some() =>
            {
                self.lower_bound(set)
            }
            (ConcaveFunction::Quadratic(_), DecisionSet::Ball { radius, .. }) => set
                .grid(resolution)
                .into_iter()
                .map(|p| {
                    let n = norm(&p);
                    if n > 0.0 {
                        p.iter().map(|v| v * radius / n).collect()
                    } else {
                        p
                    }
                })
                .map(|p: Point| self.eval(&p))
                .fold(f64::INFINITY, f64::min),
            _ => self.lower_bound(set),
        }
    }
}

/// `sup_{x ∈ X} w·x`.
fn linear_sup(w: &[f64], set: &DecisionSet) -> f64 {
    match set {
        DecisionSet::Box { lower, upper } => w
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(wi, (l, u))| (wi * l).max(wi * u))
            .sum(),
        DecisionSet::Ball { radius, .. } => radius * norm(w),
    }
}

// For any convex weights θ, sup_x min_j (w_j·x + b_j) ≤ sup_x Σθ_j(w_j·x + b_j),
// with equality at the minimising θ. Each θ visited gives a valid bound, so
// the running minimum over an exponentiated-gradient path is certified.
fn min_affine_sup_bound(pieces: &[AffinePiece], set: &DecisionSet) -> f64 {
    let bound = |theta: &[f64]| -> (f64, Vec<f64>) {
        let d = pieces[0].w.len();
        let mut a = vec![0.0; d];
        let mut b = 0.0;
        for (t, p) in theta.iter().zip(pieces) {
            b += t * p.b;
            for (ai, wi) in a.iter_mut().zip(&p.w) {
                *ai += t * wi;
            }
        }
        let xstar: Vec<f64> = match set {
            DecisionSet::Box { lower, upper } => a
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(ai, (l, u))| if *ai >= 0.0 { *u } else { *l })
                .collect(),
            DecisionSet::Ball { radius, .. } => {
                let n = norm(&a);
                if n > 0.0 {
                    a.iter().map(|v| v * radius / n).collect()
                } else {
                    vec![0.0; d]
                }
            }
        };
        let value = b + linear_sup(&a, set);
        // Subgradient wrt θ_j is the value of piece j at the maximiser.
        let grad = pieces.iter().map(|p| dot(&p.w, &xstar) + p.b).collect();
        (value, grad)
    };

    let n = pieces.len();
    let mut best = pieces
        .iter()
        .map(|p| p.b + linear_sup(&p.w, set))
        .fold(f64::INFINITY, f64::min);
    if n == 1 {
        return best;
    }
    let mut theta = vec![1.0 / n as f64; n];
    let scale = best.abs().max(1.0);
    for k in 1..=400 {
        let (value, grad) = bound(&theta);
        best = best.min(value);
        let step = (2.0 * (n as f64).ln()).sqrt() / (scale * (k as f64).sqrt());
        let gmax = grad.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut total = 0.0;
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t *= (-step * (g - gmax)).exp();
            total += *t;
        }
        theta.iter_mut().for_each(|t| *t /= total);
    }
    best
}

/// One draw `(f, g_1..g_K)` from the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub f: ConcaveFunction,
    pub g: Vec<ConcaveFunction>,
}

impl Scenario {
    /// `(f(x), [g_k(x)])`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.f.dim() {
            return Err(Error::config(format!(
                "evaluation point has dimension {}, scenario has dimension {}",
                x.len(),
                self.f.dim()
            )));
        }
        Ok((self.f.eval(x), self.g.iter().map(|g| g.eval(x)).collect()))
    }

    fn functions(&self) -> impl Iterator<Item = &ConcaveFunction> {
        std::iter::once(&self.f).chain(&self.g)
    }
}

/// Validated finite support `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    scenarios: Vec<Scenario>,
    dim: usize,
    constraints: usize,
    has_violating_scenario: bool,
}

impl Support {
    /// Checks dimensions, a common constraint count, and `f ≥ 0` on the set.
    pub fn new(scenarios: Vec<Scenario>, set: &DecisionSet) -> Result<Self> {
        let Some(first) = scenarios.first() else {
            return Err(Error::config("scenario support is empty"));
        };
        let dim = set.dim();
        let constraints = first.g.len();
        if constraints == 0 {
            return Err(Error::config("at least one constraint is required"));
        }
        for (s, sc) in scenarios.iter().enumerate() {
            if sc.g.len() != constraints {
                return Err(Error::config(format!(
                    "scenario {s} has {} constraints, expected {constraints}",
                    sc.g.len()
                )));
            }
            if let Some(bad) = sc.functions().find(|f| f.dim() != dim) {
                return Err(Error::config(format!(
                    "scenario {s} has a function of dimension {}, decision set has {dim}",
                    bad.dim()
                )));
            }
            let f_min = sc.f.lower_bound(set);
            if f_min < -1e-12 {
                return Err(Error::config(format!(
                    "scenario {s}: conversion function may be negative on the decision set (lower bound {f_min})"
                )));
            }
        }
        let has_violating_scenario = scenarios
            .iter()
            .any(|sc| sc.g.iter().any(|g| g.minimum(set, 64) < 0.0));
        if !has_violating_scenario {
            warn!("no scenario can make a constraint negative; the constraints are vacuous");
        }
        Ok(Support {
            scenarios,
            dim,
            constraints,
            has_violating_scenario,
        })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> usize {
        self.constraints
    }

    /// Whether some scenario admits `min_k g_k(x) < 0` on the set.
    pub fn has_violating_scenario(&self) -> bool {
        self.has_violating_scenario
    }
}

/// `F̄`, `Ḡ` and `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBounds {
    pub f_bar: f64,
    pub g_bar: f64,
    pub lipschitz: f64,
}

pub fn compute_bounds(support: &Support, set: &DecisionSet) -> Result<ScenarioBounds> {
    let sup_abs = |f: &ConcaveFunction| f.upper_bound(set).abs().max(f.lower_bound(set).abs());
    let mut f_bar = 0.0f64;
    let mut g_bar = 0.0f64;
    let mut lipschitz = 0.0f64;
    for sc in support.scenarios() {
        f_bar = f_bar.max(sup_abs(&sc.f));
        for g in &sc.g {
            g_bar = g_bar.max(sup_abs(g));
        }
        for f in sc.functions() {
            lipschitz = lipschitz.max(f.lipschitz(set));
        }
    }
    for (name, v) in [("F", f_bar), ("G", g_bar), ("L", lipschitz)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(format!(
                "bound {name} = {v} is not positive and finite"
            )));
        }
    }
    Ok(ScenarioBounds {
        f_bar,
        g_bar,
        lipschitz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeAction {
    pub point: Point,
    pub beta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeActionCheck {
    pub ok: bool,
    /// `min_{s, k} g_k(point)`.
    pub realized_margin: f64,
    pub inside: bool,
}

pub fn validate_safe_action(
    support: &Support,
    set: &DecisionSet,
    safe: &SafeAction,
) -> SafeActionCheck {
    let inside = set.contains(0.0, &safe.point, 1e-12);
    let realized_margin = if safe.point.len() == support.dim() {
        support
            .scenarios()
            .iter()
            .flat_map(|sc| sc.g.iter().map(|g| g.eval(&safe.point)))
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::NEG_INFINITY
    };
    SafeActionCheck {
        ok: inside && safe.beta_bar > 0.0 && realized_margin > safe.beta_bar,
        realized_margin,
        inside,
    }
}
