//! Hindsight benchmarks and run validators.
//!
//! The hindsight optimum maximises `Σ_t E_{P_t}[f_t(x_t)]` subject to
//! `Σ_t E_{P_t}[g_{k,t}(x_t)] ≥ 0` over per-round decisions. Rounds sharing a
//! marginal distribution form one class, so the problem only depends on the
//! distinct marginals and their multiplicities.
//!
//! Two solvers are provided. [`opt_grid`] is the trusted baseline: exhaustive
//! search on a tensor grid, with nested golden-section search over the dual when
//! several classes are coupled by the constraints. [`opt_dual`] minimises the
//! same Lagrangian dual with the ellipsoid method and locally refined inner
//! maximisation, and is certified only by agreement with the grid oracle.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoParams, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, DecisionSet, Point};
use crate::scenarios::{ConcaveFunction, SafeAction, Support};
use crate::vecops::{dot, norm};
use crate::worlds::Distribution;

/// Inputs of the hindsight problem.
#[derive(Debug, Clone)]
pub struct HindsightProblem<'a> {
    pub marginals: Vec<Distribution>,
    pub support: &'a Support,
    pub set: &'a DecisionSet,
}

struct Classes {
    dists: Vec<Distribution>,
    counts: Vec<f64>,
    /// Class of each round.
    of_round: Vec<usize>,
}

impl<'a> HindsightProblem<'a> {
    pub fn new(
        marginals: Vec<Distribution>,
        support: &'a Support,
        set: &'a DecisionSet,
    ) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::usage("hindsight problem needs at least one round"));
        }
        if let Some(m) = marginals.iter().find(|m| m.len() != support.len()) {
            return Err(Error::config(format!(
                "marginal over {} scenarios, support has {}",
                m.len(),
                support.len()
            )));
        }
        if support.dim() != set.dim() {
            return Err(Error::config("support and decision set dimensions differ"));
        }
        Ok(HindsightProblem {
            marginals,
            support,
            set,
        })
    }

    pub fn horizon(&self) -> usize {
        self.marginals.len()
    }

    pub fn constraints(&self) -> usize {
        self.support.constraints()
    }

    fn classes(&self) -> Classes {
        let mut dists: Vec<Distribution> = Vec::new();
        let mut counts = Vec::new();
        let mut of_round = Vec::with_capacity(self.marginals.len());
        for m in &self.marginals {
            match dists.iter().position(|d| d == m) {
                Some(i) => {
                    counts[i] += 1.0;
                    of_round.push(i);
                }
                None => {
                    dists.push(m.clone());
                    counts.push(1.0);
                    of_round.push(dists.len() - 1);
                }
            }
        }
        Classes {
            dists,
            counts,
            of_round,
        }
    }

    /// `(E f, [E g_k])` at `x` under `dist`.
    fn expected(&self, dist: &Distribution, x: &[f64]) -> (f64, Vec<f64>) {
        let k = self.constraints();
        let mut ef = 0.0;
        let mut eg = vec![0.0; k];
        for (p, sc) in dist.probs().iter().zip(self.support.scenarios()) {
            if *p == 0.0 {
                continue;
            }
            ef += p * sc.f.eval(x);
            for (e, g) in eg.iter_mut().zip(&sc.g) {
                *e += p * g.eval(x);
            }
        }
        (ef, eg)
    }

    /// Lipschitz constant over the support.
    fn lipschitz(&self) -> f64 {
        self.support
            .scenarios()
            .iter()
            .flat_map(|sc| std::iter::once(&sc.f).chain(&sc.g))
            .map(|f| f.lipschitz(self.set))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Grid,
    DualDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub value: f64,
    pub horizon: usize,
    /// One point per round, or a single point when every round shares one marginal.
    pub points: Vec<Point>,
    pub solver: Solver,
    pub certified_gap: f64,
    /// Dual multipliers at the solution (empty when no dual was needed).
    pub dual: Vec<f64>,
    pub converged: bool,
    /// Ties in inner maximisation go to the lowest grid index.
    pub tie_break: String,
}

/// Expected values of every class on a fixed point list.
struct Table {
    points: Vec<Point>,
    /// `[class][point]`
    ef: Vec<Vec<f64>>,
    /// `[class][point][k]`
    eg: Vec<Vec<Vec<f64>>>,
}

impl Table {
    fn build(problem: &HindsightProblem, classes: &Classes, points: Vec<Point>) -> Self {
        let k = problem.constraints();
        let scen = problem.support.scenarios();
        // Evaluate each scenario once per point, then mix per class.
        let per_scenario: Vec<Vec<(f64, Vec<f64>)>> = scen
            .iter()
            .map(|sc| {
                points
                    .iter()
                    .map(|p| (sc.f.eval(p), sc.g.iter().map(|g| g.eval(p)).collect()))
                    .collect()
            })
            .collect();
        let mut ef = Vec::with_capacity(classes.dists.len());
        let mut eg = Vec::with_capacity(classes.dists.len());
        for dist in &classes.dists {
            let mut f_row = vec![0.0; points.len()];
            let mut g_row = vec![vec![0.0; k]; points.len()];
            for (s, p) in dist.probs().iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for (i, (fv, gv)) in per_scenario[s].iter().enumerate() {
                    f_row[i] += p * fv;
                    for (acc, g) in g_row[i].iter_mut().zip(gv) {
                        *acc += p * g;
                    }
                }
            }
            ef.push(f_row);
            eg.push(g_row);
        }
        Table { points, ef, eg }
    }

    /// Lowest-index maximiser of `E f + λᵀ E g` for one class.
    fn argmax(&self, class: usize, lambda: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (f, g)) in self.ef[class].iter().zip(&self.eg[class]).enumerate() {
            let v = f + dot(lambda, g);
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Dual function and a subgradient.
    fn dual(&self, counts: &[f64], lambda: &[f64]) -> (f64, Vec<f64>, Vec<usize>) {
        let mut value = 0.0;
        let mut sub = vec![0.0; lambda.len()];
        let mut args = Vec::with_capacity(counts.len());
        for (c, n) in counts.iter().enumerate() {
            let (i, v) = self.argmax(c, lambda);
            value += n * v;
            for (s, g) in sub.iter_mut().zip(&self.eg[c][i]) {
                *s += n * g;
            }
            args.push(i);
        }
        (value, sub, args)
    }

    /// Largest `λ_k` any dual minimiser can have, from the best common Slater point.
    fn dual_radius(&self, counts: &[f64]) -> Result<f64> {
        let total: f64 = counts.iter().sum();
        let k = self.eg[0][0].len();
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.points.len() {
            let slack = (0..k)
                .map(|kk| {
                    counts
                        .iter()
                        .enumerate()
                        .map(|(c, n)| n * self.eg[c][i][kk])
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                / total;
            if best.is_none_or(|(s, _)| slack > s) {
                best = Some((slack, i));
            }
        }
        let (slack, i) = best.expect("non-empty grid");
        if slack <= 0.0 {
            return Err(Error::usage(
                "hindsight problem has no strictly feasible grid point; refine the grid or check the constraints",
            ));
        }
        let unconstrained = self.dual(counts, &vec![0.0; k]).0;
        let at_slater: f64 = counts
            .iter()
            .enumerate()
            .map(|(c, n)| n * self.ef[c][i])
            .sum();
        Ok((unconstrained - at_slater) / (slack * total) * 1.05 + 1e-9)
    }
}

/// Golden-section minimisation of a convex function on `[lo, hi]`.
fn golden<F: FnMut(f64) -> f64>(mut lo: f64, mut hi: f64, iters: usize, mut f: F) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    let v = f(x);
    // The endpoint 0 is often the minimiser for slack constraints.
    let v0 = f(0.0);
    if v0 <= v {
        (0.0, v0)
    } else {
        (x, v)
    }
}

/// Golden-section steps per dual coordinate.
const DUAL_SEARCH_STEPS: usize = 60;

/// Slack allowed on expected constraints at grid points (absorbs grid rounding).
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Maximum grid size for the oracle.
pub const GRID_LIMIT: usize = 10_000_000;

/// Exhaustive grid oracle, `d ≤ 2`, `K ≤ 2`.
pub fn opt_grid(problem: &HindsightProblem, resolution: usize) -> Result<OptResult> {
    let d = problem.set.dim();
    let k = problem.constraints();
    if d > 2 || k > 2 {
        return Err(Error::usage(format!(
            "grid oracle supports d <= 2 and K <= 2 (got d = {d}, K = {k}); use the dual solver"
        )));
    }
    let classes = problem.classes();
    let grid_size = (resolution + 1).pow(d as u32);
    if resolution == 0 || classes.dists.len().saturating_mul(grid_size) > GRID_LIMIT {
        return Err(Error::usage(format!(
            "grid of {} classes x {grid_size} points exceeds the oracle limit {GRID_LIMIT}; use the dual solver",
            classes.dists.len()
        )));
    }
    let table = Table::build(problem, &classes, problem.set.grid(resolution));
    let horizon = problem.horizon();
    let certified_gap =
        problem.lipschitz() * problem.set.diameter() / resolution as f64 * horizon as f64;
    let tie_break = "lowest grid index".to_string();

    if classes.dists.len() == 1 {
        // Identical marginals: by concavity one point serves every round.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..table.points.len() {
            if table.eg[0][i].iter().all(|g| *g >= -FEASIBILITY_TOL)
                && best.is_none_or(|(_, v)| table.ef[0][i] > v)
            {
                best = Some((i, table.ef[0][i]));
            }
        }
        let (i, v) =
            best.ok_or_else(|| Error::usage("hindsight problem has no feasible grid point"))?;
        return Ok(OptResult {
            value: v * horizon as f64,
            horizon,
            points: vec![table.points[i].clone()],
            solver: Solver::Grid,
            certified_gap,
            dual: Vec::new(),
            converged: true,
            tie_break,
        });
    }

    let radius = table.dual_radius(&classes.counts)?;
    let eval = |lambda: &[f64]| table.dual(&classes.counts, lambda).0;
    let (_, sub_at_zero, _) = table.dual(&classes.counts, &vec![0.0; k]);
    let lambda = if sub_at_zero.iter().all(|g| *g >= 0.0) {
        // The unconstrained maximisers are already feasible.
        vec![0.0; k]
    } else {
        match k {
            1 => vec![golden(0.0, radius, 2 * DUAL_SEARCH_STEPS, |l| eval(&[l])).0],
            _ => {
                let inner = |l1: f64| golden(0.0, radius, DUAL_SEARCH_STEPS, |l2| eval(&[l1, l2]));
                let (l1, _) = golden(0.0, radius, DUAL_SEARCH_STEPS, |l1| inner(l1).1);
                vec![l1, inner(l1).0]
            }
        }
    };
    let (value, _, args) = table.dual(&classes.counts, &lambda);
    Ok(OptResult {
        value,
        horizon,
        points: classes
            .of_round
            .iter()
            .map(|&c| table.points[args[c]].clone())
            .collect(),
        solver: Solver::Grid,
        certified_gap,
        dual: lambda,
        converged: true,
        tie_break,
    })
}

fn inner_resolution(d: usize) -> usize {
    match d {
        1 => 4000,
        2 => 200,
        _ => 50,
    }
}

/// Lagrangian dual solver, `d ≤ 3`.
///
/// The dual `D(λ) = Σ_m n_m max_x (E f_m + λᵀ E g_m)` is minimised over a box
/// `[0, Λ]^K` by the ellipsoid method (bisection when `K = 1`); each inner
/// maximisation is a grid search followed by two local refinements. Stops
/// once the ellipsoid certifies `D(λ) − D* ≤ tolerance·max(1, |D|)`; otherwise
/// returns the best dual bound with `converged = false`. Primal points are
/// weighted averages of recent inner maximisers.
pub fn opt_dual(problem: &HindsightProblem, tolerance: f64) -> Result<OptResult> {
    let d = problem.set.dim();
    if d > 3 {
        return Err(Error::usage(format!(
            "dual solver supports d <= 3, got {d}"
        )));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::usage("tolerance must be positive"));
    }
    let k = problem.constraints();
    let classes = problem.classes();
    let res = inner_resolution(d);
    let table = Table::build(problem, &classes, problem.set.grid(res));
    let radius = table.dual_radius(&classes.counts)?;
    let cell = problem.set.diameter() / res as f64;

    let inner = |class: usize, lambda: &[f64]| -> (Point, f64, Vec<f64>) {
        let (i, _) = table.argmax(class, lambda);
        let mut center = table.points[i].clone();
        let mut span = cell;
        let dist = &classes.dists[class];
        let mut best_v = f64::NEG_INFINITY;
        let mut best = (center.clone(), 0.0, vec![0.0; k]);
        for _ in 0..2 {
            let steps = 10i32;
            let mut idx = vec![-steps; d];
            loop {
                let cand: Point = center
                    .iter()
                    .zip(&idx)
                    .map(|(c, j)| c + span * *j as f64 / steps as f64)
                    .collect();
                let cand = problem.set.project(0.0, &cand).expect("dimension checked");
                let (ef, eg) = problem.expected(dist, &cand);
                let v = ef + dot(lambda, &eg);
                if v > best_v {
                    best_v = v;
                    best = (cand, ef, eg);
                }
                let mut pos = 0;
                loop {
                    if pos == d {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] <= steps {
                        break;
                    }
                    idx[pos] = -steps;
                    pos += 1;
                }
                if pos == d {
                    break;
                }
            }
            center = best.0.clone();
            span /= steps as f64;
        }
        best
    };
    let dual_at = |lambda: &[f64]| -> (f64, Vec<f64>, Vec<Point>) {
        let mut value = 0.0;
        let mut sub = vec![0.0; k];
        let mut pts = Vec::with_capacity(classes.counts.len());
        for (c, n) in classes.counts.iter().enumerate() {
            let (x, ef, eg) = inner(c, lambda);
            value += n * (ef + dot(lambda, &eg));
            for (s, g) in sub.iter_mut().zip(&eg) {
                *s += n * g;
            }
            pts.push(x);
        }
        (value, sub, pts)
    };

    let max_iter = 200 + 150 * k * k;
    let mut history: Vec<Profile> = Vec::new();
    let mut best: (f64, Vec<f64>) = (f64::INFINITY, vec![0.0; k]);
    let mut converged = false;

    let mut center = DVector::from_element(k, 0.5 * radius);
    let mut shape = DMatrix::identity(k, k) * (0.25 * radius * radius * k as f64 * 1.01);
    let n = k as f64;
    for _ in 0..max_iter {
        let c: Vec<f64> = center.iter().copied().collect();
        // Feasibility cut for λ outside the box, objective cut otherwise.
        let cut = if let Some(j) = c.iter().position(|v| *v < 0.0) {
            let mut g = DVector::zeros(k);
            g[j] = -1.0;
            g
        } else if let Some(j) = c.iter().position(|v| *v > radius) {
            let mut g = DVector::zeros(k);
            g[j] = 1.0;
            g
        } else {
            let (value, sub, pts) = dual_at(&c);
            history.push(Profile {
                f_total: value - dot(&c, &sub),
                g_total: sub.clone(),
                pts,
            });
            if value < best.0 {
                best = (value, c.clone());
            }
            let g = DVector::from_vec(sub);
            let width = (g.transpose() * &shape * &g)[(0, 0)].max(0.0).sqrt();
            if width <= tolerance * best.0.abs().max(1.0) {
                converged = true;
                break;
            }
            g
        };
        let pg = &shape * &cut;
        let denom = (cut.transpose() * &pg)[(0, 0)].sqrt();
        if denom <= 0.0 || !denom.is_finite() {
            converged = true;
            break;
        }
        let step = pg / denom;
        if k == 1 {
            // Interval halving.
            center -= &step * 0.5;
            shape *= 0.25;
        } else {
            center -= &step * (1.0 / (n + 1.0));
            shape =
                (shape - (&step * step.transpose()) * (2.0 / (n + 1.0))) * (n * n / (n * n - 1.0));
        }
    }

    // The box corner λ = 0 is a common minimiser the ellipsoid only approaches.
    let zero = vec![0.0; k];
    let (zero_value, zero_sub, zero_pts) = dual_at(&zero);
    history.push(Profile {
        f_total: zero_value,
        g_total: zero_sub,
        pts: zero_pts,
    });
    if zero_value <= best.0 {
        best = (zero_value, zero);
    }

    let averaged = recover_primal(&history, classes.counts.len(), d, k);
    let horizon = problem.horizon();
    let points = if averaged.len() == 1 {
        averaged
    } else {
        classes
            .of_round
            .iter()
            .map(|&c| averaged[c].clone())
            .collect()
    };
    Ok(OptResult {
        value: best.0,
        horizon,
        points,
        solver: Solver::DualDecomposition,
        certified_gap: problem.lipschitz() * problem.set.diameter() / res as f64 * horizon as f64,
        dual: best.1,
        converged,
        tie_break: "lowest grid index, then first refined candidate".to_string(),
    })
}

/// Joint inner maximisers at one dual iterate, with their totals.
struct Profile {
    pts: Vec<Point>,
    f_total: f64,
    g_total: Vec<f64>,
}

/// Most recent distinct profiles considered for primal recovery.
const RECOVERY_POOL: usize = 40;

/// Averages inner maximisers with the weights of the best feasible mixture.
///
/// Weights solve `max θᵀF` over the simplex subject to `Σ_j θ_j G_j ≥ 0` on the
/// most recent distinct profiles, by enumerating the vertices (at most `K + 1`
/// profiles, the rest of the equalities from binding constraints). By
/// concavity the averaged points are at least as good and as feasible as the
/// mixture. Falls back to the plain average when no mixture is feasible.
fn recover_primal(history: &[Profile], classes: usize, d: usize, k: usize) -> Vec<Point> {
    let mut pool: Vec<&Profile> = Vec::new();
    for p in history.iter().rev() {
        if pool.len() == RECOVERY_POOL {
            break;
        }
        if !pool.iter().any(|q| q.pts == p.pts) {
            pool.push(p);
        }
    }
    let scale = pool
        .iter()
        .flat_map(|p| p.g_total.iter())
        .fold(1.0f64, |a, g| a.max(g.abs()));
    let tol = 1e-9 * scale;
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    let mut consider = |mix: Vec<(usize, f64)>| {
        if mix.iter().any(|(_, w)| *w < -1e-12) {
            return;
        }
        let feasible = (0..k).all(|kk| {
            mix.iter()
                .map(|(j, w)| w * pool[*j].g_total[kk])
                .sum::<f64>()
                >= -tol
        });
        if !feasible {
            return;
        }
        let value: f64 = mix.iter().map(|(j, w)| w * pool[*j].f_total).sum();
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, mix));
        }
    };
    let m = pool.len();
    for size in 1..=(k + 1).min(m) {
        for subset in combinations(m, size) {
            for binding in combinations(k, size - 1) {
                let mut a = DMatrix::zeros(size, size);
                let mut rhs = DVector::zeros(size);
                for (row, &kk) in binding.iter().enumerate() {
                    for (col, &j) in subset.iter().enumerate() {
                        a[(row, col)] = pool[j].g_total[kk];
                    }
                }
                for col in 0..size {
                    a[(size - 1, col)] = 1.0;
                }
                rhs[size - 1] = 1.0;
                if let Some(theta) = a.lu().solve(&rhs) {
                    consider(subset.iter().copied().zip(theta.iter().copied()).collect());
                }
            }
        }
    }
    let mix = match best {
        Some((_, mix)) => mix,
        None => (0..m).map(|j| (j, 1.0 / m as f64)).collect(),
    };
    (0..classes)
        .map(|c| {
            let mut acc = vec![0.0; d];
            for (j, w) in &mix {
                for (a, v) in acc.iter_mut().zip(&pool[*j].pts[c]) {
                    *a += w.max(0.0) * v;
                }
            }
            acc
        })
        .collect()
}

/// All `size`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    rec(0, n, size, &mut cur, &mut out);
    out
}

/// Realised regret `OPT − Σ f_t(x_t)` and constraint totals `Σ g_{k,t}(x_t)`.
pub fn regret(opt: &OptResult, trajectory: &Trajectory) -> Result<(f64, Vec<f64>)> {
    if trajectory.len() != opt.horizon {
        return Err(Error::usage(format!(
            "trajectory has {} rounds, benchmark horizon is {}",
            trajectory.len(),
            opt.horizon
        )));
    }
    Ok((
        opt.value - trajectory.cumulative_reward(),
        trajectory.constraint_totals(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveConstant {
    pub xi: f64,
    /// `min` over the support, constraints and set of `g_k(x)`.
    pub min_constraint: f64,
    /// `ξ ≤ 1`: no scenario can violate a constraint.
    pub degenerate: bool,
}

/// `ξ = 1 − min g / β̄`.
pub fn competitive_xi(
    support: &Support,
    set: &DecisionSet,
    safe: &SafeAction,
    resolution: usize,
) -> CompetitiveConstant {
    let min_constraint = support
        .scenarios()
        .iter()
        .flat_map(|sc| sc.g.iter().map(|g| g.minimum(set, resolution)))
        .fold(f64::INFINITY, f64::min);
    let xi = 1.0 - min_constraint / safe.beta_bar;
    CompetitiveConstant {
        xi,
        min_constraint,
        degenerate: xi <= 1.0,
    }
}

/// `h = f + λᵀg` for smoothing checks.
#[derive(Debug, Clone)]
pub struct LagrangianTarget {
    pub f: ConcaveFunction,
    pub g: Vec<ConcaveFunction>,
    pub lambda: Vec<f64>,
}

impl LagrangianTarget {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.f.eval(x)
            + self
                .g
                .iter()
                .zip(&self.lambda)
                .map(|(g, l)| l * g.eval(x))
                .sum::<f64>()
    }

    fn smoothed_gradient(&self, x: &[f64], rho: f64) -> Result<Point> {
        let mut out = vec![0.0; x.len()];
        for (func, weight) in
            std::iter::once((&self.f, 1.0)).chain(self.g.iter().zip(self.lambda.iter().copied()))
        {
            let grad = smoothed_gradient(func, x, rho)?;
            for (o, v) in out.iter_mut().zip(grad) {
                *o += weight * v;
            }
        }
        Ok(out)
    }
}

// Gradient of the ball-smoothed function. Exact for quadratics (smoothing only
// adds a constant) and for min-affine functions whose active piece does not
// change within the ball.
fn smoothed_gradient(func: &ConcaveFunction, x: &[f64], rho: f64) -> Result<Point> {
    match func {
        ConcaveFunction::Quadratic(q) => Ok(q.gradient(x)),
        ConcaveFunction::MinAffine(pieces) => {
            let value = |p: &crate::scenarios::AffinePiece| dot(&p.w, x) + p.b;
            let j = (0..pieces.len())
                .min_by(|&a, &b| value(&pieces[a]).total_cmp(&value(&pieces[b])))
                .expect("non-empty pieces");
            let pj = &pieces[j];
            let stays_active = pieces.iter().enumerate().all(|(i, pi)| {
                if i == j {
                    return true;
                }
                let diff: Vec<f64> = pj.w.iter().zip(&pi.w).map(|(a, b)| a - b).collect();
                value(pj) - value(pi) + rho * norm(&diff) <= 0.0
            });
            if stays_active {
                Ok(pj.w.clone())
            } else {
                Err(Error::usage(
                    "smoothed gradient has no closed form: a kink lies within rho of x",
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaxmanCheck {
    pub mc_grad: Point,
    pub reference: Point,
    pub max_abs_err: f64,
}

/// Monte Carlo average of `(d/ρ)·h(x + ρu)·u` against the analytic gradient of
/// the smoothed target.
pub fn check_flaxman<R: Rng + ?Sized>(
    target: &LagrangianTarget,
    x: &[f64],
    rho: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<FlaxmanCheck> {
    if n_samples == 0 || rho.is_nan() || rho <= 0.0 {
        return Err(Error::usage("need a positive sample count and radius"));
    }
    let d = x.len();
    let reference = target.smoothed_gradient(x, rho)?;
    let mut acc = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for _ in 0..n_samples {
        let u = sample_unit_sphere(rng, d)?;
        for ((p, xi), ui) in probe.iter_mut().zip(x).zip(&u) {
            *p = xi + rho * ui;
        }
        let h = target.eval(&probe);
        for (a, ui) in acc.iter_mut().zip(&u) {
            *a += h * ui;
        }
    }
    let scale = d as f64 / rho / n_samples as f64;
    let mc_grad: Point = acc.into_iter().map(|a| a * scale).collect();
    let max_abs_err = mc_grad
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(FlaxmanCheck {
        mc_grad,
        reference,
        max_abs_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsCheck {
    pub ok: bool,
    /// Largest `lhs − rhs` over probes and prefixes; `≤ 1e-6` passes.
    pub worst_slack: f64,
    pub prefixes_checked: usize,
}

/// Complementary-slackness validator.
///
/// For every prefix `t ≤ τ_A` and every probe `λ ∈ {0} ∪ {C·e_k}` checks
/// `Σ_{τ≤t} (λ_τ − λ)ᵀ g_τ(x_τ) ≤ (η/2)·t·K·Ḡ² + ||λ||²/(2η)`.
pub fn check_cs(trajectory: &Trajectory, params: &AlgoParams) -> CsCheck {
    let k = params.constraints;
    let cap = params.dual_cap;
    let last = trajectory.stopping_time().min(trajectory.len());
    let mut base = 0.0; // Σ λ_τᵀ g_τ
    let mut totals = vec![0.0; k];
    let mut worst = f64::NEG_INFINITY;
    for (i, row) in trajectory.rows.iter().take(last).enumerate() {
        let t = (i + 1) as f64;
        base += dot(&row.lambda, &row.g);
        for (s, g) in totals.iter_mut().zip(&row.g) {
            *s += g;
        }
        let drift = 0.5 * params.eta * t * k as f64 * params.bounds.g_bar.powi(2);
        worst = worst.max(base - drift);
        let probe_penalty = cap * cap / (2.0 * params.eta);
        for total in &totals {
            worst = worst.max(base - cap * total - drift - probe_penalty);
        }
    }
    if last == 0 {
        worst = 0.0;
    }
    CsCheck {
        ok: worst <= 1e-6,
        worst_slack: worst,
        prefixes_checked: last,
    }
}
