//! Decision sets and the Euclidean machinery the learner needs on them.
//!
//! Two shapes are supported, both with closed-form projections: an
//! axis-aligned box containing the origin, and an origin-centred ball.
//! Shrinking `(1 - s)·X` is a scaling about the set's centre, so that the
//! shrunk set keeps a uniform margin `s·r` to the boundary, where `r` is the
//! inradius about that centre. For the ball and for boxes symmetric about the
//! origin this coincides with scaling about the origin.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::norm;

/// A decision vector. Its length must match the dimension of the set it lives in.
pub type Point = Vec<f64>;

/// Largest dimension for which box vertices are enumerated.
pub const MAX_VERTEX_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSet", into = "RawSet")]
pub enum DecisionSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { radius: f64, dim: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { radius: f64, dim: usize },
}

impl TryFrom<RawSet> for DecisionSet {
    type Error = Error;

    fn try_from(raw: RawSet) -> Result<Self> {
        match raw {
            RawSet::Box { lower, upper } => DecisionSet::new_box(lower, upper),
            RawSet::Ball { radius, dim } => DecisionSet::new_ball(radius, dim),
        }
    }
}

impl From<DecisionSet> for RawSet {
    fn from(set: DecisionSet) -> Self {
        match set {
            DecisionSet::Box { lower, upper } => RawSet::Box { lower, upper },
            DecisionSet::Ball { radius, dim } => RawSet::Ball { radius, dim },
        }
    }
}

impl DecisionSet {
    /// Box `[lower, upper]`; requires `lower < upper` and `lower ≤ 0 ≤ upper` componentwise.
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::config(format!(
                "box bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) {
                return Err(Error::config(format!("box bound {j} is not finite")));
            }
            if l >= u {
                return Err(Error::config(format!(
                    "box coordinate {j}: lower {l} >= upper {u}"
                )));
            }
            if l > 0.0 || u < 0.0 {
                return Err(Error::config(format!(
                    "box coordinate {j}: [{l}, {u}] does not contain the origin"
                )));
            }
        }
        Ok(DecisionSet::Box { lower, upper })
    }

    /// Ball of the given radius centred at the origin.
    pub fn new_ball(radius: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("ball dimension must be positive"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::config(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(DecisionSet::Ball { radius, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            DecisionSet::Box { lower, .. } => lower.len(),
            DecisionSet::Ball { dim, .. } => *dim,
        }
    }

    /// Largest pairwise distance between points of the set.
    pub fn diameter(&self) -> f64 {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
            DecisionSet::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Radius of the largest origin-centred ball inside the set.
    pub fn origin_inradius(&self) -> f64 {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l.abs().min(*u))
                .fold(f64::INFINITY, f64::min),
            DecisionSet::Ball { radius, .. } => *radius,
        }
    }

    /// `(diameter, origin inradius)`.
    pub fn geometry(&self) -> (f64, f64) {
        (self.diameter(), self.origin_inradius())
    }

    /// Centre about which the set is shrunk.
    pub fn center(&self) -> Point {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
            DecisionSet::Ball { dim, .. } => vec![0.0; *dim],
        }
    }

    /// Radius of the largest ball about [`center`](Self::center) inside the set.
    pub fn inradius(&self) -> f64 {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (u - l))
                .fold(f64::INFINITY, f64::min),
            DecisionSet::Ball { radius, .. } => *radius,
        }
    }

    /// `max_{x ∈ X} ||x||`.
    pub fn max_norm(&self) -> f64 {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            DecisionSet::Ball { radius, .. } => *radius,
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::config(format!(
                "point has dimension {}, decision set has dimension {}",
                p.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Whether `p` lies in `(1 - shrink)·X` up to `tol`.
    pub fn contains(&self, shrink: f64, p: &[f64], tol: f64) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        let scale = 1.0 - shrink;
        match self {
            DecisionSet::Box { lower, upper } => {
                p.iter().zip(lower.iter().zip(upper)).all(|(&x, (&l, &u))| {
                    let c = 0.5 * (l + u);
                    x >= c + scale * (l - c) - tol && x <= c + scale * (u - c) + tol
                })
            }
            DecisionSet::Ball { radius, .. } => norm(p) <= scale * radius + tol,
        }
    }

    /// Euclidean projection of `p` onto `(1 - shrink)·X`.
    pub fn project(&self, shrink: f64, p: &[f64]) -> Result<Point> {
        self.check_dim(p)?;
        if !(0.0..1.0).contains(&shrink) {
            return Err(Error::usage(format!(
                "shrink factor must lie in [0, 1), got {shrink}"
            )));
        }
        let scale = 1.0 - shrink;
        Ok(match self {
            DecisionSet::Box { lower, upper } => p
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&l, &u))| {
                    let c = 0.5 * (l + u);
                    x.clamp(c + scale * (l - c), c + scale * (u - c))
                })
                .collect(),
            DecisionSet::Ball { radius, .. } => {
                let r = scale * radius;
                let n = norm(p);
                if n <= r {
                    p.to_vec()
                } else {
                    p.iter().map(|x| x * (r / n)).collect()
                }
            }
        })
    }

    /// Vertices of a box of dimension at most [`MAX_VERTEX_DIM`]; `None` otherwise.
    pub fn vertices(&self) -> Option<Vec<Point>> {
        match self {
            DecisionSet::Box { lower, upper } if lower.len() <= MAX_VERTEX_DIM => {
                let d = lower.len();
                Some(
                    (0u32..(1 << d))
                        .map(|mask| {
                            (0..d)
                                .map(|j| {
                                    if mask >> j & 1 == 1 {
                                        upper[j]
                                    } else {
                                        lower[j]
                                    }
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Tensor grid with `resolution + 1` points per axis over the bounding box,
    /// restricted to the set (for the ball, points outside are dropped).
    pub fn grid(&self, resolution: usize) -> Vec<Point> {
        let d = self.dim();
        let (lo, hi) = match self {
            DecisionSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            DecisionSet::Ball { radius, dim } => (vec![-radius; *dim], vec![*radius; *dim]),
        };
        let res = resolution.max(1);
        let axis = |j: usize, i: usize| {
            if i == res {
                hi[j]
            } else {
                lo[j] + (hi[j] - lo[j]) * i as f64 / res as f64
            }
        };
        let per_axis = res + 1;
        let total = per_axis.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let p: Point = (0..d).map(|j| axis(j, idx[j])).collect();
            if self.contains(0.0, &p, 1e-12) {
                out.push(p);
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        out
    }

    /// A point drawn uniformly from the set.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            DecisionSet::Ball { radius, dim } => {
                let dir = draw_sphere(rng, *dim);
                let r = radius * rng.random::<f64>().powf(1.0 / *dim as f64);
                dir.into_iter().map(|v| v * r).collect()
            }
        }
    }
}

/// Uniform draw from the unit sphere in `R^d` (normalised standard normals).
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Result<Point> {
    if d == 0 {
        return Err(Error::config("sphere dimension must be positive"));
    }
    Ok(draw_sphere(rng, d))
}

fn draw_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Point {
    loop {
        let v: Point = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = norm(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
