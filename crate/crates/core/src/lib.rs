//! Primal-dual bandit convex optimization for multi-lever decisions under
//! long-term constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: box and ball decision sets, exact projections, sphere sampling.
//! - [`scenarios`]: concave conversion/constraint families, bound constants,
//!   safe-action validation.
//! - [`worlds`]: the five non-stationary input models (stochastic, corrupted,
//!   adversarial, periodic, ergodic) and total-variation utilities.
//! - [`algorithm`]: the learner itself, a decide/observe state machine with
//!   expert-weighted primal ascent, dual descent and a safety hard stop.
//! - [`benchmark`]: hindsight optimum solvers, regret, the competitive constant
//!   and estimator/complementary-slackness validators.
//! - [`harness`]: JSON configuration, single runs, sweeps and file formats.

pub mod algorithm;
pub mod benchmark;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod scenarios;
pub mod worlds;

mod vecops;

pub use error::{Error, Result};
pub use geometry::{DecisionSet, Point};
