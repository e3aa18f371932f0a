//! Trajectory-optimized perturbation feedback control.
//!
//! A deterministic optimal nominal is solved once, linear feedback gains are
//! synthesized along it by a backward recursion that decouples the costate
//! from the second-order term, and the resulting policy is executed under
//! noise with replanning only when the incurred cost drifts from the plan.
//! NMPC, T-LQR and iLQG feedback are provided as baselines.

pub mod costs;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod plot;
pub mod scenario;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
