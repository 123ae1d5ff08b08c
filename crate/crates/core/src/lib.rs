//! Simulation and statistical verification of the elephant random walk.
//!
//! The walk remembers its whole past: each new step copies (probability
//! `p`) or flips a uniformly chosen earlier step. Depending on `p` the
//! rescaled walk converges to a time-changed Brownian motion in the
//! diffusive (`p < 3/4`), critical (`p = 3/4`) or superdiffusive
//! (`p > 3/4`) regime. This crate generates trajectories, computes the exact
//! law of `S_n` for moderate `n`, rescales paths, samples the Gaussian
//! limits, and runs the statistical checks that tie them together.

pub mod coeff;
pub mod dump;
pub mod error;
pub mod experiment;
pub mod limits;
pub mod mart;
pub mod oracle;
pub mod rng;
pub mod scaling;
pub mod special;
pub mod stats;
pub mod timegrid;
pub mod walk;

pub use error::{ErwError, Result};
