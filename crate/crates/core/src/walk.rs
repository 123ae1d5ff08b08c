//! Elephant random walk trajectories.
//!
//! Two samplers produce the same law. [`SamplingMode::History`] follows the
//! definition literally: it keeps every past step and copies or flips a
//! uniformly remembered one. [`SamplingMode::Markov`] only tracks the current
//! position and steps up with probability `1/2 + (p - 1/2)·S_n/n`.

use std::ops::Range;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ErwError, Result};
use crate::rng::{substream, WALK_DOMAIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    History,
    Markov,
}

impl SamplingMode {
    fn name(self) -> &'static str {
        match self {
            SamplingMode::History => "history",
            SamplingMode::Markov => "markov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Probability of copying the remembered step.
    pub p: f64,
    /// Probability that the first step is +1.
    pub q: f64,
    /// Number of steps `m`; paths hold `S_0..=S_m`.
    pub horizon: usize,
    pub master_seed: u64,
    pub mode: SamplingMode,
}

impl WalkParams {
    pub fn new(p: f64, q: f64, horizon: usize, master_seed: u64, mode: SamplingMode) -> Result<Self> {
        let params = Self {
            p,
            q,
            horizon,
            master_seed,
            mode,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ErwError::Domain(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(ErwError::Domain(format!("q must lie in [0, 1], got {}", self.q)));
        }
        if self.horizon == 0 {
            return Err(ErwError::Domain("horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_mode(self, mode: SamplingMode) -> Self {
        Self { mode, ..self }
    }
}

/// Probability that step `n + 1` is `+1` given `S_n = position`, `n >= 1`.
#[inline]
pub fn up_probability(p: f64, position: i64, n: usize) -> f64 {
    let prob = 0.5 + (p - 0.5) * (position as f64 / n as f64);
    debug_assert!(
        (0.0..=1.0).contains(&prob),
        "up-probability {prob} out of range (p={p}, S={position}, n={n})"
    );
    prob
}

/// `E[X_{k+1} | F_k] = (2p − 1)·S_k/k` for `1 <= k <= horizon`.
pub fn conditional_drift(path: &[i32], k: usize, p: f64) -> Result<f64> {
    let horizon = path.len().saturating_sub(1);
    if k == 0 || k > horizon {
        return Err(ErwError::IndexOutOfRange { index: k, max: horizon });
    }
    Ok((2.0 * p - 1.0) * path[k] as f64 / k as f64)
}

fn first_step(rng: &mut ChaCha8Rng, q: f64) -> i8 {
    if rng.random::<f64>() < q {
        1
    } else {
        -1
    }
}

/// Markov kernel in 32-bit fixed point.
///
/// With `r` uniform on `0..2^32`, step `n + 1` is up iff
/// `r·n < D_n := 2^31·n + c·S_n`, `c = round((p − 1/2)·2^32)`, which has
/// probability `1/2 + (p − 1/2)·S_n/n` up to `2^-32`. `D_n` is updated
/// incrementally so the loop-carried chain is integer add and compare.
fn fill_markov(params: &WalkParams, rng: &mut ChaCha8Rng, out: &mut [i32]) {
    const HALF: i64 = 1 << 31;
    let c = ((params.p - 0.5) * 4_294_967_296.0).round() as i64;
    out[0] = 0;
    let mut position = first_step(rng, params.q) as i64;
    out[1] = position as i32;
    let mut threshold = HALF + c * position;
    for n in 1..params.horizon {
        let draw = rng.next_u32() as i64 * n as i64;
        let step = 2 * ((draw < threshold) as i64) - 1;
        position += step;
        threshold += HALF + c * step;
        out[n + 1] = position as i32;
    }
}

fn fill_history(params: &WalkParams, rng: &mut ChaCha8Rng, steps: &mut Vec<i8>, out: &mut [i32]) {
    steps.clear();
    steps.push(first_step(rng, params.q));
    out[0] = 0;
    out[1] = steps[0] as i32;
    for n in 1..params.horizon {
        let remembered = steps[rng.random_range(0..n)];
        let step = if rng.random::<f64>() < params.p {
            remembered
        } else {
            -remembered
        };
        steps.push(step);
        out[n + 1] = out[n] + step as i32;
    }
}

/// Write path `path_index` into `out` (length `horizon + 1`).
pub fn fill_path(params: &WalkParams, path_index: u64, out: &mut [i32]) {
    assert_eq!(out.len(), params.horizon + 1, "output buffer length");
    let mut rng = substream(params.master_seed, WALK_DOMAIN, path_index);
    match params.mode {
        SamplingMode::Markov => fill_markov(params, &mut rng, out),
        SamplingMode::History => {
            let mut steps = Vec::with_capacity(params.horizon);
            fill_history(params, &mut rng, &mut steps, out)
        }
    }
    debug_assert!(check_path(out).is_ok(), "{:?}", check_path(out));
}

/// Generate path `path_index` as a fresh vector.
pub fn generate_path(params: &WalkParams, path_index: u64) -> Vec<i32> {
    let mut out = vec![0; params.horizon + 1];
    fill_path(params, path_index, &mut out);
    out
}

/// Generate paths `0..n_paths` one at a time and map each through `f`
/// without keeping the trajectories. Output order follows path index.
pub fn map_paths<T, F>(params: &WalkParams, n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[i32]) -> T + Sync,
{
    map_path_range(params, 0..n_paths, f)
}

/// [`map_paths`] over an arbitrary index range. Path `i` is the same
/// trajectory whichever range produces it, and in Markov mode a shorter
/// horizon yields a prefix of the longer path.
pub fn map_path_range<T, F>(params: &WalkParams, range: Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[i32]) -> T + Sync,
{
    range
        .into_par_iter()
        .map_init(
            || vec![0i32; params.horizon + 1],
            |buf, i| {
                fill_path(params, i as u64, buf);
                f(i, buf)
            },
        )
        .collect()
}

/// Check `S_0 = 0`, unit increments, `|S_k| <= k` and parity.
pub fn check_path(path: &[i32]) -> std::result::Result<(), String> {
    if path.first() != Some(&0) {
        return Err("S_0 != 0".into());
    }
    let unit = |w: &[i32]| matches!(w[1].wrapping_sub(w[0]), 1 | -1);
    if !path.windows(2).all(unit) {
        let k = path.windows(2).position(|w| !unit(w)).unwrap_or(0);
        return Err(format!("non-unit increment at step {}", k + 1));
    }
    // unit increments from S_0 = 0 already force |S_k| <= k and S_k ≡ k (mod 2)
    Ok(())
}

/// A batch of stored trajectories, row-major with stride `horizon + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    params: WalkParams,
    n_paths: usize,
    positions: Vec<i32>,
}

impl PathBatch {
    pub fn from_positions(params: WalkParams, n_paths: usize, positions: Vec<i32>) -> Result<Self> {
        let stride = params.horizon + 1;
        if positions.len() != n_paths * stride {
            return Err(ErwError::LengthMismatch {
                left: positions.len(),
                right: n_paths * stride,
            });
        }
        let batch = Self {
            params,
            n_paths,
            positions,
        };
        for (i, path) in batch.iter().enumerate() {
            check_path(path).map_err(|e| ErwError::Format(format!("path {i}: {e}")))?;
        }
        Ok(batch)
    }

    pub fn params(&self) -> &WalkParams {
        &self.params
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// `S_0..=S_m` of path `i`.
    pub fn path(&self, i: usize) -> &[i32] {
        let stride = self.params.horizon + 1;
        &self.positions[i * stride..(i + 1) * stride]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[i32]> + '_ {
        self.positions.chunks_exact(self.params.horizon + 1)
    }

    /// Steps `X_1..=X_m` of path `i`.
    pub fn increments(&self, i: usize) -> impl Iterator<Item = i8> + '_ {
        self.path(i).windows(2).map(|w| (w[1] - w[0]) as i8)
    }

    /// Final positions `S_m`, one per path.
    pub fn endpoints(&self) -> Vec<i32> {
        self.iter().map(|p| p[self.params.horizon]).collect()
    }
}

fn simulate_batch(params: &WalkParams, n_paths: usize) -> PathBatch {
    let stride = params.horizon + 1;
    let mut positions = vec![0i32; n_paths * stride];
    positions
        .par_chunks_mut(stride)
        .enumerate()
        .for_each(|(i, out)| fill_path(params, i as u64, out));
    PathBatch {
        params: *params,
        n_paths,
        positions,
    }
}

fn require_mode(params: &WalkParams, expected: SamplingMode) -> Result<()> {
    params.validate()?;
    if params.mode != expected {
        return Err(ErwError::ModeMismatch {
            expected: expected.name(),
            actual: params.mode.name(),
        });
    }
    Ok(())
}

/// Definitional sampler: copy (w.p. `p`) or flip a uniformly drawn past step.
pub fn simulate_history(params: &WalkParams, n_paths: usize) -> Result<PathBatch> {
    require_mode(params, SamplingMode::History)?;
    Ok(simulate_batch(params, n_paths))
}

/// O(1)-memory sampler driven by the state-dependent up-probability.
pub fn simulate_markov(params: &WalkParams, n_paths: usize) -> Result<PathBatch> {
    require_mode(params, SamplingMode::Markov)?;
    Ok(simulate_batch(params, n_paths))
}

/// Dispatch on `params.mode`.
pub fn simulate(params: &WalkParams, n_paths: usize) -> Result<PathBatch> {
    params.validate()?;
    Ok(simulate_batch(params, n_paths))
}
