//! Time grids and integer floors of `n·t` and `n^t`.

use crate::error::{ErwError, Result};

/// Relative distance under which a floating product is snapped to the
/// nearest integer before flooring. Grid points are decimal literals such as
/// 0.3 whose binary value may sit a few ulps below the intended product.
const SNAP_REL: f64 = 1e-12;

/// Strictly increasing, finite, non-negative time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(ErwError::Grid("empty grid".into()));
        }
        if let Some(bad) = points.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(ErwError::Grid(format!("grid point {bad} is not a finite t >= 0")));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ErwError::Grid("grid must be strictly increasing".into()));
        }
        Ok(Self(points))
    }

    /// `{0, step, 2·step, …, max}` with the endpoint included.
    pub fn uniform(max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max >= 0.0) {
            return Err(ErwError::Grid(format!("bad uniform grid max={max} step={step}")));
        }
        let count = snap_floor(max / step);
        // divide by an integral 1/step where possible so 0.1·3 prints as 0.3
        let inverse = 1.0 / step;
        let point = |j: usize| {
            if (inverse - inverse.round()).abs() <= SNAP_REL * inverse {
                j as f64 / inverse.round()
            } else {
                j as f64 * step
            }
        };
        Self::new((0..=count).map(point).collect())
    }

    /// The default grid `{0, 0.1, …, 2.0}`.
    pub fn default_grid() -> Self {
        Self((0..=20).map(|j| j as f64 / 10.0).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.0.last().expect("grid is non-empty")
    }
}

fn snap_floor(x: f64) -> usize {
    debug_assert!(x >= 0.0 && x.is_finite());
    let nearest = x.round();
    if (x - nearest).abs() <= SNAP_REL * nearest.max(1.0) {
        nearest as usize
    } else {
        x.floor() as usize
    }
}

/// `[n·t]` for `t >= 0`.
pub fn floor_mul(n: usize, t: f64) -> usize {
    snap_floor(n as f64 * t)
}

/// `[n^t]` for `t >= 0`.
///
/// Integer exponents are computed exactly. Otherwise `exp(t·ln n)` is
/// snapped to a nearby integer when within rounding noise, and the result is
/// cross-checked against the integer bracket `k^(1/t) <= n < (k+1)^(1/t)`
/// while `n^t` stays below 2^53.
pub fn floor_pow(n: usize, t: f64) -> usize {
    debug_assert!(n >= 1 && t >= 0.0);
    if n <= 1 || t == 0.0 {
        return 1;
    }
    if t.fract() == 0.0 && t <= 64.0 {
        if let Some(v) = (n as u64).checked_pow(t as u32) {
            return v as usize;
        }
    }
    let x = (t * (n as f64).ln()).exp();
    let k = snap_floor(x);
    if x < 9.007_199_254_740_992e15 {
        let ln_n = (n as f64).ln();
        debug_assert!(
            (k as f64).ln() <= t * ln_n + 1e-9 && ((k + 1) as f64).ln() > t * ln_n - 1e-9,
            "floor_pow({n}, {t}) bracket check failed for {k}"
        );
    }
    k
}
