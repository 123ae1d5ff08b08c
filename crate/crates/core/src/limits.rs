//! Limiting Gaussian processes: Brownian motion run on a deterministic clock
//! `φ(t)` and multiplied by a deterministic factor.
//!
//! | kind               | process                                   |
//! |--------------------|-------------------------------------------|
//! | `Diffusive`        | `t^{2p−1} W(t^{3−4p}) / √(3−4p)`           |
//! | `Superdiffusive`   | `W(1 − (1+t)^{3−4p}) / √(4p−3)`            |
//! | `DiffusiveShifted` | `W((1+t)^{3−4p} − 1) / √(3−4p)`            |
//! | `Critical`         | `W(t)`                                    |
//! | `CriticalShifted`  | `W((1 ∨ t) − 1)`                          |
//!
//! Covariances follow from `Cov(W(a), W(b)) = min(a, b)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{ErwError, Result};
use crate::rng::{substream, LIMIT_DOMAIN};
use crate::scaling::{Regime, ScaledGrid};
use crate::timegrid::TimeGrid;

/// A limit process; `p` is ignored by the critical kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSpec {
    pub kind: Regime,
    pub p: f64,
}

impl LimitSpec {
    pub fn new(kind: Regime, p: f64) -> Result<Self> {
        match kind {
            Regime::Critical | Regime::CriticalShifted => {}
            _ => kind.check(p)?,
        }
        Ok(Self { kind, p })
    }

    /// Exponent `3 − 4p` shared by the non-critical clocks.
    fn exponent(&self) -> f64 {
        3.0 - 4.0 * self.p
    }

    /// The inner clock `φ(t)`.
    pub fn time_change(&self, t: f64) -> f64 {
        let e = self.exponent();
        match self.kind {
            Regime::Diffusive => t.powf(e),
            Regime::Superdiffusive => 1.0 - (1.0 + t).powf(e),
            Regime::DiffusiveShifted => (1.0 + t).powf(e) - 1.0,
            Regime::Critical => t,
            Regime::CriticalShifted => t.max(1.0) - 1.0,
        }
    }

    /// Outer factor applied to `W(φ(t))`.
    pub fn multiplier(&self, t: f64) -> f64 {
        let e = self.exponent();
        match self.kind {
            Regime::Diffusive => {
                if t == 0.0 {
                    0.0
                } else {
                    t.powf(2.0 * self.p - 1.0) / e.sqrt()
                }
            }
            Regime::Superdiffusive => 1.0 / (-e).sqrt(),
            Regime::DiffusiveShifted => 1.0 / e.sqrt(),
            Regime::Critical | Regime::CriticalShifted => 1.0,
        }
    }

    /// Covariance of the limit at times `s` and `t`.
    pub fn kernel(&self, s: f64, t: f64) -> f64 {
        let lo = s.min(t);
        let hi = s.max(t);
        let e = self.exponent();
        match self.kind {
            Regime::Diffusive => {
                if lo == 0.0 {
                    0.0
                } else {
                    lo.powf(2.0 - 2.0 * self.p) * hi.powf(2.0 * self.p - 1.0) / e
                }
            }
            Regime::Superdiffusive => (1.0 - (1.0 + lo).powf(e)) / -e,
            Regime::DiffusiveShifted => ((1.0 + lo).powf(e) - 1.0) / e,
            Regime::Critical => lo,
            Regime::CriticalShifted => lo.max(1.0) - 1.0,
        }
    }

    /// Variance of the limit at `t`.
    pub fn variance(&self, t: f64) -> f64 {
        self.kernel(t, t)
    }
}

/// Covariance between the first component `t^{2p−1}W(t^{3−4p})/√(3−4p)` at
/// `s` and the shifted component at `t`, both driven by the same `W`.
///
/// The shifted component is the continuous image
/// `(1+t)^{1−2p} f(1+t) − f(1)` of the first, which equals
/// `(W((1+t)^{3−4p}) − W(1))/√(3−4p)`.
pub fn cross_kernel_joint1(p: f64, s: f64, t: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let e = 3.0 - 4.0 * p;
    let clock_s = s.powf(e);
    let clock_t = (1.0 + t).powf(e);
    s.powf(2.0 * p - 1.0) * (clock_s.min(clock_t) - clock_s.min(1.0)) / e
}

/// Standard normals by the Box–Muller transform.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * sin);
        r * cos
    }
}

/// Brownian motion at non-decreasing `times` (all `>= 0`), started at `W(0) = 0`.
fn brownian_at(times: &[f64], normals: &mut GaussianStream, out: &mut [f64]) {
    let mut clock = 0.0;
    let mut w = 0.0;
    for (slot, &tau) in out.iter_mut().zip(times) {
        let dt = tau - clock;
        assert!(dt >= -1e-15, "clock must be non-decreasing ({clock} -> {tau})");
        if dt > 0.0 {
            w += dt.sqrt() * normals.next();
        }
        clock = tau.max(clock);
        *slot = w;
    }
}

/// Draw `n_paths` samples of the limit process on `grid`.
pub fn sample_limit(spec: &LimitSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<ScaledGrid> {
    let clocks: Vec<f64> = grid.points().iter().map(|&t| spec.time_change(t)).collect();
    if let Some(w) = clocks.windows(2).find(|w| w[1] < w[0]) {
        return Err(ErwError::Grid(format!("clock decreases: {} -> {}", w[0], w[1])));
    }
    if clocks.first().is_some_and(|&c| c < 0.0) {
        return Err(ErwError::Grid("clock is negative".into()));
    }
    let factors: Vec<f64> = grid.points().iter().map(|&t| spec.multiplier(t)).collect();
    let width = grid.len();
    let mut values = vec![0.0; n_paths * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, out)| {
            let mut normals = GaussianStream::new(substream(seed, LIMIT_DOMAIN, i as u64));
            brownian_at(&clocks, &mut normals, out);
            for (v, f) in out.iter_mut().zip(&factors) {
                *v *= f;
            }
        });
    ScaledGrid::new(spec.kind, 0, grid.clone(), values)
}

/// Jointly sample both components of the diffusive pair from one `W`:
/// `(t^{2p−1}W(t^{3−4p}), W((1+t)^{3−4p}) − W(1))/√(3−4p)`.
pub fn sample_joint_diffusive(
    p: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<(ScaledGrid, ScaledGrid)> {
    Regime::Diffusive.check(p)?;
    let e = 3.0 - 4.0 * p;
    let scale = 1.0 / e.sqrt();
    let pts = grid.points();
    let mut times: Vec<f64> = pts
        .iter()
        .map(|t| t.powf(e))
        .chain(pts.iter().map(|t| (1.0 + t).powf(e)))
        .chain([1.0])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let locate = |x: f64| times.iter().position(|&y| y == x).expect("time present");
    let first_idx: Vec<usize> = pts.iter().map(|t| locate(t.powf(e))).collect();
    let second_idx: Vec<usize> = pts.iter().map(|t| locate((1.0 + t).powf(e))).collect();
    let one_idx = locate(1.0);

    let width = grid.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut normals = GaussianStream::new(substream(seed, LIMIT_DOMAIN, i as u64));
            let mut w = vec![0.0; times.len()];
            brownian_at(&times, &mut normals, &mut w);
            let first = pts
                .iter()
                .zip(&first_idx)
                .map(|(&t, &j)| if t == 0.0 { 0.0 } else { t.powf(2.0 * p - 1.0) * w[j] * scale })
                .collect();
            let second = second_idx.iter().map(|&j| (w[j] - w[one_idx]) * scale).collect();
            (first, second)
        })
        .collect();
    let mut first = Vec::with_capacity(n_paths * width);
    let mut second = Vec::with_capacity(n_paths * width);
    for (a, b) in rows {
        first.extend(a);
        second.extend(b);
    }
    Ok((
        ScaledGrid::new(Regime::Diffusive, 0, grid.clone(), first)?,
        ScaledGrid::new(Regime::DiffusiveShifted, 0, grid.clone(), second)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn specs() -> Vec<LimitSpec> {
        vec![
            LimitSpec::new(Regime::Diffusive, 0.3).unwrap(),
            LimitSpec::new(Regime::Diffusive, 0.5).unwrap(),
            LimitSpec::new(Regime::Diffusive, 0.0).unwrap(),
            LimitSpec::new(Regime::DiffusiveShifted, 0.3).unwrap(),
            LimitSpec::new(Regime::Superdiffusive, 0.9).unwrap(),
            LimitSpec::new(Regime::Critical, f64::NAN).unwrap(),
            LimitSpec::new(Regime::CriticalShifted, f64::NAN).unwrap(),
        ]
    }

    fn cov(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn spec_gates() {
        assert!(LimitSpec::new(Regime::Diffusive, 0.8).is_err());
        assert!(LimitSpec::new(Regime::Superdiffusive, 0.7).is_err());
    }

    #[test]
    fn clock_examples() {
        let sup = LimitSpec::new(Regime::Superdiffusive, 0.9).unwrap();
        assert_eq!(sup.time_change(0.0), 0.0);
        let bm = LimitSpec::new(Regime::Diffusive, 0.5).unwrap();
        for t in [0.0, 0.3, 1.7] {
            assert_relative_eq!(bm.time_change(t), t);
            if t > 0.0 {
                assert_eq!(bm.multiplier(t), 1.0);
            }
        }
        let crit_shift = LimitSpec::new(Regime::CriticalShifted, 0.75).unwrap();
        assert_eq!(crit_shift.time_change(0.5), 0.0);
        assert_eq!(crit_shift.time_change(2.0), 1.0);
    }

    #[test]
    fn clocks_increase_except_flat_critical_shift() {
        for spec in specs() {
            let grid = TimeGrid::uniform(3.0, 0.01).unwrap();
            let c: Vec<f64> = grid.points().iter().map(|&t| spec.time_change(t)).collect();
            for (w, t) in c.windows(2).zip(grid.points()) {
                if spec.kind == Regime::CriticalShifted && *t < 1.0 {
                    assert_eq!(w[1], 0.0);
                } else {
                    assert!(w[1] > w[0], "{:?} t={t}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let bm = LimitSpec::new(Regime::Diffusive, 0.5).unwrap();
        for (s, t) in [(0.2, 0.9), (1.5, 0.4), (1.0, 1.0)] {
            assert_relative_eq!(bm.kernel(s, t), f64::min(s, t), max_relative = 1e-14);
        }
        let d = LimitSpec::new(Regime::Diffusive, 0.3).unwrap();
        assert_relative_eq!(d.kernel(1.0, 1.0), 1.0 / 1.8, max_relative = 1e-14);
        assert_relative_eq!(d.kernel(0.5, 1.0), 0.5f64.powf(1.4) / 1.8, max_relative = 1e-14);
        let sup = LimitSpec::new(Regime::Superdiffusive, 0.9).unwrap();
        assert_eq!(sup.kernel(0.0, 0.0), 0.0);
        assert_relative_eq!(sup.variance(1.0), (1.0 - 2f64.powf(-0.6)) / 0.6, max_relative = 1e-14);
        // Var → 1/(4p − 3) as t → ∞
        assert_relative_eq!(sup.variance(1e12), 1.0 / 0.6, max_relative = 1e-6);
        let shift = LimitSpec::new(Regime::DiffusiveShifted, 0.3).unwrap();
        assert_relative_eq!(shift.variance(1.0), (2f64.powf(1.8) - 1.0) / 1.8, max_relative = 1e-14);
    }

    /// Kernel from the process definition `m(s)m(t)·min(φ(s), φ(t))`.
    #[test]
    fn kernel_matches_multiplier_times_min_clock() {
        let grid = TimeGrid::uniform(2.5, 0.25).unwrap();
        for spec in specs() {
            for &s in grid.points() {
                for &t in grid.points() {
                    let direct = spec.multiplier(s) * spec.multiplier(t)
                        * spec.time_change(s).min(spec.time_change(t));
                    assert_relative_eq!(spec.kernel(s, t), direct, epsilon = 1e-13);
                    assert_eq!(spec.kernel(s, t), spec.kernel(t, s));
                }
            }
        }
    }

    #[test]
    fn kernel_is_positive_semidefinite_on_default_grid() {
        let grid = TimeGrid::default_grid();
        let pts = grid.points();
        for spec in specs() {
            let k = DMatrix::from_fn(pts.len(), pts.len(), |i, j| spec.kernel(pts[i], pts[j]));
            let min_eig = k.symmetric_eigenvalues().min();
            assert!(min_eig >= -1e-10, "{:?}: {min_eig}", spec.kind);
        }
    }

    #[test]
    fn sampled_covariances_match_kernels() {
        let grid = TimeGrid::new(vec![0.5, 1.0, 2.0]).unwrap();
        let n = 100_000;
        for (k, spec) in specs().into_iter().enumerate() {
            let sample = sample_limit(&spec, &grid, n, 1000 + k as u64).unwrap();
            let cols: Vec<Vec<f64>> = (0..3).map(|j| sample.column(j)).collect();
            let pts = grid.points();
            for a in 0..3 {
                for b in a..3 {
                    let (kss, ktt, kst) = (
                        spec.kernel(pts[a], pts[a]),
                        spec.kernel(pts[b], pts[b]),
                        spec.kernel(pts[a], pts[b]),
                    );
                    let tol = 3.0 * ((kss * ktt + kst * kst) / n as f64).sqrt();
                    let emp = cov(&cols[a], &cols[b]);
                    assert!((emp - kst).abs() <= tol.max(1e-12), "{:?} ({a},{b}) emp={emp} kernel={kst} tol={tol}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn symmetric_diffusive_limit_is_brownian() {
        let spec = LimitSpec::new(Regime::Diffusive, 0.5).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.25, 1.0]).unwrap();
        let s = sample_limit(&spec, &grid, 4, 3).unwrap();
        // same draws as a unit-multiplier walk on clock t
        let mut normals = GaussianStream::new(substream(3, LIMIT_DOMAIN, 2));
        let z1 = normals.next();
        let z2 = normals.next();
        assert_eq!(s.row(2)[0], 0.0);
        assert_relative_eq!(s.row(2)[1], 0.5 * z1, epsilon = 1e-15);
        assert_relative_eq!(s.row(2)[2], 0.5 * z1 + 0.75f64.sqrt() * z2, epsilon = 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = LimitSpec::new(Regime::Superdiffusive, 0.85).unwrap();
        let grid = TimeGrid::default_grid();
        assert_eq!(
            sample_limit(&spec, &grid, 50, 9).unwrap(),
            sample_limit(&spec, &grid, 50, 9).unwrap()
        );
    }

    #[test]
    fn cross_kernel_values() {
        assert_eq!(cross_kernel_joint1(0.3, 0.0, 1.0), 0.0);
        assert_eq!(cross_kernel_joint1(0.5, 1.0, 0.0), 0.0);
        // shifted component at t=1 only sees W on [1, 2^{1.8}]; first at s=1 stops at 1
        assert_eq!(cross_kernel_joint1(0.3, 1.0, 1.0), 0.0);
        let e: f64 = 1.8;
        let want = 2f64.powf(-0.4) * (2f64.powf(e) - 1.0) / e;
        assert_relative_eq!(cross_kernel_joint1(0.3, 2.0, 1.0), want, max_relative = 1e-14);
        // symmetric walk: increments after time 1 are independent of W(s ≤ 1)
        for s in [0.2, 0.7, 1.0] {
            assert_eq!(cross_kernel_joint1(0.5, s, 1.3), 0.0);
        }
    }

    #[test]
    fn joint_sampler_matches_cross_kernel() {
        let p = 0.3;
        let grid = TimeGrid::new(vec![0.5, 1.0, 2.0]).unwrap();
        let n = 100_000;
        let (first, second) = sample_joint_diffusive(p, &grid, n, 77).unwrap();
        let d = LimitSpec::new(Regime::Diffusive, p).unwrap();
        let sh = LimitSpec::new(Regime::DiffusiveShifted, p).unwrap();
        let pts = grid.points();
        for a in 0..3 {
            for b in 0..3 {
                let (s, t) = (pts[a], pts[b]);
                let kst = cross_kernel_joint1(p, s, t);
                let tol = 3.0 * ((d.variance(s) * sh.variance(t) + kst * kst) / n as f64).sqrt();
                let emp = cov(&first.column(a), &second.column(b));
                assert!((emp - kst).abs() <= tol, "s={s} t={t} emp={emp} kernel={kst}");
            }
            assert_relative_eq!(
                cov(&second.column(a), &second.column(a)),
                sh.variance(pts[a]),
                max_relative = 0.03
            );
        }
    }
}
