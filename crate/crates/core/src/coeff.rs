//! The martingale coefficients `a_k = ∏_{j<k} (1 + (2p-1)/j)^{-1}` and the
//! normalizers built from them.
//!
//! `a_k` is kept in log space and built by its product recurrence. The closed
//! form `Γ(2p)Γ(k)/Γ(k+2p-1)` is only used to cross-check the table.

use crate::error::{ErwError, Result};
use crate::special::{gamma, ln_gamma};
use crate::timegrid::{floor_pow, TimeGrid};

/// Precomputed `log a_k` for `k = 1..=m`.
#[derive(Debug, Clone)]
pub struct CoeffTable {
    p: f64,
    log_a: Vec<f64>,
    gamma_2p: f64,
}

/// Build the coefficient table for memory parameter `p` up to index `m`.
pub fn build_coeffs(p: f64, m: usize) -> Result<CoeffTable> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ErwError::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    if m == 0 {
        return Err(ErwError::Domain("coefficient table needs m >= 1".into()));
    }
    let drift = 2.0 * p - 1.0;
    let mut log_a = Vec::with_capacity(m);
    log_a.push(0.0);
    for k in 1..m {
        let prev = log_a[k - 1];
        log_a.push(prev - (drift / k as f64).ln_1p());
    }
    let gamma_2p = if p == 0.0 { f64::INFINITY } else { gamma(2.0 * p)? };
    Ok(CoeffTable { p, log_a, gamma_2p })
}

impl CoeffTable {
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Largest index `m` covered by the table.
    pub fn len(&self) -> usize {
        self.log_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_a.is_empty()
    }

    /// `Γ(2p)`; infinite at `p = 0`.
    pub fn gamma_2p(&self) -> f64 {
        self.gamma_2p
    }

    /// `log a_k`, 1-based.
    pub fn log_a(&self, k: usize) -> f64 {
        assert!(
            (1..=self.len()).contains(&k),
            "coefficient index {k} outside 1..={}",
            self.len()
        );
        self.log_a[k - 1]
    }

    /// `a_k`, 1-based.
    pub fn a(&self, k: usize) -> f64 {
        self.log_a(k).exp()
    }

    pub fn check_covers(&self, k: usize) -> Result<()> {
        if k > self.len() {
            Err(ErwError::HorizonTooShort {
                needed: k,
                available: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `a_k` through the Gamma-ratio closed form, evaluated with log-Gamma
    /// differences. Only meaningful for `p > 0`.
    pub fn a_gamma_form(&self, k: usize) -> Result<f64> {
        let p = self.p;
        let k = k as f64;
        let log = ln_gamma(2.0 * p)? + ln_gamma(k)? - ln_gamma(k + 2.0 * p - 1.0)?;
        Ok(log.exp())
    }
}

/// Superdiffusive normalizer `s_n = Γ(2p)·n^{3/2-2p}/√(4p-3)` for `3/4 < p < 1`.
pub fn s_norm(p: f64, n: usize) -> Result<f64> {
    if !(p > 0.75 && p < 1.0) {
        return Err(ErwError::Regime {
            regime: "superdiffusive",
            range: "3/4 < p < 1",
            p,
        });
    }
    s_norm_formula(p, n)
}

/// The `s_n` formula without the regime gate; valid wherever `4p > 3`.
pub(crate) fn s_norm_formula(p: f64, n: usize) -> Result<f64> {
    Ok(gamma(2.0 * p)? * (n as f64).powf(1.5 - 2.0 * p) / (4.0 * p - 3.0).sqrt())
}

/// `sup_{t∈[0,T]} |a_{n+[nt]}/a_n − (1+t)^{1−2p}|`, computed exactly.
///
/// On `[j/n, (j+1)/n)` the ratio is constant while `(1+t)^{1-2p}` is
/// monotone, so the supremum over each piece is attained at its endpoints
/// (the right one as a left limit, clipped at `T`).
pub fn lemma1_gap(coeffs: &CoeffTable, n: usize, horizon_t: f64) -> Result<f64> {
    if n == 0 || !(horizon_t >= 0.0) {
        return Err(ErwError::Domain(format!("need n >= 1 and T >= 0 (n={n}, T={horizon_t})")));
    }
    let last = crate::timegrid::floor_mul(n, horizon_t);
    coeffs.check_covers(n + last)?;
    let exponent = 1.0 - 2.0 * coeffs.p();
    let log_a_n = coeffs.log_a(n);
    let nf = n as f64;
    let mut gap = 0.0_f64;
    for j in 0..=last {
        let ratio = (coeffs.log_a(n + j) - log_a_n).exp();
        let left = j as f64 / nf;
        let right = ((j + 1) as f64 / nf).min(horizon_t);
        for t in [left, right] {
            gap = gap.max((ratio - (1.0 + t).powf(exponent)).abs());
        }
    }
    Ok(gap)
}

/// Same quantity as [`lemma1_gap`] but sampled on `{0, step, …, T}`.
/// Never exceeds the exact supremum.
pub fn lemma1_gap_on_grid(coeffs: &CoeffTable, n: usize, horizon_t: f64, step: f64) -> Result<f64> {
    let grid = TimeGrid::uniform(horizon_t, step)?;
    let exponent = 1.0 - 2.0 * coeffs.p();
    let last = crate::timegrid::floor_mul(n, grid.max());
    coeffs.check_covers(n + last)?;
    let log_a_n = coeffs.log_a(n);
    Ok(grid
        .points()
        .iter()
        .map(|&t| {
            let j = crate::timegrid::floor_mul(n, t);
            let ratio = (coeffs.log_a(n + j) - log_a_n).exp();
            (ratio - (1.0 + t).powf(exponent)).abs()
        })
        .fold(0.0, f64::max))
}

/// `τ_n(t) = log_n(n + [n^t])`.
pub fn tau(n: usize, t: f64) -> f64 {
    ((n + floor_pow(n, t)) as f64).ln() / (n as f64).ln()
}

/// Result of a uniform-convergence check of `τ_n` against `1 ∨ t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGap {
    /// `max_grid |τ_n(t) − (1 ∨ t)|`.
    pub gap: f64,
    /// `max_grid τ_n(t)`.
    pub sup_tau: f64,
    /// `max{log 2, |log(1 − n^{−T})|}/log n`.
    pub bound: f64,
}

/// Evaluate `τ_n` on `grid` (points beyond `T` are ignored).
pub fn tau_gap(n: usize, horizon_t: f64, grid: &TimeGrid) -> Result<TauGap> {
    if n < 2 {
        return Err(ErwError::Domain(format!("tau_gap needs n >= 2, got {n}")));
    }
    let (gap, sup_tau) = grid
        .points()
        .iter()
        .filter(|&&t| t <= horizon_t)
        .map(|&t| {
            let value = tau(n, t);
            ((value - t.max(1.0)).abs(), value)
        })
        .fold((0.0_f64, 0.0_f64), |(g, s), (dg, v)| (g.max(dg), s.max(v)));
    let ln_n = (n as f64).ln();
    let tail = (1.0 - (n as f64).powf(-horizon_t)).ln().abs();
    let bound = std::f64::consts::LN_2.max(tail) / ln_n;
    if horizon_t >= 1.0 {
        assert!(
            gap <= bound + 1e-15,
            "tau_n gap {gap} exceeds the explicit bound {bound} at n = {n}"
        );
    }
    Ok(TauGap { gap, sup_tau, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn table_invariants() {
        for &p in &[0.0, 0.3, 0.5, 0.75, 0.9, 1.0] {
            let t = build_coeffs(p, 200).unwrap();
            assert_eq!(t.log_a(1), 0.0);
            for k in 1..200 {
                let step = t.log_a(k) - (1.0 + (2.0 * p - 1.0) / k as f64).ln();
                assert_relative_eq!(t.log_a(k + 1), step, epsilon = 1e-13);
                assert!(t.a(k) > 0.0);
                if p == 0.0 && k >= 2 {
                    assert_eq!(t.a(k), f64::INFINITY);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(build_coeffs(-0.1, 10).is_err());
        assert!(build_coeffs(1.1, 10).is_err());
        assert!(build_coeffs(0.5, 0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let half = build_coeffs(0.5, 1000).unwrap();
        assert!((1..=1000).all(|k| half.log_a(k) == 0.0));

        let three_quarters = build_coeffs(0.75, 10).unwrap();
        assert_relative_eq!(three_quarters.a(2), 2.0 / 3.0, max_relative = 1e-15);

        let one = build_coeffs(1.0, 1000).unwrap();
        for k in 1..=1000 {
            assert_relative_eq!(one.a(k), 1.0 / k as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn gamma_form_agrees_with_recurrence() {
        for &p in &[0.3, 0.75, 0.9] {
            let t = build_coeffs(p, 10_000).unwrap();
            for k in (1..=10_000).step_by(37).chain([10_000]) {
                let closed = t.a_gamma_form(k).unwrap();
                let rel = (t.a(k) - closed).abs() / t.a(k);
                assert!(rel <= 1e-8, "p={p} k={k} rel={rel}");
            }
        }
    }

    #[test]
    fn stirling_asymptotic_at_one_million() {
        let k = 1_000_000;
        for &p in &[0.3, 0.9] {
            let t = build_coeffs(p, k).unwrap();
            let ratio = t.a(k) * (k as f64).powf(2.0 * p - 1.0) / t.gamma_2p();
            assert!((ratio - 1.0).abs() <= 1e-3, "p={p} ratio={ratio}");
        }
    }

    #[test]
    fn s_norm_values() {
        assert!(s_norm(0.75, 10).is_err());
        assert!(s_norm(1.0, 10).is_err());
        assert!(s_norm(0.5, 10).is_err());
        for n in [1, 4, 100] {
            assert_relative_eq!(
                s_norm_formula(1.0, n).unwrap(),
                (n as f64).powf(-0.5),
                max_relative = 1e-12
            );
        }
        // Γ(1.8) from mpmath
        let expected = 0.931_383_770_980_242_7 / 0.6_f64.sqrt();
        assert_relative_eq!(s_norm(0.9, 1).unwrap(), expected, max_relative = 1e-10);
        let ratio = s_norm(0.9, 400).unwrap() / s_norm(0.9, 100).unwrap();
        assert_relative_eq!(ratio, 4.0_f64.powf(-0.3), max_relative = 1e-12);
    }

    #[test]
    fn lemma1_gap_vanishes_without_reinforcement() {
        let t = build_coeffs(0.5, 5000).unwrap();
        assert_eq!(lemma1_gap(&t, 1000, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn lemma1_gap_full_memory_hand_bound() {
        // a-ratio = n/(n+[nt]) and |n/(n+[nt]) - 1/(1+t)| <= 1/n
        let n = 100;
        let t = build_coeffs(1.0, 400).unwrap();
        let gap = lemma1_gap(&t, n, 2.0).unwrap();
        assert!(gap <= 1.0 / n as f64, "gap={gap}");

        // brute force on a fine grid from the explicit ratio
        let brute = (0..=20_000)
            .map(|i| {
                let tt = i as f64 * 1e-4;
                let j = (n as f64 * tt + 1e-9).floor();
                (n as f64 / (n as f64 + j) - 1.0 / (1.0 + tt)).abs()
            })
            .fold(0.0, f64::max);
        assert!(brute <= gap + 1e-12);
        assert!(gap - brute < 1e-3);
    }

    #[test]
    fn lemma1_grid_version_is_dominated() {
        let t = build_coeffs(0.9, 3000).unwrap();
        let exact = lemma1_gap(&t, 1000, 2.0).unwrap();
        let sampled = lemma1_gap_on_grid(&t, 1000, 2.0, 0.013).unwrap();
        assert!(sampled <= exact + 1e-15);
    }

    #[test]
    fn lemma1_gap_scales_like_one_over_n() {
        let t = build_coeffs(0.9, 30_001).unwrap();
        let base = 100.0 * lemma1_gap(&t, 100, 2.0).unwrap();
        assert!(base > 0.0);
        for n in [1_000, 10_000] {
            let scaled = n as f64 * lemma1_gap(&t, n, 2.0).unwrap();
            assert!(scaled <= 1.5 * base, "n={n} n*gap={scaled} base={base}");
        }
    }

    #[test]
    fn lemma1_gap_requires_coverage() {
        let t = build_coeffs(0.9, 100).unwrap();
        assert!(matches!(
            lemma1_gap(&t, 100, 2.0),
            Err(ErwError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn tau_pointwise_examples() {
        for n in [10, 100, 10_000] {
            let ln_n = (n as f64).ln();
            assert_relative_eq!(tau(n, 1.0), 1.0 + 2f64.ln() / ln_n, max_relative = 1e-14);
            let at_zero = tau(n, 0.0);
            assert_relative_eq!(at_zero, ((n + 1) as f64).ln() / ln_n, max_relative = 1e-14);
            assert!(at_zero > 1.0 && at_zero < 1.0 + 2f64.ln() / ln_n);
        }
    }

    #[test]
    fn tau_gap_bounds_and_monotonicity() {
        let grid = TimeGrid::uniform(2.0, 0.01).unwrap();
        let g4 = tau_gap(10_000, 2.0, &grid).unwrap();
        assert!(g4.gap <= 2f64.ln() / 10_000f64.ln() + 1e-15);
        assert!(g4.sup_tau <= 3.0);

        let gaps: Vec<f64> = [100, 1_000, 10_000]
            .iter()
            .map(|&n| tau_gap(n, 2.0, &grid).unwrap().gap)
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(tau_gap(1, 2.0, &grid).is_err());
    }
}
