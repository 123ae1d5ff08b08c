//! Martingale view `M_k = a_k S_k` of a path and numerical diagnostics for
//! the two hypotheses of the martingale functional CLT: convergence of the
//! conditional-variance clock and Lindeberg negligibility.
//!
//! Conditional variances are exact: with `X_k ∈ {±1}`,
//! `E[(ΔM_k)² | F_{k−1}] = a_k² (1 − drift_{k−1}²)` where
//! `drift_{k−1} = (2p−1) S_{k−1}/(k−1)`.

use serde::{Deserialize, Serialize};

use crate::coeff::{s_norm, CoeffTable};
use crate::error::{ErwError, Result};
use crate::scaling::Regime;
use crate::special::gamma;
use crate::timegrid::{floor_mul, floor_pow};

/// `M_k` and `ΔM_k` for `k = 0..=horizon` (`M_0 = 0`, `ΔM_0 = 0`).
#[derive(Debug, Clone)]
pub struct MartingaleView<'a> {
    coeffs: &'a CoeffTable,
    path: &'a [i32],
    m_values: Vec<f64>,
    increments: Vec<f64>,
}

pub fn build_view<'a>(path: &'a [i32], coeffs: &'a CoeffTable) -> Result<MartingaleView<'a>> {
    let horizon = path.len().saturating_sub(1);
    if horizon == 0 || coeffs.len() < horizon {
        return Err(ErwError::LengthMismatch {
            left: horizon,
            right: coeffs.len(),
        });
    }
    let mut m_values = Vec::with_capacity(horizon + 1);
    m_values.push(0.0);
    m_values.extend((1..=horizon).map(|k| coeffs.a(k) * path[k] as f64));
    let mut increments = Vec::with_capacity(horizon + 1);
    increments.push(0.0);
    increments.extend(m_values.windows(2).map(|w| w[1] - w[0]));
    Ok(MartingaleView {
        coeffs,
        path,
        m_values,
        increments,
    })
}

impl<'a> MartingaleView<'a> {
    pub fn horizon(&self) -> usize {
        self.path.len() - 1
    }

    pub fn p(&self) -> f64 {
        self.coeffs.p()
    }

    pub fn path(&self) -> &'a [i32] {
        self.path
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `max_k |ΔM_k| / a_k`; at most 2.
    pub fn max_increment_ratio(&self) -> f64 {
        (1..=self.horizon())
            .map(|k| self.increments[k].abs() / self.coeffs.a(k))
            .fold(0.0, f64::max)
    }

    /// `max_{k>=2} |ΔM_k − a_k (X_k − drift_{k−1})|`.
    pub fn max_identity_error(&self) -> f64 {
        (2..=self.horizon())
            .map(|k| {
                let step = (self.path[k] - self.path[k - 1]) as f64;
                let expected = self.coeffs.a(k) * (step - self.drift(k - 1));
                (self.increments[k] - expected).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `E[X_{k+1} | F_k]` for `k >= 1`.
    fn drift(&self, k: usize) -> f64 {
        (2.0 * self.p() - 1.0) * self.path[k] as f64 / k as f64
    }

    /// `Σ_{k=from}^{to} a_k² (1 − drift_{k−1}²)`. The `k = 1` term uses
    /// `E[X_1²] = 1` since there is no past to condition on.
    pub fn conditional_variance(&self, from: usize, to: usize) -> f64 {
        (from.max(1)..=to)
            .map(|k| {
                let a = self.coeffs.a(k);
                let d = if k == 1 { 0.0 } else { self.drift(k - 1) };
                a * a * (1.0 - d * d)
            })
            .sum()
    }

    fn require(&self, regime: Regime, last: usize) -> Result<()> {
        regime.check(self.p())?;
        if last > self.horizon() {
            return Err(ErwError::HorizonTooShort {
                needed: last,
                available: self.horizon(),
            });
        }
        Ok(())
    }
}

/// `V_n(t) = s_n^{−2} Σ_{k=n+1}^{n+[nt]} a_k²(1 − drift_{k−1}²)`, `3/4 < p < 1`.
pub fn cond_var_sum_superdiffusive(view: &MartingaleView, n: usize, t: f64) -> Result<f64> {
    let last = n + floor_mul(n, t);
    view.require(Regime::Superdiffusive, last)?;
    let s = s_norm(view.p(), n)?;
    Ok(view.conditional_variance(n + 1, last) / (s * s))
}

/// Conditional-variance clock of `ΔM_k / (Γ(2p) n^{3/2−2p})` up to `[nt]`,
/// `0 <= p < 3/4`.
pub fn cond_var_sum_diffusive(view: &MartingaleView, n: usize, t: f64) -> Result<f64> {
    let last = floor_mul(n, t);
    view.require(Regime::Diffusive, last)?;
    let p = view.p();
    if p == 0.0 {
        return Err(ErwError::Domain("Γ(2p) diverges at p = 0".into()));
    }
    let norm = gamma(2.0 * p)? * (n as f64).powf(1.5 - 2.0 * p);
    Ok(view.conditional_variance(1, last) / (norm * norm))
}

/// Conditional-variance clock of `ΔM_k / (Γ(3/2) √(log n))` up to `[n^t]`,
/// `p = 3/4`.
pub fn cond_var_sum_critical(view: &MartingaleView, n: usize, t: f64) -> Result<f64> {
    if n < 2 {
        return Err(ErwError::Domain("critical normalization needs n >= 2".into()));
    }
    let last = floor_pow(n, t);
    view.require(Regime::Critical, last)?;
    let norm_sq = gamma(1.5)?.powi(2) * (n as f64).ln();
    Ok(view.conditional_variance(1, last) / norm_sq)
}

/// Upper bound `16/(ε² s_n⁴) Σ_{k>n} a_k⁴` on the Lindeberg sum of the
/// superdiffusive array.
///
/// Terms up to `tail_horizon` are summed exactly, continuing the product
/// recurrence past the end of `coeffs`. Beyond that, `a_k ≈ a_H (H/k)^{2p−1}`
/// and `Σ_{k>H} k^{4(1−2p)} ≈ ∫_H^∞ x^{4(1−2p)} dx = H^{5−8p}/(8p−5)`,
/// giving the remainder `a_H⁴ H/(8p−5)`.
pub fn lindeberg_bound_superdiffusive(
    coeffs: &CoeffTable,
    n: usize,
    eps: f64,
    tail_horizon: usize,
) -> Result<f64> {
    let p = coeffs.p();
    Regime::Superdiffusive.check(p)?;
    if !(eps > 0.0) {
        return Err(ErwError::Domain(format!("eps must be positive, got {eps}")));
    }
    if tail_horizon <= n {
        return Err(ErwError::Domain(format!(
            "tail horizon {tail_horizon} must exceed n = {n}"
        )));
    }
    coeffs.check_covers(n)?;
    let drift = 2.0 * p - 1.0;
    let mut log_a = coeffs.log_a(n);
    let mut sum = 0.0;
    for k in (n + 1)..=tail_horizon {
        // log a_k from log a_{k-1}
        log_a = if k <= coeffs.len() {
            coeffs.log_a(k)
        } else {
            log_a - (drift / (k - 1) as f64).ln_1p()
        };
        sum += (4.0 * log_a).exp();
    }
    let remainder = (4.0 * log_a).exp() * tail_horizon as f64 / (8.0 * p - 5.0);
    let s = s_norm(p, n)?;
    Ok(16.0 / (eps * eps * s.powi(4)) * (sum + remainder))
}

/// Asymptotic constant `16(4p−3)²/(ε²(8p−5))` of `n · bound`.
pub fn lindeberg_constant(p: f64, eps: f64) -> f64 {
    16.0 * (4.0 * p - 3.0).powi(2) / (eps * eps * (8.0 * p - 5.0))
}

/// Path-averaged conditional-variance clock against its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub regime: Regime,
    pub n: usize,
    pub t: f64,
    pub mean_v: f64,
    pub target: f64,
    pub abs_error: f64,
    pub n_paths: usize,
}

/// Limit of the conditional-variance clock at `t`.
pub fn clock_target(regime: Regime, p: f64, t: f64) -> f64 {
    match regime {
        Regime::Superdiffusive => 1.0 - (1.0 + t).powf(3.0 - 4.0 * p),
        Regime::Diffusive => t.powf(3.0 - 4.0 * p) / (3.0 - 4.0 * p),
        Regime::Critical => t,
        Regime::DiffusiveShifted | Regime::CriticalShifted => f64::NAN,
    }
}

/// Average `V_n(t)` over the given paths.
pub fn condition_a_report<'p, I>(
    regime: Regime,
    coeffs: &CoeffTable,
    paths: I,
    n: usize,
    t: f64,
) -> Result<ConditionReport>
where
    I: IntoIterator<Item = &'p [i32]>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for path in paths {
        let view = build_view(path, coeffs)?;
        total += match regime {
            Regime::Superdiffusive => cond_var_sum_superdiffusive(&view, n, t)?,
            Regime::Diffusive => cond_var_sum_diffusive(&view, n, t)?,
            Regime::Critical => cond_var_sum_critical(&view, n, t)?,
            other => {
                return Err(ErwError::Domain(format!(
                    "no conditional-variance clock for {other:?}"
                )))
            }
        };
        count += 1;
    }
    if count == 0 {
        return Err(ErwError::Domain("no paths".into()));
    }
    let mean_v = total / count as f64;
    let target = clock_target(regime, coeffs.p(), t);
    Ok(ConditionReport {
        regime,
        n,
        t,
        mean_v,
        target,
        abs_error: (mean_v - target).abs(),
        n_paths: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::build_coeffs;
    use crate::walk::{simulate, SamplingMode, WalkParams};
    use approx::assert_relative_eq;

    fn paths(p: f64, horizon: usize, n_paths: usize, seed: u64) -> crate::walk::PathBatch {
        let params = WalkParams::new(p, 0.5, horizon, seed, SamplingMode::Markov).unwrap();
        simulate(&params, n_paths).unwrap()
    }

    #[test]
    fn view_special_cases() {
        let b = paths(0.5, 50, 3, 1);
        let c = build_coeffs(0.5, 50).unwrap();
        for path in b.iter() {
            let v = build_view(path, &c).unwrap();
            assert_eq!(v.m_values()[1], path[1] as f64);
            for k in 0..=50 {
                assert_eq!(v.m_values()[k], path[k] as f64);
            }
        }
        let b = paths(1.0, 50, 3, 2);
        let c = build_coeffs(1.0, 50).unwrap();
        for path in b.iter() {
            let v = build_view(path, &c).unwrap();
            for k in 1..=50 {
                assert_relative_eq!(v.m_values()[k], path[1] as f64, max_relative = 1e-12);
            }
        }
        assert!(build_view(b.path(0), &build_coeffs(1.0, 49).unwrap()).is_err());
    }

    #[test]
    fn increment_invariants_hold() {
        for &p in &[0.1, 0.3, 0.75, 0.9, 0.99] {
            let b = paths(p, 2000, 20, 3);
            let c = build_coeffs(p, 2000).unwrap();
            for path in b.iter() {
                let v = build_view(path, &c).unwrap();
                assert!(v.max_increment_ratio() <= 2.0 + 1e-12);
                let scale = (1..=2000).map(|k| c.a(k)).fold(0.0, f64::max);
                assert!(v.max_identity_error() <= 1e-12 * scale.max(1.0), "p={p}");
            }
        }
    }

    #[test]
    fn superdiffusive_sum_edge_cases() {
        let c = build_coeffs(0.9, 400).unwrap();
        let b = paths(0.9, 400, 1, 4);
        let v = build_view(b.path(0), &c).unwrap();
        assert_eq!(cond_var_sum_superdiffusive(&v, 100, 0.005).unwrap(), 0.0);
        assert!(cond_var_sum_superdiffusive(&v, 200, 1.5).is_err());

        let ballistic: Vec<i32> = (0..=400).collect();
        let v = build_view(&ballistic, &c).unwrap();
        let s = s_norm(0.9, 100).unwrap();
        let want: f64 = (101..=200).map(|k| c.a(k).powi(2)).sum::<f64>() * (1.0 - 0.8f64.powi(2)) / (s * s);
        assert_relative_eq!(cond_var_sum_superdiffusive(&v, 100, 1.0).unwrap(), want, max_relative = 1e-12);

        let c = build_coeffs(0.7, 400).unwrap();
        let v = build_view(&ballistic, &c).unwrap();
        assert!(cond_var_sum_superdiffusive(&v, 100, 1.0).is_err());
    }

    #[test]
    fn superdiffusive_sum_increases_in_t() {
        let c = build_coeffs(0.9, 3000).unwrap();
        let b = paths(0.9, 3000, 50, 5);
        let grid = [0.25, 0.5, 1.0, 1.5, 2.0];
        let means: Vec<f64> = grid
            .iter()
            .map(|&t| {
                b.iter()
                    .map(|p| cond_var_sum_superdiffusive(&build_view(p, &c).unwrap(), 1000, t).unwrap())
                    .sum::<f64>()
            })
            .collect();
        assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
    }

    #[test]
    fn diffusive_clock_symmetric_walk_is_identity() {
        let c = build_coeffs(0.5, 1000).unwrap();
        let b = paths(0.5, 1000, 2, 6);
        let v = build_view(b.path(0), &c).unwrap();
        for t in [0.1, 0.5, 1.0] {
            assert_relative_eq!(cond_var_sum_diffusive(&v, 1000, t).unwrap(), t, max_relative = 1e-12);
        }
    }

    #[test]
    fn diffusive_clock_matches_limit() {
        let n = 5000;
        let c = build_coeffs(0.3, n).unwrap();
        let b = paths(0.3, n, 100, 7);
        let rep = condition_a_report(Regime::Diffusive, &c, b.iter(), n, 1.0).unwrap();
        assert_relative_eq!(rep.target, 1.0 / 1.8, max_relative = 1e-14);
        assert!(rep.abs_error <= 0.05 * rep.target, "{rep:?}");
    }

    #[test]
    fn critical_clock_at_zero_is_small() {
        let c = build_coeffs(0.75, 1000).unwrap();
        let b = paths(0.75, 1000, 1, 8);
        let v = build_view(b.path(0), &c).unwrap();
        let at_zero = cond_var_sum_critical(&v, 1000, 0.0).unwrap();
        assert_relative_eq!(at_zero, 1.0 / (gamma(1.5).unwrap().powi(2) * 1000f64.ln()), max_relative = 1e-12);
        assert!(cond_var_sum_critical(&v, 1000, 1.01).is_err());
    }

    #[test]
    fn lindeberg_bound_behaviour() {
        let c = build_coeffs(0.9, 100_000).unwrap();
        let bounds: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&n| lindeberg_bound_superdiffusive(&c, n, 0.1, 100 * n).unwrap())
            .collect();
        assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");
        let constant = lindeberg_constant(0.9, 0.1);
        assert_relative_eq!(constant, 16.0 * 0.36 / (0.01 * 2.2), max_relative = 1e-14);
        let scaled = 100_000.0 * bounds[2];
        assert!((scaled - constant).abs() <= 0.25 * constant, "{scaled} vs {constant}");

        let big_eps = lindeberg_bound_superdiffusive(&c, 1000, 1e6, 100_000).unwrap();
        assert!(big_eps < 1e-9);
        assert!(lindeberg_bound_superdiffusive(&c, 1000, 0.0, 100_000).is_err());
        assert!(lindeberg_bound_superdiffusive(&build_coeffs(0.6, 10).unwrap(), 5, 0.1, 50).is_err());
    }

    #[test]
    fn lindeberg_remainder_is_consistent() {
        // same bound whether the tail is summed or integrated
        let c = build_coeffs(0.9, 1000).unwrap();
        let short = lindeberg_bound_superdiffusive(&c, 1000, 0.1, 20_000).unwrap();
        let long = lindeberg_bound_superdiffusive(&c, 1000, 0.1, 2_000_000).unwrap();
        assert_relative_eq!(short, long, max_relative = 1e-3);
    }
}
