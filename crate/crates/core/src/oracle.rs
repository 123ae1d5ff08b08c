//! Exact law of `S_n` by forward dynamic programming over the
//! time-inhomogeneous chain.

use crate::coeff::CoeffTable;
use crate::error::{ErwError, Result};
use crate::walk::up_probability;

/// Probability mass function of `S_n` on `{−n, −n+2, …, n}`.
///
/// Entry `i` of `probs` is `P(S_n = 2i − n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLaw {
    pub p: f64,
    pub q: f64,
    pub n: usize,
    probs: Vec<f64>,
}

impl ExactLaw {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `(s, P(S_n = s))` in increasing `s`.
    pub fn pmf(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.n as i64;
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &pr)| (2 * i as i64 - n, pr))
    }

    pub fn prob(&self, s: i64) -> f64 {
        let n = self.n as i64;
        if s.abs() > n || (s + n) % 2 != 0 {
            return 0.0;
        }
        self.probs[((s + n) / 2) as usize]
    }

    /// `|Σ P − 1|`. Mass is never renormalized, so this is a health metric.
    pub fn mass_drift(&self) -> f64 {
        (kahan_sum(self.probs.iter().copied()) - 1.0).abs()
    }
}

/// Forward DP from `{+1: q, −1: 1−q}` at time 1. O(n²) time, O(n) memory.
pub fn exact_law(p: f64, q: f64, n: usize) -> Result<ExactLaw> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(ErwError::Domain(format!("p, q must lie in [0, 1], got ({p}, {q})")));
    }
    if n == 0 {
        return Err(ErwError::Domain("exact_law needs n >= 1".into()));
    }
    let mut cur = Vec::with_capacity(n + 1);
    let mut next = Vec::with_capacity(n + 1);
    cur.extend_from_slice(&[1.0 - q, q]);
    for k in 1..n {
        next.clear();
        next.resize(k + 2, 0.0);
        for (i, &mass) in cur.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let s = 2 * i as i64 - k as i64;
            let up = up_probability(p, s, k);
            next[i + 1] += mass * up;
            next[i] += mass * (1.0 - up);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(ExactLaw { p, q, n, probs: cur })
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `E[S_n^order]`, compensated summation.
pub fn exact_moment(law: &ExactLaw, order: u32) -> f64 {
    kahan_sum(law.pmf().map(|(s, pr)| (s as f64).powi(order as i32) * pr))
}

/// `|a_n·E[S_n] − (2q − 1)|`; zero for an exact martingale `a_n S_n`.
pub fn martingale_identity_error(p: f64, q: f64, n: usize, coeffs: &CoeffTable) -> Result<f64> {
    coeffs.check_covers(n)?;
    if (coeffs.p() - p).abs() > 0.0 {
        return Err(ErwError::Domain(format!(
            "coefficient table built for p = {}, asked for p = {p}",
            coeffs.p()
        )));
    }
    if !coeffs.a(n).is_finite() {
        // p = 0 makes the first factor (1 − 1/1)^{-1} blow up, so a_n = ∞ for n >= 2
        return Err(ErwError::Domain(format!("a_{n} is infinite at p = {p}")));
    }
    let law = exact_law(p, q, n)?;
    Ok((coeffs.a(n) * exact_moment(&law, 1) - (2.0 * q - 1.0)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::build_coeffs;
    use approx::assert_relative_eq;

    /// Second moments from `E[S_{k+1}²] = (1 + 2(2p−1)/k)·E[S_k²] + 1`, `E[S_1²] = 1`.
    fn second_moment_recursion(p: f64, n: usize) -> f64 {
        (1..n).fold(1.0, |e, k| (1.0 + 2.0 * (2.0 * p - 1.0) / k as f64) * e + 1.0)
    }

    fn binomial_pmf(n: usize, k: usize) -> f64 {
        let ln_choose: f64 = (1..=k).map(|j| ((n - k + j) as f64 / j as f64).ln()).sum();
        (ln_choose - n as f64 * 2f64.ln()).exp()
    }

    #[test]
    fn first_two_steps() {
        let (p, q) = (0.65, 0.3);
        let one = exact_law(p, q, 1).unwrap();
        assert_eq!(one.prob(1), q);
        assert_eq!(one.prob(-1), 1.0 - q);
        let two = exact_law(p, q, 2).unwrap();
        assert_relative_eq!(two.prob(2), p * q, epsilon = 1e-15);
        assert_relative_eq!(two.prob(0), 1.0 - p, epsilon = 1e-15);
        assert_relative_eq!(two.prob(-2), p * (1.0 - q), epsilon = 1e-15);
        assert_eq!(two.prob(1), 0.0);
        assert_eq!(two.prob(4), 0.0);
    }

    #[test]
    fn symmetric_case_is_binomial() {
        let n = 200;
        let law = exact_law(0.5, 0.5, n).unwrap();
        for (i, &pr) in law.probs().iter().enumerate() {
            assert_relative_eq!(pr, binomial_pmf(n, i), epsilon = 1e-14);
        }
        assert_relative_eq!(exact_moment(&law, 2), n as f64, max_relative = 1e-12);
    }

    #[test]
    fn law_invariants() {
        for &(p, q, n) in &[(0.0, 0.2, 50), (0.3, 0.7, 300), (0.75, 0.5, 999), (1.0, 0.5, 40)] {
            let law = exact_law(p, q, n).unwrap();
            assert_eq!(law.probs().len(), n + 1);
            assert!(law.probs().iter().all(|&x| x >= 0.0));
            assert!(law.mass_drift() <= 1e-12);
        }
    }

    #[test]
    fn mass_drift_stays_small_over_long_runs() {
        let law = exact_law(0.9, 0.7, 20_000).unwrap();
        assert!(law.mass_drift() <= 2e-12, "{}", law.mass_drift());
    }

    #[test]
    fn moment_examples() {
        let q = 0.8;
        assert_relative_eq!(exact_moment(&exact_law(0.4, q, 1).unwrap(), 1), 2.0 * q - 1.0);
        let p = 0.35;
        assert_relative_eq!(
            exact_moment(&exact_law(p, q, 2).unwrap(), 2),
            4.0 * p,
            max_relative = 1e-14
        );
        for n in [3, 17, 64] {
            let law = exact_law(0.5, 0.5, n).unwrap();
            assert_relative_eq!(exact_moment(&law, 2), n as f64, max_relative = 1e-12);
            // E[S^4] = 3n² − 2n for the simple walk
            let n = n as f64;
            assert_relative_eq!(exact_moment(&law, 4), 3.0 * n * n - 2.0 * n, max_relative = 1e-12);
        }
    }

    #[test]
    fn second_moment_matches_recursion() {
        for &(p, n) in &[(0.3, 500), (0.75, 800), (0.9, 600)] {
            let law = exact_law(p, 0.5, n).unwrap();
            assert_relative_eq!(
                exact_moment(&law, 2),
                second_moment_recursion(p, n),
                max_relative = 1e-11
            );
        }
    }

    #[test]
    fn martingale_identity_grid() {
        for &p in &[0.0, 0.3, 0.75, 0.9, 1.0] {
            let coeffs = build_coeffs(p, 512).unwrap();
            for &q in &[0.0, 0.5, 0.7] {
                for n in [1, 2, 64, 512] {
                    if p == 0.0 && n > 1 {
                        assert!(martingale_identity_error(p, q, n, &coeffs).is_err());
                        continue;
                    }
                    let err = martingale_identity_error(p, q, n, &coeffs).unwrap();
                    assert!(err <= 1e-10, "p={p} q={q} n={n} err={err}");
                }
            }
        }
    }

    #[test]
    fn zero_drift_keeps_first_step_mean() {
        for n in [1, 5, 100] {
            let law = exact_law(0.5, 0.0, n).unwrap();
            assert!((exact_moment(&law, 1) + 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn martingale_identity_checks_table() {
        let coeffs = build_coeffs(0.9, 10).unwrap();
        assert!(martingale_identity_error(0.9, 0.5, 11, &coeffs).is_err());
        assert!(martingale_identity_error(0.8, 0.5, 5, &coeffs).is_err());
    }

    #[test]
    fn second_moment_regimes() {
        let diff = exact_moment(&exact_law(0.3, 0.5, 4096).unwrap(), 2) * (3.0 - 4.0 * 0.3) / 4096.0;
        assert!((0.98..=1.02).contains(&diff), "{diff}");

        let n = 4096.0f64;
        let sup = exact_moment(&exact_law(0.9, 0.5, 4096).unwrap(), 2)
            * (4.0 * 0.9 - 3.0)
            * crate::special::gamma(4.0 * 0.9 - 2.0).unwrap()
            / n.powf(4.0 * 0.9 - 2.0);
        assert!((0.90..=1.10).contains(&sup), "{sup}");
    }
}
