//! Empirical distributions and the statistical checks that compare simulated
//! walks with their Gaussian limits.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{ErwError, Result};
use crate::special::erf;

/// Sorted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    samples: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(ErwError::Domain("empirical distribution needs a sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(ErwError::Domain("NaN in sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct values with the count of samples `<=` each.
    fn steps(&self) -> impl Iterator<Item = (f64, usize, usize)> + '_ {
        let mut i = 0;
        std::iter::from_fn(move || {
            if i >= self.samples.len() {
                return None;
            }
            let x = self.samples[i];
            let below = i;
            while i < self.samples.len() && self.samples[i] == x {
                i += 1;
            }
            Some((x, below, i))
        })
    }
}

/// `Φ(x/σ)` for variance `sigma2`.
pub fn normal_cdf(x: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(ErwError::Domain(format!("variance must be positive, got {sigma2}")));
    }
    Ok(0.5 * (1.0 + erf(x / (sigma2 * 2.0).sqrt())))
}

/// Kolmogorov–Smirnov distance to `N(mean, sigma2)`.
pub fn ks_vs_normal_with_mean(dist: &EmpiricalDist, mean: f64, sigma2: f64) -> Result<f64> {
    let n = dist.len() as f64;
    let mut d = 0.0_f64;
    for (x, below, upto) in dist.steps() {
        let phi = normal_cdf(x - mean, sigma2)?;
        d = d.max((below as f64 / n - phi).abs()).max((upto as f64 / n - phi).abs());
    }
    Ok(d)
}

/// Kolmogorov–Smirnov distance to `N(0, sigma2)`.
pub fn ks_vs_normal(dist: &EmpiricalDist, sigma2: f64) -> Result<f64> {
    ks_vs_normal_with_mean(dist, 0.0, sigma2)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &EmpiricalDist, b: &EmpiricalDist) -> f64 {
    let (xs, ys) = (a.samples(), b.samples());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov quantile `c(α)/√N` for the one-sample statistic.
pub fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Asymptotic two-sample quantile `c(α)·√((n+m)/(n·m))`.
pub fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// Sample mean, unbiased variance and (biased) fourth central moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub fourth: f64,
}

pub fn moments(xs: &[f64]) -> Result<Moments> {
    if xs.len() < 2 {
        return Err(ErwError::Domain("moments need at least two samples".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (m2, m4) = xs.iter().fold((0.0, 0.0), |(m2, m4), x| {
        let d = x - mean;
        let d2 = d * d;
        (m2 + d2, m4 + d2 * d2)
    });
    Ok(Moments {
        mean,
        variance: m2 / (n - 1.0),
        fourth: m4 / n,
    })
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(ErwError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(ErwError::Domain("need at least two paired samples".into()));
    }
    Ok(())
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0))
}

/// Standard error of the sample covariance, from the spread of the centred
/// products `(x − x̄)(y − ȳ)`.
pub fn covariance_standard_error(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let products: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    Ok((moments(&products)?.variance / n).sqrt())
}

/// Pearson correlation.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let cov = covariance(xs, ys)?;
    let vx = covariance(xs, xs)?;
    let vy = covariance(ys, ys)?;
    if vx == 0.0 || vy == 0.0 {
        return Err(ErwError::ZeroVariance);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// A probability mass function on the integer lattice.
pub type LatticePmf = BTreeMap<i64, f64>;

/// Relative frequencies of integer samples.
pub fn empirical_pmf<I: IntoIterator<Item = i64>>(values: I) -> LatticePmf {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    let mut total = 0usize;
    for v in values {
        *counts.entry(v).or_default() += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect()
}

/// `½ Σ |a − b|` over the union of supports.
pub fn tv_distance(a: &LatticePmf, b: &LatticePmf) -> f64 {
    let mut keys: Vec<i64> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Outcome of one check.
///
/// Two-sided reports pass iff `|observed − target| <= tolerance`. One-sided
/// reports carry `metadata["sided"]`: `"upper"` passes iff `observed <= target`,
/// `"lower"` iff `observed > target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub n_samples: u64,
    pub metadata: BTreeMap<String, String>,
}

impl TestReport {
    pub fn two_sided(name: impl Into<String>, observed: f64, target: f64, tolerance: f64, n_samples: u64) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("sided".into(), "two".into());
        Self {
            name: name.into(),
            observed,
            target,
            tolerance,
            pass: (observed - target).abs() <= tolerance,
            n_samples,
            metadata,
        }
    }

    pub fn upper_bound(name: impl Into<String>, observed: f64, bound: f64, n_samples: u64) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("sided".into(), "upper".into());
        Self {
            name: name.into(),
            observed,
            target: bound,
            tolerance: 0.0,
            pass: observed <= bound,
            n_samples,
            metadata,
        }
    }

    /// Pass iff `observed > bound`; used for negative controls.
    pub fn lower_bound(name: impl Into<String>, observed: f64, bound: f64, n_samples: u64) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("sided".into(), "lower".into());
        Self {
            name: name.into(),
            observed,
            target: bound,
            tolerance: 0.0,
            pass: observed > bound,
            n_samples,
            metadata,
        }
    }

    /// Pass iff `observed ∈ [lo, hi]`, recorded as target = midpoint.
    pub fn within(name: impl Into<String>, observed: f64, lo: f64, hi: f64, n_samples: u64) -> Self {
        let mut r = Self::two_sided(name, observed, 0.5 * (lo + hi), 0.5 * (hi - lo), n_samples);
        r.pass = (lo..=hi).contains(&observed);
        r.metadata.insert("interval".into(), format!("[{lo}, {hi}]"));
        r
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    /// Recompute `pass` from the stored fields.
    pub fn consistent(&self) -> bool {
        let expected = match self.metadata.get("sided").map(String::as_str) {
            Some("upper") => self.observed <= self.target,
            Some("lower") => self.observed > self.target,
            _ => match self.metadata.get("interval") {
                Some(_) => (self.observed - self.target).abs() <= self.tolerance * (1.0 + 1e-12),
                None => (self.observed - self.target).abs() <= self.tolerance,
            },
        };
        expected == self.pass
    }
}

/// Pearson chi-square for independence of the signs of two samples.
pub fn sign_quadrant_chi_square(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let mut table = [[0.0f64; 2]; 2];
    for (x, y) in xs.iter().zip(ys) {
        table[(*x >= 0.0) as usize][(*y >= 0.0) as usize] += 1.0;
    }
    let n = xs.len() as f64;
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut chi = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let expected = rows[r] * cols[c] / n;
            if expected > 0.0 {
                chi += (table[r][c] - expected).powi(2) / expected;
            }
        }
    }
    Ok(chi)
}

/// Two-sided 1% normal quantile used for the correlation tolerance.
pub const Z_99: f64 = 2.58;
/// Allowance for finite-`n` dependence between fluctuation and drift.
pub const FINITE_N_SLACK: f64 = 0.01;

/// Asymptotic independence of the fluctuation field from the almost-sure
/// drift limit, tested through `|corr(fluct, l_hat)| <= 2.58/√N + 0.01`.
pub fn stable_independence_check(fluct: &[f64], l_hat: &[f64]) -> Result<TestReport> {
    let corr = correlation(fluct, l_hat)?;
    let chi = sign_quadrant_chi_square(fluct, l_hat)?;
    let n = fluct.len();
    let tolerance = Z_99 / (n as f64).sqrt() + FINITE_N_SLACK;
    Ok(
        TestReport::two_sided("stable-independence", corr.abs(), 0.0, tolerance, n as u64)
            .with_meta("correlation", corr)
            .with_meta("sign_chi_square", chi)
            // 1% critical value of chi-square with one degree of freedom
            .with_meta("sign_chi_square_critical", 6.635),
    )
}

/// Standard normal CDF at `x / SQRT_2` helper kept for callers that work with
/// unit variance directly.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}
