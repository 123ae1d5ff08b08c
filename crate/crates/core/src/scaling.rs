//! Rescaled walks on time grids.
//!
//! | regime              | value at `t`                                           |
//! |---------------------|--------------------------------------------------------|
//! | `Diffusive`         | `S_[nt] / √n`                                          |
//! | `Superdiffusive`    | `((1+t)^{1−2p} S_{n+[nt]} − S_n) / √n`                  |
//! | `DiffusiveShifted`  | same as superdiffusive, for `p < 3/4`                  |
//! | `Critical`          | `S_[n^t] / √(n^t log n)`                               |
//! | `CriticalShifted`   | `(√(n/(n+[n^t])) S_{n+[n^t]} − S_n) / √(n log n)`      |
//!
//! `log` is the natural logarithm.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ErwError, Result};
use crate::timegrid::{floor_mul, floor_pow, TimeGrid};
use crate::walk::{map_paths, PathBatch, WalkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Diffusive,
    Critical,
    Superdiffusive,
    DiffusiveShifted,
    CriticalShifted,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Diffusive,
        Regime::Critical,
        Regime::Superdiffusive,
        Regime::DiffusiveShifted,
        Regime::CriticalShifted,
    ];

    /// Check that `p` satisfies the hypotheses of this regime's limit theorem.
    pub fn check(self, p: f64) -> Result<()> {
        let (ok, regime, range) = match self {
            Regime::Diffusive | Regime::DiffusiveShifted => {
                ((0.0..0.75).contains(&p), "diffusive", "0 <= p < 3/4")
            }
            Regime::Critical | Regime::CriticalShifted => (p == 0.75, "critical", "p = 3/4"),
            Regime::Superdiffusive => (p > 0.75 && p < 1.0, "superdiffusive", "3/4 < p < 1"),
        };
        if ok {
            Ok(())
        } else {
            Err(ErwError::Regime { regime, range, p })
        }
    }
}

/// One rescaled grid value per (path, time point), row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGrid {
    pub regime: Regime,
    pub n: usize,
    pub grid: TimeGrid,
    values: Vec<f64>,
}

impl ScaledGrid {
    pub fn new(regime: Regime, n: usize, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() % grid.len() != 0 {
            return Err(ErwError::LengthMismatch {
                left: values.len(),
                right: grid.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ErwError::Domain("scaled values must be finite".into()));
        }
        Ok(Self {
            regime,
            n,
            grid,
            values,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.values.len() / self.grid.len()
    }

    pub fn row(&self, path: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[path * w..(path + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.grid.len())
    }

    /// All paths' values at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Values at the grid point equal to `t`, if present.
    pub fn column_at(&self, t: f64) -> Option<Vec<f64>> {
        let j = self.grid.points().iter().position(|&x| (x - t).abs() < 1e-12)?;
        Some(self.column(j))
    }

    /// CSV with header `path_id,t,value`, one row per (path, t).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path_id,t,value")?;
        for (i, row) in self.rows().enumerate() {
            for (t, v) in self.grid.points().iter().zip(row) {
                writeln!(out, "{i},{t},{v:.12e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Term {
    index: usize,
    weight: f64,
}

/// Precomputed indices and weights for one (regime, p, n, grid).
///
/// Each grid value is `weight·S_index − base_weight·S_base`.
#[derive(Debug, Clone)]
pub struct Scaler {
    regime: Regime,
    n: usize,
    grid: TimeGrid,
    terms: Vec<Term>,
    base: Option<Term>,
    required_horizon: usize,
}

impl Scaler {
    pub fn new(regime: Regime, p: f64, n: usize, grid: &TimeGrid) -> Result<Self> {
        regime.check(p)?;
        if n == 0 || (matches!(regime, Regime::Critical | Regime::CriticalShifted) && n < 2) {
            return Err(ErwError::Domain(format!("scaling index n = {n} too small")));
        }
        let nf = n as f64;
        let sqrt_n = nf.sqrt();
        let ln_n = nf.ln();
        let pts = grid.points();
        let (terms, base): (Vec<Term>, Option<Term>) = match regime {
            Regime::Diffusive => (
                pts.iter()
                    .map(|&t| Term {
                        index: floor_mul(n, t),
                        weight: 1.0 / sqrt_n,
                    })
                    .collect(),
                None,
            ),
            Regime::Superdiffusive | Regime::DiffusiveShifted => (
                pts.iter()
                    .map(|&t| Term {
                        index: n + floor_mul(n, t),
                        weight: (1.0 + t).powf(1.0 - 2.0 * p) / sqrt_n,
                    })
                    .collect(),
                Some(Term {
                    index: n,
                    weight: 1.0 / sqrt_n,
                }),
            ),
            Regime::Critical => (
                pts.iter()
                    .map(|&t| Term {
                        index: floor_pow(n, t),
                        weight: 1.0 / (nf.powf(t) * ln_n).sqrt(),
                    })
                    .collect(),
                None,
            ),
            Regime::CriticalShifted => {
                let norm = (nf * ln_n).sqrt();
                (
                    pts.iter()
                        .map(|&t| {
                            let m = floor_pow(n, t);
                            Term {
                                index: n + m,
                                weight: (nf / (n + m) as f64).sqrt() / norm,
                            }
                        })
                        .collect(),
                    Some(Term {
                        index: n,
                        weight: 1.0 / norm,
                    }),
                )
            }
        };
        let required_horizon = terms
            .iter()
            .chain(base.iter())
            .map(|t| t.index)
            .max()
            .unwrap_or(0);
        Ok(Self {
            regime,
            n,
            grid: grid.clone(),
            terms,
            base,
            required_horizon,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Smallest horizon a path must have.
    pub fn required_horizon(&self) -> usize {
        self.required_horizon
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if horizon < self.required_horizon {
            return Err(ErwError::HorizonTooShort {
                needed: self.required_horizon,
                available: horizon,
            });
        }
        Ok(())
    }

    /// Rescale one path into `out` (one slot per grid point).
    pub fn apply(&self, path: &[i32], out: &mut [f64]) {
        debug_assert!(path.len() > self.required_horizon);
        let offset = self
            .base
            .map_or(0.0, |b| b.weight * path[b.index] as f64);
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = term.weight * path[term.index] as f64 - offset;
        }
    }

    pub fn apply_vec(&self, path: &[i32]) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        self.apply(path, &mut out);
        out
    }

    /// Rescale every path of a stored batch.
    pub fn scale_batch(&self, batch: &PathBatch) -> Result<ScaledGrid> {
        self.check_horizon(batch.horizon())?;
        let w = self.grid.len();
        let mut values = vec![0.0; batch.n_paths() * w];
        for (path, out) in batch.iter().zip(values.chunks_exact_mut(w)) {
            self.apply(path, out);
        }
        ScaledGrid::new(self.regime, self.n, self.grid.clone(), values)
    }

    /// Generate and rescale `n_paths` paths without storing trajectories.
    pub fn scale_streaming(&self, params: &WalkParams, n_paths: usize) -> Result<ScaledGrid> {
        self.check_horizon(params.horizon)?;
        let rows = map_paths(params, n_paths, |_, path| self.apply_vec(path));
        ScaledGrid::new(self.regime, self.n, self.grid.clone(), rows.concat())
    }
}

fn scale(regime: Regime, batch: &PathBatch, n: usize, grid: &TimeGrid) -> Result<ScaledGrid> {
    Scaler::new(regime, batch.params().p, n, grid)?.scale_batch(batch)
}

/// `S_[nt]/√n`, `0 <= p < 3/4`.
pub fn scale_diffusive(batch: &PathBatch, n: usize, grid: &TimeGrid) -> Result<ScaledGrid> {
    scale(Regime::Diffusive, batch, n, grid)
}

/// `((1+t)^{1−2p} S_{n+[nt]} − S_n)/√n`, `3/4 < p < 1`.
pub fn scale_superdiffusive(batch: &PathBatch, n: usize, grid: &TimeGrid) -> Result<ScaledGrid> {
    scale(Regime::Superdiffusive, batch, n, grid)
}

/// `S_[n^t]/√(n^t log n)`, `p = 3/4`.
pub fn scale_critical(batch: &PathBatch, n: usize, grid: &TimeGrid) -> Result<ScaledGrid> {
    scale(Regime::Critical, batch, n, grid)
}

/// The shifted diffusive process, `0 <= p < 3/4`.
pub fn scale_diffusive_shifted(batch: &PathBatch, n: usize, grid: &TimeGrid) -> Result<ScaledGrid> {
    scale(Regime::DiffusiveShifted, batch, n, grid)
}

/// `(√(n/(n+[n^t])) S_{n+[n^t]} − S_n)/√(n log n)`, `p = 3/4`.
pub fn scale_critical_shifted(batch: &PathBatch, n: usize, grid: &TimeGrid) -> Result<ScaledGrid> {
    scale(Regime::CriticalShifted, batch, n, grid)
}
