//! Cut-off P-values `p0(n, k, alpha)`: the alpha-quantile of the smallest
//! subset P-value when every covariate is pure noise.
//!
//! Two routes are provided. [`p0_nested`] simulates the whole procedure on
//! noise covariates with the real response. [`p0_chisq_approx`] uses the
//! chi-squared limit, in which the P-value of excluding a set `S` is
//! `1 - F_{|S|}(sum_{j in S} chi2_1(j))` for independent `chi2_1(j)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{Dataset, SubsetCode};
use crate::error::{Error, Result};
use crate::noise::{derive_seed, noise_matrix, NoiseKind, RngStream};
use crate::objective::ObjectiveSpec;
use crate::pvalues::{Method, PValueEngine};
use crate::stats::quantile;

pub const MAX_NESTED_K: usize = 12;
pub const MAX_CHISQ_K: usize = 20;
pub const MIN_OUTER_SIMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMethod {
    NestedSimulation,
    ChisqApprox,
    LogQuadraticFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffEntry {
    /// Sample size; absent for the chi-squared route, which does not depend on it.
    pub n: Option<usize>,
    pub k: usize,
    pub alpha: f64,
    pub p0: f64,
}

/// Coefficients of `log p0 = c1 + c2 log(alpha) + c3 log(alpha)^2` for one `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogQuadratic {
    pub k: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LogQuadratic {
    pub fn eval(&self, alpha: f64) -> f64 {
        let l = alpha.ln();
        (self.c1 + self.c2 * l + self.c3 * l * l).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffTable {
    pub schema: u32,
    pub method: CutoffMethod,
    pub entries: Vec<CutoffEntry>,
    #[serde(default)]
    pub fits: Vec<LogQuadratic>,
    pub outer_sims: usize,
    pub inner_sims: usize,
    pub seed: u64,
}

impl CutoffTable {
    pub fn new(method: CutoffMethod, outer_sims: usize, inner_sims: usize, seed: u64) -> Self {
        CutoffTable {
            schema: 1,
            method,
            entries: Vec::new(),
            fits: Vec::new(),
            outer_sims,
            inner_sims,
            seed,
        }
    }

    /// Exact table entry for `(n, k, alpha)`; entries without `n` match any `n`.
    /// Falls back to the fitted curve for `k` when no entry matches.
    pub fn lookup(&self, n: usize, k: usize, alpha: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.k == k && (e.alpha - alpha).abs() < 1e-12 && e.n.is_none_or(|m| m == n))
            .map(|e| e.p0)
            .or_else(|| self.fits.iter().find(|f| f.k == k).map(|f| f.eval(alpha)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("bad cutoff table: {e}")))
    }
}

/// 16 log-spaced levels in `[0.005, 0.45]`.
pub fn default_alpha_grid() -> Vec<f64> {
    let (lo, hi) = (0.005f64.ln(), 0.45f64.ln());
    (0..16).map(|i| (lo + (hi - lo) * i as f64 / 15.0).exp()).collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Minimum subset P-value for each outer replicate of the nested simulation.
///
/// Outer replicate `o` replaces all `k` covariates by Gaussian noise (the
/// response `y` is kept) and computes every `p(e)`, `e != e_f`, with
/// `inner_sims` simulations.
pub fn nested_minima(
    y: &[f64],
    k: usize,
    obj: &ObjectiveSpec,
    method: Method,
    outer_sims: usize,
    inner_sims: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 || k > MAX_NESTED_K {
        return Err(Error::Capacity {
            what: "covariate count for nested calibration",
            value: k,
            max: MAX_NESTED_K,
        });
    }
    if outer_sims < MIN_OUTER_SIMS {
        return Err(Error::InvalidArgument(format!(
            "nested calibration needs at least {MIN_OUTER_SIMS} outer simulations, got {outer_sims}"
        )));
    }
    if method == Method::All {
        return Err(Error::InvalidArgument("choose a single P-value method for calibration".into()));
    }
    let n = y.len();
    let names: Vec<String> = (1..=k).map(|j| format!("Z{j}")).collect();
    let x_seed = derive_seed(seed, &[0]);
    let codes: Vec<SubsetCode> = (0..(1u32 << k) - 1).map(SubsetCode::new).collect();
    (0..outer_sims as u64)
        .into_par_iter()
        .map(|o| {
            let x = noise_matrix(n, k, NoiseKind::Gaussian, RngStream::new(x_seed, o), None)?;
            let d = Dataset::new(y.to_vec(), x, names.clone(), "y")?;
            let engine = PValueEngine::new(&d, obj)?;
            let inner_seed = derive_seed(seed, &[1, o]);
            let mut min = 1.0f64;
            for &e in &codes {
                let r = engine.report(e, method, inner_sims, NoiseKind::Gaussian, inner_seed)?;
                let p = r.value(method).expect("requested method is present");
                min = min.min(p);
            }
            Ok(min)
        })
        .collect()
}

/// `p0(n, k, alpha)` by nested simulation with the real response `y`.
#[allow(clippy::too_many_arguments)]
pub fn p0_nested(
    y: &[f64],
    k: usize,
    obj: &ObjectiveSpec,
    method: Method,
    alpha: f64,
    outer_sims: usize,
    inner_sims: usize,
    seed: u64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let minima = nested_minima(y, k, obj, method, outer_sims, inner_sims, seed)?;
    Ok(quantile(&minima, alpha))
}

/// Nested-simulation table for every `k' in 1..=k` and every level in `alphas`.
#[allow(clippy::too_many_arguments)]
pub fn nested_table(
    y: &[f64],
    k: usize,
    obj: &ObjectiveSpec,
    method: Method,
    alphas: &[f64],
    outer_sims: usize,
    inner_sims: usize,
    seed: u64,
) -> Result<CutoffTable> {
    let mut table = CutoffTable::new(CutoffMethod::NestedSimulation, outer_sims, inner_sims, seed);
    for kk in 1..=k {
        let minima = nested_minima(y, kk, obj, method, outer_sims, inner_sims, derive_seed(seed, &[kk as u64]))?;
        for &alpha in alphas {
            check_alpha(alpha)?;
            table.entries.push(CutoffEntry {
                n: Some(y.len()),
                k: kk,
                alpha,
                p0: quantile(&minima, alpha),
            });
        }
    }
    Ok(table)
}

/// Smallest chi-squared P-value over all nonempty index sets.
///
/// For a fixed set size the upper tail is decreasing in the sum, so the
/// minimum over sets of size `s` is attained by the `s` largest values; only
/// `k` candidates need to be evaluated.
pub fn min_chisq_pvalue(chi: &mut [f64], laws: &[ChiSquared]) -> f64 {
    chi.sort_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    let mut min = 1.0f64;
    for (s, v) in chi.iter().enumerate() {
        sum += v;
        min = min.min(laws[s].sf(sum));
    }
    min
}

/// Per-replicate minima of the chi-squared approximation.
pub fn chisq_minima(k: usize, sims: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 || k > MAX_CHISQ_K {
        return Err(Error::Capacity {
            what: "covariate count for the chi-squared approximation",
            value: k,
            max: MAX_CHISQ_K,
        });
    }
    if sims == 0 {
        return Err(Error::InvalidArgument("need at least one simulation".into()));
    }
    let laws: Vec<ChiSquared> = (1..=k).map(|df| ChiSquared::new(df as f64).expect("df > 0")).collect();
    let stream_seed = derive_seed(seed, &[k as u64]);
    Ok((0..sims as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(stream_seed, r).rng();
            let mut chi: Vec<f64> = (0..k)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * z
                })
                .collect();
            min_chisq_pvalue(&mut chi, &laws)
        })
        .collect())
}

/// `p~0(k, alpha)`
pub fn p0_chisq_approx(k: usize, alpha: f64, sims: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(quantile(&chisq_minima(k, sims, seed)?, alpha))
}

/// Least-squares fit of `log p0` on `(1, log alpha, log^2 alpha)`.
pub fn fit_log_quadratic(k: usize, grid: &[(f64, f64)]) -> Result<LogQuadratic> {
    if grid.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "log-quadratic fit is underdetermined with {} grid points",
            grid.len()
        )));
    }
    if grid.iter().any(|&(a, p)| !(a > 0.0 && p > 0.0)) {
        return Err(Error::InvalidArgument("grid levels and cut-offs must be positive".into()));
    }
    let a = nalgebra::DMatrix::from_fn(grid.len(), 3, |i, j| grid[i].0.ln().powi(j as i32));
    let b = nalgebra::DVector::from_iterator(grid.len(), grid.iter().map(|&(_, p)| p.ln()));
    let coef = crate::linalg::least_squares(&a, &b)
        .ok_or_else(|| Error::InvalidArgument("grid levels are not distinct enough for a quadratic fit".into()))?;
    Ok(LogQuadratic {
        k,
        c1: coef[0],
        c2: coef[1],
        c3: coef[2],
    })
}

/// Chi-squared table for `k' in 1..=k`: quantiles on `alphas` plus the
/// log-quadratic fit over the default grid.
pub fn chisq_table(k: usize, alphas: &[f64], sims: usize, seed: u64) -> Result<CutoffTable> {
    let mut table = CutoffTable::new(CutoffMethod::ChisqApprox, sims, 0, seed);
    let grid = default_alpha_grid();
    for kk in 1..=k {
        let mut minima = chisq_minima(kk, sims, seed)?;
        minima.sort_by(f64::total_cmp);
        for &alpha in alphas {
            check_alpha(alpha)?;
            table.entries.push(CutoffEntry {
                n: None,
                k: kk,
                alpha,
                p0: crate::stats::quantile_sorted(&minima, alpha),
            });
        }
        let points: Vec<(f64, f64)> = grid
            .iter()
            .map(|&a| (a, crate::stats::quantile_sorted(&minima, a)))
            .collect();
        table.fits.push(fit_log_quadratic(kk, &points)?);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 16);
        assert!((g[0] - 0.005).abs() < 1e-12);
        assert!((g[15] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let truth = LogQuadratic { k: 3, c1: -1.2, c2: 1.4, c3: 0.05 };
        let grid: Vec<(f64, f64)> = default_alpha_grid().into_iter().map(|a| (a, truth.eval(a))).collect();
        let fit = fit_log_quadratic(3, &grid).unwrap();
        for &(a, p) in &grid {
            assert!((fit.eval(a) / p - 1.0).abs() < 1e-10);
        }
        assert!(fit_log_quadratic(3, &grid[..2]).is_err());
    }

    #[test]
    fn capacity_limits() {
        assert!(matches!(chisq_minima(21, 10, 1), Err(Error::Capacity { .. })));
        assert!(matches!(
            nested_minima(&[1.0, 2.0, 3.0], 13, &ObjectiveSpec::l2(), Method::Gamma, 100, 30, 1),
            Err(Error::Capacity { .. })
        ));
        assert!(nested_minima(&[1.0, 2.0, 3.0], 2, &ObjectiveSpec::l2(), Method::Gamma, 10, 30, 1).is_err());
    }

    #[test]
    fn single_covariate_is_uniform() {
        // With k = 1 the minimum is one uniform P-value, so p~0(1, alpha) = alpha.
        for &alpha in &[0.01, 0.05, 0.1, 0.3] {
            let p = p0_chisq_approx(1, alpha, 40_000, 5).unwrap();
            let se = (alpha * (1.0 - alpha) / 40_000.0).sqrt();
            assert!((p - alpha).abs() < 5.0 * se + 1e-4, "alpha {alpha}: {p}");
        }
    }

    #[test]
    fn table_round_trip_and_lookup() {
        let t = chisq_table(2, &[0.05], 2000, 3).unwrap();
        let back = CutoffTable::from_json(&t.to_json()).unwrap();
        assert_eq!(t, back);
        assert!(t.lookup(21, 2, 0.05).is_some());
        assert!(t.lookup(21, 2, 0.2).is_some());
        assert!(t.lookup(21, 5, 0.05).is_none());
    }
}
