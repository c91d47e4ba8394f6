//! Fitting the L2, Huber M- and (smoothed) L1 regression functionals.
//!
//! L2 is solved exactly by QR. Huber fits use iteratively reweighted least
//! squares started from the L2 solution (or a caller-supplied warm start)
//! with weights `min(1, c*sigma/|r_i|)`. The L1 functional is the Huber fit
//! with `c = 0.01`, whose objective is reported as the plain mean absolute
//! residual.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{design_matrix, design_names, Dataset, SubsetCode};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOLERANCE};
use crate::objective::{huber_rho, Objective, ObjectiveSpec, ScalePolicy, L1_SMOOTHING_C, MAD_CONSISTENCY};
use crate::stats::median;

pub const IRLS_MAX_ITERATIONS: usize = 500;
pub const IRLS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// Intercept first, then the included covariates in ascending order.
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Mean per-observation loss.
    pub objective: f64,
    pub subset: SubsetCode,
    pub converged: bool,
    pub iterations: usize,
}

/// A loss bound to the scale it is evaluated at.
///
/// For `Huber` the scale is the residual scale of the functional. For `L1`
/// it only sets the smoothing width `0.01 * scale`. `L2` ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub kind: Objective,
    pub scale: f64,
}

impl Loss {
    pub fn l2() -> Self {
        Loss { kind: Objective::L2, scale: 1.0 }
    }

    /// L1 loss whose smoothing width is derived from the response.
    pub fn l1_for(y: &[f64]) -> Self {
        Loss {
            kind: Objective::L1,
            scale: smoothing_scale(y),
        }
    }

    pub fn huber(c: f64, sigma: f64) -> Self {
        Loss {
            kind: Objective::Huber { c },
            scale: sigma,
        }
    }

    /// Mean loss of a residual vector.
    pub fn mean_loss(&self, r: &[f64]) -> f64 {
        let n = r.len() as f64;
        match self.kind {
            Objective::L1 => r.iter().map(|v| v.abs()).sum::<f64>() / n,
            Objective::L2 => r.iter().map(|v| v * v).sum::<f64>() / n,
            Objective::Huber { c } => {
                r.iter().map(|v| huber_rho(v / self.scale, c)).sum::<f64>() / n
            }
        }
    }

    /// Huber tuning constant used by the IRLS iterations, if any.
    fn irls_c(&self) -> Option<f64> {
        match self.kind {
            Objective::L1 => Some(L1_SMOOTHING_C),
            Objective::Huber { c } => Some(c),
            Objective::L2 => None,
        }
    }
}

/// Raw result of a fit on an explicit design.
#[derive(Debug, Clone)]
pub(crate) struct MatrixFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// 1.4826 times the median absolute deviation about the median.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    MAD_CONSISTENCY * median(&dev)
}

/// Scale setting the smoothing width of the L1 fit for response `y`.
///
/// MAD of `y` about its median, falling back to the mean absolute deviation
/// and finally to 1 when the response has no spread at all.
pub fn smoothing_scale(y: &[f64]) -> f64 {
    let s = mad(y);
    if s > 0.0 {
        return s;
    }
    let m = median(y);
    let mean_abs = y.iter().map(|v| (v - m).abs()).sum::<f64>() / y.len() as f64;
    if mean_abs > 0.0 {
        mean_abs
    } else {
        1.0
    }
}

fn singular_error(x: &DMatrix<f64>, names: &[String]) -> Error {
    let cols = linalg::dependent_columns(x);
    let columns = if cols.is_empty() {
        names.to_vec()
    } else {
        cols.into_iter().map(|j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}"))).collect()
    };
    Error::SingularDesign { columns }
}

fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if x.nrows() < x.ncols() || linalg::condition_ratio(x) < RANK_TOLERANCE {
        return Err(singular_error(x, names));
    }
    Ok(())
}

fn anonymous_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("column {j}")).collect()
}

/// Minimiser over `t >= 0` of `sum rho(r_i - t a_i)` for the Huber loss
/// with threshold `cut`; the derivative is monotone and piecewise linear.
fn huber_line_search(r: &[f64], a: &[f64], cut: f64) -> f64 {
    let slope = |t: f64| -> f64 { -r.iter().zip(a).map(|(ri, ai)| ai * (ri - t * ai).clamp(-cut, cut)).sum::<f64>() };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while slope(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return lo;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    // The derivative is linear on the final bracket unless a kink falls inside.
    let (s_lo, s_hi) = (slope(lo), slope(hi));
    if s_hi > s_lo {
        lo - s_lo * (hi - lo) / (s_hi - s_lo)
    } else {
        hi
    }
}

/// Fit `loss` on an explicit design matrix. No rank check beyond the
/// factorisations themselves; callers on the hot path rely on this.
pub(crate) fn fit_matrix(
    loss: &Loss,
    x: &DMatrix<f64>,
    y: &[f64],
    warm: Option<&[f64]>,
) -> Result<MatrixFit> {
    let n = x.nrows();
    let p = x.ncols();
    let irls_c = loss.irls_c();
    let start = match warm {
        Some(b) if b.len() == p && irls_c.is_some() => b.to_vec(),
        _ => {
            let b = linalg::least_squares(x, &DVector::from_column_slice(y))
                .filter(|b| b.iter().all(|v| v.is_finite()))
                .ok_or_else(|| singular_error(x, &anonymous_names(p)))?;
            b.as_slice().to_vec()
        }
    };
    let mut residuals = vec![0.0; n];
    let Some(c) = irls_c else {
        linalg::residuals_into(x.as_slice(), n, &start, y, &mut residuals);
        let objective = loss.mean_loss(&residuals);
        return Ok(MatrixFit {
            beta: start,
            residuals,
            objective,
            converged: true,
            iterations: 0,
        });
    };
    let cut = c * loss.scale;
    let huber_sum = |r: &[f64]| -> f64 {
        r.iter()
            .map(|v| {
                let a = v.abs();
                if a <= cut {
                    0.5 * a * a
                } else {
                    cut * a - 0.5 * cut * cut
                }
            })
            .sum()
    };
    // Ridge for the generalised Newton step when fewer than p residuals
    // are in the quadratic zone.
    let ridge = 1e-12 * x.iter().map(|v| v * v).sum::<f64>() / p as f64;
    let mut beta = start;
    let mut w = vec![1.0; n];
    let mut active = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let mut moved = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    // Exact line search from `beta` along `dir`; returns the point and its loss.
    let search = |beta: &[f64], dir: &[f64], r: &[f64], moved: &mut [f64]| -> (Vec<f64>, f64) {
        let zeros = vec![0.0; n];
        linalg::residuals_into(x.as_slice(), n, dir, &zeros, moved);
        for v in moved.iter_mut() {
            *v = -*v;
        }
        let t = huber_line_search(r, moved, cut);
        let point: Vec<f64> = beta.iter().zip(dir).map(|(b, d)| b + t * d).collect();
        linalg::residuals_into(x.as_slice(), n, &point, y, moved);
        let f = huber_sum(moved);
        (point, f)
    };
    while iterations < IRLS_MAX_ITERATIONS {
        iterations += 1;
        linalg::residuals_into(x.as_slice(), n, &beta, y, &mut residuals);
        let mut inside = 0;
        for i in 0..n {
            let r = residuals[i];
            let a = r.abs();
            w[i] = if a <= cut { 1.0 } else { cut / a };
            active[i] = if a <= cut { 1.0 } else { 0.0 };
            psi[i] = r.clamp(-cut, cut);
            inside += (a <= cut) as usize;
        }
        let irls = linalg::weighted_normal_solve(x.as_slice(), n, p, y, &w)
            .ok_or_else(|| singular_error(x, &anonymous_names(p)))?;
        // IRLS creeps along directions in which the loss is linear, so both
        // candidate steps are extended by an exact line search. Once the
        // quadratic zone is identified the Newton step lands on the optimum.
        let dir: Vec<f64> = irls.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let (mut next, f_next) = search(&beta, &dir, &residuals, &mut moved);
        let newton = if inside >= p {
            linalg::weighted_cross_solve(x.as_slice(), n, p, &active, &psi, 0.0)
        } else {
            None
        }
        .or_else(|| linalg::weighted_cross_solve(x.as_slice(), n, p, &active, &psi, ridge));
        if let Some(step) = newton {
            let (point, f) = search(&beta, &step, &residuals, &mut moved);
            if f < f_next {
                next = point;
            }
        }
        let mut delta: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for (b, nb) in beta.iter().zip(&next) {
            delta = delta.max((b - nb).abs());
            norm += nb * nb;
        }
        beta = next;
        if delta < IRLS_TOLERANCE * (1.0 + norm.sqrt()) {
            converged = true;
            break;
        }
    }
    linalg::residuals_into(x.as_slice(), n, &beta, y, &mut residuals);
    if loss.kind == Objective::L1 {
        if let Some(b) = l1_vertex(x, y, &residuals, cut, &mut moved) {
            if loss.mean_loss(&moved) < loss.mean_loss(&residuals) {
                beta = b;
                residuals.copy_from_slice(&moved);
            }
        }
    }
    let mut objective = loss.mean_loss(&residuals);
    // Never return something worse than the starting point; with a warm
    // start from a sub-model this keeps S(e) <= s(e) exact.
    if let Some(b) = warm.filter(|b| b.len() == p) {
        linalg::residuals_into(x.as_slice(), n, b, y, &mut moved);
        let f = loss.mean_loss(&moved);
        if f < objective {
            beta = b.to_vec();
            residuals.copy_from_slice(&moved);
            objective = f;
        }
    }
    Ok(MatrixFit {
        beta,
        residuals,
        objective,
        converged,
        iterations,
    })
}

/// An exact L1 optimum interpolates `p` observations, and the smoothed fit
/// leaves those in its quadratic zone `|r| <= cut`. Interpolating the best
/// `p` of them removes the smoothing bias; repeated while it improves.
/// Writes the residuals of the returned candidate into `out`.
fn l1_vertex(x: &DMatrix<f64>, y: &[f64], residuals: &[f64], cut: f64, out: &mut [f64]) -> Option<Vec<f64>> {
    const ROUNDS: usize = 5;
    let (n, p) = x.shape();
    // C(p + 3, 3) candidate bases per round; keep wide designs affordable.
    let extra = if p <= 12 { 3 } else { 1 };
    if n < p {
        return None;
    }
    let sad = |r: &[f64]| r.iter().map(|v| v.abs()).sum::<f64>();
    let mut current = residuals.to_vec();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trial = vec![0.0; n];
    for _ in 0..ROUNDS {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| current[a].abs().total_cmp(&current[b].abs()));
        let inside = current.iter().filter(|r| r.abs() <= cut).count();
        let pool = &order[..inside.clamp(p, p + extra).min(n)];
        let before = best.as_ref().map_or(f64::INFINITY, |b| b.1);
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            let rows: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
            let a = x.select_rows(rows.iter());
            let rhs = DVector::from_iterator(p, rows.iter().map(|&i| y[i]));
            if let Some(b) = a.lu().solve(&rhs).filter(|b| b.iter().all(|v| v.is_finite())) {
                linalg::residuals_into(x.as_slice(), n, b.as_slice(), y, &mut trial);
                let f = sad(&trial);
                if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                    best = Some((b.as_slice().to_vec(), f));
                    out.copy_from_slice(&trial);
                }
            }
            // next combination of p indices out of pool.len()
            let m = pool.len();
            let mut i = p;
            while i > 0 && idx[i - 1] == m - p + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..p {
                idx[j] = idx[j - 1] + 1;
            }
        }
        match &best {
            Some((_, f)) if *f < before => current.copy_from_slice(out),
            _ => break,
        }
    }
    best.map(|(b, _)| b)
}

fn fit_subset(d: &Dataset, e: SubsetCode, loss: &Loss) -> Result<FitResult> {
    e.check(d.k())?;
    let x = design_matrix(d, e);
    check_rank(&x, &design_names(d, e))?;
    let fit = fit_matrix(loss, &x, d.y().as_slice(), None)?;
    Ok(FitResult {
        beta: fit.beta,
        residuals: fit.residuals,
        objective: fit.objective,
        subset: e,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Least squares on `[1 | X(e)]`; objective is the mean squared residual.
pub fn fit_l2(d: &Dataset, e: SubsetCode) -> Result<FitResult> {
    fit_subset(d, e, &Loss::l2())
}

/// Huber M-fit minimising `mean rho_c((y - x b) / sigma)`.
pub fn fit_huber(d: &Dataset, e: SubsetCode, c: f64, sigma: f64) -> Result<FitResult> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("Huber constant must be positive, got {c}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {sigma}")));
    }
    fit_subset(d, e, &Loss::huber(c, sigma))
}

/// L1 regression via the smoothed Huber fit; objective is the mean absolute residual.
pub fn fit_l1(d: &Dataset, e: SubsetCode) -> Result<FitResult> {
    fit_subset(d, e, &Loss::l1_for(d.y().as_slice()))
}

/// Residual scale: MAD of the residuals of the full-model L1 fit.
pub fn mad_scale(d: &Dataset) -> Result<f64> {
    let fit = fit_l1(d, d.full())?;
    let s = mad(&fit.residuals);
    // The smoothed fit leaves interpolated residuals at ~1e-12 rather than 0.
    if s <= 1e-12 * (1.0 + d.y().amax()) {
        return Err(Error::DegenerateScale(
            "MAD of the full-model L1 residuals is zero".into(),
        ));
    }
    Ok(s)
}

/// Scale to use for `spec` on dataset `d`: only Huber objectives need one.
pub fn resolve_scale(d: &Dataset, spec: &ObjectiveSpec) -> Result<f64> {
    match (spec.kind, spec.scale) {
        (_, ScalePolicy::External(s)) => Ok(s),
        (Objective::Huber { .. }, ScalePolicy::MadOfFullL1) => mad_scale(d),
        _ => Ok(1.0),
    }
}

/// The loss for `spec` on response `y` given the resolved Huber scale.
pub fn loss_for(spec: &ObjectiveSpec, sigma: f64, y: &[f64]) -> Loss {
    match spec.kind {
        Objective::L1 => Loss::l1_for(y),
        Objective::L2 => Loss::l2(),
        Objective::Huber { c } => Loss::huber(c, sigma),
    }
}

/// Fit the functional described by `spec` on subset `e`.
pub fn fit(d: &Dataset, e: SubsetCode, spec: &ObjectiveSpec, sigma: f64) -> Result<FitResult> {
    fit_subset(d, e, &loss_for(spec, sigma, d.y().as_slice()))
}
