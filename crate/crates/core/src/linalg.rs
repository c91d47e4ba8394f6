//! Small dense least-squares kernels used by the solvers.

use nalgebra::{DMatrix, DVector};

/// Singular-value ratio below which a design is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Ratio of the smallest to the largest singular value.
pub fn condition_ratio(x: &DMatrix<f64>) -> f64 {
    let sv = x.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Indices of columns that add nothing to the span of the preceding ones.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = x.select_columns(trial.iter());
        if condition_ratio(&sub) < RANK_TOLERANCE {
            dependent.push(j);
        } else {
            kept = trial;
        }
    }
    dependent
}

/// Ordinary least squares through a Householder QR.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    let r = qr.r();
    r.solve_upper_triangular(&qty)
}

/// Solve the weighted normal equations `X'WX b = X'Wy` by Cholesky.
///
/// `x` is column-major with `n` rows and `p` columns. Returns `None` when the
/// weighted cross-product is not numerically positive definite.
pub fn weighted_normal_solve(x: &[f64], n: usize, p: usize, y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let v: Vec<f64> = w.iter().zip(y).map(|(wi, yi)| wi * yi).collect();
    weighted_cross_solve(x, n, p, w, &v, 0.0)
}

/// Solve `(X'WX + ridge I) b = X'v`.
pub fn weighted_cross_solve(x: &[f64], n: usize, p: usize, w: &[f64], v: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for j in 0..p {
        let xj = &x[j * n..(j + 1) * n];
        b[j] = xj.iter().zip(v).map(|(a, b)| a * b).sum();
        for l in 0..=j {
            let xl = &x[l * n..(l + 1) * n];
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * xj[i] * xl[i];
            }
            a[(j, l)] = s;
            a[(l, j)] = s;
        }
        a[(j, j)] += ridge;
    }
    let chol = a.cholesky()?;
    let sol = chol.solve(&b);
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.as_slice().to_vec())
    } else {
        None
    }
}

/// `y - X b` for a column-major `x`.
pub fn residuals_into(x: &[f64], n: usize, beta: &[f64], y: &[f64], out: &mut [f64]) {
    out.copy_from_slice(y);
    for (j, &bj) in beta.iter().enumerate() {
        if bj == 0.0 {
            continue;
        }
        let xj = &x[j * n..(j + 1) * n];
        for i in 0..n {
            out[i] -= bj * xj[i];
        }
    }
}
