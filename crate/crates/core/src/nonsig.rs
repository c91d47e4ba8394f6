//! Non-significance regions: the parameter values whose fit cannot be
//! distinguished from the optimum by what a single noise direction buys.
//!
//! Simulated intervals solve `f(m) = q(alpha, m) - (s(m) - s(center)) = 0`
//! on each side of the point estimate by bisection, where `q` is the
//! simulated alpha-quantile of the gain from one noise column. Every
//! evaluation of `f` draws fresh noise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{design_matrix, Dataset};
use crate::error::{Error, Result};
use crate::noise::{derive_seed, fill_noise, NoiseKind, RngStream};
use crate::objective::{huber_psi, huber_psi_prime, huber_rho, Objective, ObjectiveSpec};
use crate::optimize::{bisect, golden_section};
use crate::solvers::{fit_matrix, mad, resolve_scale, smoothing_scale, Loss};
use crate::stats::{
    binom_half_quantile, chisq_quantile, median, normal_density, normal_quantile, quantile, quantile_sorted,
};

/// Coverage used for the initial order-statistic bracket.
pub const BRACKET_BETA: f64 = 0.999;
pub const BISECTION_RELATIVE_TOLERANCE: f64 = 1e-3;
pub const BISECTION_MAX_ITERATIONS: usize = 40;
pub const DEFAULT_QUANTILE_SIMS: usize = 1000;
const MAX_WIDENINGS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    SimulatedBisection,
    Asymptotic,
    DiscreteAdjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonSigInterval {
    pub lower: f64,
    pub upper: f64,
    /// The point estimate the interval is built around.
    pub estimate: f64,
    pub alpha: f64,
    pub method: IntervalMethod,
    pub sims_per_quantile: usize,
    pub bisection_tolerance: f64,
}

impl NonSigInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Snap to integers for integer-valued data: an interval containing an
    /// integer shrinks to the integers inside it, otherwise it grows to the
    /// neighbouring integers.
    pub fn discrete_adjusted(mut self) -> Self {
        let (lo, hi) = (self.lower.ceil(), self.upper.floor());
        if lo <= hi {
            self.lower = lo;
            self.upper = hi;
        } else {
            self.lower = self.lower.floor();
            self.upper = self.upper.ceil();
        }
        self.method = IntervalMethod::DiscreteAdjusted;
        self
    }
}

/// `{b : (b - center)' shape (b - center) <= radius2}`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonSigEllipsoid {
    pub center: Vec<f64>,
    /// Row-major `p x p` matrix.
    pub shape: Vec<Vec<f64>>,
    pub radius2: f64,
    pub alpha: f64,
    pub names: Vec<String>,
}

impl NonSigEllipsoid {
    fn new(center: Vec<f64>, shape: &DMatrix<f64>, radius2: f64, alpha: f64, names: Vec<String>) -> Self {
        let shape = (0..shape.nrows()).map(|i| shape.row(i).iter().copied().collect()).collect();
        NonSigEllipsoid {
            center,
            shape,
            radius2,
            alpha,
            names,
        }
    }

    pub fn quadratic_form(&self, beta: &[f64]) -> f64 {
        let d: Vec<f64> = beta.iter().zip(&self.center).map(|(b, c)| b - c).collect();
        self.shape
            .iter()
            .zip(&d)
            .map(|(row, di)| di * row.iter().zip(&d).map(|(a, dj)| a * dj).sum::<f64>())
            .sum()
    }

    pub fn contains(&self, beta: &[f64]) -> bool {
        beta.len() == self.center.len() && self.quadratic_form(beta) <= self.radius2 * (1.0 + 1e-12)
    }

    /// Extent of the ellipsoid along each coordinate axis (its shadow).
    pub fn component_intervals(&self) -> Vec<(f64, f64)> {
        let p = self.center.len();
        let a = DMatrix::from_fn(p, p, |i, j| self.shape[i][j]);
        let inv = a.try_inverse().unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
        (0..p)
            .map(|j| {
                let h = (self.radius2 * inv[(j, j)]).sqrt();
                (self.center[j] - h, self.center[j] + h)
            })
            .collect()
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_sims(sims: usize) -> Result<()> {
    if sims < 2 {
        return Err(Error::InvalidArgument("need at least two simulations per quantile".into()));
    }
    Ok(())
}

fn check_noise(noise: NoiseKind) -> Result<()> {
    if noise.needs_template() {
        return Err(Error::InvalidArgument(format!(
            "noise kind '{noise}' is not available for non-significance regions"
        )));
    }
    Ok(())
}

/// Side of the point estimate being searched.
#[derive(Clone, Copy)]
enum Side {
    Lower,
    Upper,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Side::Lower => 0,
            Side::Upper => 1,
        }
    }
}

/// Search one side: `f(center) >= 0` is assumed, `first` is the first trial
/// endpoint and `step` the distance by which it is pushed outwards (doubling)
/// when `f` has not yet turned negative.
fn search_side<F: Fn(f64, u64) -> f64>(
    f: &F,
    center: f64,
    first: f64,
    step: f64,
    side: Side,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut outside = first;
    let mut f_out = f(outside, derive_seed(seed, &[side.tag(), 1_000]));
    let mut push = step;
    let mut widenings = 0;
    while f_out >= 0.0 {
        if widenings == MAX_WIDENINGS {
            return Err(Error::NoRoot {
                lo: center.min(outside),
                hi: center.max(outside),
                f_lo: f(center, derive_seed(seed, &[side.tag(), 2_000])),
                f_hi: f_out,
            });
        }
        outside += side.sign() * push;
        push *= 2.0;
        widenings += 1;
        f_out = f(outside, derive_seed(seed, &[side.tag(), 1_000 + widenings as u64]));
    }
    let tol = BISECTION_RELATIVE_TOLERANCE * (outside - center).abs();
    let b = bisect(
        |m, it| f(m, derive_seed(seed, &[side.tag(), it as u64])),
        center,
        outside,
        tol,
        BISECTION_MAX_ITERATIONS,
    );
    Ok((b.root, tol))
}

/// Loss on raw residuals for a location problem.
#[derive(Clone, Copy)]
enum LocationLoss {
    Abs,
    Square,
    Huber { c: f64, sigma: f64 },
}

impl LocationLoss {
    fn rho(self, r: f64) -> f64 {
        match self {
            LocationLoss::Abs => r.abs(),
            LocationLoss::Square => 0.5 * r * r,
            LocationLoss::Huber { c, sigma } => huber_rho(r / sigma, c),
        }
    }
}

/// One-sample location problem with a single noise direction.
struct Location<'a> {
    y: &'a [f64],
    loss: LocationLoss,
    b_bound: f64,
    b_tol: f64,
    noise: NoiseKind,
}

impl<'a> Location<'a> {
    fn new(y: &'a [f64], loss: LocationLoss, noise: NoiseKind) -> Self {
        let scale = smoothing_scale(y);
        Location {
            y,
            loss,
            b_bound: 4.0 * scale * (y.len() as f64).sqrt(),
            b_tol: 1e-6 * scale,
            noise,
        }
    }

    fn objective(&self, m: f64) -> f64 {
        self.y.iter().map(|&v| self.loss.rho(v - m)).sum()
    }

    /// `inf_b sum rho(y_i - m - b z_i)`
    fn noisy_optimum(&self, m: f64, z: &[f64]) -> f64 {
        if let LocationLoss::Square = self.loss {
            // Closed form: regression of the residuals on z through the origin.
            let (mut rz, mut zz, mut rr) = (0.0, 0.0, 0.0);
            for (&v, &zi) in self.y.iter().zip(z) {
                let r = v - m;
                rz += r * zi;
                zz += zi * zi;
                rr += r * r;
            }
            return 0.5 * (rr - if zz > 0.0 { rz * rz / zz } else { 0.0 });
        }
        let obj = |b: f64| -> f64 { self.y.iter().zip(z).map(|(&v, &zi)| self.loss.rho(v - m - b * zi)).sum() };
        golden_section(obj, -self.b_bound, self.b_bound, self.b_tol).1
    }

    fn draw(&self, stream: RngStream) -> Vec<f64> {
        let mut z = vec![0.0; self.y.len()];
        fill_noise(&mut z, self.y.len(), self.noise, None, &mut stream.rng());
        z
    }

    fn gains(&self, m: f64, sims: usize, seed: u64) -> Vec<f64> {
        let base = self.objective(m);
        (0..sims as u64)
            .into_par_iter()
            .map(|r| base - self.noisy_optimum(m, &self.draw(RngStream::new(seed, r))))
            .collect()
    }

    fn quantile_gain(&self, m: f64, alpha: f64, sims: usize, seed: u64) -> f64 {
        quantile(&self.gains(m, sims, seed), alpha)
    }

    fn interval(&self, center: f64, alpha: f64, sims: usize, seed: u64) -> Result<NonSigInterval> {
        let s_center = self.objective(center);
        let f = |m: f64, s: u64| self.quantile_gain(m, alpha, sims, s) - (self.objective(m) - s_center);
        let mut sorted = self.y.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let nl = binom_half_quantile((1.0 - BRACKET_BETA) / 2.0, n).max(1);
        let range = (sorted[n - 1] - sorted[0]).max(smoothing_scale(self.y));
        let first_lo = if sorted[nl - 1] < center { sorted[nl - 1] } else { center - range };
        let first_hi = if sorted[n - nl] > center { sorted[n - nl] } else { center + range };
        let (lower, tol_lo) = search_side(&f, center, first_lo, range, Side::Lower, seed)?;
        let (upper, tol_hi) = search_side(&f, center, first_hi, range, Side::Upper, seed)?;
        Ok(NonSigInterval {
            lower,
            upper,
            estimate: center,
            alpha,
            method: IntervalMethod::SimulatedBisection,
            sims_per_quantile: sims,
            bisection_tolerance: tol_lo.max(tol_hi),
        })
    }
}

fn check_sample(y: &[f64]) -> Result<()> {
    if y.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 observations, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("observations must be finite".into()));
    }
    Ok(())
}

fn constant_interval(c: f64, alpha: f64, sims: usize) -> NonSigInterval {
    NonSigInterval {
        lower: c,
        upper: c,
        estimate: c,
        alpha,
        method: IntervalMethod::SimulatedBisection,
        sims_per_quantile: sims,
        bisection_tolerance: 0.0,
    }
}

/// Simulated alpha-non-significance interval for the median.
pub fn nonsig_median(y: &[f64], alpha: f64, sims: usize, seed: u64, discrete: bool) -> Result<NonSigInterval> {
    nonsig_median_with_noise(y, alpha, sims, seed, discrete, NoiseKind::Gaussian)
}

pub fn nonsig_median_with_noise(
    y: &[f64],
    alpha: f64,
    sims: usize,
    seed: u64,
    discrete: bool,
    noise: NoiseKind,
) -> Result<NonSigInterval> {
    check_sample(y)?;
    check_level(alpha)?;
    check_sims(sims)?;
    check_noise(noise)?;
    let med = median(y);
    if y.iter().all(|&v| v == y[0]) {
        return Ok(constant_interval(y[0], alpha, sims));
    }
    let interval = Location::new(y, LocationLoss::Abs, noise).interval(med, alpha, sims, seed)?;
    Ok(if discrete { interval.discrete_adjusted() } else { interval })
}

/// Proportion of noise draws with `inf_b sum |y_i + b Z_i - m| < sum |y_i - med(y)|`.
pub fn nonsig_median_pvalue(y: &[f64], m: f64, sims: usize, seed: u64) -> Result<f64> {
    check_sample(y)?;
    check_sims(sims)?;
    let loc = Location::new(y, LocationLoss::Abs, NoiseKind::Gaussian);
    let s1 = loc.objective(median(y));
    let hits = (0..sims as u64)
        .into_par_iter()
        .filter(|&r| loc.noisy_optimum(m, &loc.draw(RngStream::new(seed, r))) < s1)
        .count();
    Ok(hits as f64 / sims as f64)
}

/// Simulated gains `sum |y_i - m| - inf_b sum |y_i - m - b Z_i|`.
pub fn median_gains(y: &[f64], m: f64, sims: usize, seed: u64) -> Result<Vec<f64>> {
    check_sample(y)?;
    if sims == 0 {
        return Err(Error::InvalidArgument("need at least one simulation".into()));
    }
    Ok(Location::new(y, LocationLoss::Abs, NoiseKind::Gaussian).gains(m, sims, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMode {
    Simulated,
    Asymptotic,
}

fn location_loss(spec: &ObjectiveSpec, sigma: f64) -> LocationLoss {
    match spec.kind {
        Objective::L1 => LocationLoss::Abs,
        Objective::L2 => LocationLoss::Square,
        Objective::Huber { c } => LocationLoss::Huber { c, sigma },
    }
}

/// Location scale: an explicit scale from the spec, else the MAD about the median.
fn location_scale(y: &[f64], spec: &ObjectiveSpec) -> Result<f64> {
    if let crate::objective::ScalePolicy::External(s) = spec.scale {
        return Ok(s);
    }
    let s = mad(y);
    if s > 0.0 {
        Ok(s)
    } else if matches!(spec.kind, Objective::Huber { .. }) {
        Err(Error::DegenerateScale("MAD of the sample is zero".into()))
    } else {
        Ok(smoothing_scale(y))
    }
}

/// The M-location estimate for `spec`.
pub fn m_location(y: &[f64], spec: &ObjectiveSpec) -> Result<f64> {
    check_sample(y)?;
    let sigma = location_scale(y, spec)?;
    Ok(match spec.kind {
        Objective::L1 => median(y),
        Objective::L2 => crate::stats::mean(y),
        Objective::Huber { c } => {
            let x = DMatrix::from_element(y.len(), 1, 1.0);
            fit_matrix(&Loss::huber(c, sigma), &x, y, Some(&[median(y)]))?.beta[0]
        }
    })
}

/// Non-significance interval for an M-location functional.
pub fn nonsig_mlocation(
    y: &[f64],
    spec: &ObjectiveSpec,
    alpha: f64,
    mode: IntervalMode,
    sims: usize,
    seed: u64,
) -> Result<NonSigInterval> {
    check_sample(y)?;
    check_level(alpha)?;
    let sigma = location_scale(y, spec)?;
    let center = m_location(y, spec)?;
    match mode {
        IntervalMode::Simulated => {
            check_sims(sims)?;
            if y.iter().all(|&v| v == y[0]) {
                return Ok(constant_interval(y[0], alpha, sims));
            }
            Location::new(y, location_loss(spec, sigma), NoiseKind::Gaussian).interval(center, alpha, sims, seed)
        }
        IntervalMode::Asymptotic => {
            let (psi2, curv) = match spec.kind {
                Objective::L1 => {
                    return Err(Error::UnsupportedRegime(
                        "the asymptotic interval needs a smooth loss; use l2 or huber with c >= 0.5".into(),
                    ))
                }
                Objective::Huber { c } if c < crate::pvalues::MIN_ASYMPTOTIC_C => {
                    return Err(Error::UnsupportedRegime(format!(
                        "huber c = {c} is too close to l1 for the asymptotic interval"
                    )))
                }
                Objective::L2 => {
                    let u: Vec<f64> = y.iter().map(|v| (v - center) / sigma).collect();
                    (u.iter().map(|v| v * v).sum::<f64>(), y.len() as f64)
                }
                Objective::Huber { c } => {
                    let u: Vec<f64> = y.iter().map(|v| (v - center) / sigma).collect();
                    (
                        u.iter().map(|&v| huber_psi(v, c).powi(2)).sum::<f64>(),
                        u.iter().map(|&v| huber_psi_prime(v, c)).sum::<f64>(),
                    )
                }
            };
            if curv <= 0.0 {
                return Err(Error::DegenerateCurvature("no residual lies in the quadratic zone".into()));
            }
            let n = y.len() as f64;
            let v = (psi2 / n) / (curv / n).powi(2);
            let h = normal_quantile((1.0 + alpha) / 2.0) * sigma * (v / n).sqrt();
            Ok(NonSigInterval {
                lower: center - h,
                upper: center + h,
                estimate: center,
                alpha,
                method: IntervalMethod::Asymptotic,
                sims_per_quantile: 0,
                bisection_tolerance: 0.0,
            })
        }
    }
}

/// Asymptotic interval for the median, `med(y) +- sqrt(qchisq(alpha, 1) / (4 f0^2 n))`.
pub fn asymptotic_median_interval(y: &[f64], alpha: f64, f0: f64) -> Result<NonSigInterval> {
    check_sample(y)?;
    check_level(alpha)?;
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::InvalidArgument(format!("density at zero must be positive, got {f0}")));
    }
    let med = median(y);
    let h = (chisq_quantile(alpha, 1) / (4.0 * f0 * f0 * y.len() as f64)).sqrt();
    Ok(NonSigInterval {
        lower: med - h,
        upper: med + h,
        estimate: med,
        alpha,
        method: IntervalMethod::Asymptotic,
        sims_per_quantile: 0,
        bisection_tolerance: 0.0,
    })
}

/// Gaussian-kernel estimate of the residual density at zero, bandwidth
/// `0.9 min(sd, IQR / 1.34) n^(-1/5)`. Approximate; meant for cross-checks.
pub fn kernel_density_at_zero(residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two residuals".into()));
    }
    let sd = crate::stats::variance(residuals).sqrt();
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateScale("residuals have no spread".into()));
    }
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    Ok(residuals.iter().map(|r| normal_density(r / h)).sum::<f64>() / (n as f64 * h))
}

/// L1 fit pieces shared by the component-wise intervals.
struct L1Profile {
    y: Vec<f64>,
    x: DMatrix<f64>,
    column: usize,
    /// Design without `column`.
    rest: DMatrix<f64>,
    loss: Loss,
    full_sum: f64,
    full_beta: Vec<f64>,
    full_residuals: Vec<f64>,
    noise: NoiseKind,
}

impl L1Profile {
    fn new(x: DMatrix<f64>, y: &[f64], column: usize, noise: NoiseKind) -> Result<Self> {
        let loss = Loss::l1_for(y);
        let full = fit_matrix(&loss, &x, y, None)?;
        let rest = x.clone().remove_column(column);
        Ok(L1Profile {
            y: y.to_vec(),
            column,
            rest,
            loss,
            full_sum: full.residuals.iter().map(|r| r.abs()).sum(),
            full_beta: full.beta,
            full_residuals: full.residuals,
            x,
            noise,
        })
    }

    fn pseudo_response(&self, value: f64) -> Vec<f64> {
        self.y
            .iter()
            .zip(self.x.column(self.column).iter())
            .map(|(yi, xi)| yi - xi * value)
            .collect()
    }

    /// Profile fit with the coefficient held at `value`: `(sum |r|, beta_rest)`.
    fn profile(&self, value: f64) -> Result<(f64, Vec<f64>)> {
        let yp = self.pseudo_response(value);
        let warm: Vec<f64> = self
            .full_beta
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.column)
            .map(|(_, &b)| b)
            .collect();
        let fit = fit_matrix(&self.loss, &self.rest, &yp, Some(&warm))?;
        Ok((fit.residuals.iter().map(|r| r.abs()).sum(), fit.beta))
    }

    fn gains(&self, value: f64, sims: usize, seed: u64) -> Result<Vec<f64>> {
        let (base, warm) = self.profile(value)?;
        let yp = self.pseudo_response(value);
        let (n, p) = (self.rest.nrows(), self.rest.ncols());
        let mut warm = warm;
        warm.push(0.0);
        (0..sims as u64)
            .into_par_iter()
            .map(|r| {
                let mut w = self.rest.clone().insert_column(p, 0.0);
                let mut rng = RngStream::new(seed, r).rng();
                fill_noise(&mut w.as_mut_slice()[p * n..], n, self.noise, None, &mut rng);
                let fit = fit_matrix(&self.loss, &w, &yp, Some(&warm))?;
                Ok((base - fit.residuals.iter().map(|r| r.abs()).sum::<f64>()).max(0.0))
            })
            .collect()
    }

    fn estimate(&self) -> f64 {
        self.full_beta[self.column]
    }

    /// Asymptotic standard deviation of the coefficient, used only to size the bracket.
    fn sd_proxy(&self) -> f64 {
        let xtx = self.x.transpose() * &self.x;
        let v = xtx.try_inverse().map(|m| m[(self.column, self.column)]).unwrap_or(f64::NAN);
        let f0 = kernel_density_at_zero(&self.full_residuals).unwrap_or(f64::NAN);
        let sd = v.sqrt() / (2.0 * f0);
        if sd.is_finite() && sd > 0.0 {
            sd
        } else {
            v.sqrt() * smoothing_scale(&self.full_residuals)
        }
    }

    fn interval(&self, alpha: f64, sims: usize, seed: u64, fast_quantile: bool) -> Result<NonSigInterval> {
        let fixed_q = if fast_quantile {
            Some(quantile(&self.gains(self.estimate(), sims, derive_seed(seed, &[7]))?, alpha))
        } else {
            None
        };
        // Errors inside the root finder surface after the search.
        let failure = std::sync::Mutex::new(None::<Error>);
        let f = |v: f64, s: u64| -> f64 {
            let run = || -> Result<f64> {
                let q = match fixed_q {
                    Some(q) => q,
                    None => quantile(&self.gains(v, sims, s)?, alpha),
                };
                Ok(q - (self.profile(v)?.0 - self.full_sum))
            };
            run().unwrap_or_else(|e| {
                failure.lock().expect("no poisoning").get_or_insert(e);
                0.0
            })
        };
        let center = self.estimate();
        let step = 3.0 * self.sd_proxy();
        let lower = search_side(&f, center, center - step, step, Side::Lower, seed);
        let upper = search_side(&f, center, center + step, step, Side::Upper, seed);
        if let Some(e) = failure.into_inner().expect("no poisoning") {
            return Err(e);
        }
        let ((lower, tol_lo), (upper, tol_hi)) = (lower?, upper?);
        Ok(NonSigInterval {
            lower,
            upper,
            estimate: center,
            alpha,
            method: IntervalMethod::SimulatedBisection,
            sims_per_quantile: sims,
            bisection_tolerance: tol_lo.max(tol_hi),
        })
    }
}

fn check_design(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if x.nrows() <= x.ncols() || crate::linalg::condition_ratio(x) < crate::linalg::RANK_TOLERANCE {
        let cols = crate::linalg::dependent_columns(x);
        return Err(Error::SingularDesign {
            columns: cols.into_iter().map(|j| names[j].clone()).collect(),
        });
    }
    Ok(())
}

/// Component-wise L1 non-significance interval for covariate `j` (0-based).
pub fn nonsig_l1_component(
    d: &Dataset,
    j: usize,
    alpha: f64,
    sims: usize,
    seed: u64,
    fast_quantile: bool,
) -> Result<NonSigInterval> {
    if j >= d.k() {
        return Err(Error::InvalidArgument(format!("covariate index {j} out of range for k = {}", d.k())));
    }
    nonsig_l1_coefficient(d, j + 1, alpha, sims, seed, fast_quantile)
}

/// As [`nonsig_l1_component`] but indexed by design column, 0 being the intercept.
pub fn nonsig_l1_coefficient(
    d: &Dataset,
    column: usize,
    alpha: f64,
    sims: usize,
    seed: u64,
    fast_quantile: bool,
) -> Result<NonSigInterval> {
    check_level(alpha)?;
    check_sims(sims)?;
    let x = design_matrix(d, d.full());
    check_design(&x, &crate::data::design_names(d, d.full()))?;
    if column >= x.ncols() {
        return Err(Error::InvalidArgument(format!("design column {column} out of range")));
    }
    l1_coefficient_interval(x, d.y().as_slice(), column, alpha, sims, seed, fast_quantile, NoiseKind::Gaussian)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn l1_coefficient_interval(
    x: DMatrix<f64>,
    y: &[f64],
    column: usize,
    alpha: f64,
    sims: usize,
    seed: u64,
    fast_quantile: bool,
    noise: NoiseKind,
) -> Result<NonSigInterval> {
    L1Profile::new(x, y, column, noise)?.interval(alpha, sims, seed, fast_quantile)
}

/// Outcome of the full-vector L1 membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Membership {
    pub member: bool,
    /// `||y - X beta||_1 - ||y - X beta_1||_1`
    pub excess: f64,
    /// Simulated alpha-quantile of the gain from a full noise design.
    pub quantile: f64,
}

/// Decide whether `beta` (intercept first) lies in the full-vector L1 region.
pub fn l1_region_contains(d: &Dataset, beta: &[f64], alpha: f64, sims: usize, seed: u64) -> Result<L1Membership> {
    check_level(alpha)?;
    check_sims(sims)?;
    let x = design_matrix(d, d.full());
    let (n, p) = (x.nrows(), x.ncols());
    if beta.len() != p {
        return Err(Error::InvalidArgument(format!("expected {p} coefficients, got {}", beta.len())));
    }
    check_design(&x, &crate::data::design_names(d, d.full()))?;
    let y = d.y().as_slice();
    let loss = Loss::l1_for(y);
    let full = fit_matrix(&loss, &x, y, None)?;
    let full_sum: f64 = full.residuals.iter().map(|r| r.abs()).sum();
    let r: Vec<f64> = (d.y() - &x * DVector::from_column_slice(beta)).iter().copied().collect();
    let base: f64 = r.iter().map(|v| v.abs()).sum();
    let gains: Vec<f64> = (0..sims as u64)
        .into_par_iter()
        .map(|i| {
            let mut z = DMatrix::zeros(n, p);
            fill_noise(z.as_mut_slice(), n, NoiseKind::Gaussian, None, &mut RngStream::new(seed, i).rng());
            let fit = fit_matrix(&loss, &z, &r, Some(&vec![0.0; p]))?;
            Ok(base - fit.residuals.iter().map(|v| v.abs()).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let q = quantile(&gains, alpha);
    let excess = base - full_sum;
    Ok(L1Membership {
        member: excess <= q,
        excess,
        quantile: q,
    })
}

/// Large-sample ellipsoid for an M-regression functional (Huber with
/// `c >= 0.5`) or for least squares.
pub fn nonsig_m_regression(d: &Dataset, spec: &ObjectiveSpec, alpha: f64) -> Result<NonSigEllipsoid> {
    check_level(alpha)?;
    let x = design_matrix(d, d.full());
    let names = crate::data::design_names(d, d.full());
    check_design(&x, &names)?;
    let (n, p) = (x.nrows(), x.ncols());
    let q = chisq_quantile(alpha, p);
    let y = d.y().as_slice();
    let xtx = x.transpose() * &x;
    match spec.kind {
        Objective::L1 => Err(Error::UnsupportedRegime(
            "use the asymptotic L1 region (needs f(0)) or component-wise intervals for l1".into(),
        )),
        Objective::Huber { c } if c < crate::pvalues::MIN_ASYMPTOTIC_C => Err(Error::UnsupportedRegime(format!(
            "huber c = {c} is too close to l1 for the ellipsoid"
        ))),
        Objective::L2 => {
            if (n as f64) <= q {
                return Err(Error::InvalidArgument(format!(
                    "n = {n} does not exceed qchisq(alpha, {p}) = {q:.3}; the region is unbounded"
                )));
            }
            let fit = fit_matrix(&Loss::l2(), &x, y, None)?;
            let rss: f64 = fit.residuals.iter().map(|r| r * r).sum();
            Ok(NonSigEllipsoid::new(fit.beta, &xtx, rss * q / (n as f64 - q), alpha, names))
        }
        Objective::Huber { c } => {
            let sigma = resolve_scale(d, spec)?;
            let fit = fit_matrix(&Loss::huber(c, sigma), &x, y, None)?;
            let u: Vec<f64> = fit.residuals.iter().map(|r| r / sigma).collect();
            let psi2: f64 = u.iter().map(|&v| huber_psi(v, c).powi(2)).sum();
            let curv: f64 = u.iter().map(|&v| huber_psi_prime(v, c)).sum();
            if curv <= 0.0 {
                return Err(Error::DegenerateCurvature("no residual lies in the quadratic zone".into()));
            }
            let radius2 = q * sigma * sigma * n as f64 * psi2 / (curv * curv);
            Ok(NonSigEllipsoid::new(fit.beta, &xtx, radius2, alpha, names))
        }
    }
}

/// Asymptotic L1 region `(b - b1)' Q (b - b1) <= qchisq(alpha, k + 1) / (4 f0^2 n)`
/// with `Q = X'X / n`.
pub fn nonsig_asymptotic_l1(d: &Dataset, alpha: f64, f0: f64) -> Result<NonSigEllipsoid> {
    check_level(alpha)?;
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::InvalidArgument(format!("density at zero must be positive, got {f0}")));
    }
    let x = design_matrix(d, d.full());
    let names = crate::data::design_names(d, d.full());
    check_design(&x, &names)?;
    let (n, p) = (x.nrows() as f64, x.ncols());
    let y = d.y().as_slice();
    let fit = fit_matrix(&Loss::l1_for(y), &x, y, None)?;
    let qn = x.transpose() * &x / n;
    let radius2 = chisq_quantile(alpha, p) / (4.0 * f0 * f0 * n);
    Ok(NonSigEllipsoid::new(fit.beta, &qn, radius2, alpha, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stackloss;

    /// Exact `inf_b sum |r_i - b z_i|`: a weighted median of `r_i / z_i`
    /// with weights `|z_i|` minimises it.
    fn weighted_median_optimum(r: &[f64], z: &[f64]) -> f64 {
        let mut pts: Vec<(f64, f64)> = r.iter().zip(z).filter(|(_, &zi)| zi != 0.0).map(|(&ri, &zi)| (ri / zi, zi.abs())).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        let b = pts
            .iter()
            .find(|p| {
                acc += p.1;
                acc >= total / 2.0
            })
            .unwrap()
            .0;
        r.iter().zip(z).map(|(ri, zi)| (ri - b * zi).abs()).sum()
    }

    #[test]
    fn golden_inner_minimum_matches_weighted_median() {
        let d = stackloss();
        let y = d.y().as_slice();
        let loc = Location::new(y, LocationLoss::Abs, NoiseKind::Gaussian);
        for (r, m) in [(0u64, 12.0), (1, 15.0), (2, 18.5), (3, 9.0)] {
            let z = loc.draw(RngStream::new(99, r));
            let res: Vec<f64> = y.iter().map(|v| v - m).collect();
            let exact = weighted_median_optimum(&res, &z);
            let got = loc.noisy_optimum(m, &z);
            assert!(got >= exact - 1e-9 && got - exact < 1e-5, "{got} vs {exact}");
        }
    }

    #[test]
    fn square_loss_closed_form_matches_search() {
        let y = [1.0, 4.0, 2.5, 7.0, 3.0, -1.0];
        let loc = Location::new(&y, LocationLoss::Square, NoiseKind::Gaussian);
        let z = loc.draw(RngStream::new(5, 0));
        let closed = loc.noisy_optimum(2.0, &z);
        let (_, searched) = golden_section(
            |b| y.iter().zip(&z).map(|(v, zi)| 0.5 * (v - 2.0 - b * zi).powi(2)).sum(),
            -100.0,
            100.0,
            1e-10,
        );
        assert!((closed - searched).abs() < 1e-8);
    }

    #[test]
    fn discrete_adjustment_rules() {
        let base = constant_interval(0.0, 0.95, 10);
        let with_int = NonSigInterval { lower: 3.2, upper: 5.7, ..base }.discrete_adjusted();
        assert_eq!((with_int.lower, with_int.upper), (4.0, 5.0));
        let without = NonSigInterval { lower: 3.2, upper: 3.7, ..base }.discrete_adjusted();
        assert_eq!((without.lower, without.upper), (3.0, 4.0));
        let point = NonSigInterval { lower: 3.9, upper: 4.1, ..base }.discrete_adjusted();
        assert_eq!((point.lower, point.upper), (4.0, 4.0));
    }

    #[test]
    fn constant_sample_gives_point_interval() {
        let i = nonsig_median(&[2.5; 10], 0.95, 50, 1, false).unwrap();
        assert_eq!((i.lower, i.upper), (2.5, 2.5));
    }

    #[test]
    fn asymptotic_median_half_width() {
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let i = asymptotic_median_interval(&y, 0.95, normal_density(0.0)).unwrap();
        let h = 0.5 * i.length();
        assert!((h - 0.2455).abs() < 5e-4, "{h}");
        assert!(asymptotic_median_interval(&y, 0.95, 0.0).is_err());
    }

    #[test]
    fn ellipsoid_contains_center() {
        let d = stackloss();
        let e = nonsig_m_regression(&d, &ObjectiveSpec::l2(), 0.95).unwrap();
        assert!(e.contains(&e.center.clone()));
        assert!(nonsig_m_regression(&d, &ObjectiveSpec::l1(), 0.95).is_err());
    }
}
