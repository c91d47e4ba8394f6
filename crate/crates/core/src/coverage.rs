//! Covering frequencies and lengths of non-significance intervals against
//! rank intervals, on synthetic samples and on data generated from the
//! stack-loss L1 fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Cauchy, ChiSquared, Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{design_matrix, stackloss, Dataset};
use crate::error::{Error, Result};
use crate::noise::{derive_seed, RngStream};
use crate::nonsig::{nonsig_l1_component, nonsig_median};
use crate::stats::{binom_half_quantile, chisq_quantile};

/// L1 coefficients of the stack-loss data used to generate responses.
pub const STACKLOSS_TRUE_BETA: [f64; 4] = [-39.69, 0.832, 0.574, -0.061];

pub const MIN_MEDIAN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Normal,
    Cauchy,
    ChiSq1,
    Poisson { mean: f64 },
    /// Laplace with unit scale.
    Laplace,
}

impl Family {
    pub fn is_discrete(self) -> bool {
        matches!(self, Family::Poisson { .. })
    }

    /// Population median.
    pub fn median(self) -> f64 {
        match self {
            Family::Normal | Family::Cauchy | Family::Laplace => 0.0,
            Family::ChiSq1 => chisq_quantile(0.5, 1),
            Family::Poisson { mean } => {
                // Smallest integer with P(X <= m) >= 1/2.
                let mut cdf = 0.0;
                let mut pmf = (-mean).exp();
                let mut m = 0.0;
                loop {
                    cdf += pmf;
                    if cdf >= 0.5 {
                        return m;
                    }
                    m += 1.0;
                    pmf *= mean / m;
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::Normal => rng.sample(StandardNormal),
            Family::Cauchy => Cauchy::new(0.0, 1.0).expect("valid").sample(rng),
            Family::ChiSq1 => ChiSquared::new(1.0).expect("valid").sample(rng),
            Family::Poisson { mean } => Poisson::new(mean).expect("positive mean").sample(rng),
            Family::Laplace => laplace(rng),
        }
    }
}

fn laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Normal => f.write_str("normal"),
            Family::Cauchy => f.write_str("cauchy"),
            Family::ChiSq1 => f.write_str("chisq1"),
            Family::Poisson { mean } => write!(f, "poisson:{mean}"),
            Family::Laplace => f.write_str("laplace"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "normal" => Family::Normal,
            "cauchy" => Family::Cauchy,
            "chisq1" => Family::ChiSq1,
            "laplace" => Family::Laplace,
            _ => match s.strip_prefix("poisson:") {
                Some(m) => {
                    let mean: f64 = m
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad poisson mean '{m}'")))?;
                    if !(mean > 0.0 && mean.is_finite()) {
                        return Err(Error::InvalidArgument(format!("poisson mean must be positive, got {mean}")));
                    }
                    Family::Poisson { mean }
                }
                None => return Err(Error::InvalidArgument(format!("unknown family '{s}'"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize) -> Self {
        GeneratorSpec { family, n }
    }

    pub fn true_target(&self) -> f64 {
        self.family.median()
    }

    pub fn draw(&self, stream: RngStream) -> Vec<f64> {
        let mut rng = stream.rng();
        (0..self.n).map(|_| self.family.sample(&mut rng)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub method: String,
    pub replicates: usize,
    pub covered: usize,
    pub covering_frequency: f64,
    pub mean_length: f64,
}

impl CoverageResult {
    fn from_intervals(method: &str, intervals: &[(f64, f64)], truth: f64) -> Self {
        let covered = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
        let n = intervals.len();
        CoverageResult {
            method: method.to_string(),
            replicates: n,
            covered,
            covering_frequency: covered as f64 / n as f64,
            mean_length: intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / n as f64,
        }
    }
}

/// Order-statistic interval `[y_(l), y_(n - l + 1)]` for the median with
/// `l = qbinom((1 - alpha) / 2, n, 1/2)` (at least 1), indices 1-based.
pub fn rank_median_ci(y: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let n = y.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!("the rank interval needs n >= 5, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let l = binom_half_quantile((1.0 - alpha) / 2.0, n).clamp(1, n.div_ceil(2));
    Ok((s[l - 1], s[n - l]))
}

#[derive(Debug, Clone, Serialize)]
pub struct MedianCoverage {
    pub generator: GeneratorSpec,
    pub alpha: f64,
    pub true_target: f64,
    pub nonsig: CoverageResult,
    pub rank: CoverageResult,
}

/// Covering study for the median. Samples from integer families get the
/// discrete adjustment of the non-significance interval.
pub fn coverage_median(
    gen: GeneratorSpec,
    alpha: f64,
    replicates: usize,
    sims: usize,
    seed: u64,
) -> Result<MedianCoverage> {
    if replicates < MIN_MEDIAN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_MEDIAN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let data_seed = derive_seed(seed, &[0]);
    let pairs: Vec<((f64, f64), (f64, f64))> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let y = gen.draw(RngStream::new(data_seed, r));
            let ns = nonsig_median(&y, alpha, sims, derive_seed(seed, &[1, r]), gen.family.is_discrete())?;
            Ok(((ns.lower, ns.upper), rank_median_ci(&y, alpha)?))
        })
        .collect::<Result<_>>()?;
    let truth = gen.true_target();
    let (ns, rank): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(MedianCoverage {
        generator: gen,
        alpha,
        true_target: truth,
        nonsig: CoverageResult::from_intervals("non-significance", &ns, truth),
        rank: CoverageResult::from_intervals("rank", &rank, truth),
    })
}

/// Error laws for responses generated from the stack-loss fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorFamily {
    /// A resampled stack-loss residual times an independent N(0, 1).
    Residuals,
    Normal,
    /// Laplace with the density at zero of N(0, 1).
    Laplace,
    /// Cauchy with the density at zero of N(0, 1).
    Cauchy,
}

impl FromStr for ErrorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "residuals" => ErrorFamily::Residuals,
            "normal" => ErrorFamily::Normal,
            "laplace" => ErrorFamily::Laplace,
            "cauchy" => ErrorFamily::Cauchy,
            _ => return Err(Error::InvalidArgument(format!("unknown error family '{s}'"))),
        })
    }
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorFamily::Residuals => "residuals",
            ErrorFamily::Normal => "normal",
            ErrorFamily::Laplace => "laplace",
            ErrorFamily::Cauchy => "cauchy",
        })
    }
}

/// Residuals of the stack-loss data about the generating coefficients.
pub fn stackloss_residuals() -> Vec<f64> {
    let d = stackloss();
    let x = design_matrix(&d, d.full());
    (d.y() - x * DVector::from_row_slice(&STACKLOSS_TRUE_BETA)).iter().copied().collect()
}

/// Error scale: mean absolute deviation of the stack-loss residuals.
pub fn stackloss_error_scale() -> f64 {
    let r = stackloss_residuals();
    r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64
}

/// Response drawn from the stack-loss model with the given error law.
pub fn stackloss_response(family: ErrorFamily, stream: RngStream) -> Vec<f64> {
    let d = stackloss();
    let x = design_matrix(&d, d.full());
    let mean = x * DVector::from_row_slice(&STACKLOSS_TRUE_BETA);
    let res = stackloss_residuals();
    let sigma = stackloss_error_scale();
    let mut rng = stream.rng();
    let half_pi = std::f64::consts::FRAC_PI_2;
    mean.iter()
        .map(|m| {
            let e = match family {
                ErrorFamily::Residuals => {
                    let r = res[rng.random_range(0..res.len())];
                    r * rng.sample::<f64, _>(StandardNormal)
                }
                ErrorFamily::Normal => sigma * Normal::new(0.0, 1.0).expect("valid").sample(&mut rng),
                ErrorFamily::Laplace => sigma * half_pi.sqrt() * laplace(&mut rng),
                ErrorFamily::Cauchy => {
                    sigma * Cauchy::new(0.0, (1.0 / half_pi).sqrt()).expect("valid").sample(&mut rng)
                }
            };
            m + e
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientCoverage {
    pub name: String,
    pub truth: f64,
    pub result: CoverageResult,
}

/// Covering study of the component-wise L1 intervals on responses from the
/// stack-loss model. `covariates` are 0-based covariate indices.
pub fn coverage_regression_for(
    family: ErrorFamily,
    covariates: &[usize],
    alpha: f64,
    replicates: usize,
    sims: usize,
    seed: u64,
) -> Result<Vec<CoefficientCoverage>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let base = stackloss();
    if let Some(&j) = covariates.iter().find(|&&j| j >= base.k()) {
        return Err(Error::InvalidArgument(format!("covariate index {j} out of range")));
    }
    let data_seed = derive_seed(seed, &[0]);
    let per_rep: Vec<Vec<(f64, f64)>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let d: Dataset = base.with_response(stackloss_response(family, RngStream::new(data_seed, r)))?;
            covariates
                .iter()
                .map(|&j| {
                    let i = nonsig_l1_component(&d, j, alpha, sims, derive_seed(seed, &[1, r, j as u64]), false)?;
                    Ok((i.lower, i.upper))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(covariates
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let intervals: Vec<(f64, f64)> = per_rep.iter().map(|v| v[c]).collect();
            let truth = STACKLOSS_TRUE_BETA[j + 1];
            CoefficientCoverage {
                name: base.names()[j].clone(),
                truth,
                result: CoverageResult::from_intervals("non-significance", &intervals, truth),
            }
        })
        .collect())
}

/// [`coverage_regression_for`] over all three slopes.
pub fn coverage_regression(
    family: ErrorFamily,
    alpha: f64,
    replicates: usize,
    sims: usize,
    seed: u64,
) -> Result<Vec<CoefficientCoverage>> {
    coverage_regression_for(family, &[0, 1, 2], alpha, replicates, sims, seed)
}
