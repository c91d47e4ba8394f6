//! P-values of covariate subsets by noise substitution.
//!
//! For a subset `e` the excluded covariates are replaced by fresh noise, the
//! functional is refitted on all `k + 1` columns, and the resulting mean loss
//! `S(e)` is compared with the full-model loss `s(e_f)`. Three estimates of
//! `P(S(e) <= s(e_f))` are offered: the raw Monte Carlo proportion, a Gamma
//! law fitted by moments to `s(e) - S(e)`, and the chi-squared asymptotics
//! of the second-order expansion (smooth objectives only).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{design_matrix, design_names, subsets_of, Dataset, SubsetCode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::{derive_seed, fill_noise, NoiseKind, RngStream};
use crate::objective::{huber_psi, huber_psi_prime, Objective, ObjectiveSpec};
use crate::solvers::{fit_matrix, loss_for, resolve_scale, Loss, MatrixFit};
use crate::stats::{chisq_sf, gamma_sf, mean, variance};

/// Smallest Huber constant for which the asymptotic P-value is offered.
pub const MIN_ASYMPTOTIC_C: f64 = 0.5;

/// Minimum number of simulations for the Gamma moment fit.
pub const MIN_GAMMA_SIMS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Raw,
    Gamma,
    Asymptotic,
    All,
}

impl Method {
    fn wants_raw(self) -> bool {
        matches!(self, Method::Raw | Method::All)
    }

    fn wants_gamma(self) -> bool {
        matches!(self, Method::Gamma | Method::All)
    }

    fn wants_asymptotic(self) -> bool {
        matches!(self, Method::Asymptotic | Method::All)
    }

    fn simulates(self) -> bool {
        !matches!(self, Method::Asymptotic)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Raw => "raw",
            Method::Gamma => "gamma",
            Method::Asymptotic => "asymptotic",
            Method::All => "all",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Method::Raw),
            "gamma" => Ok(Method::Gamma),
            "asymptotic" => Ok(Method::Asymptotic),
            "all" => Ok(Method::All),
            _ => Err(Error::InvalidArgument(format!("unknown P-value method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueReport {
    pub subset: SubsetCode,
    pub p_raw: Option<f64>,
    pub p_gamma: Option<f64>,
    pub p_asymptotic: Option<f64>,
    pub n_sims: usize,
    pub gamma_shape: Option<f64>,
    pub gamma_scale: Option<f64>,
    /// Mean loss `s(e_f)` of the full model.
    pub objective_full: f64,
    /// Mean loss `s(e)` of the subset fit.
    pub objective_subset: f64,
    /// The Gamma fit fell back to a 0/1 answer because the simulated gaps had no spread.
    pub gamma_degenerate: bool,
    /// Replicate fits that hit the iteration cap.
    pub nonconverged: usize,
}

impl PValueReport {
    /// The estimate for `method` (for `All`, the raw value).
    pub fn value(&self, method: Method) -> Option<f64> {
        match method {
            Method::Raw | Method::All => self.p_raw,
            Method::Gamma => self.p_gamma,
            Method::Asymptotic => self.p_asymptotic,
        }
    }
}

/// Simulated losses `S_r(e)` of one subset.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub subset: SubsetCode,
    pub losses: Vec<f64>,
    pub nonconverged: usize,
}

/// Fits shared by every subset of one dataset and objective.
pub struct PValueEngine<'a> {
    d: &'a Dataset,
    spec: ObjectiveSpec,
    sigma: f64,
    loss: Loss,
    design_full: DMatrix<f64>,
    full_fit: MatrixFit,
}

impl<'a> PValueEngine<'a> {
    pub fn new(d: &'a Dataset, spec: &ObjectiveSpec) -> Result<Self> {
        let sigma = resolve_scale(d, spec)?;
        let loss = loss_for(spec, sigma, d.y().as_slice());
        let design_full = design_matrix(d, d.full());
        if linalg::condition_ratio(&design_full) < linalg::RANK_TOLERANCE {
            return Err(Error::SingularDesign {
                columns: linalg::dependent_columns(&design_full)
                    .into_iter()
                    .map(|j| design_names(d, d.full())[j].clone())
                    .collect(),
            });
        }
        let full_fit = fit_matrix(&loss, &design_full, d.y().as_slice(), None)?;
        if !full_fit.converged {
            return Err(Error::InvalidArgument(
                "full-model fit did not converge; P-values are undefined".into(),
            ));
        }
        Ok(PValueEngine {
            d,
            spec: *spec,
            sigma,
            loss,
            design_full,
            full_fit,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    /// `s(e_f)`
    pub fn full_objective(&self) -> f64 {
        self.full_fit.objective
    }

    pub(crate) fn subset_fit(&self, e: SubsetCode) -> Result<MatrixFit> {
        e.check(self.d.k())?;
        if e.is_full(self.d.k()) {
            return Ok(self.full_fit.clone());
        }
        let x = design_matrix(self.d, e);
        if linalg::condition_ratio(&x) < linalg::RANK_TOLERANCE {
            return Err(Error::SingularDesign {
                columns: linalg::dependent_columns(&x)
                    .into_iter()
                    .map(|j| design_names(self.d, e)[j].clone())
                    .collect(),
            });
        }
        fit_matrix(&self.loss, &x, self.d.y().as_slice(), None)
    }

    /// Simulate `S_r(e)` for `r = 0..n_sims`. Replicate `r` of subset `e`
    /// always uses stream `(derive_seed(seed, [e]), r)`.
    pub fn simulate(&self, e: SubsetCode, n_sims: usize, kind: NoiseKind, seed: u64) -> Result<Simulation> {
        let k = self.d.k();
        e.check(k)?;
        if e.is_full(k) {
            return Ok(Simulation {
                subset: e,
                losses: vec![self.full_fit.objective; n_sims],
                nonconverged: 0,
            });
        }
        let subset_fit = self.subset_fit(e)?;
        self.simulate_from(e, &subset_fit, n_sims, kind, seed)
    }

    fn simulate_from(
        &self,
        e: SubsetCode,
        subset_fit: &MatrixFit,
        n_sims: usize,
        kind: NoiseKind,
        seed: u64,
    ) -> Result<Simulation> {
        let k = self.d.k();
        let n = self.d.n();
        let excluded = e.complement(k).members(k);
        // Warm start: subset coefficients, zero on the noise columns.
        let mut warm = vec![0.0; k + 1];
        warm[0] = subset_fit.beta[0];
        for (c, j) in e.members(k).into_iter().enumerate() {
            warm[j + 1] = subset_fit.beta[c + 1];
        }
        let template: Vec<f64> = if kind.needs_template() {
            excluded.iter().flat_map(|&j| self.d.x().column(j).iter().copied().collect::<Vec<_>>()).collect()
        } else {
            Vec::new()
        };
        let stream_seed = derive_seed(seed, &[e.bits() as u64]);
        let y = self.d.y().as_slice();
        let results: Vec<Result<(f64, bool)>> = (0..n_sims as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(stream_seed, r).rng();
                let mut w = self.design_full.clone();
                let mut z = vec![0.0; n * excluded.len()];
                let tpl = if kind.needs_template() { Some(template.as_slice()) } else { None };
                fill_noise(&mut z, n, kind, tpl, &mut rng);
                for (c, &j) in excluded.iter().enumerate() {
                    w.column_mut(j + 1).copy_from_slice(&z[c * n..(c + 1) * n]);
                }
                let fit = fit_matrix(&self.loss, &w, y, Some(&warm))?;
                Ok((fit.objective, fit.converged))
            })
            .collect();
        let mut losses = Vec::with_capacity(n_sims);
        let mut nonconverged = 0;
        for r in results {
            let (s, conv) = r?;
            losses.push(s);
            if !conv {
                nonconverged += 1;
            }
        }
        Ok(Simulation {
            subset: e,
            losses,
            nonconverged,
        })
    }

    /// Asymptotic chi-squared P-value; requires L2 or Huber with `c >= 0.5`.
    pub fn asymptotic(&self, e: SubsetCode) -> Result<f64> {
        let fit = self.subset_fit(e)?;
        self.asymptotic_from(e, &fit)
    }

    fn asymptotic_from(&self, e: SubsetCode, fit: &MatrixFit) -> Result<f64> {
        let k = self.d.k();
        let df = k - e.size();
        let n = self.d.n() as f64;
        if df == 0 {
            return Ok(1.0);
        }
        let stat = match self.spec.kind {
            Objective::L1 => {
                return Err(Error::UnsupportedRegime(
                    "asymptotic P-values are not available for the L1 functional".into(),
                ))
            }
            Objective::Huber { c } if c < MIN_ASYMPTOTIC_C => {
                return Err(Error::UnsupportedRegime(format!(
                    "asymptotic P-values need a Huber constant of at least {MIN_ASYMPTOTIC_C}, got {c}"
                )))
            }
            Objective::L2 => {
                let rss_e = fit.objective;
                let rss_f = self.full_fit.objective;
                if rss_e <= 0.0 {
                    0.0
                } else {
                    n * (rss_e - rss_f) / rss_e
                }
            }
            Objective::Huber { c } => {
                let u: Vec<f64> = fit.residuals.iter().map(|r| r / self.sigma).collect();
                let curvature = mean(&u.iter().map(|&v| huber_psi_prime(v, c)).collect::<Vec<_>>());
                let score = mean(&u.iter().map(|&v| huber_psi(v, c).powi(2)).collect::<Vec<_>>());
                if score <= 0.0 {
                    0.0
                } else {
                    n * 2.0 * curvature * (fit.objective - self.full_fit.objective) / score
                }
            }
        };
        Ok(chisq_sf(stat.max(0.0), df))
    }

    /// P-value report for one subset.
    pub fn report(&self, e: SubsetCode, method: Method, n_sims: usize, kind: NoiseKind, seed: u64) -> Result<PValueReport> {
        let k = self.d.k();
        e.check(k)?;
        if method.simulates() && n_sims == 0 {
            return Err(Error::InvalidArgument("need at least one simulation".into()));
        }
        if method.wants_gamma() && n_sims < MIN_GAMMA_SIMS {
            return Err(Error::InvalidArgument(format!(
                "the Gamma approximation needs at least {MIN_GAMMA_SIMS} simulations, got {n_sims}"
            )));
        }
        let fit = self.subset_fit(e)?;
        let s_full = self.full_fit.objective;
        let mut report = PValueReport {
            subset: e,
            p_raw: None,
            p_gamma: None,
            p_asymptotic: None,
            n_sims: if method.simulates() { n_sims } else { 0 },
            gamma_shape: None,
            gamma_scale: None,
            objective_full: s_full,
            objective_subset: fit.objective,
            gamma_degenerate: false,
            nonconverged: 0,
        };
        if method.wants_asymptotic() {
            match self.asymptotic_from(e, &fit) {
                Ok(p) => report.p_asymptotic = Some(p),
                // With `All`, an unsupported regime just leaves the column empty.
                Err(Error::UnsupportedRegime(_)) if method == Method::All => {}
                Err(err) => return Err(err),
            }
        }
        if !method.simulates() {
            return Ok(report);
        }
        if e.is_full(k) {
            if method.wants_raw() {
                report.p_raw = Some(1.0);
            }
            if method.wants_gamma() {
                report.p_gamma = Some(1.0);
            }
            return Ok(report);
        }
        let sim = self.simulate_from(e, &fit, n_sims, kind, seed)?;
        report.nonconverged = sim.nonconverged;
        if method.wants_raw() {
            report.p_raw = Some(raw_proportion(&sim.losses, s_full));
        }
        if method.wants_gamma() {
            let gaps: Vec<f64> = sim.losses.iter().map(|s| fit.objective - s).collect();
            let g = gamma_pvalue(&gaps, fit.objective - s_full);
            report.p_gamma = Some(g.p);
            report.gamma_shape = g.shape;
            report.gamma_scale = g.scale;
            report.gamma_degenerate = g.degenerate;
        }
        Ok(report)
    }
}

/// `#{S_r <= s_full} / n`.
pub fn raw_proportion(losses: &[f64], s_full: f64) -> f64 {
    losses.iter().filter(|&&s| s <= s_full).count() as f64 / losses.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub p: f64,
    pub shape: Option<f64>,
    pub scale: Option<f64>,
    pub degenerate: bool,
}

/// Upper-tail probability of `observed` under a Gamma law fitted by moments
/// to the simulated `gaps`.
pub fn gamma_pvalue(gaps: &[f64], observed: f64) -> GammaFit {
    let m = mean(gaps);
    let v = if gaps.len() > 1 { variance(gaps) } else { 0.0 };
    if !(v > 0.0 && m > 0.0) {
        return GammaFit {
            p: if observed <= 0.0 { 1.0 } else { 0.0 },
            shape: None,
            scale: None,
            degenerate: true,
        };
    }
    let shape = m * m / v;
    let scale = v / m;
    GammaFit {
        p: gamma_sf(observed, shape, scale),
        shape: Some(shape),
        scale: Some(scale),
        degenerate: false,
    }
}

pub fn p_raw(d: &Dataset, e: SubsetCode, obj: &ObjectiveSpec, n_sims: usize, kind: NoiseKind, seed: u64) -> Result<PValueReport> {
    PValueEngine::new(d, obj)?.report(e, Method::Raw, n_sims, kind, seed)
}

pub fn p_gamma(d: &Dataset, e: SubsetCode, obj: &ObjectiveSpec, n_sims: usize, kind: NoiseKind, seed: u64) -> Result<PValueReport> {
    PValueEngine::new(d, obj)?.report(e, Method::Gamma, n_sims, kind, seed)
}

pub fn p_asymptotic(d: &Dataset, e: SubsetCode, obj: &ObjectiveSpec) -> Result<PValueReport> {
    PValueEngine::new(d, obj)?.report(e, Method::Asymptotic, 0, NoiseKind::Gaussian, 0)
}

/// One report per subset, in ascending code order.
pub fn p_all_subsets(
    d: &Dataset,
    obj: &ObjectiveSpec,
    method: Method,
    n_sims: usize,
    kind: NoiseKind,
    seed: u64,
) -> Result<Vec<PValueReport>> {
    let codes = subsets_of(d.k())?;
    let engine = PValueEngine::new(d, obj)?;
    codes
        .into_iter()
        .map(|e| engine.report(e, method, n_sims, kind, seed))
        .collect()
}
