//! Choosing a functional: screen subsets against the calibrated cut-off,
//! require every omitted covariate to matter, then take the best P-value.
//! BIC ranking is provided as the conventional baseline.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{p0_chisq_approx, CutoffTable};
use crate::data::{subsets_of, Dataset, SubsetCode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::{derive_seed, NoiseKind, RngStream};
use crate::objective::ObjectiveSpec;
use crate::pvalues::{Method, PValueEngine, PValueReport};

pub const MAX_SELECTION_K: usize = 12;
pub const DEFAULT_CHISQ_SIMS: usize = 100_000;

/// Where `p0(n, k, alpha)` comes from.
#[derive(Debug, Clone)]
pub enum CutoffSource {
    Table(CutoffTable),
    /// One user-chosen cut-off for every `k`.
    Scalar(f64),
    /// Chi-squared approximation simulated on demand.
    ChisqApprox { sims: usize, seed: u64 },
}

impl CutoffSource {
    pub fn chisq(seed: u64) -> Self {
        CutoffSource::ChisqApprox {
            sims: DEFAULT_CHISQ_SIMS,
            seed,
        }
    }

    pub fn cutoff(&self, n: usize, k: usize, alpha: f64) -> Result<f64> {
        match self {
            CutoffSource::Scalar(p0) => Ok(*p0),
            CutoffSource::ChisqApprox { sims, seed } => p0_chisq_approx(k, alpha, *sims, *seed),
            CutoffSource::Table(t) => t.lookup(n, k, alpha).ok_or_else(|| {
                Error::InvalidArgument(format!("cut-off table has no entry for n = {n}, k = {k}, alpha = {alpha}"))
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeCheck {
    pub outer: SubsetCode,
    pub inner: SubsetCode,
    pub p: f64,
    pub cutoff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionOutcome {
    pub alpha: f64,
    pub method: Method,
    pub survivors_step1: Vec<SubsetCode>,
    pub survivors_step2: Vec<SubsetCode>,
    pub chosen: Option<SubsetCode>,
    pub chosen_p: Option<f64>,
    /// `k(e) -> p0(n, k(e), alpha)`
    pub cutoffs: BTreeMap<usize, f64>,
    pub reports: Vec<PValueReport>,
    pub relative: Vec<RelativeCheck>,
}

fn single_value(report: &PValueReport, method: Method) -> f64 {
    report.value(method).expect("requested method is present")
}

/// P-value of `inner` computed as if the covariates of `outer` were all there is.
pub fn relative_pvalue(
    d: &Dataset,
    outer: SubsetCode,
    inner: SubsetCode,
    obj: &ObjectiveSpec,
    method: Method,
    n_sims: usize,
    seed: u64,
) -> Result<f64> {
    outer.check(d.k())?;
    if !inner.is_proper_subset_of(outer) {
        return Err(Error::InvalidArgument(format!(
            "subset {} is not a proper subset of {}",
            inner.bits(),
            outer.bits()
        )));
    }
    if method == Method::All {
        return Err(Error::InvalidArgument("choose a single P-value method".into()));
    }
    let restricted = d.restrict(outer)?;
    let engine = PValueEngine::new(&restricted, obj)?;
    let r = engine.report(inner.reindex_within(outer, d.k()), method, n_sims, NoiseKind::Gaussian, seed)?;
    Ok(single_value(&r, method))
}

/// Two-step choice of functional. Step 1 keeps `e` with `p(e) > p0(n, k, alpha)`;
/// step 2 keeps those for which every proper sub-functional is rejected,
/// `p(e', e) < p0(n, k(e), alpha)`. The winner has the largest `p(e)`, ties
/// going to fewer covariates and then to the smaller code.
pub fn choose_functional(
    d: &Dataset,
    obj: &ObjectiveSpec,
    alpha: f64,
    cutoffs: &CutoffSource,
    method: Method,
    n_sims: usize,
    seed: u64,
) -> Result<SelectionOutcome> {
    let k = d.k();
    if k > MAX_SELECTION_K {
        return Err(Error::Capacity {
            what: "covariate count for functional selection",
            value: k,
            max: MAX_SELECTION_K,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if method == Method::All {
        return Err(Error::InvalidArgument("choose a single P-value method".into()));
    }
    let n = d.n();
    let engine = PValueEngine::new(d, obj)?;
    let reports: Vec<PValueReport> = subsets_of(k)?
        .into_iter()
        .map(|e| engine.report(e, method, n_sims, NoiseKind::Gaussian, seed))
        .collect::<Result<_>>()?;
    let p_of = |e: SubsetCode| single_value(&reports[e.bits() as usize], method);

    let mut table = BTreeMap::new();
    let mut cutoff = |kk: usize| -> Result<f64> {
        if let Some(&v) = table.get(&kk) {
            return Ok(v);
        }
        let v = cutoffs.cutoff(n, kk, alpha)?;
        table.insert(kk, v);
        Ok(v)
    };

    let p0 = cutoff(k)?;
    let step1: Vec<SubsetCode> = reports.iter().map(|r| r.subset).filter(|&e| p_of(e) > p0).collect();

    let mut relative = Vec::new();
    let mut step2 = Vec::new();
    for &e in &step1 {
        let inner = e.proper_subsets();
        if inner.is_empty() {
            step2.push(e);
            continue;
        }
        let c = cutoff(e.size())?;
        let mut keep = true;
        if e.is_full(k) {
            for &e2 in &inner {
                let p = p_of(e2);
                relative.push(RelativeCheck { outer: e, inner: e2, p, cutoff: c });
                keep &= p < c;
            }
        } else {
            let restricted = d.restrict(e)?;
            let sub_engine = PValueEngine::new(&restricted, obj)?;
            let sub_seed = derive_seed(seed, &[e.bits() as u64]);
            for &e2 in &inner {
                let r = sub_engine.report(e2.reindex_within(e, k), method, n_sims, NoiseKind::Gaussian, sub_seed)?;
                let p = single_value(&r, method);
                relative.push(RelativeCheck { outer: e, inner: e2, p, cutoff: c });
                keep &= p < c;
            }
        }
        if keep {
            step2.push(e);
        }
    }

    let chosen = step2.iter().copied().max_by(|&a, &b| {
        p_of(a)
            .total_cmp(&p_of(b))
            .then(b.size().cmp(&a.size()))
            .then(b.bits().cmp(&a.bits()))
    });
    Ok(SelectionOutcome {
        alpha,
        method,
        survivors_step1: step1,
        survivors_step2: step2,
        chosen,
        chosen_p: chosen.map(p_of),
        cutoffs: table,
        reports,
        relative,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BicRanking {
    /// Ascending BIC.
    pub ranking: Vec<(SubsetCode, f64)>,
    /// Rank-deficient subsets left out of the ranking.
    pub skipped: Vec<SubsetCode>,
}

/// `n log(RSS / n) + (k(e) + 2) log n`; a zero RSS is floored to keep the value finite.
pub fn bic_value(rss: f64, n: usize, size: usize) -> f64 {
    let n_f = n as f64;
    n_f * (rss.max(f64::MIN_POSITIVE) / n_f).ln() + (size as f64 + 2.0) * n_f.ln()
}

fn bic_on(y: &nalgebra::DVector<f64>, x: &nalgebra::DMatrix<f64>, k: usize) -> Result<BicRanking> {
    let n = y.len();
    let mut ranking = Vec::new();
    let mut skipped = Vec::new();
    for e in subsets_of(k)? {
        let cols = e.members(k);
        let mut design = nalgebra::DMatrix::from_element(n, cols.len() + 1, 1.0);
        for (c, &j) in cols.iter().enumerate() {
            design.column_mut(c + 1).copy_from(&x.column(j));
        }
        if n <= design.ncols() || linalg::condition_ratio(&design) < linalg::RANK_TOLERANCE {
            skipped.push(e);
            continue;
        }
        let beta = linalg::least_squares(&design, y).ok_or_else(|| Error::SingularDesign { columns: vec![] })?;
        let rss = (y - &design * beta).norm_squared();
        ranking.push((e, bic_value(rss, n, e.size())));
    }
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.bits().cmp(&b.0.bits())));
    Ok(BicRanking { ranking, skipped })
}

/// Gaussian-likelihood BIC of every subset, best first.
pub fn bic_rank(d: &Dataset) -> Result<BicRanking> {
    bic_on(d.y(), d.x(), d.k())
}

/// Fraction of replicates in which, after replacing every covariate by
/// Gaussian noise, the BIC winner contains at least one covariate.
pub fn bic_noise_experiment(d: &Dataset, reps: usize, seed: u64) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let (n, k) = (d.n(), d.k());
    let hits = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r).rng();
            let x = nalgebra::DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = bic_on(d.y(), &x, k)?;
            Ok(b.ranking.first().is_some_and(|(e, _)| e.size() > 0))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stackloss;

    #[test]
    fn bic_prefers_smaller_of_equal_fits() {
        assert!(bic_value(10.0, 20, 1) < bic_value(10.0, 20, 2));
        assert!(bic_value(0.0, 20, 1).is_finite());
    }

    #[test]
    fn relative_pvalue_argument_checks() {
        let d = stackloss();
        let obj = ObjectiveSpec::l2();
        let e = SubsetCode::new(3);
        assert!(relative_pvalue(&d, e, e, &obj, Method::Asymptotic, 0, 1).is_err());
        assert!(relative_pvalue(&d, e, SubsetCode::new(4), &obj, Method::Asymptotic, 0, 1).is_err());
    }

    #[test]
    fn relative_to_full_is_ordinary_pvalue() {
        let d = stackloss();
        let obj = ObjectiveSpec::l2();
        let rel = relative_pvalue(&d, d.full(), SubsetCode::new(3), &obj, Method::Asymptotic, 0, 1).unwrap();
        let p = crate::pvalues::p_asymptotic(&d, SubsetCode::new(3), &obj).unwrap();
        assert_eq!(Some(rel), p.p_asymptotic);
    }

    #[test]
    fn step2_within_step1_and_check_counts() {
        let d = stackloss();
        let out = choose_functional(
            &d,
            &ObjectiveSpec::l2(),
            0.05,
            &CutoffSource::Scalar(0.001),
            Method::Asymptotic,
            0,
            3,
        )
        .unwrap();
        assert!(out.survivors_step2.iter().all(|e| out.survivors_step1.contains(e)));
        for &e in &out.survivors_step1 {
            let checks = out.relative.iter().filter(|c| c.outer == e).count();
            assert_eq!(checks, (1usize << e.size()) - 1);
        }
        if let Some(c) = out.chosen {
            assert!(out.survivors_step2.contains(&c));
        }
    }
}
