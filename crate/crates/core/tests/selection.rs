use funcsel::pvalues::Method;
use funcsel::selection::{bic_noise_experiment, bic_rank, choose_functional, CutoffSource};
use funcsel::calibration::chisq_table;
use funcsel::{stackloss, Dataset, ObjectiveSpec, RngStream};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Beta, ContinuousCDF};

fn gaussian_dataset(n: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 0).rng();
    let y = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Dataset::new(y, x, (1..=k).map(|j| format!("z{j}")).collect(), "y").unwrap()
}

#[test]
fn stackloss_bic_order() {
    // order from an independent least-squares/BIC computation
    let b = bic_rank(&stackloss()).unwrap();
    let order: Vec<u32> = b.ranking.iter().map(|(e, _)| e.bits()).collect();
    assert_eq!(order, vec![3, 7, 1, 5, 2, 6, 4, 0]);
    assert!(b.skipped.is_empty());
}

#[test]
fn bic_noise_with_one_covariate_matches_beta_threshold() {
    // top model is {z} iff n log(RSS0 / RSS1) > log n, and the removed share
    // of RSS0 is Beta(1/2, (n - 2) / 2)
    let n = 100;
    let d = gaussian_dataset(n, 1, 1);
    let nf = n as f64;
    let cut = 1.0 - (-nf.ln() / nf).exp();
    let want = 1.0 - Beta::new(0.5, (nf - 2.0) / 2.0).unwrap().cdf(cut);
    let reps = 4000;
    let got = bic_noise_experiment(&d, reps, 3).unwrap();
    let se = (want * (1.0 - want) / reps as f64).sqrt();
    assert!((got - want).abs() < 4.0 * se, "{got} vs {want}");
    let one = bic_noise_experiment(&d, 1, 3).unwrap();
    assert!(one == 0.0 || one == 1.0);
}

/// The cut-off is calibrated so that, with pure-noise covariates, some
/// functional fails step 1 (some noise covariate looks necessary) in about
/// 100 alpha % of datasets.
#[test]
fn pure_noise_fails_step_one_about_alpha_of_the_time() {
    let reps = 200;
    let cutoffs = CutoffSource::Table(chisq_table(3, &[0.1], 100_000, 5).unwrap());
    let mut rejected = 0;
    for r in 0..reps {
        let d = gaussian_dataset(60, 3, 1000 + r);
        let out = choose_functional(&d, &ObjectiveSpec::l2(), 0.1, &cutoffs, Method::Asymptotic, 0, r).unwrap();
        rejected += (out.survivors_step1.len() < 8) as usize;
    }
    let frac = rejected as f64 / reps as f64;
    assert!((frac - 0.1).abs() <= 0.05, "{frac}");
}

#[test]
fn selection_is_deterministic() {
    let d = stackloss();
    let run = || {
        let out = choose_functional(&d, &ObjectiveSpec::l1(), 0.05, &CutoffSource::Scalar(0.0153), Method::Gamma, 200, 8).unwrap();
        serde_json::to_string(&out).unwrap()
    };
    assert_eq!(run(), run());
}
