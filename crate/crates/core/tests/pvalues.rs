use funcsel::pvalues::{p_all_subsets, p_asymptotic, p_raw, Method, PValueEngine};
use funcsel::{design_matrix, stackloss, subsets_of, Dataset, NoiseKind, ObjectiveSpec, RngStream, SubsetCode};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

fn rss(d: &Dataset, e: SubsetCode) -> f64 {
    // normal equations, independent of the library's QR path
    let x = design_matrix(d, e);
    let xtx = x.transpose() * &x;
    let b = xtx.cholesky().unwrap().solve(&(x.transpose() * d.y()));
    (d.y() - x * b).norm_squared()
}

#[test]
fn l2_asymptotic_matches_closed_form() {
    let d = stackloss();
    let rss_f = rss(&d, d.full());
    for e in subsets_of(3).unwrap() {
        let got = p_asymptotic(&d, e, &ObjectiveSpec::l2()).unwrap().p_asymptotic.unwrap();
        let df = 3 - e.size();
        let want = if df == 0 {
            1.0
        } else {
            let rss_e = rss(&d, e);
            let t = 21.0 * (rss_e - rss_f) / rss_e;
            1.0 - ChiSquared::new(df as f64).unwrap().cdf(t)
        };
        assert!((got - want).abs() < 1e-10, "{e}: {got} vs {want}");
    }
}

#[test]
fn huber_with_huge_constant_matches_l2_asymptotics() {
    let d = stackloss();
    let h = ObjectiveSpec::huber(1e6).unwrap();
    for e in subsets_of(3).unwrap() {
        let a = p_asymptotic(&d, e, &h).unwrap().p_asymptotic.unwrap();
        let b = p_asymptotic(&d, e, &ObjectiveSpec::l2()).unwrap().p_asymptotic.unwrap();
        assert!((a - b).abs() < 1e-6, "{e}: {a} vs {b}");
    }
}

/// Adding m Gaussian columns to a fit with p parameters removes a
/// Beta(m/2, (n-p-m)/2) share of its residual sum of squares.
#[test]
fn l2_raw_matches_exact_beta_law() {
    let d = stackloss();
    let rss_f = rss(&d, d.full());
    let sims = 20_000;
    for e in [SubsetCode::new(1), SubsetCode::new(3), SubsetCode::new(5)] {
        let rss_e = rss(&d, e);
        let m = (3 - e.size()) as f64;
        let p = (e.size() + 1) as f64;
        let law = Beta::new(m / 2.0, (21.0 - p - m) / 2.0).unwrap();
        let want = 1.0 - law.cdf(1.0 - rss_f / rss_e);
        let got = p_raw(&d, e, &ObjectiveSpec::l2(), sims, NoiseKind::Gaussian, 9).unwrap().p_raw.unwrap();
        let se = (want * (1.0 - want) / sims as f64).sqrt();
        assert!((got - want).abs() < 4.0 * se + 1e-4, "{e}: {got} vs exact {want}");
    }
}

#[test]
fn noise_never_worsens_the_fit() {
    let d = stackloss();
    for spec in [ObjectiveSpec::l1(), ObjectiveSpec::l2(), ObjectiveSpec::huber(1.5).unwrap()] {
        let engine = PValueEngine::new(&d, &spec).unwrap();
        for e in subsets_of(3).unwrap() {
            let r = engine.report(e, Method::Raw, 1, NoiseKind::Gaussian, 0).unwrap();
            let sim = engine.simulate(e, 300, NoiseKind::Gaussian, 4).unwrap();
            for s in sim.losses {
                assert!(s <= r.objective_subset + 1e-9, "{:?} {e}: {s} > {}", spec.kind, r.objective_subset);
            }
        }
    }
}

#[test]
fn full_subset_is_one_for_every_method() {
    let d = stackloss();
    for spec in [ObjectiveSpec::l2(), ObjectiveSpec::huber(1.5).unwrap()] {
        let r = PValueEngine::new(&d, &spec)
            .unwrap()
            .report(d.full(), Method::All, 50, NoiseKind::Gaussian, 1)
            .unwrap();
        assert_eq!((r.p_raw, r.p_gamma, r.p_asymptotic), (Some(1.0), Some(1.0), Some(1.0)));
    }
}

#[test]
fn methods_agree_on_stackloss() {
    let d = stackloss();
    let l1 = p_all_subsets(&d, &ObjectiveSpec::l1(), Method::All, 1000, NoiseKind::Gaussian, 2).unwrap();
    let hub = p_all_subsets(&d, &ObjectiveSpec::huber(1.5).unwrap(), Method::All, 1000, NoiseKind::Gaussian, 2).unwrap();
    for r in l1.iter().chain(&hub) {
        let raw = r.p_raw.unwrap();
        if raw < 0.01 {
            continue;
        }
        assert!((raw - r.p_gamma.unwrap()).abs() <= 0.07, "{r:?}");
        if let Some(a) = r.p_asymptotic {
            assert!((raw - a).abs() <= 0.12, "{r:?}");
        }
    }
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let d = stackloss();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = p_all_subsets(&d, &ObjectiveSpec::l1(), Method::All, 200, NoiseKind::Gaussian, 17).unwrap();
            serde_json::to_string(&r).unwrap()
        })
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn pure_noise_covariate_gives_roughly_uniform_pvalues() {
    let (n, reps) = (30, 200);
    let mut hits = 0;
    for r in 0..reps {
        let mut rng = RngStream::new(123, r).rng();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = Dataset::new(y, x, vec!["z".into()], "y").unwrap();
        let p = p_raw(&d, SubsetCode::EMPTY, &ObjectiveSpec::l2(), 200, NoiseKind::Gaussian, r).unwrap();
        hits += (p.p_raw.unwrap() <= 0.05) as usize;
    }
    let frac = hits as f64 / reps as f64;
    assert!((0.01..=0.12).contains(&frac), "{frac}");
}

#[test]
fn l1_asymptotic_is_rejected() {
    let d = stackloss();
    assert!(p_asymptotic(&d, SubsetCode::new(3), &ObjectiveSpec::l1()).is_err());
    assert!(p_asymptotic(&d, SubsetCode::new(3), &ObjectiveSpec::huber(0.3).unwrap()).is_err());
}
