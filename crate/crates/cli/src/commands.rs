use std::fs;
use std::path::PathBuf;

use clap::Args;
use funcsel::calibration::{chisq_table, nested_table, CutoffTable};
use funcsel::coverage::{coverage_median, coverage_regression, ErrorFamily, Family, GeneratorSpec};
use funcsel::data::{builtin, builtin_names};
use funcsel::nonsig::{
    kernel_density_at_zero, nonsig_asymptotic_l1, nonsig_l1_component, nonsig_m_regression, nonsig_median_with_noise,
    nonsig_mlocation, IntervalMode, NonSigEllipsoid, NonSigInterval,
};
use funcsel::objective::Objective;
use funcsel::pvalues::{p_all_subsets, Method, PValueEngine};
use funcsel::selection::{bic_noise_experiment, bic_rank, choose_functional, CutoffSource};
use funcsel::{fit_l1, Dataset, Error, ObjectiveSpec, Result, SubsetCode};
use serde::Serialize;
use serde_json::{json, Value};

use crate::table::{num, pval, Table};
use crate::{parse_mode, Global};

fn load(g: &Global) -> Result<(String, Dataset)> {
    if let Some(d) = builtin(&g.data) {
        if let Some(r) = &g.response {
            if r != d.response_name() {
                return Err(Error::InvalidArgument(format!(
                    "dataset '{}' has response '{}', not '{r}'",
                    g.data,
                    d.response_name()
                )));
            }
        }
        return Ok((g.data.clone(), d));
    }
    let response = g.response.as_deref().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "'{}' is not a built-in dataset; give a CSV path together with --response",
            g.data
        ))
    })?;
    Ok((g.data.clone(), Dataset::from_csv_path(&g.data, response)?))
}

fn objective(g: &Global) -> Result<ObjectiveSpec> {
    let spec = ObjectiveSpec::new(g.objective);
    match g.scale {
        Some(s) => spec.with_scale(s),
        None => Ok(spec),
    }
}

fn describe(name: &str, d: &Dataset) -> String {
    format!("data: {name} (n = {}, k = {}, response {})", d.n(), d.k(), d.response_name())
}

fn subset_label(d: &Dataset, e: SubsetCode) -> String {
    let names = d.subset_names(e);
    if names.is_empty() {
        "(intercept only)".into()
    } else {
        names.join(", ")
    }
}

/// Write the JSON report when `--out` was given.
fn report(g: &Global, command: &str, data: Option<(&str, &Dataset)>, result: Value) -> Result<()> {
    let Some(path) = &g.out else {
        return Ok(());
    };
    let data = data.map(|(name, d)| {
        json!({
            "name": name,
            "n": d.n(),
            "k": d.k(),
            "response": d.response_name(),
            "covariates": d.names(),
        })
    });
    let doc = json!({
        "schema": 1,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": g.seed,
        "sims": g.sims,
        "objective": g.objective.to_string(),
        "noise": g.noise.to_string(),
        "method": g.method.to_string(),
        "data": data,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&doc).expect("report serialises");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serialises")
}

pub fn pvalues(g: &Global, subsets: &[u32]) -> Result<()> {
    let (name, d) = load(g)?;
    let spec = objective(g)?;
    let reports = if subsets.is_empty() {
        p_all_subsets(&d, &spec, g.method, g.sims, g.noise, g.seed)?
    } else {
        let engine = PValueEngine::new(&d, &spec)?;
        subsets
            .iter()
            .map(|&c| engine.report(SubsetCode::new(c), g.method, g.sims, g.noise, g.seed))
            .collect::<Result<_>>()?
    };
    println!("{}", describe(&name, &d));
    println!(
        "objective: {}  method: {}  sims: {}  noise: {}  seed: {}",
        g.objective, g.method, g.sims, g.noise, g.seed
    );
    println!();
    let mut t = Table::new(&["code", "covariates", "p_raw", "p_gamma", "p_asymptotic", "objective"]).left_align(1);
    for r in &reports {
        t.row(vec![
            r.subset.to_string(),
            subset_label(&d, r.subset),
            pval(r.p_raw),
            pval(r.p_gamma),
            pval(r.p_asymptotic),
            num(r.objective_subset),
        ]);
    }
    print!("{}", t.render());
    let nonconverged: usize = reports.iter().map(|r| r.nonconverged).sum();
    if nonconverged > 0 {
        eprintln!("warning: {nonconverged} noise-substituted fits hit the iteration cap");
    }
    report(g, "pvalues", Some((&name, &d)), to_value(&reports))
}

#[derive(Args)]
pub struct SelectArgs {
    /// Level of the cut-off p0(n, k, alpha).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// auto (table if given, else chi-squared), chisq, or a fixed cut-off value.
    #[arg(long, default_value = "auto")]
    cutoff: String,
    /// Cut-off table written by `calibrate --save-table`.
    #[arg(long)]
    cutoff_table: Option<PathBuf>,
    /// Also print the BIC ranking.
    #[arg(long)]
    bic: bool,
    /// Replicates of the BIC noise experiment (0 to skip).
    #[arg(long, default_value_t = 0)]
    bic_noise: usize,
}

fn cutoff_source(g: &Global, a: &SelectArgs) -> Result<CutoffSource> {
    let table = match &a.cutoff_table {
        Some(p) => Some(CutoffTable::from_json(&fs::read_to_string(p)?)?),
        None => None,
    };
    match a.cutoff.as_str() {
        "auto" => Ok(table.map_or_else(|| CutoffSource::chisq(g.seed), CutoffSource::Table)),
        "chisq" => Ok(CutoffSource::chisq(g.seed)),
        v => {
            let p0: f64 = v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("--cutoff must be auto, chisq or a number, got '{v}'")))?;
            if !(p0 > 0.0 && p0 < 1.0) {
                return Err(Error::InvalidArgument(format!("cut-off must lie in (0, 1), got {p0}")));
            }
            Ok(CutoffSource::Scalar(p0))
        }
    }
}

pub fn select(g: &Global, a: &SelectArgs) -> Result<()> {
    let (name, d) = load(g)?;
    let spec = objective(g)?;
    let method = if g.method == Method::All { Method::Raw } else { g.method };
    let source = cutoff_source(g, a)?;
    let out = choose_functional(&d, &spec, a.alpha, &source, method, g.sims, g.seed)?;
    let codes = |v: &[SubsetCode]| v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
    println!("{}", describe(&name, &d));
    println!(
        "objective: {}  method: {}  sims: {}  alpha: {}  seed: {}",
        g.objective, method, g.sims, a.alpha, g.seed
    );
    println!();
    let mut t = Table::new(&["k(e)", "p0"]);
    for (k, p0) in &out.cutoffs {
        t.row(vec![k.to_string(), format!("{p0:.3e}")]);
    }
    print!("{}", t.render());
    println!();
    println!("step 1 survivors: {}", codes(&out.survivors_step1));
    println!("step 2 survivors: {}", codes(&out.survivors_step2));
    match out.chosen {
        Some(e) => println!(
            "chosen: {} ({}) with p = {}",
            e,
            subset_label(&d, e),
            pval(out.chosen_p)
        ),
        None => println!("chosen: none"),
    }
    let mut result = json!({ "selection": to_value(&out) });
    if a.bic {
        let b = bic_rank(&d)?;
        println!();
        let mut t = Table::new(&["rank", "code", "covariates", "bic"]).left_align(2);
        for (i, (e, v)) in b.ranking.iter().enumerate() {
            t.row(vec![(i + 1).to_string(), e.to_string(), subset_label(&d, *e), format!("{v:.3}")]);
        }
        print!("{}", t.render());
        if !b.skipped.is_empty() {
            eprintln!("warning: rank-deficient subsets skipped: {}", codes(&b.skipped));
        }
        result["bic"] = to_value(&b);
    }
    if a.bic_noise > 0 {
        let f = bic_noise_experiment(&d, a.bic_noise, g.seed)?;
        println!();
        println!("BIC winner contains a noise covariate in {:.3} of {} replicates", f, a.bic_noise);
        result["bic_noise_fraction"] = json!(f);
    }
    report(g, "select", Some((&name, &d)), result)
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// nested (simulation with the real response) or chisq (approximation).
    #[arg(long, default_value = "chisq")]
    mode: String,
    /// Largest number of covariates; defaults to the dataset's k.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    alphas: Vec<f64>,
    /// Outer replicates of the nested simulation (--sims sets the inner count).
    #[arg(long, default_value_t = 1000)]
    outer: usize,
    /// Write the cut-off table for `select --cutoff-table`.
    #[arg(long)]
    save_table: Option<PathBuf>,
}

pub fn calibrate(g: &Global, a: &CalibrateArgs) -> Result<()> {
    let (table, data) = match a.mode.as_str() {
        "chisq" => {
            let k = match a.k {
                Some(k) => k,
                None => load(g)?.1.k(),
            };
            (chisq_table(k, &a.alphas, g.sims, g.seed)?, None)
        }
        "nested" => {
            let (name, d) = load(g)?;
            let k = a.k.unwrap_or(d.k());
            let method = if g.method == Method::All { Method::Gamma } else { g.method };
            let t = nested_table(d.y().as_slice(), k, &objective(g)?, method, &a.alphas, a.outer, g.sims, g.seed)?;
            (t, Some((name, d)))
        }
        m => return Err(Error::InvalidArgument(format!("unknown calibration mode '{m}' (expected nested or chisq)"))),
    };
    match &data {
        Some((name, d)) => println!("{}  mode: nested  outer: {}  inner: {}  seed: {}", describe(name, d), a.outer, g.sims, g.seed),
        None => println!("mode: chisq  sims: {}  seed: {}", g.sims, g.seed),
    }
    println!();
    let mut t = Table::new(&["k", "alpha", "p0"]);
    for e in &table.entries {
        t.row(vec![e.k.to_string(), format!("{}", e.alpha), format!("{:.3e}", e.p0)]);
    }
    print!("{}", t.render());
    if !table.fits.is_empty() {
        println!();
        println!("log p0 = c1 + c2 log(alpha) + c3 log(alpha)^2");
        let mut t = Table::new(&["k", "c1", "c2", "c3"]);
        for f in &table.fits {
            t.row(vec![f.k.to_string(), num(f.c1), num(f.c2), num(f.c3)]);
        }
        print!("{}", t.render());
    }
    if let Some(p) = &a.save_table {
        fs::write(p, table.to_json() + "\n")?;
    }
    report(g, "calibrate", data.as_ref().map(|(n, d)| (n.as_str(), d)), to_value(&table))
}

#[derive(Args)]
pub struct NonsigArgs {
    /// median, mlocation, l1-component:<name> or ellipsoid.
    #[arg(long, default_value = "median")]
    target: String,
    /// Level of the region.
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// sim or asymptotic (mlocation only).
    #[arg(long, default_value = "sim", value_parser = parse_mode)]
    mode: IntervalMode,
    /// Evaluate the quantile once at the estimate (l1-component only).
    #[arg(long)]
    fast_quantile: bool,
    /// Round the median interval for integer data.
    #[arg(long)]
    discrete: bool,
    /// Density of the errors at zero for the L1 ellipsoid (kernel estimate if omitted).
    #[arg(long)]
    f0: Option<f64>,
}

fn print_interval(label: &str, i: &NonSigInterval) {
    let mut t = Table::new(&["target", "estimate", "lower", "upper", "length"]).left_align(0);
    t.row(vec![label.to_string(), num(i.estimate), num(i.lower), num(i.upper), num(i.length())]);
    print!("{}", t.render());
}

fn print_ellipsoid(e: &NonSigEllipsoid) {
    println!("radius^2: {:.6e}", e.radius2);
    let mut t = Table::new(&["coefficient", "center", "lower", "upper"]).left_align(0);
    for ((name, c), (lo, hi)) in e.names.iter().zip(&e.center).zip(e.component_intervals()) {
        t.row(vec![name.clone(), num(*c), num(lo), num(hi)]);
    }
    print!("{}", t.render());
}

pub fn nonsig(g: &Global, a: &NonsigArgs) -> Result<()> {
    let (name, d) = load(g)?;
    let y = d.y().as_slice();
    println!("{}", describe(&name, &d));
    println!("target: {}  alpha: {}  sims: {}  seed: {}", a.target, a.alpha, g.sims, g.seed);
    println!();
    let result = match a.target.as_str() {
        "median" => {
            let i = nonsig_median_with_noise(y, a.alpha, g.sims, g.seed, a.discrete, g.noise)?;
            print_interval("median", &i);
            to_value(&i)
        }
        "mlocation" => {
            let i = nonsig_mlocation(y, &objective(g)?, a.alpha, a.mode, g.sims, g.seed)?;
            print_interval(&format!("{} location", g.objective), &i);
            to_value(&i)
        }
        "ellipsoid" => {
            let e = match g.objective {
                Objective::L1 => {
                    let f0 = match a.f0 {
                        Some(f) => f,
                        None => kernel_density_at_zero(&fit_l1(&d, d.full())?.residuals)?,
                    };
                    println!("f(0): {f0:.6}");
                    nonsig_asymptotic_l1(&d, a.alpha, f0)?
                }
                _ => nonsig_m_regression(&d, &objective(g)?, a.alpha)?,
            };
            print_ellipsoid(&e);
            to_value(&e)
        }
        t => {
            let Some(col) = t.strip_prefix("l1-component:") else {
                return Err(Error::InvalidArgument(format!(
                    "unknown target '{t}' (expected median, mlocation, l1-component:<name> or ellipsoid)"
                )));
            };
            let j = d
                .column_index(col)
                .ok_or_else(|| Error::InvalidArgument(format!("no covariate named '{col}'")))?;
            let i = nonsig_l1_component(&d, j, a.alpha, g.sims, g.seed, a.fast_quantile)?;
            print_interval(col, &i);
            to_value(&i)
        }
    };
    report(g, "nonsig", Some((&name, &d)), result)
}

#[derive(Args)]
pub struct CoverArgs {
    /// Sample families: normal, cauchy, chisq1, laplace, poisson:<mean>.
    #[arg(long, value_delimiter = ',', default_value = "normal")]
    family: Vec<Family>,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    n: Vec<usize>,
    /// Stack-loss regression errors instead of samples: residuals, normal, laplace, cauchy.
    #[arg(long, value_delimiter = ',')]
    regression: Vec<ErrorFamily>,
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
}

pub fn cover(g: &Global, a: &CoverArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut results = Vec::new();
    if a.regression.is_empty() {
        let mut header = vec!["family".to_string(), "method".to_string()];
        for n in &a.n {
            header.push(format!("n{n}_coverage"));
            header.push(format!("n{n}_length"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for &family in &a.family {
            let mut rows = [vec![family.to_string(), "non-significance".into()], vec![family.to_string(), "rank".into()]];
            for &n in &a.n {
                let c = coverage_median(GeneratorSpec::new(family, n), a.alpha, a.replicates, g.sims, g.seed)?;
                for (row, r) in rows.iter_mut().zip([&c.nonsig, &c.rank]) {
                    row.push(format!("{:.3}", r.covering_frequency));
                    row.push(format!("{:.3}", r.mean_length));
                }
                results.push(to_value(&c));
            }
            for row in rows {
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    } else {
        let names = funcsel::stackloss().names().to_vec();
        let mut header = vec!["errors".to_string(), "method".to_string()];
        for n in &names {
            header.push(format!("{n}_coverage"));
            header.push(format!("{n}_length"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for &family in &a.regression {
            let c = coverage_regression(family, a.alpha, a.replicates, g.sims, g.seed)?;
            let mut row = vec![family.to_string(), "non-significance".into()];
            for cc in &c {
                row.push(format!("{:.3}", cc.result.covering_frequency));
                row.push(format!("{:.3}", cc.result.mean_length));
            }
            w.write_record(&row).map_err(csv_err)?;
            results.push(json!({ "errors": family.to_string(), "coefficients": to_value(&c) }));
        }
    }
    w.flush()?;
    report(g, "cover", None, Value::Array(results))
}

pub fn datasets(g: &Global) -> Result<()> {
    let mut t = Table::new(&["name", "n", "k", "response", "covariates"]).left_align(0).left_align(3).left_align(4);
    let mut list = Vec::new();
    for name in builtin_names() {
        let d = builtin(name).expect("registered");
        t.row(vec![
            name.to_string(),
            d.n().to_string(),
            d.k().to_string(),
            d.response_name().to_string(),
            d.names().join(", "),
        ]);
        list.push(json!({ "name": name, "n": d.n(), "k": d.k(), "response": d.response_name(), "covariates": d.names() }));
    }
    print!("{}", t.render());
    report(g, "datasets", None, Value::Array(list))
}
