//! `funcsel`: covariate selection by noise substitution from the command line.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use funcsel::nonsig::IntervalMode;
use funcsel::objective::Objective;
use funcsel::pvalues::Method;
use funcsel::NoiseKind;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "funcsel", version, about = "Choose regression functionals by comparing covariates with random noise")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Built-in dataset name or path to a CSV file with a header row.
    #[arg(long, global = true, default_value = "stackloss")]
    pub data: String,
    /// Response column (required for CSV input).
    #[arg(long, global = true)]
    pub response: Option<String>,
    /// l1, l2 or huber:<c>.
    #[arg(long, global = true, default_value = "l1")]
    pub objective: Objective,
    /// Residual scale for Huber objectives (default: MAD of the full L1 fit).
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// P-value method: raw, gamma, asymptotic or all.
    #[arg(long, global = true, default_value = "raw")]
    pub method: Method,
    /// Simulations per P-value or per quantile.
    #[arg(long, global = true, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// gaussian, rademacher, uniform, signed-beta, cauchy, scaled or permute.
    #[arg(long, global = true, default_value = "gaussian")]
    pub noise: NoiseKind,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write a JSON report to this path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// P-values of every covariate subset (or the given codes).
    Pvalues {
        /// Subset codes to report; all subsets when omitted.
        #[arg(long = "subset", value_delimiter = ',')]
        subsets: Vec<u32>,
    },
    /// Choose a functional with the two-step P-value strategy.
    Select(commands::SelectArgs),
    /// Compute cut-offs p0(n, k, alpha).
    Calibrate(commands::CalibrateArgs),
    /// Non-significance intervals and regions.
    Nonsig(commands::NonsigArgs),
    /// Covering frequencies and mean lengths as CSV.
    Cover(commands::CoverArgs),
    /// List the built-in datasets.
    Datasets,
}

pub fn parse_mode(s: &str) -> Result<IntervalMode, String> {
    match s {
        "sim" | "simulated" => Ok(IntervalMode::Simulated),
        "asymptotic" => Ok(IntervalMode::Asymptotic),
        _ => Err(format!("unknown mode '{s}' (expected sim or asymptotic)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(t) = cli.global.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::Pvalues { subsets } => commands::pvalues(g, subsets),
        Command::Select(a) => commands::select(g, a),
        Command::Calibrate(a) => commands::calibrate(g, a),
        Command::Nonsig(a) => commands::nonsig(g, a),
        Command::Cover(a) => commands::cover(g, a),
        Command::Datasets => commands::datasets(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE })
        }
    }
}
