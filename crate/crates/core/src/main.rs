use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use bsl_core::harness::{self, emit, ExperimentConfig, Filter, RunOutcome, RunRecord};
use bsl_core::metrics::{self, MetricKind};
use bsl_core::onlinevi::{vi_bounds, VIBoundInputs};
use bsl_core::reduction::ReductionTheorem;
use bsl_core::{DomainSpec, Distribution, Error, Gaussian1D, GridDensity, Result};

#[derive(Parser)]
#[command(name = "bsl", version, about = "Bayesian sequential learning: posterior error bounds and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two conjugate posterior sequences under one repeated observation.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        case: u8,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learning-error ledgers against a Gaussian-projection or particle filter.
    BoundValidate {
        #[arg(long, value_enum)]
        filter: Filter,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized soundness search for the reduction conditions.
    ReductionFuzz {
        #[arg(long)]
        theorem: ReductionTheorem,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between two laws, e.g. `--a gaussian:0,1 --b uniform:-1,1`.
    Metric {
        #[arg(long)]
        kind: MetricKind,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// `lower,upper,points`; defaults to a grid covering both laws.
        #[arg(long)]
        domain: Option<String>,
    },
    /// Online-VI learning-error bound from a JSON file.
    ViBound {
        #[arg(long)]
        config: PathBuf,
    },
    /// Any experiment from a JSON configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Deserialize)]
struct ViBoundFile {
    metric: MetricKind,
    #[serde(rename = "type", default = "one")]
    bound_type: u8,
    #[serde(flatten)]
    inputs: VIBoundInputs,
}

fn one() -> u8 {
    1
}

enum Law {
    Gaussian(Gaussian1D),
    Uniform(f64, f64),
}

fn parse_law(text: &str) -> Result<Law> {
    let bad = || Error::Config(format!("expected gaussian:MEAN,VAR or uniform:A,B, got '{text}'"));
    let (family, params) = text.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = params.split(',').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let [u, v] = nums[..] else { return Err(bad()) };
    match family {
        "gaussian" => Ok(Law::Gaussian(Gaussian1D::new(u, v).map_err(|e| Error::Config(e.to_string()))?)),
        "uniform" if u < v => Ok(Law::Uniform(u, v)),
        _ => Err(bad()),
    }
}

fn parse_domain(text: &str) -> Result<DomainSpec> {
    let bad = || Error::Config(format!("expected LOWER,UPPER,POINTS, got '{text}'"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    DomainSpec::new(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?)
        .map_err(|e| Error::Config(e.to_string()))
}

fn support(l: &Law) -> (f64, f64) {
    match l {
        Law::Gaussian(g) => (g.mean() - 12.0 * g.std_dev(), g.mean() + 12.0 * g.std_dev()),
        Law::Uniform(a, b) => (*a, *b),
    }
}

fn to_distribution(l: &Law, d: &DomainSpec) -> Result<Distribution> {
    Ok(match l {
        Law::Gaussian(g) => (*g).into(),
        Law::Uniform(a, b) => GridDensity::uniform(*d, *a, *b)?.into(),
    })
}

fn metric_command(kind: MetricKind, a: &str, b: &str, domain: Option<&str>) -> Result<()> {
    let (la, lb) = (parse_law(a)?, parse_law(b)?);
    let d = match domain {
        Some(t) => parse_domain(t)?,
        None => {
            let ((a0, a1), (b0, b1)) = (support(&la), support(&lb));
            let (lo, hi) = (a0.min(b0), a1.max(b1));
            let pad = 0.05 * (hi - lo);
            DomainSpec::new(lo - pad, hi + pad, 8001)?
        }
    };
    let r = metrics::distance(kind, &to_distribution(&la, &d)?, &to_distribution(&lb, &d)?, &d)?;
    println!("{}", serde_json::to_string(&r).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn vi_bound_command(path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let f: ViBoundFile = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let with_beta = match f.bound_type {
        1 => false,
        2 => true,
        t => return Err(Error::Config(format!("type must be 1 or 2, got {t}"))),
    };
    let per_step = vi_bounds(&f.inputs, f.metric, with_beta)?;
    let out = serde_json::json!({
        "metric": f.metric,
        "type": f.bound_type,
        "bound": per_step.last(),
        "per_step": per_step,
    });
    println!("{out}");
    Ok(())
}

fn report(record: &RunRecord, out: Option<&PathBuf>) -> Result<usize> {
    if let Some(dir) = out {
        for p in emit::write_all(record, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    for ((series, metric), rows) in record.groups() {
        let last = rows.last().expect("nonempty group");
        println!(
            "{series} {metric}: {} steps, final distance {:e}, final bound {:e}",
            rows.len(),
            last.distance,
            last.bound
        );
    }
    println!("violations: {}", record.violations);
    Ok(record.violations)
}

fn fuzz_report(f: &harness::FuzzReport, out: Option<&PathBuf>) -> Result<usize> {
    if let Some(dir) = out {
        emit::write_json(f, &dir.join("fuzz.json"))?;
    }
    println!(
        "{}: {} trials ({} skipped), {} guaranteed, {} violations",
        f.theorem.as_str(),
        f.trials,
        f.skipped,
        f.guaranteed,
        f.violations
    );
    Ok(f.violations)
}

fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Reproduce { case, steps, seed, out } => report(&harness::reproduce(case, steps, seed)?, out.as_ref()),
        Command::BoundValidate { filter, steps, seed, particles, out } => {
            report(&harness::bound_validate(filter, steps, seed, None, particles)?, out.as_ref())
        }
        Command::ReductionFuzz { theorem, trials, seed, out } => {
            fuzz_report(&harness::reduction_fuzz(theorem, trials, seed)?, out.as_ref())
        }
        Command::Metric { kind, a, b, domain } => metric_command(kind, &a, &b, domain.as_deref()).map(|_| 0),
        Command::ViBound { config } => vi_bound_command(&config).map(|_| 0),
        Command::Run { config } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            match harness::run_config(&cfg)? {
                // Files were written by run_config.
                RunOutcome::Record(r) => report(&r, None),
                RunOutcome::Fuzz(f) => fuzz_report(&f, None),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 1 })
        }
    }
}
