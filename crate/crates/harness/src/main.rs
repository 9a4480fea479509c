use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use siadmm_harness::config::ProblemKind;
use siadmm_harness::{run, write_report, ExperimentConfig, ExperimentKind, HarnessError};

/// Output directory override when neither `--out` nor the config names one.
const OUT_ENV: &str = "SIADMM_OUT_DIR";

#[derive(Parser)]
#[command(name = "siadmm", version, about = "Run SI-ADMM experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// SI-ADMM against SADM0 and SADM1 on the LASSO at matched samples.
    LassoCompare(Args),
    /// SI-ADMM against DSA on distributed regression at matched batches.
    DistregCompare(Args),
    /// Mean-squared SA error against its Q/k bound.
    SaRate(Args),
    /// Exact-ADMM G-norm contraction on random quadratics.
    ContractionTest(Args),
    /// Certificate and bound curves against measured SI-ADMM error.
    Bounds(Args),
    /// Samples needed to reach each target error, against N(eps).
    ComplexitySweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long = "gamma-bar")]
    gamma_bar: Option<f64>,
    /// DSA ball factors, comma separated.
    #[arg(long = "Gamma", value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// `lasso` or `distreg`.
    #[arg(long)]
    problem: Option<String>,
}

impl Cmd {
    fn split(self) -> (ExperimentKind, Args) {
        match self {
            Cmd::LassoCompare(a) => (ExperimentKind::LassoCompare, a),
            Cmd::DistregCompare(a) => (ExperimentKind::DistregCompare, a),
            Cmd::SaRate(a) => (ExperimentKind::SaRate, a),
            Cmd::ContractionTest(a) => (ExperimentKind::ContractionTest, a),
            Cmd::Bounds(a) => (ExperimentKind::Bounds, a),
            Cmd::ComplexitySweep(a) => (ExperimentKind::ComplexitySweep, a),
        }
    }
}

fn build_config(kind: ExperimentKind, a: Args) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(kind),
    };
    match cfg.kind {
        Some(k) if k != kind => {
            return Err(HarnessError::Config(format!(
                "config is for {}, not {}",
                k.name(),
                kind.name()
            )))
        }
        _ => cfg.kind = Some(kind),
    }
    if let Some(p) = a.problem {
        cfg.problem = Some(match p.as_str() {
            "lasso" => ProblemKind::Lasso,
            "distreg" => ProblemKind::Distreg,
            other => return Err(HarnessError::Config(format!("unknown problem {other:?}"))),
        });
    }
    macro_rules! set {
        ($($field:ident <- $v:expr),*) => { $(if let Some(v) = $v { cfg.$field = Some(v); })* };
    }
    set!(seed <- a.seed, out <- a.out, replications <- a.replications, rho <- a.rho, n <- a.n,
         budget <- a.budget, eta <- a.eta, t <- a.t, gamma_bar <- a.gamma_bar, dsa_gammas <- a.gamma);
    Ok(cfg)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().cmd.split();
    let outcome = build_config(kind, args).and_then(|cfg| {
        let settings = cfg.resolve()?;
        let dir = settings
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
        let report = run(&settings)?;
        write_report(&dir, &report)?;
        for t in &report.tables {
            if t.rows.len() <= 50 {
                println!("{}:", t.name);
                print!("{}", t.to_csv()?);
            }
        }
        println!("wrote {}", dir.display());
        match report.passed {
            Some(false) => Err(HarnessError::Failed(format!("{} checks failed", kind.name()))),
            Some(true) => {
                println!("{}: all checks passed", kind.name());
                Ok(())
            }
            None => Ok(()),
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
