use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lincons::harness::{convergence_study, drift_study, emit, orbit_dump, ExperimentConfig, CERTIFY_TOL};
use lincons::ordercond::verify_order;
use lincons::{Error, IterationMode, TableauId};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CERTIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "lincons", version, about = "Invariant-preserving linearly implicit integrators: experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error against the exact solution at the end time, per step size and k.
    Converge(Common),
    /// Relative drift of the invariant and secondary observables over time.
    Drift(Common),
    /// Kepler positions over the last period of a long run.
    Orbit(Common),
    /// Order-condition report of a partitioned pair.
    VerifyTableau(Verify),
}

#[derive(Args)]
struct Common {
    /// `euler`, `kepler:e=<val>` or `kdv:d=<val>`.
    #[arg(long)]
    problem: Option<String>,
    /// `gauss:<s>` or `dirk3`.
    #[arg(long)]
    tableau: Option<String>,
    /// `prk-gauss2` or `prk-dirk3`; replaces tableau, predictor and iteration.
    #[arg(long)]
    pair: Option<String>,
    /// `euler`, `extrapolation`, `hermite`, `cerk`, `exact` or `perturbed[:amp=..,seed=..]`.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long, value_parser = ["semi", "explicit"])]
    mode: Option<String>,
    /// Iteration counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Step sizes, comma separated: `T/<n>`, `T` or a number.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<String>>,
    /// End time in problem periods.
    #[arg(long)]
    periods: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<String>,
    /// Drift series sampling interval in steps.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Verify {
    #[arg(long)]
    pair: String,
    /// Defaults to the pair's declared order.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value_t = CERTIFY_TOL)]
    tol: f64,
    #[arg(long)]
    out: Option<String>,
}

impl Common {
    fn config(self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(v) = self.problem {
            cfg.problem = v;
        }
        if let Some(v) = self.tableau {
            cfg.tableau = v;
        }
        cfg.pair = self.pair;
        if let Some(v) = self.predictor {
            cfg.predictor = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v.parse::<IterationMode>()?;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.h_list {
            cfg.h_list = v;
        }
        if let Some(v) = self.periods {
            cfg.periods = v;
        }
        cfg.out = self.out;
        if let Some(v) = self.subsample {
            cfg.subsample = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidTableau(_) | Error::Unsupported(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn write(cfg: &ExperimentConfig, text: &str) -> Result<(), Error> {
    if let Some(text) = emit(cfg, text)? {
        print!("{text}");
    }
    Ok(())
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Converge(c) => {
            let cfg = c.config()?;
            write(&cfg, &convergence_study(&cfg)?.render(&cfg))?;
        }
        Command::Drift(c) => {
            let cfg = c.config()?;
            write(&cfg, &drift_study(&cfg)?.render(&cfg))?;
        }
        Command::Orbit(c) => {
            let cfg = c.config()?;
            write(&cfg, &orbit_dump(&cfg)?.render(&cfg))?;
        }
        Command::VerifyTableau(v) => {
            let pair = v.pair.parse::<TableauId>()?.partitioned()?;
            if !(v.tol > 0.0) {
                return Err(Error::Config("tolerance must be positive".into()));
            }
            let order = v.order.unwrap_or(pair.declared_order());
            let report = verify_order(&pair, order, v.tol);
            let cfg = ExperimentConfig {
                pair: Some(v.pair),
                order: Some(order),
                out: v.out,
                ..Default::default()
            };
            write(&cfg, &format!("{}\n{report}", cfg.header()))?;
            if !report.passed() {
                return Ok(EXIT_CERTIFICATION);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
