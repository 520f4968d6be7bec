use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use glslasso::commands::{self, CliConfig, Command, LambdaChoice, SigmaUChoice, VarianceChoice};

#[derive(Parser)]
#[command(name = "glslasso", version, about = "GLS Lasso estimation, debiased inference and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the GLS Lasso to a CSV dataset and write a JSON summary.
    Fit(Common),
    /// Fit, debias and write per-coefficient intervals and tests as CSV.
    Infer(Common),
    /// Run Monte Carlo cells from a JSON config and write metric tables.
    Simulate(Common),
    /// Format one or more metric tables as text.
    Report(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    #[value(name = "sigma_xu")]
    SigmaXu,
    Sigma,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaUArg {
    Sample,
    Ar,
    ArInnovation,
}

#[derive(Args)]
struct Common {
    /// Input file (dataset CSV, simulation JSON, or metric CSVs for report).
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = glslasso::crossval::DEFAULT_K)]
    k_folds: usize,
    /// Largest AR order tried (default floor(sqrt T) - 1).
    #[arg(long)]
    q_max: Option<usize>,
    /// Penalty: a number, or `cv` for blocked cross-validation.
    #[arg(long, default_value = "cv", value_parser = parse_lambda)]
    lambda: LambdaChoice,
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per cell, overriding the config (simulate).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, env = "GLSLASSO_THREADS")]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "sigma_xu")]
    variance_form: VarianceArg,
    #[arg(long, value_enum, default_value = "sample")]
    sigma_u: SigmaUArg,
    /// Fit on the covariates as given instead of rescaling them.
    #[arg(long)]
    no_standardize: bool,
    /// Coarser penalty grids (simulate).
    #[arg(long)]
    fast: bool,
    /// Exit 0 even if some fit did not converge.
    #[arg(long)]
    allow_nonconvergence: bool,
}

fn parse_lambda(s: &str) -> Result<LambdaChoice, String> {
    if s.eq_ignore_ascii_case("cv") {
        return Ok(LambdaChoice::Cv);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(LambdaChoice::Fixed(v)),
        _ => Err(format!("expected `cv` or a non-negative number, got {s:?}")),
    }
}

fn config(command: Command, a: Common) -> CliConfig {
    let mut c = CliConfig::new(command, a.input, a.output);
    c.alpha = a.alpha;
    c.k_folds = a.k_folds;
    c.q_max = a.q_max;
    c.lambda = a.lambda;
    c.seed = a.seed;
    c.reps = a.reps;
    c.parallelism = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    c.variance_form = match a.variance_form {
        VarianceArg::SigmaXu => VarianceChoice::SigmaXu,
        VarianceArg::Sigma => VarianceChoice::Sigma,
    };
    c.sigma_u = match a.sigma_u {
        SigmaUArg::Sample => SigmaUChoice::Sample,
        SigmaUArg::Ar => SigmaUChoice::Ar,
        SigmaUArg::ArInnovation => SigmaUChoice::ArInnovation,
    };
    c.standardize = !a.no_standardize;
    c.fast = a.fast;
    c.allow_nonconvergence = a.allow_nonconvergence;
    c
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.command {
        Cmd::Fit(a) => config(Command::Fit, a),
        Cmd::Infer(a) => config(Command::Infer, a),
        Cmd::Simulate(a) => config(Command::Simulate, a),
        Cmd::Report(a) => config(Command::Report, a),
    };
    let result = commands::run(&cfg);
    match &result {
        Err(e) => eprintln!("glslasso {}: {e}", cfg.command.name()),
        Ok(commands::Outcome::NotConverged) => {
            eprintln!("glslasso {}: outputs written, but some fits did not converge", cfg.command.name())
        }
        Ok(commands::Outcome::Success) => {}
    }
    ExitCode::from(commands::exit_code(&result) as u8)
}
