use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gentune_experiments::{run_all, run_experiment, ExpError, Experiment, Outcome, Overrides};

#[derive(Parser)]
#[command(
    name = "gentune",
    version,
    about = "Amortized hyper-parameter tuning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Supervised vs criterion-based generator training on toy ridge.
    ToyGms(Opts),
    /// GCV, K-fold CV and the amortized CV proxy for ridge.
    RidgeDemo(Opts),
    /// Quantile regression over levels and penalties.
    QuantileDemo(Opts),
    /// MNIST hypernetwork tuning curve and baselines.
    MnistDemo(Opts),
    /// ν-update fixed-point iteration.
    EcmeDemo(Opts),
    /// Every shipped experiment; `--config` names the config directory.
    All(Opts),
}

#[derive(Args)]
struct Opts {
    /// Config file (config directory for `all`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn report(outcome: &Outcome) {
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for c in &outcome.checks {
        println!("{c}");
    }
}

fn fail(e: &ExpError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (exp, opts) = match cli.command {
        Command::ToyGms(o) => (Some(Experiment::ToyGms), o),
        Command::RidgeDemo(o) => (Some(Experiment::RidgeDemo), o),
        Command::QuantileDemo(o) => (Some(Experiment::QuantileDemo), o),
        Command::MnistDemo(o) => (Some(Experiment::MnistDemo), o),
        Command::EcmeDemo(o) => (Some(Experiment::EcmeDemo), o),
        Command::All(o) => (None, o),
    };
    if let Some(t) = opts.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            return fail(&ExpError::Config(format!("--threads: {e}")));
        }
    }
    let overrides = Overrides {
        seed: opts.seed,
        replications: opts.reps,
        out: opts.out,
    };
    match exp {
        Some(exp) => {
            let path = opts
                .config
                .unwrap_or_else(|| PathBuf::from("configs").join(exp.config_file()));
            match run_experiment(exp, &path, &overrides) {
                Ok(outcome) => {
                    report(&outcome);
                    if outcome.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        None => {
            let dir = opts.config.unwrap_or_else(|| PathBuf::from("configs"));
            match run_all(&dir, &overrides) {
                Ok(r) => {
                    report(&r.outcome);
                    for (name, e) in &r.errors {
                        eprintln!("error in {name}: {e}");
                    }
                    ExitCode::from(r.exit_code() as u8)
                }
                Err(e) => fail(&e),
            }
        }
    }
}
