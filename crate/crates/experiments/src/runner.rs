//! Config-file dispatch shared by the CLI and the acceptance harness.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checks::Outcome;
use crate::config::{self, Common, Loaded, RUN_ALL_FILES};
use crate::error::{ExpError, ExpResult};
use crate::{ecme_demo, mnist_demo, quantile_demo, ridge, toy};

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, run: &mut Common) {
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(r) = self.replications {
            run.replications = r;
        }
    }

    fn out_dir<T>(&self, loaded: &Loaded<T>, run: &Common) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| loaded.resolve(&run.output_dir))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ToyGms,
    RidgeDemo,
    QuantileDemo,
    MnistDemo,
    EcmeDemo,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ToyGms => "toy-gms",
            Experiment::RidgeDemo => "ridge-demo",
            Experiment::QuantileDemo => "quantile-demo",
            Experiment::MnistDemo => "mnist-demo",
            Experiment::EcmeDemo => "ecme-demo",
        }
    }

    pub fn config_file(self) -> &'static str {
        match self {
            Experiment::ToyGms => config::TOY_FILE,
            Experiment::RidgeDemo => config::RIDGE_FILE,
            Experiment::QuantileDemo => config::QUANTILE_FILE,
            Experiment::MnistDemo => config::MNIST_FILE,
            Experiment::EcmeDemo => config::ECME_FILE,
        }
    }
}

pub fn run_experiment(exp: Experiment, config_path: &Path, o: &Overrides) -> ExpResult<Outcome> {
    log::info!("{}: {}", exp.name(), config_path.display());
    match exp {
        Experiment::ToyGms => {
            let mut l: Loaded<config::ToyConfig> = config::load(config_path)?;
            o.apply(&mut l.config.run);
            toy::run_toy_gms(&l.config, &o.out_dir(&l, &l.config.run))
        }
        Experiment::RidgeDemo => {
            let mut l: Loaded<config::RidgeConfig> = config::load(config_path)?;
            o.apply(&mut l.config.run);
            ridge::run_ridge_demo(&l.config, &o.out_dir(&l, &l.config.run))
        }
        Experiment::QuantileDemo => {
            let mut l: Loaded<config::QuantileDemoConfig> = config::load(config_path)?;
            o.apply(&mut l.config.run);
            quantile_demo::run_quantile_demo(&l.config, &o.out_dir(&l, &l.config.run))
        }
        Experiment::MnistDemo => {
            let mut l: Loaded<config::MnistDemoConfig> = config::load(config_path)?;
            o.apply(&mut l.config.run);
            let out = o.out_dir(&l, &l.config.run);
            mnist_demo::run_mnist_demo(&l, &out)
        }
        Experiment::EcmeDemo => {
            let mut l: Loaded<config::EcmeDemoConfig> = config::load(config_path)?;
            o.apply(&mut l.config.run);
            ecme_demo::run_ecme_demo(&l.config, &o.out_dir(&l, &l.config.run))
        }
    }
}

/// Result of [`run_all`]: checks from every experiment that finished, and
/// the errors of those that did not.
#[derive(Debug, Default)]
pub struct RunAllReport {
    pub outcome: Outcome,
    pub errors: Vec<(&'static str, ExpError)>,
    /// Wall-clock seconds per experiment, in run order.
    pub seconds: Vec<(&'static str, f64)>,
}

impl RunAllReport {
    pub fn exit_code(&self) -> i32 {
        match self.errors.first() {
            Some((_, e)) => e.exit_code(),
            None if self.outcome.passed() => 0,
            None => 1,
        }
    }
}

pub const RUN_ALL: [Experiment; 4] = [
    Experiment::ToyGms,
    Experiment::RidgeDemo,
    Experiment::QuantileDemo,
    Experiment::MnistDemo,
];

/// Runs every shipped experiment from `config_dir`, continuing past
/// failures.
pub fn run_all(config_dir: &Path, o: &Overrides) -> ExpResult<RunAllReport> {
    let missing: Vec<&str> = RUN_ALL_FILES
        .iter()
        .copied()
        .filter(|f| !config_dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(ExpError::Config(format!(
            "{} is missing {}; expected files: {}",
            config_dir.display(),
            missing.join(", "),
            RUN_ALL_FILES.join(", ")
        )));
    }
    let mut report = RunAllReport::default();
    for exp in RUN_ALL {
        let start = Instant::now();
        let result = run_experiment(exp, &config_dir.join(exp.config_file()), o);
        report
            .seconds
            .push((exp.name(), start.elapsed().as_secs_f64()));
        match result {
            Ok(out) => report.outcome.extend(out),
            Err(e) => {
                log::error!("{}: {e}", exp.name());
                report.errors.push((exp.name(), e));
            }
        }
    }
    Ok(report)
}
