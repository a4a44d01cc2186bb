use std::fs;
use std::path::Path;
use std::process::Command;

use gentune_core::quantile::{irls_quantile, QuantileConfig};
use gentune_core::weights::WeightDraw;
use gentune_experiments::config::{self, LocationScale, ToyConfig, RUN_ALL_FILES};
use gentune_experiments::records::diff_ignoring_timing;
use gentune_experiments::{
    quantile_demo, run_all, run_experiment, ExpError, Experiment, Overrides,
};
use gentune_oracles as oracle;

const SMALL_TOY: &str = r#"
weights = "dirichlet"
lambda_lo = 1e-3
lambda_hi = 1.0
budgets = [50]
ipl_draws = 200

[run]
seed = 3
replications = 1

[simulation]
n = 40
rho = 0.5
noise_sd = 1.0
theta = [1.0, -1.0, 0.5]

[supervised]
steps = 300
momentum = 0.9
loss_tol = 0.0

[criterion]
base_steps = 300
steps_per_label = 1
learning_rate = 1e-3
momentum = 0.9
batch_size = 4
lr_final_fraction = 0.1
time_matched = false
"#;

const ECME: &str = r#"
n = 30
p = 4
noise_sd = 1.0
alpha = 2.0
a = 3.0
b = 0.5
max_iters = 100
tol = 1e-8

[run]
seed = 5
"#;

fn row_count(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gentune"))
}

#[test]
fn unknown_keys_are_config_errors() {
    let bad = SMALL_TOY.replace("ipl_draws = 200", "ipl_draws = 200\nipl_drawz = 1");
    let err = config::parse::<ToyConfig>(&bad, "toy.toml").unwrap_err();
    assert!(matches!(err, ExpError::Config(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("ipl_drawz"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.toml");
    fs::write(&path, bad).unwrap();
    let status = bin()
        .args(["toy-gms", "--config"])
        .arg(&path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(
        Experiment::EcmeDemo,
        &dir.path().join("nope.toml"),
        &Overrides::default(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn run_all_on_empty_directory_lists_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_all(dir.path(), &Overrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    for f in RUN_ALL_FILES {
        assert!(msg.contains(f), "{msg}");
    }
}

#[test]
fn small_toy_run_writes_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.toml");
    fs::write(&path, SMALL_TOY).unwrap();
    let out = dir.path().join("out");
    let o = Overrides {
        out: Some(out.clone()),
        ..Overrides::default()
    };
    let outcome = run_experiment(Experiment::ToyGms, &path, &o).unwrap();
    assert_eq!(row_count(&out.join("toy_gms_ipl.csv")), 2);
    assert!(outcome.files.iter().all(|f| f.is_file()));
    let labels = outcome
        .checks
        .iter()
        .find(|c| c.name.contains("no labels"))
        .unwrap();
    assert!(labels.passed, "{}", labels.detail);
}

#[test]
fn replication_override_scales_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.toml");
    fs::write(&path, SMALL_TOY).unwrap();
    let o = Overrides {
        replications: Some(3),
        out: Some(dir.path().to_path_buf()),
        ..Overrides::default()
    };
    run_experiment(Experiment::ToyGms, &path, &o).unwrap();
    assert_eq!(row_count(&dir.path().join("toy_gms_ipl.csv")), 6);
}

#[test]
fn ecme_run_is_deterministic_and_converges() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ecme.toml");
    fs::write(&path, ECME).unwrap();
    let mut files = Vec::new();
    for sub in ["a", "b"] {
        let o = Overrides {
            out: Some(dir.path().join(sub)),
            ..Overrides::default()
        };
        let outcome = run_experiment(Experiment::EcmeDemo, &path, &o).unwrap();
        assert!(outcome.passed());
        files.push(dir.path().join(sub).join("ecme_trace.csv"));
    }
    assert!(row_count(&files[0]) >= 2);
    assert_eq!(diff_ignoring_timing(&files[0], &files[1]).unwrap(), None);
}

#[test]
fn median_fit_on_demo_data_matches_lad_oracle() {
    let sim = LocationScale {
        n: 60,
        intercept: 1.0,
        slope: 2.0,
        scale0: 0.5,
        scale1: 1.0,
    };
    let data = quantile_demo::simulate(&sim, 4).unwrap();
    let w = WeightDraw::ones(60);
    let fit = irls_quantile(&data, &QuantileConfig::new(0.5, 0.0), &w).unwrap();
    let (_, best) = oracle::quantile_enumerate(data.x(), data.y(), &w.obs_weights, 0.5);
    assert!(
        (fit.objective - best) / best <= 1e-4,
        "{} vs {best}",
        fit.objective
    );
    assert!((quantile_demo::true_quantile(&sim, 0.5, 0.5) - 2.0).abs() < 1e-12);
}

#[test]
fn missing_mnist_files_are_data_errors() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(config::MNIST_FILE);
    let text = fs::read_to_string(shipped).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let path = dir.path().join("mnist.toml");
    fs::write(&path, text.replace("\"../data/mnist\"", "\"empty\"")).unwrap();
    let o = Overrides {
        out: Some(dir.path().join("out")),
        ..Overrides::default()
    };
    let err = run_experiment(Experiment::MnistDemo, &path, &o).unwrap_err();
    assert!(matches!(err, ExpError::Data(_)), "{err}");
    assert!(err.to_string().contains("fetch_mnist"), "{err}");
    let status = bin()
        .args(["mnist-demo", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn timing_columns_are_ignored_when_diffing() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    };
    let a = write(
        "a.csv",
        "schema_version,lambda,value,train_seconds,speedup\n1,0.1,2.5,0.3,10\n",
    );
    let b = write(
        "b.csv",
        "schema_version,lambda,value,train_seconds,speedup\n1,0.1,2.5,0.9,31\n",
    );
    let c = write(
        "c.csv",
        "schema_version,lambda,value,train_seconds,speedup\n1,0.1,2.6,0.3,10\n",
    );
    assert_eq!(diff_ignoring_timing(&a, &b).unwrap(), None);
    assert!(diff_ignoring_timing(&a, &c).unwrap().is_some());
}
