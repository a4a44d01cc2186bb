//! MNIST: one hypernetwork trained across λ, its validation curve, and
//! fixed-λ baselines trained from scratch for comparison.

use std::path::{Path, PathBuf};

use gentune_core::rng::derive_seed;
use gentune_core::select::log_grid;
use gentune_mnist::dataset::Labeled;
use gentune_mnist::hypernet::{HyperNet, HyperNetSpec};
use gentune_mnist::idx::{read_idx_bytes, IdxTensor, MAGIC_IMAGES, MAGIC_LABELS};
use gentune_mnist::mlp::{evaluate, MlpSpec};
use gentune_mnist::train::{train_baseline, train_hypernet_criterion, tuning_curve};
use gentune_mnist::MnistError;

use crate::checks::{Check, Outcome};
use crate::config::{sha256_hex, Loaded, MnistData, MnistDemoConfig};
use crate::error::{ExpError, ExpResult};
use crate::records::{write_csv, MnistCurveRow, MnistSummaryRow, SCHEMA_VERSION};

pub const CURVE_FILE: &str = "mnist_curve.csv";
pub const SUMMARY_FILE: &str = "mnist_summary.csv";
pub const MODEL_FILE: &str = "mnist_hypernet.gtm";
pub const HYPERNET: &str = "hypernet";
pub const BASELINE: &str = "baseline";

/// SHA-256 of the four uncompressed canonical IDX files.
pub const SHA_TRAIN_IMAGES: &str =
    "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db";
pub const SHA_TRAIN_LABELS: &str =
    "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5";
pub const SHA_TEST_IMAGES: &str =
    "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7";
pub const SHA_TEST_LABELS: &str =
    "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2";

const FETCH_HINT: &str =
    "place the MNIST IDX files (optionally gzipped) there, e.g. with scripts/fetch_mnist.sh";

fn read_checked(path: &Path, expected_sha: &str, magic: u32, verify: bool) -> ExpResult<IdxTensor> {
    if !path.exists() {
        return Err(ExpError::Data(format!(
            "{} not found; {FETCH_HINT}",
            path.display()
        )));
    }
    let bytes =
        read_idx_bytes(path).map_err(|e| ExpError::Data(format!("{}: {e}", path.display())))?;
    if verify {
        let got = sha256_hex(&bytes);
        if got != expected_sha {
            return Err(ExpError::Data(format!(
                "{}: SHA-256 {got} does not match the canonical file ({expected_sha})",
                path.display()
            )));
        }
    }
    IdxTensor::parse(&bytes)
        .and_then(|t| t.expect_magic(magic))
        .map_err(|e| ExpError::Data(format!("{}: {e}", path.display())))
}

pub struct MnistSplit {
    pub train: Labeled,
    pub validation: Labeled,
    pub test: Labeled,
}

/// Training and validation are consecutive blocks at the start of the
/// training file; the test block is the start of the test file.
pub fn load_split(data: &MnistData, dir: &Path) -> ExpResult<MnistSplit> {
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let v = data.verify_sha256;
    let train_all = Labeled::from_idx(
        read_checked(&file(&data.train_images), SHA_TRAIN_IMAGES, MAGIC_IMAGES, v)?,
        read_checked(&file(&data.train_labels), SHA_TRAIN_LABELS, MAGIC_LABELS, v)?,
    )
    .map_err(|e| ExpError::Data(e.to_string()))?;
    let test_all = Labeled::from_idx(
        read_checked(&file(&data.test_images), SHA_TEST_IMAGES, MAGIC_IMAGES, v)?,
        read_checked(&file(&data.test_labels), SHA_TEST_LABELS, MAGIC_LABELS, v)?,
    )
    .map_err(|e| ExpError::Data(e.to_string()))?;
    let shape = |e: MnistError| ExpError::Config(format!("data split: {e}"));
    Ok(MnistSplit {
        train: train_all.slice(0, data.train).map_err(shape)?,
        validation: train_all
            .slice(data.train, data.validation)
            .map_err(shape)?,
        test: test_all.slice(0, data.test).map_err(shape)?,
    })
}

fn validate(cfg: &MnistDemoConfig) -> ExpResult<()> {
    if cfg.grid_points < 2 {
        return Err(ExpError::Config("grid_points must be at least 2".into()));
    }
    if cfg.data.train == 0 || cfg.data.validation == 0 || cfg.data.test == 0 {
        return Err(ExpError::Config("data split sizes must be positive".into()));
    }
    if cfg
        .extra_baselines
        .iter()
        .any(|l| !(*l >= 0.0 && l.is_finite()))
    {
        return Err(ExpError::Config(
            "extra_baselines must be non-negative".into(),
        ));
    }
    cfg.hypernet
        .validate()
        .map_err(|e| ExpError::Config(format!("hypernet: {e}")))?;
    cfg.baseline
        .validate()
        .map_err(|e| ExpError::Config(format!("baseline: {e}")))?;
    Ok(())
}

pub fn run_mnist_demo(loaded: &Loaded<MnistDemoConfig>, out_dir: &Path) -> ExpResult<Outcome> {
    let cfg = &loaded.config;
    validate(cfg)?;
    let seed = cfg.run.seed;
    let split = load_split(&cfg.data, &loaded.resolve(&cfg.data.dir))?;
    let mlp = MlpSpec::new(
        split.train.pixels(),
        cfg.model.hidden,
        gentune_mnist::dataset::CLASSES,
    );
    let spec = HyperNetSpec {
        mlp,
        lambda_range: (cfg.model.lambda_lo, cfg.model.lambda_hi),
        rank: cfg.model.rank,
        omega_feature: cfg.model.omega_feature,
    };
    let grid = log_grid(cfg.model.lambda_lo, cfg.model.lambda_hi, cfg.grid_points)
        .map_err(|e| ExpError::Config(format!("lambda range: {e}")))?;

    let init =
        HyperNet::init(spec, derive_seed(seed, 0)).map_err(|e| ExpError::Config(e.to_string()))?;
    let hn = train_hypernet_criterion(init, &split.train, &cfg.hypernet, derive_seed(seed, 1))?;
    let curve = tuning_curve(&hn.net, &split.validation, &grid)?;
    let best = *curve
        .argmin()
        .ok_or_else(|| ExpError::Data("validation curve has no finite loss".into()))?;
    let hn_test = evaluate(&mlp, &hn.net.forward(best.lambda), &split.test)?;

    let model_path = out_dir.join(MODEL_FILE);
    std::fs::create_dir_all(out_dir).map_err(|e| ExpError::io(out_dir, e))?;
    let f = std::fs::File::create(&model_path).map_err(|e| ExpError::io(&model_path, e))?;
    hn.net
        .write_to(std::io::BufWriter::new(f), seed, &loaded.hash)?;

    let mut baseline_lambdas = vec![best.lambda];
    baseline_lambdas.extend(cfg.extra_baselines.iter().copied());
    let mut baselines = Vec::new();
    for (k, &lambda) in baseline_lambdas.iter().enumerate() {
        let b = train_baseline(
            &mlp,
            lambda,
            &split.train,
            &cfg.baseline,
            derive_seed(seed, 100 + k as u64),
        )?;
        let val = evaluate(&mlp, &b.params, &split.validation)?;
        let test = evaluate(&mlp, &b.params, &split.test)?;
        baselines.push((lambda, val, test, b.train_seconds));
    }
    let base_seconds = baselines[0].3;
    let speedup = grid.len() as f64 * base_seconds / curve.seconds.max(1e-12);

    let curve_rows: Vec<MnistCurveRow> = curve
        .rows
        .iter()
        .map(|r| MnistCurveRow {
            schema_version: SCHEMA_VERSION,
            experiment: "mnist_demo".into(),
            seed,
            lambda: r.lambda,
            val_loss: r.val_loss,
            val_acc: r.val_acc,
        })
        .collect();
    let mut summary = vec![MnistSummaryRow {
        schema_version: SCHEMA_VERSION,
        experiment: "mnist_demo".into(),
        seed,
        method: HYPERNET.into(),
        lambda: best.lambda,
        val_loss: best.val_loss,
        val_acc: best.val_acc,
        test_acc: hn_test.accuracy,
        train_seconds: hn.train_seconds,
        curve_seconds: curve.seconds,
        speedup: Some(speedup),
    }];
    for (lambda, val, test, secs) in &baselines {
        summary.push(MnistSummaryRow {
            schema_version: SCHEMA_VERSION,
            experiment: "mnist_demo".into(),
            seed,
            method: BASELINE.into(),
            lambda: *lambda,
            val_loss: val.loss,
            val_acc: val.accuracy,
            test_acc: test.accuracy,
            train_seconds: *secs,
            curve_seconds: 0.0,
            speedup: None,
        });
    }

    let first = &curve.rows[0];
    let last = &curve.rows[curve.rows.len() - 1];
    let trace = &hn.loss_trace;
    let w = 100.min(trace.len() / 2).max(1);
    let head = trace.iter().take(w).sum::<f64>() / w as f64;
    let tail = trace.iter().rev().take(w).sum::<f64>() / w as f64;
    let base_acc = baselines[0].1.accuracy;
    let mut checks = vec![
        Check::new(
            "mnist curve spans the lambda range",
            curve.rows.len() == cfg.grid_points
                && (first.lambda / cfg.model.lambda_lo - 1.0).abs() < 1e-12
                && (last.lambda / cfg.model.lambda_hi - 1.0).abs() < 1e-12,
            format!(
                "{} points from {:.1e} to {:.1e}",
                curve.rows.len(),
                first.lambda,
                last.lambda
            ),
        ),
        Check::new(
            "mnist validation accuracy at argmin >= 0.90",
            best.val_acc >= 0.90,
            format!("accuracy {:.4} at lambda {:.2e}", best.val_acc, best.lambda),
        ),
        Check::new(
            "mnist gap to retrained baseline <= 3 points",
            base_acc - best.val_acc <= 0.03,
            format!("baseline {:.4} vs hypernet {:.4}", base_acc, best.val_acc),
        ),
        Check::new(
            "mnist accuracy at largest lambda >= 2 points below argmin",
            last.val_acc <= best.val_acc - 0.02,
            format!(
                "{:.4} at {:.1e} vs {:.4} at argmin",
                last.val_acc, last.lambda, best.val_acc
            ),
        ),
        Check::new(
            "mnist validation loss lower at smallest lambda than at largest",
            first.val_loss < last.val_loss,
            format!("{:.4} vs {:.4}", first.val_loss, last.val_loss),
        ),
        Check::new(
            "mnist curve more than 5x cheaper than per-point retraining",
            speedup > 5.0,
            format!(
                "{} x {:.3} s baseline vs {:.3} s curve ({speedup:.1}x)",
                grid.len(),
                base_seconds,
                curve.seconds
            ),
        ),
        Check::new(
            "mnist hypernet training loss decreases",
            tail < head,
            format!("first {w} steps {head:.4}, last {w} steps {tail:.4}"),
        ),
    ];
    if baselines.len() >= 3 {
        let extra = &baselines[1..];
        let lo = extra.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
        let hi = extra.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
        checks.push(Check::new(
            "mnist over-regularized baseline is worse",
            hi.1.accuracy < lo.1.accuracy,
            format!(
                "baseline accuracy {:.4} at {:.1e} vs {:.4} at {:.1e}",
                hi.1.accuracy, hi.0, lo.1.accuracy, lo.0
            ),
        ));
    }
    Ok(Outcome {
        files: vec![
            write_csv(out_dir, CURVE_FILE, &curve_rows)?,
            write_csv(out_dir, SUMMARY_FILE, &summary)?,
            model_path,
        ],
        checks,
    })
}
