//! Ridge tuning: GCV, K-fold CV, and an amortized CV proxy that trains one
//! λ → θ generator per fold and scores the whole grid without refits.

use std::path::Path;
use std::time::Instant;

use gentune_core::cv::{cv_select, kfold_split, test_mse};
use gentune_core::generator::{
    train_criterion, GeneratorModel, HyperConfig, HyperProposal, InputSpec, OmegaEncoding,
};
use gentune_core::objective::RidgeProblem;
use gentune_core::ridge::{gcv_select, solve_weighted_ridge, GridSelection};
use gentune_core::rng::derive_seed;
use gentune_core::select::argmin_prefer_last;
use gentune_core::weights::{WeightDraw, WeightKind, WeightLaw};
use gentune_core::Dataset;

use crate::checks::{Check, Outcome};
use crate::config::RidgeConfig;
use crate::error::{ExpError, ExpResult};
use crate::records::{write_csv, RidgeCurveRow, RidgeSummaryRow, SCHEMA_VERSION};

pub const CURVES_FILE: &str = "ridge_curves.csv";
pub const SUMMARY_FILE: &str = "ridge_summary.csv";
pub const GCV: &str = "gcv";
pub const CV: &str = "cv";
pub const AMORTIZED: &str = "amortized";

/// Runs `f` on a one-thread pool so timings compare like with like.
fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> ExpResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| ExpError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Amortized {
    /// Per-fold generator with its validation rows and training size.
    models: Vec<(GeneratorModel, Dataset, usize)>,
    curve: Vec<f64>,
    index: usize,
    train_seconds: f64,
    curve_seconds: f64,
}

fn amortized_curve(
    cfg: &RidgeConfig,
    data: &Dataset,
    grid: &[f64],
    seed: u64,
) -> ExpResult<Amortized> {
    let folds = kfold_split(data.n(), cfg.folds, derive_seed(seed, 2))?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let proposal = HyperProposal::log_uniform(lo, hi);
    let input = InputSpec {
        lambda_range: (lo, hi),
        lambda_degree: cfg.generator.lambda_degree,
        eta_ranges: vec![],
        omega: OmegaEncoding::None,
    };
    let mut models = Vec::with_capacity(cfg.folds);
    let mut train_seconds = 0.0;
    for k in 0..cfg.folds {
        let (train, val) = folds.split(data, k)?;
        let law = WeightLaw::new(WeightKind::Ones, train.n())?;
        let objective = RidgeProblem::new(train);
        let init = GeneratorModel::linear(input.clone(), data.p());
        let rep = train_criterion(
            init,
            &proposal,
            &law,
            &objective,
            &cfg.generator.sgd,
            derive_seed(seed, 10 + k as u64),
        )?;
        train_seconds += rep.train_seconds;
        models.push((rep.model, val, law.n));
    }
    let (curve, curve_seconds) = single_threaded(|| {
        let t = Instant::now();
        let mut curve = vec![0.0; grid.len()];
        for (model, val, n_train) in &models {
            let ones = WeightDraw::ones(*n_train);
            for (c, &lambda) in curve.iter_mut().zip(grid) {
                let theta = model.forward(&ones, &HyperConfig::new(lambda))?;
                *c += test_mse(&theta, val)? / cfg.folds as f64;
            }
        }
        Ok::<_, ExpError>((curve, t.elapsed().as_secs_f64()))
    })??;
    let index = argmin_prefer_last(curve.iter().map(|v| Some(*v)))
        .ok_or_else(|| ExpError::Data("amortized curve has no finite value".into()))?;
    Ok(Amortized {
        models,
        curve,
        index,
        train_seconds,
        curve_seconds,
    })
}

fn replication(
    cfg: &RidgeConfig,
    rep: usize,
    grid: &[f64],
) -> ExpResult<(Vec<RidgeCurveRow>, Vec<RidgeSummaryRow>, Vec<Check>)> {
    let seed = derive_seed(cfg.run.seed, rep as u64);
    let data = cfg.simulation.simulate(derive_seed(seed, 0))?;
    let test = cfg
        .simulation
        .simulate_rows(cfg.test_rows, derive_seed(seed, 1))?;
    let folds = kfold_split(data.n(), cfg.folds, derive_seed(seed, 2))?;
    let ones = WeightDraw::ones(data.n());
    let refit_mse = |lambda: f64| -> ExpResult<f64> {
        Ok(test_mse(
            &solve_weighted_ridge(&data, &ones, lambda)?.theta,
            &test,
        )?)
    };

    let timed = |f: &(dyn Fn() -> gentune_core::Result<GridSelection> + Sync)| {
        single_threaded(|| {
            let t = Instant::now();
            let s = f();
            (s, t.elapsed().as_secs_f64())
        })
    };
    let (gcv, gcv_seconds) = timed(&|| gcv_select(&data, grid))?;
    let gcv = gcv?;
    let (cv, cv_seconds) = timed(&|| cv_select(&data, grid, &folds))?;
    let cv = cv?;
    let am = amortized_curve(cfg, &data, grid, seed)?;

    let mut curves = Vec::new();
    let mut push_curve = |method: &str, values: Vec<Option<f64>>| {
        for (&lambda, value) in grid.iter().zip(values) {
            curves.push(RidgeCurveRow {
                schema_version: SCHEMA_VERSION,
                experiment: "ridge_demo".into(),
                replication: rep,
                seed,
                method: method.into(),
                lambda,
                value,
            });
        }
    };
    push_curve(GCV, gcv.values());
    push_curve(CV, cv.values());
    push_curve(AMORTIZED, am.curve.iter().map(|v| Some(*v)).collect());

    let am_lambda = grid[am.index];
    let am_mse = if cfg.refit {
        refit_mse(am_lambda)?
    } else {
        // Average of the fold generators' outputs at the selection.
        let mut theta = nalgebra::DVector::zeros(data.p());
        for (model, _, n_train) in &am.models {
            theta += model.forward(&WeightDraw::ones(*n_train), &HyperConfig::new(am_lambda))?
                / cfg.folds as f64;
        }
        test_mse(&theta, &test)?
    };
    let summary_row = |method: &str,
                       lambda_hat: f64,
                       grid_index: usize,
                       test_mse: f64,
                       train_s: f64,
                       curve_s: f64| {
        RidgeSummaryRow {
            schema_version: SCHEMA_VERSION,
            experiment: "ridge_demo".into(),
            replication: rep,
            seed,
            method: method.into(),
            lambda_hat,
            grid_index,
            test_mse,
            train_seconds: train_s,
            curve_seconds: curve_s,
        }
    };
    let gcv_mse = refit_mse(gcv.lambda_hat)?;
    let cv_mse = refit_mse(cv.lambda_hat)?;
    let summary = vec![
        summary_row(GCV, gcv.lambda_hat, gcv.index, gcv_mse, 0.0, gcv_seconds),
        summary_row(CV, cv.lambda_hat, cv.index, cv_mse, 0.0, cv_seconds),
        summary_row(
            AMORTIZED,
            am_lambda,
            am.index,
            am_mse,
            am.train_seconds,
            am.curve_seconds,
        ),
    ];

    let tag = if cfg.run.replications > 1 {
        format!(" (replication {rep})")
    } else {
        String::new()
    };
    let checks = vec![
        Check::new(
            format!("ridge GCV and CV within one grid step{tag}"),
            gcv.index.abs_diff(cv.index) <= 1,
            format!(
                "GCV lambda {:.4} (index {}), CV lambda {:.4} (index {})",
                gcv.lambda_hat, gcv.index, cv.lambda_hat, cv.index
            ),
        ),
        Check::new(
            format!("ridge amortized refit test MSE within 5% of CV{tag}"),
            am_mse <= 1.05 * cv_mse,
            format!("amortized {am_mse:.4} (lambda {am_lambda:.4}) vs CV {cv_mse:.4}"),
        ),
        Check::new(
            format!("ridge amortized curve at least 2x faster than CV{tag}"),
            2.0 * am.curve_seconds <= cv_seconds,
            format!(
                "amortized {:.3e} s vs CV {:.3e} s ({:.1}x)",
                am.curve_seconds,
                cv_seconds,
                cv_seconds / am.curve_seconds.max(1e-12)
            ),
        ),
    ];
    Ok((curves, summary, checks))
}

pub fn run_ridge_demo(cfg: &RidgeConfig, out_dir: &Path) -> ExpResult<Outcome> {
    if cfg.folds < 2 || cfg.folds > cfg.simulation.n {
        return Err(ExpError::Config(format!(
            "folds must lie in [2, n], got {}",
            cfg.folds
        )));
    }
    if cfg.test_rows == 0 || cfg.run.replications == 0 {
        return Err(ExpError::Config(
            "test_rows and replications must be positive".into(),
        ));
    }
    cfg.simulation
        .validate()
        .map_err(|e| ExpError::Config(format!("simulation: {e}")))?;
    cfg.generator
        .sgd
        .validate()
        .map_err(|e| ExpError::Config(format!("generator.sgd: {e}")))?;
    let grid = cfg.grid.values()?;
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    let mut checks = Vec::new();
    for rep in 0..cfg.run.replications {
        let (c, s, k) = replication(cfg, rep, &grid)?;
        curves.extend(c);
        summary.extend(s);
        checks.extend(k);
    }
    Ok(Outcome {
        files: vec![
            write_csv(out_dir, CURVES_FILE, &curves)?,
            write_csv(out_dir, SUMMARY_FILE, &summary)?,
        ],
        checks,
    })
}
