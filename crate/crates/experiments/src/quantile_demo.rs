//! Quantile regression sweep over levels q and penalties λ on a
//! heteroscedastic location-scale simulation with known quantiles.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use gentune_core::quantile::{irls_quantile, QuantileConfig};
use gentune_core::rng::{derive_seed, stream};
use gentune_core::weights::WeightLaw;
use gentune_core::Dataset;

use crate::checks::{Check, Outcome};
use crate::config::{LocationScale, QuantileDemoConfig};
use crate::error::{ExpError, ExpResult};
use crate::records::{write_csv, QuantileRow, SCHEMA_VERSION};

pub const CURVES_FILE: &str = "quantile_curves.csv";

/// `y = a + b x + (s0 + s1 x) ε` with `x ~ U(0, 1)`, `ε ~ N(0, 1)`; the
/// design has an intercept column.
pub fn simulate(sim: &LocationScale, seed: u64) -> ExpResult<Dataset> {
    let mut rng = stream(seed);
    let mut x = DMatrix::zeros(sim.n, 2);
    let mut y = DVector::zeros(sim.n);
    for i in 0..sim.n {
        let xi: f64 = rng.random();
        let e: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = xi;
        y[i] = sim.intercept + sim.slope * xi + (sim.scale0 + sim.scale1 * xi) * e;
    }
    Ok(Dataset::new(x, y)?)
}

/// Conditional `q`-quantile of `y` at covariate value `x`.
pub fn true_quantile(sim: &LocationScale, x: f64, q: f64) -> f64 {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(q);
    sim.intercept + sim.slope * x + (sim.scale0 + sim.scale1 * x) * z
}

fn validate(cfg: &QuantileDemoConfig) -> ExpResult<()> {
    let s = &cfg.simulation;
    if s.n < 2 || !(s.scale0 > 0.0) || !(s.scale1 >= 0.0) {
        return Err(ExpError::Config(
            "simulation needs n >= 2, scale0 > 0, scale1 >= 0".into(),
        ));
    }
    if cfg.levels.is_empty() || cfg.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(ExpError::Config(
            "levels must be a non-empty list inside (0, 1)".into(),
        ));
    }
    if cfg.levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExpError::Config(
            "levels must be strictly increasing".into(),
        ));
    }
    if cfg.run.replications == 0 || cfg.max_iters == 0 {
        return Err(ExpError::Config(
            "replications and max_iters must be positive".into(),
        ));
    }
    Ok(())
}

fn replication(cfg: &QuantileDemoConfig, rep: usize, grid: &[f64]) -> ExpResult<Vec<QuantileRow>> {
    let seed = derive_seed(cfg.run.seed, rep as u64);
    let data = simulate(&cfg.simulation, derive_seed(seed, 0))?;
    let w = WeightLaw::new(cfg.weights, data.n())?.sample(derive_seed(seed, 1));
    let x_mean = data.x().column(1).mean();
    let at_mean = DVector::from_column_slice(&[1.0, x_mean]);
    let cells: Vec<(f64, f64)> = cfg
        .levels
        .iter()
        .flat_map(|&q| grid.iter().map(move |&l| (q, l)))
        .collect();
    cells
        .par_iter()
        .map(|&(q, lambda)| {
            let qc = QuantileConfig {
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                ..QuantileConfig::new(q, lambda)
            };
            let t = Instant::now();
            let fit = irls_quantile(&data, &qc, &w)?;
            Ok(QuantileRow {
                schema_version: SCHEMA_VERSION,
                experiment: "quantile_demo".into(),
                replication: rep,
                seed,
                q,
                lambda,
                objective: fit.objective,
                iterations: fit.iterations,
                converged: fit.converged,
                quantile_at_mean: fit.theta.dot(&at_mean),
                true_quantile: true_quantile(&cfg.simulation, x_mean, q),
                solve_seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Fraction of adjacent level pairs (per replication and λ) whose fitted
/// quantiles at the design mean cross.
pub fn crossing_rate(rows: &[QuantileRow]) -> f64 {
    let mut keys: Vec<(usize, u64)> = rows
        .iter()
        .map(|r| (r.replication, r.lambda.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let (mut pairs, mut bad) = (0usize, 0usize);
    for (rep, lbits) in keys {
        let mut col: Vec<&QuantileRow> = rows
            .iter()
            .filter(|r| r.replication == rep && r.lambda.to_bits() == lbits)
            .collect();
        col.sort_by(|a, b| a.q.total_cmp(&b.q));
        for w in col.windows(2) {
            pairs += 1;
            if w[1].quantile_at_mean < w[0].quantile_at_mean {
                bad += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        bad as f64 / pairs as f64
    }
}

pub fn run_quantile_demo(cfg: &QuantileDemoConfig, out_dir: &Path) -> ExpResult<Outcome> {
    validate(cfg)?;
    let grid = cfg.grid.values()?;
    let mut rows = Vec::new();
    for rep in 0..cfg.run.replications {
        rows.extend(replication(cfg, rep, &grid)?);
    }
    let rate = crossing_rate(&rows);
    let expected = cfg.levels.len() * grid.len() * cfg.run.replications;
    let checks = vec![
        Check::new(
            "quantile fits monotone in q at the design mean",
            rate < 0.05,
            format!(
                "{:.1}% of adjacent level pairs cross (limit 5%)",
                100.0 * rate
            ),
        ),
        Check::new(
            "quantile row count",
            rows.len() == expected,
            format!("{} rows, expected {expected}", rows.len()),
        ),
    ];
    Ok(Outcome {
        files: vec![write_csv(out_dir, CURVES_FILE, &rows)?],
        checks,
    })
}
