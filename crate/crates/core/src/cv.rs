//! K-fold cross-validation for the ridge family, plus held-out test risk.
//!
//! Every per-fold computation sees only that fold's training rows: callers
//! receive a training [`Dataset`] built from the complement of the fold and
//! never the full data.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ridge::{GridSelection, WeightedGram};
use crate::rng;
use crate::select::check_grid;
use crate::weights::WeightDraw;

/// Balanced fold labels produced by a seeded permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn validation_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// `(train, validation)` views for one fold.
    pub fn split(&self, data: &Dataset, fold: usize) -> Result<(Dataset, Dataset)> {
        if data.n() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "fold assignment length",
                expected: data.n(),
                actual: self.n(),
            });
        }
        if fold >= self.k {
            return Err(Error::domain(format!(
                "fold {fold} out of range for k = {}",
                self.k
            )));
        }
        Ok((
            data.subset(&self.training_rows(fold))?,
            data.subset(&self.validation_rows(fold))?,
        ))
    }

    /// Applies a permutation of fold labels (`perm[old] = new`).
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self {
            fold_of: self.fold_of.iter().map(|&f| perm[f]).collect(),
            k: self.k,
            seed: self.seed,
        }
    }
}

pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::domain(format!(
            "need 2 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// `(1/n) ‖y − Xθ‖²`.
pub fn test_mse(theta: &DVector<f64>, test: &Dataset) -> Result<f64> {
    let r = test.residuals(theta)?;
    Ok(r.norm_squared() / test.n() as f64)
}

/// Mean over folds of `criterion(fit(train_k), validation_k)`.
pub fn cv_risk_by<F, C>(data: &Dataset, folds: &FoldAssignment, fit: F, criterion: C) -> Result<f64>
where
    F: Fn(&Dataset) -> Result<DVector<f64>> + Sync,
    C: Fn(&DVector<f64>, &Dataset) -> Result<f64> + Sync,
{
    let per_fold: Vec<Result<f64>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (train, val) = folds.split(data, f)?;
            criterion(&fit(&train)?, &val)
        })
        .collect();
    let mut total = 0.0;
    for r in per_fold {
        total += r?;
    }
    Ok(total / folds.k as f64)
}

/// Cross-validated MSE of unweighted ridge at one λ.
pub fn cv_risk(data: &Dataset, lambda: f64, folds: &FoldAssignment) -> Result<f64> {
    cv_risk_by(
        data,
        folds,
        |train| WeightedGram::new(train, &WeightDraw::ones(train.n()))?.solve(lambda),
        test_mse,
    )
}

/// Per-fold validation MSE over a whole λ grid: `out[fold][grid_index]`.
/// Each fold factors its own Gram matrix once and re-solves per λ.
pub fn cv_fold_curves(
    data: &Dataset,
    grid: &[f64],
    folds: &FoldAssignment,
) -> Result<Vec<Vec<Result<f64>>>> {
    check_grid(grid)?;
    (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (train, val) = folds.split(data, f)?;
            let gram = WeightedGram::new(&train, &WeightDraw::ones(train.n()))?;
            Ok(grid
                .iter()
                .map(|&l| gram.solve(l).and_then(|theta| test_mse(&theta, &val)))
                .collect())
        })
        .collect()
}

/// Averages fold-by-grid results; a grid point fails if any fold failed.
pub fn average_fold_curves(per_fold: Vec<Vec<Result<f64>>>, grid_len: usize) -> Vec<Result<f64>> {
    let k = per_fold.len() as f64;
    let mut sums: Vec<Result<f64>> = (0..grid_len).map(|_| Ok(0.0)).collect();
    for fold in per_fold {
        for (acc, r) in sums.iter_mut().zip(fold) {
            if let Ok(s) = acc {
                match r {
                    Ok(v) => *s += v,
                    Err(e) => *acc = Err(e),
                }
            }
        }
    }
    sums.into_iter().map(|r| r.map(|s| s / k)).collect()
}

/// Minimizes the CV curve over the grid; ties go to the larger λ.
pub fn cv_select(data: &Dataset, grid: &[f64], folds: &FoldAssignment) -> Result<GridSelection> {
    let per_fold = cv_fold_curves(data, grid, folds)?;
    GridSelection::from_results(grid, average_fold_curves(per_fold, grid.len()))
}
