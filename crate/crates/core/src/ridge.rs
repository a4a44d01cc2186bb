//! Exact weighted ridge regression.
//!
//! The objective is `(1/n) ‖W^{1/2}(y − Xθ)‖² + λ ω₀ ‖θ‖²` with
//! `W = diag(ω)`, whose minimizer solves `(XᵀWX + nλω₀ I) θ = XᵀWy`.
//! The `1/n` scaling fixes the `nλ` factor everywhere below (hat matrix,
//! GCV, cross-validation), so λ values are comparable across sample sizes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::select::{argmin_prefer_last, check_grid};
use crate::weights::WeightDraw;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub theta: DVector<f64>,
    pub lambda: f64,
    pub weights: WeightDraw,
}

/// Cached `XᵀWX` and `XᵀWy` for one `(data, ω)` pair, so a λ path costs one
/// p × p factorization per point.
#[derive(Debug, Clone)]
pub struct WeightedGram {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    n: usize,
    penalty_weight: f64,
}

impl WeightedGram {
    pub fn new(data: &Dataset, w: &WeightDraw) -> Result<Self> {
        if w.n() != data.n() {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: data.n(),
                actual: w.n(),
            });
        }
        if !w.is_valid() {
            return Err(Error::domain("weights must be finite and non-negative"));
        }
        let x = data.x();
        let mut xw = x.clone();
        for (i, wi) in w.obs_weights.iter().enumerate() {
            xw.row_mut(i).scale_mut(*wi);
        }
        let gram = x.tr_mul(&xw);
        let xty = xw.tr_mul(data.y());
        Ok(Self {
            gram,
            xty,
            n: data.n(),
            penalty_weight: w.penalty_weight,
        })
    }

    pub fn p(&self) -> usize {
        self.gram.nrows()
    }

    pub fn solve(&self, lambda: f64) -> Result<DVector<f64>> {
        check_lambda(lambda, true)?;
        let mut a = self.gram.clone();
        let shift = self.n as f64 * lambda * self.penalty_weight;
        for j in 0..a.nrows() {
            a[(j, j)] += shift;
        }
        solve_spd(a, &self.xty)
    }
}

pub(crate) fn check_lambda(lambda: f64, allow_zero: bool) -> Result<()> {
    let ok = lambda.is_finite() && (lambda > 0.0 || (allow_zero && lambda == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "invalid regularization strength {lambda}"
        )))
    }
}

/// Solves `a θ = b` for symmetric positive semi-definite `a`: Cholesky
/// first, then an SVD with an explicit rank check.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        let sol = chol.solve(b);
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    let dim = a.nrows();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let tol = f64::EPSILON * dim as f64 * smax.max(f64::MIN_POSITIVE);
    if !(smin > tol) {
        return Err(Error::Singular(format!(
            "system matrix is rank deficient (smallest singular value {smin:e}, tolerance {tol:e})"
        )));
    }
    svd.solve(b, tol)
        .map_err(|e| Error::Singular(e.to_string()))
}

/// Exact minimizer of the weighted ridge objective.
pub fn solve_weighted_ridge(data: &Dataset, w: &WeightDraw, lambda: f64) -> Result<RidgeSolution> {
    let theta = WeightedGram::new(data, w)?.solve(lambda)?;
    Ok(RidgeSolution {
        theta,
        lambda,
        weights: w.clone(),
    })
}

/// Which matrix the smoother is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmootherPath {
    /// p × p system `XᵀX + nλI`.
    Primal,
    /// n × n system `XXᵀ + nλI`, used when p > n.
    Dual,
}

impl SmootherPath {
    pub fn auto(data: &Dataset) -> Self {
        if data.p() > data.n() {
            SmootherPath::Dual
        } else {
            SmootherPath::Primal
        }
    }
}

/// Hat matrix `A(λ) = X(XᵀX + nλI)⁻¹Xᵀ` of unweighted ridge.
pub fn hat_matrix(data: &Dataset, lambda: f64) -> Result<DMatrix<f64>> {
    hat_matrix_via(data, lambda, SmootherPath::auto(data))
}

pub fn hat_matrix_via(data: &Dataset, lambda: f64, path: SmootherPath) -> Result<DMatrix<f64>> {
    check_lambda(lambda, false)?;
    let x = data.x();
    let shift = data.n() as f64 * lambda;
    let a = match path {
        SmootherPath::Primal => {
            let mut g = x.tr_mul(x);
            for j in 0..g.nrows() {
                g[(j, j)] += shift;
            }
            let chol = g.cholesky().ok_or_else(|| {
                Error::Singular("primal ridge system not positive definite".into())
            })?;
            x * chol.solve(&x.transpose())
        }
        SmootherPath::Dual => {
            // (K + nλI)⁻¹K = K(K + nλI)⁻¹ because the two factors commute.
            let k = x * x.transpose();
            let mut m = k.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += shift;
            }
            let chol = m
                .cholesky()
                .ok_or_else(|| Error::Singular("dual ridge system not positive definite".into()))?;
            chol.solve(&k)
        }
    };
    Ok((&a + a.transpose()) * 0.5)
}

/// Generalized cross-validation score
/// `V(λ) = (1/n)‖(I − A)y‖² / [(1/n) tr(I − A)]²`.
pub fn gcv_score(data: &Dataset, lambda: f64) -> Result<f64> {
    gcv_score_via(data, lambda, SmootherPath::auto(data))
}

pub fn gcv_score_via(data: &Dataset, lambda: f64, path: SmootherPath) -> Result<f64> {
    let a = hat_matrix_via(data, lambda, path)?;
    let n = data.n() as f64;
    let resid = data.y() - &a * data.y();
    let trace_resid = n - a.trace();
    if !(trace_resid > 1e-12) {
        return Err(Error::DegenerateSmoother {
            lambda,
            trace: trace_resid,
        });
    }
    let num = resid.norm_squared() / n;
    let den = (trace_resid / n).powi(2);
    Ok(num / den)
}

/// Effective degrees of freedom `tr A(λ)`.
pub fn degrees_of_freedom(data: &Dataset, lambda: f64) -> Result<f64> {
    Ok(hat_matrix(data, lambda)?.trace())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    /// `None` when the point was skipped (see `skipped`).
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSelection {
    pub lambda_hat: f64,
    pub index: usize,
    pub curve: Vec<CurvePoint>,
    /// Grid points whose criterion could not be evaluated, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl GridSelection {
    pub(crate) fn from_results(grid: &[f64], results: Vec<Result<f64>>) -> Result<Self> {
        let mut curve = Vec::with_capacity(grid.len());
        let mut skipped = Vec::new();
        for (&lambda, r) in grid.iter().zip(results) {
            match r {
                Ok(v) => curve.push(CurvePoint {
                    lambda,
                    value: Some(v),
                }),
                Err(e) => {
                    skipped.push((lambda, e.to_string()));
                    curve.push(CurvePoint {
                        lambda,
                        value: None,
                    });
                }
            }
        }
        let index = argmin_prefer_last(curve.iter().map(|c| c.value))
            .ok_or_else(|| Error::domain("no grid point could be evaluated"))?;
        Ok(Self {
            lambda_hat: grid[index],
            index,
            curve,
            skipped,
        })
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.curve.iter().map(|c| c.value).collect()
    }
}

/// Minimizes `V(λ)` over a strictly increasing grid; ties go to the larger λ.
pub fn gcv_select(data: &Dataset, grid: &[f64]) -> Result<GridSelection> {
    check_grid(grid)?;
    let results: Vec<Result<f64>> = grid.par_iter().map(|&l| gcv_score(data, l)).collect();
    GridSelection::from_results(grid, results)
}
