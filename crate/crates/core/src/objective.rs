//! Inner problems: exact optimizer maps and differentiable weighted
//! objectives.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::Result;
use crate::generator::HyperConfig;
use crate::ridge::WeightedGram;
use crate::weights::WeightDraw;

/// Anything that maps `(ω, h)` to a parameter vector: exact solvers as well
/// as trained generators.
pub trait OptimizerMap: Sync {
    fn output_dim(&self) -> usize;
    fn evaluate(&self, w: &WeightDraw, h: &HyperConfig) -> Result<DVector<f64>>;
}

/// A weighted inner objective `L(θ; ω, h)` with its θ-gradient.
pub trait WeightedObjective: Sync {
    fn dim(&self) -> usize;

    /// Writes `∇_θ L` into `grad` and returns `L`.
    fn value_grad(&self, theta: &[f64], w: &WeightDraw, h: &HyperConfig, grad: &mut [f64]) -> f64;

    fn value(&self, theta: &[f64], w: &WeightDraw, h: &HyperConfig) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(theta, w, h, &mut g)
    }
}

/// Weighted ridge as both an objective and an exact optimizer map.
///
/// Exact solves are counted so callers can verify that label-free training
/// never touched the solver.
#[derive(Debug)]
pub struct RidgeProblem {
    data: Dataset,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    solves: AtomicUsize,
}

impl RidgeProblem {
    pub fn new(data: Dataset) -> Self {
        let gram = data.x().tr_mul(data.x());
        let xty = data.x().tr_mul(data.y());
        let yty = data.y().norm_squared();
        Self {
            data,
            gram,
            xty,
            yty,
            solves: AtomicUsize::new(0),
        }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn reset_solve_count(&self) {
        self.solves.store(0, Ordering::Relaxed);
    }
}

impl OptimizerMap for RidgeProblem {
    fn output_dim(&self) -> usize {
        self.data.p()
    }

    fn evaluate(&self, w: &WeightDraw, h: &HyperConfig) -> Result<DVector<f64>> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        WeightedGram::new(&self.data, w)?.solve(h.lambda)
    }
}

impl WeightedObjective for RidgeProblem {
    fn dim(&self) -> usize {
        self.data.p()
    }

    fn value_grad(&self, theta: &[f64], w: &WeightDraw, h: &HyperConfig, grad: &mut [f64]) -> f64 {
        let n = self.data.n() as f64;
        let p = self.data.p();
        let th = DVector::from_column_slice(theta);
        let pen = h.lambda * w.penalty_weight;
        let fit = if w.obs_weights.iter().all(|v| *v == 1.0) {
            let g_th = &self.gram * &th;
            for j in 0..p {
                grad[j] = 2.0 * (g_th[j] - self.xty[j]) / n;
            }
            (th.dot(&g_th) - 2.0 * th.dot(&self.xty) + self.yty) / n
        } else {
            let r = self.data.y() - self.data.x() * &th;
            let wr = DVector::from_iterator(
                r.len(),
                r.iter().zip(&w.obs_weights).map(|(ri, wi)| ri * wi),
            );
            let xt_wr = self.data.x().tr_mul(&wr);
            for j in 0..p {
                grad[j] = -2.0 * xt_wr[j] / n;
            }
            r.dot(&wr) / n
        };
        for j in 0..p {
            grad[j] += 2.0 * pen * theta[j];
        }
        fit + pen * th.norm_squared()
    }
}
