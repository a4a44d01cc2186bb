//! Regression datasets and the correlated-design simulator used by the
//! ridge experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A design matrix `x` (n × p) with response `y` (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::domain("dataset needs n >= 1 and p >= 1"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("dataset contains non-finite entries"));
        }
        Ok(Self { x, y })
    }

    /// Builds a dataset from row-major design values.
    pub fn from_rows(n: usize, p: usize, x_rows: &[f64], y: &[f64]) -> Result<Self> {
        if x_rows.len() != n * p {
            return Err(Error::DimensionMismatch {
                what: "design entries",
                expected: n * p,
                actual: x_rows.len(),
            });
        }
        Self::new(
            DMatrix::from_row_slice(n, p, x_rows),
            DVector::from_column_slice(y),
        )
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Copies the given rows (in order) into a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("empty row subset"));
        }
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Ok(Self { x, y })
    }

    pub fn residuals(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "parameter length",
                expected: self.p(),
                actual: theta.len(),
            });
        }
        Ok(&self.y - &self.x * theta)
    }
}

/// Gaussian linear model with AR(1)-correlated columns:
/// `x_ij` has unit variance and `corr(x_ij, x_ik) = rho^|j-k|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatedDesign {
    pub n: usize,
    pub rho: f64,
    pub noise_sd: f64,
    pub theta: Vec<f64>,
}

impl CorrelatedDesign {
    pub fn p(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.theta.is_empty() {
            return Err(Error::domain("simulation needs n >= 1 and p >= 1"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::domain(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::domain("noise_sd must be non-negative"));
        }
        Ok(())
    }

    /// Draws `rows` observations from stream `seed`.
    pub fn simulate_rows(&self, rows: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let p = self.p();
        let mut rng = rng::stream(seed);
        let innov = (1.0 - self.rho * self.rho).sqrt();
        let theta = DVector::from_column_slice(&self.theta);
        let mut x = DMatrix::zeros(rows, p);
        let mut y = DVector::zeros(rows);
        for i in 0..rows {
            let mut prev: f64 = rng.sample(StandardNormal);
            x[(i, 0)] = prev;
            for j in 1..p {
                let z: f64 = rng.sample(StandardNormal);
                prev = self.rho * prev + innov * z;
                x[(i, j)] = prev;
            }
            let eps: f64 = rng.sample(StandardNormal);
            y[i] = x.row(i).dot(&theta.transpose()) + self.noise_sd * eps;
        }
        Dataset::new(x, y)
    }

    pub fn simulate(&self, seed: u64) -> Result<Dataset> {
        self.simulate_rows(self.n, seed)
    }
}
