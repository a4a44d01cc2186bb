//! Quantile regression through the variance–mean envelope of the check loss.
//!
//! The check loss used here is `ρ_q(r) = |r| + (2q − 1) r`, twice the usual
//! pinball loss. Its envelope
//! `ρ_q(r) = inf_{u>0} { (u/2)(r − (1 − 2q)/u)² − ψ(u) }` is attained at
//! `û(r) = 1/|r|`, so each IRLS step is a weighted ridge solve on the
//! shifted response `zᵢ = yᵢ − (1 − 2q)/ûᵢ`. Only û enters the algorithm;
//! ψ never has to be evaluated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::generator::HyperConfig;
use crate::objective::OptimizerMap;
use crate::ridge::{check_lambda, solve_spd};
use crate::weights::WeightDraw;

pub fn check_loss(r: f64, q: f64) -> f64 {
    r.abs() + (2.0 * q - 1.0) * r
}

/// Envelope weight `1 / max(|r|, eps)`.
pub fn envelope_weight(r: f64, eps: f64) -> f64 {
    1.0 / r.abs().max(eps)
}

/// Shifted working response `y − (1 − 2q)/ω`.
pub fn working_response(y: f64, omega: f64, q: f64) -> f64 {
    y - (1.0 - 2.0 * q) / omega
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileConfig {
    pub q: f64,
    pub lambda: f64,
    /// Residuals are clamped to at least this magnitude before inversion.
    pub eps_residual: f64,
    pub max_iters: usize,
    /// Stop once the ℓ∞ change in θ falls to this value.
    pub tol: f64,
}

impl QuantileConfig {
    pub fn new(q: f64, lambda: f64) -> Self {
        Self {
            q,
            lambda,
            eps_residual: 1e-6,
            max_iters: 500,
            tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::domain(format!(
                "quantile level {} outside (0, 1)",
                self.q
            )));
        }
        check_lambda(self.lambda, true)?;
        if !(self.eps_residual > 0.0) || !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::domain(
                "eps_residual, tol and max_iters must be positive",
            ));
        }
        Ok(())
    }
}

/// `(1/n) Σ wᵢ ρ_q(rᵢ) + λ ω₀ ‖θ‖²`.
pub fn penalized_check_loss(
    data: &Dataset,
    theta: &DVector<f64>,
    q: f64,
    lambda: f64,
    w: &WeightDraw,
) -> Result<f64> {
    let r = data.residuals(theta)?;
    let fit: f64 = r
        .iter()
        .zip(&w.obs_weights)
        .map(|(ri, wi)| wi * check_loss(*ri, q))
        .sum();
    Ok(fit / data.n() as f64 + lambda * w.penalty_weight * theta.norm_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOutcome {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Objective at the starting point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
}

/// Weighted ridge step on an arbitrary response with combined weights.
fn weighted_step(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    c: &[f64],
    shift: f64,
) -> Result<DVector<f64>> {
    let mut xc = x.clone();
    for (i, ci) in c.iter().enumerate() {
        xc.row_mut(i).scale_mut(*ci);
    }
    let mut gram = x.tr_mul(&xc);
    for j in 0..gram.nrows() {
        gram[(j, j)] += shift;
    }
    solve_spd(gram, &xc.tr_mul(z))
}

/// Iteratively reweighted least squares for penalized quantile regression.
///
/// Each step majorizes `ρ_q` at the current residuals, which turns the
/// update into a weighted ridge solve with weights `w_outer,ᵢ ûᵢ / 2` on
/// the working response; the `/2` keeps the penalty on the same scale as in
/// [`penalized_check_loss`]. If the iteration cap is reached the best
/// iterate seen is returned with `converged = false`.
pub fn irls_quantile(
    data: &Dataset,
    cfg: &QuantileConfig,
    w_outer: &WeightDraw,
) -> Result<IrlsOutcome> {
    cfg.validate()?;
    if w_outer.n() != data.n() {
        return Err(Error::DimensionMismatch {
            what: "outer weight length",
            expected: data.n(),
            actual: w_outer.n(),
        });
    }
    if !w_outer.is_valid() {
        return Err(Error::domain(
            "outer weights must be finite and non-negative",
        ));
    }
    let x = data.x();
    let y = data.y();
    let shift = data.n() as f64 * cfg.lambda * w_outer.penalty_weight;

    // Start from the weighted least-squares fit.
    let mut theta = weighted_step(x, y, &w_outer.obs_weights, shift)?;
    let mut objective = penalized_check_loss(data, &theta, cfg.q, cfg.lambda, w_outer)?;
    let mut trace = vec![objective];
    let mut best = (theta.clone(), objective);

    let shift_const = 1.0 - 2.0 * cfg.q;
    let mut z = DVector::zeros(data.n());
    let mut c = vec![0.0; data.n()];
    for iter in 1..=cfg.max_iters {
        let r = y - x * &theta;
        for i in 0..data.n() {
            let u = envelope_weight(r[i], cfg.eps_residual);
            z[i] = y[i] - shift_const / u;
            c[i] = 0.5 * w_outer.obs_weights[i] * u;
        }
        let next = weighted_step(x, &z, &c, shift)?;
        let change = (&next - &theta).amax();
        theta = next;
        objective = penalized_check_loss(data, &theta, cfg.q, cfg.lambda, w_outer)?;
        trace.push(objective);
        if objective <= best.1 {
            best = (theta.clone(), objective);
        }
        if change <= cfg.tol {
            return Ok(IrlsOutcome {
                theta,
                iterations: iter,
                objective,
                converged: true,
                objective_trace: trace,
            });
        }
    }
    Ok(IrlsOutcome {
        theta: best.0,
        iterations: cfg.max_iters,
        objective: best.1,
        converged: false,
        objective_trace: trace,
    })
}

/// Quantile regression as an optimizer map: `h.eta[0]` is the level `q`.
#[derive(Debug, Clone)]
pub struct QuantileProblem {
    pub data: Dataset,
    pub eps_residual: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl QuantileProblem {
    pub fn new(data: Dataset) -> Self {
        let d = QuantileConfig::new(0.5, 0.0);
        Self {
            data,
            eps_residual: d.eps_residual,
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }

    pub fn config(&self, h: &HyperConfig) -> Result<QuantileConfig> {
        let q = *h
            .eta
            .first()
            .ok_or_else(|| Error::domain("quantile problem needs eta = [q]"))?;
        Ok(QuantileConfig {
            q,
            lambda: h.lambda,
            eps_residual: self.eps_residual,
            max_iters: self.max_iters,
            tol: self.tol,
        })
    }
}

impl OptimizerMap for QuantileProblem {
    fn output_dim(&self) -> usize {
        self.data.p()
    }

    fn evaluate(&self, w: &WeightDraw, h: &HyperConfig) -> Result<DVector<f64>> {
        Ok(irls_quantile(&self.data, &self.config(h)?, w)?.theta)
    }
}
