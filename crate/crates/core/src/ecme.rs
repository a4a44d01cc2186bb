//! Closed-form ECME update for a regularization hyper-parameter ν under an
//! inverse-gamma prior on `ν^{-α}`:
//!
//! `ν^{-α} ← (b + Σ_j |β_j / σ_j|^α) / (a − 1 + k/α)`.
//!
//! [`ecme_iterate`] alternates that update with a penalized least-squares
//! β-step. The β-step is a plain weighted ridge solve (α = 2), used as an
//! illustration of the alternation rather than a full SVM trainer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ridge::solve_weighted_ridge;
use crate::weights::WeightDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmeState {
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    /// Current value of `ν^{-α}`.
    pub nu_inv_alpha: f64,
}

impl EcmeState {
    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.sigma.len() {
            return Err(Error::DimensionMismatch {
                what: "sigma length",
                expected: self.beta.len(),
                actual: self.sigma.len(),
            });
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::domain("every sigma_j must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain("alpha must be positive"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::domain("b must be positive"));
        }
        if !self.a.is_finite() || self.beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("a and beta must be finite"));
        }
        Ok(())
    }
}

/// The updated `ν^{-α}`.
pub fn nu_update(state: &EcmeState) -> Result<f64> {
    state.validate()?;
    let k = state.beta.len() as f64;
    let den = state.a - 1.0 + k / state.alpha;
    if !(den > 0.0) {
        return Err(Error::domain(format!(
            "update denominator a - 1 + k/alpha = {den} is not positive"
        )));
    }
    let s: f64 = state
        .beta
        .iter()
        .zip(&state.sigma)
        .map(|(b, s)| (b / s).abs().powf(state.alpha))
        .sum();
    Ok((state.b + s) / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmeTrace {
    pub state: EcmeState,
    /// `ν^{-α}` after each update, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// β-step for α = 2: minimizes `½‖y − Xβ‖² + ν^{-α} Σ (β_j/σ_j)²`.
pub fn beta_step(data: &Dataset, sigma: &[f64], nu_inv_alpha: f64) -> Result<DVector<f64>> {
    if sigma.len() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "sigma length",
            expected: data.p(),
            actual: sigma.len(),
        });
    }
    // With γ = β/σ the penalty is isotropic; rescale columns and solve a
    // ridge problem in the `(1/n)‖·‖² + λ‖·‖²` convention.
    let scale = DMatrix::from_diagonal(&DVector::from_column_slice(sigma));
    let scaled = Dataset::new(data.x() * &scale, data.y().clone())?;
    let n = data.n() as f64;
    let gamma =
        solve_weighted_ridge(&scaled, &WeightDraw::ones(data.n()), 2.0 * nu_inv_alpha / n)?.theta;
    Ok(gamma.component_mul(&DVector::from_column_slice(sigma)))
}

/// Alternates [`beta_step`] and [`nu_update`] until successive `ν^{-α}`
/// values differ by at most `tol`.
pub fn ecme_iterate(
    data: &Dataset,
    init: EcmeState,
    max_iters: usize,
    tol: f64,
) -> Result<EcmeTrace> {
    init.validate()?;
    if init.alpha != 2.0 {
        return Err(Error::domain("the ridge beta-step requires alpha = 2"));
    }
    if !(init.nu_inv_alpha > 0.0) {
        return Err(Error::domain("initial nu^-alpha must be positive"));
    }
    let mut state = init;
    let mut history = vec![state.nu_inv_alpha];
    for it in 1..=max_iters {
        state.beta = beta_step(data, &state.sigma, state.nu_inv_alpha)?
            .iter()
            .copied()
            .collect();
        let next = nu_update(&state)?;
        let change = (next - state.nu_inv_alpha).abs();
        state.nu_inv_alpha = next;
        history.push(next);
        if change <= tol {
            return Ok(EcmeTrace {
                state,
                history,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(EcmeTrace {
        state,
        history,
        iterations: max_iters,
        converged: false,
    })
}
