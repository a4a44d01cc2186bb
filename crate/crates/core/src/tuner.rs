//! Outer loop: Monte Carlo estimates of `J(h) = E_ω U(g(ω, h), h)`, grid
//! selection under common random numbers, and posterior predictive
//! summaries from generator draws.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::generator::HyperConfig;
use crate::objective::OptimizerMap;
use crate::ridge;
use crate::rng::{self, StreamRng};
use crate::stats::{self, McEstimate, RunningMoments};
use crate::weights::{WeightDraw, WeightLaw};

/// Outer evaluation `U(θ, h)`.
pub trait OuterCriterion: Sync {
    fn evaluate(&self, theta: &DVector<f64>, h: &HyperConfig) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub enum TuningCriterion {
    /// Mean squared prediction error on held-out data.
    ValidationMse(Dataset),
    /// Mean Gaussian negative log-likelihood with fixed noise variance.
    ValidationNll { data: Dataset, noise_var: f64 },
    /// `(1/n)‖y − Xθ‖² / (1 − tr A(λ)/n)²` on the fitting data; equals the
    /// GCV score when θ is the exact ridge fit.
    GcvScore(Dataset),
}

impl OuterCriterion for TuningCriterion {
    fn evaluate(&self, theta: &DVector<f64>, h: &HyperConfig) -> Result<f64> {
        match self {
            TuningCriterion::ValidationMse(data) => {
                Ok(data.residuals(theta)?.norm_squared() / data.n() as f64)
            }
            TuningCriterion::ValidationNll { data, noise_var } => {
                if !(*noise_var > 0.0) {
                    return Err(Error::domain("noise variance must be positive"));
                }
                let mse = data.residuals(theta)?.norm_squared() / data.n() as f64;
                Ok(0.5 * (2.0 * std::f64::consts::PI * noise_var).ln() + 0.5 * mse / noise_var)
            }
            TuningCriterion::GcvScore(data) => {
                let n = data.n() as f64;
                let df = ridge::degrees_of_freedom(data, h.lambda)?;
                let trace_resid = n - df;
                if !(trace_resid > 1e-12) {
                    return Err(Error::DegenerateSmoother {
                        lambda: h.lambda,
                        trace: trace_resid,
                    });
                }
                Ok(data.residuals(theta)?.norm_squared() / n / (trace_resid / n).powi(2))
            }
        }
    }
}

fn check_m(m: usize, min: usize) -> Result<()> {
    if m < min {
        return Err(Error::domain(format!(
            "need at least {min} Monte Carlo draws, got {m}"
        )));
    }
    Ok(())
}

fn draws(law: &WeightLaw, m: usize, seed: u64) -> Vec<WeightDraw> {
    (0..m as u64).map(|i| law.sample_indexed(seed, i)).collect()
}

fn estimate_on(
    model: &dyn OptimizerMap,
    h: &HyperConfig,
    crit: &dyn OuterCriterion,
    ws: &[WeightDraw],
) -> Result<McEstimate> {
    let values: Vec<Result<f64>> = ws
        .par_iter()
        .map(|w| {
            let theta = model.evaluate(w, h)?;
            crit.evaluate(&theta, h)
        })
        .collect();
    let mut acc = RunningMoments::default();
    for (index, v) in values.into_iter().enumerate() {
        match v {
            Ok(x) if x.is_finite() => acc.push(x),
            Ok(x) => {
                return Err(Error::DrawFailed {
                    index,
                    source: Box::new(Error::domain(format!("criterion returned {x}"))),
                })
            }
            Err(e) => {
                return Err(Error::DrawFailed {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(acc.estimate())
}

/// `Ĵ(h) = (1/M) Σ_m U(g(ω⁽ᵐ⁾, h), h)` with its Monte Carlo standard error.
pub fn estimate_outer(
    model: &dyn OptimizerMap,
    h: &HyperConfig,
    crit: &dyn OuterCriterion,
    law: &WeightLaw,
    m: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_m(m, 2)?;
    estimate_on(model, h, crit, &draws(law, m, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterCurvePoint {
    pub hyper: HyperConfig,
    pub estimate: McEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperSelection {
    pub index: usize,
    pub hyper: HyperConfig,
    pub curve: Vec<OuterCurvePoint>,
    /// Fingerprint of the shared ω set; identical for every grid point.
    pub draw_fingerprint: u64,
}

/// Grid argmin of `Ĵ`. Every grid point is evaluated on the same ω draws;
/// ties go to the larger λ.
pub fn select_hyper(
    model: &dyn OptimizerMap,
    grid: &[HyperConfig],
    crit: &dyn OuterCriterion,
    law: &WeightLaw,
    m: usize,
    seed: u64,
) -> Result<HyperSelection> {
    if grid.is_empty() {
        return Err(Error::domain("hyper-parameter grid is empty"));
    }
    check_m(m, 1)?;
    let ws = draws(law, m, seed);
    let draw_fingerprint = ws
        .iter()
        .fold(rng::mix64(m as u64), |h, w| rng::mix64(h ^ w.fingerprint()));
    let curve: Vec<OuterCurvePoint> = grid
        .par_iter()
        .map(|h| {
            Ok(OuterCurvePoint {
                hyper: h.clone(),
                estimate: estimate_on(model, h, crit, &ws)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, pt) in curve.iter().enumerate().skip(1) {
        let (cur, bj) = (pt.estimate.mean, curve[best].estimate.mean);
        if cur < bj || (cur == bj && pt.hyper.lambda >= curve[best].hyper.lambda) {
            best = i;
        }
    }
    Ok(HyperSelection {
        index: best,
        hyper: grid[best].clone(),
        curve,
        draw_fingerprint,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDrawSet {
    pub thetas: Vec<DVector<f64>>,
    pub hyper: HyperConfig,
    /// Seed of each ω draw; `law.sample(seeds[m])` reproduces draw `m`.
    pub seeds: Vec<u64>,
}

impl PosteriorDrawSet {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Coordinate `j` across all draws.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.thetas.iter().map(|t| t[j]).collect()
    }
}

/// `θ⁽ᵐ⁾ = g(ω⁽ᵐ⁾, ĥ)` for `m = 1..M`.
pub fn posterior_draws(
    model: &dyn OptimizerMap,
    h_hat: &HyperConfig,
    law: &WeightLaw,
    m: usize,
    seed: u64,
) -> Result<PosteriorDrawSet> {
    check_m(m, 1)?;
    let seeds: Vec<u64> = (0..m as u64).map(|i| rng::derive_seed(seed, i)).collect();
    let thetas = seeds
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            model
                .evaluate(&law.sample(*s), h_hat)
                .map_err(|e| Error::DrawFailed {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    if thetas.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("posterior draw contains non-finite values"));
    }
    Ok(PosteriorDrawSet {
        thetas,
        hyper: h_hat.clone(),
        seeds,
    })
}

/// Per-draw predictive law `p(y | x, θ)`.
pub trait PredictiveModel: Sync {
    fn mean_var(&self, theta: &DVector<f64>, x: &DVector<f64>) -> (f64, f64);
    fn sample(&self, theta: &DVector<f64>, x: &DVector<f64>, rng: &mut StreamRng) -> f64;
    /// Probability mass over `{0, 1, ...}` for discrete responses.
    fn pmf(&self, _theta: &DVector<f64>, _x: &DVector<f64>) -> Option<Vec<f64>> {
        None
    }
}

/// `y ~ N(xᵀθ, σ²)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianLinear {
    pub noise_var: f64,
}

impl PredictiveModel for GaussianLinear {
    fn mean_var(&self, theta: &DVector<f64>, x: &DVector<f64>) -> (f64, f64) {
        (x.dot(theta), self.noise_var)
    }

    fn sample(&self, theta: &DVector<f64>, x: &DVector<f64>, rng: &mut StreamRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        x.dot(theta) + self.noise_var.sqrt() * z
    }
}

/// `y ~ Bernoulli(σ(xᵀθ))`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticLinear;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl PredictiveModel for LogisticLinear {
    fn mean_var(&self, theta: &DVector<f64>, x: &DVector<f64>) -> (f64, f64) {
        let p = sigmoid(x.dot(theta));
        (p, p * (1.0 - p))
    }

    fn sample(&self, theta: &DVector<f64>, x: &DVector<f64>, rng: &mut StreamRng) -> f64 {
        let p = sigmoid(x.dot(theta));
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }

    fn pmf(&self, theta: &DVector<f64>, x: &DVector<f64>) -> Option<Vec<f64>> {
        let p = sigmoid(x.dot(theta));
        Some(vec![1.0 - p, p])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub variance: f64,
    /// `(level, value)` pairs from the pooled mixture sample.
    pub quantiles: Vec<(f64, f64)>,
}

/// Summaries of the mixture `(1/M) Σ_m p(y | x, θ⁽ᵐ⁾)`. Mean and variance
/// are exact; quantiles come from `samples_per_draw` draws per component.
pub fn predictive_summary(
    draws: &PosteriorDrawSet,
    x: &DVector<f64>,
    model: &dyn PredictiveModel,
    levels: &[f64],
    samples_per_draw: usize,
    seed: u64,
) -> Result<PredictiveSummary> {
    if draws.is_empty() {
        return Err(Error::domain("no posterior draws"));
    }
    if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::domain("quantile levels must lie in [0, 1]"));
    }
    let comps: Vec<(f64, f64)> = draws.thetas.iter().map(|t| model.mean_var(t, x)).collect();
    let m = comps.len() as f64;
    let mean = comps.iter().map(|c| c.0).sum::<f64>() / m;
    let within = comps.iter().map(|c| c.1).sum::<f64>() / m;
    let between = comps.iter().map(|c| (c.0 - mean).powi(2)).sum::<f64>() / m;
    let quantiles = if levels.is_empty() {
        Vec::new()
    } else {
        if samples_per_draw == 0 {
            return Err(Error::domain("quantiles need at least one sample per draw"));
        }
        let mut pooled = Vec::with_capacity(draws.len() * samples_per_draw);
        for (i, t) in draws.thetas.iter().enumerate() {
            let mut r = rng::child_stream(seed, i as u64);
            pooled.extend((0..samples_per_draw).map(|_| model.sample(t, x, &mut r)));
        }
        let sorted = stats::sorted_copy(&pooled);
        levels
            .iter()
            .map(|l| (*l, stats::quantile_sorted(&sorted, *l)))
            .collect()
    };
    Ok(PredictiveSummary {
        mean,
        variance: within + between,
        quantiles,
    })
}

/// Mixture probability mass function for discrete predictive models.
pub fn predictive_pmf(
    draws: &PosteriorDrawSet,
    x: &DVector<f64>,
    model: &dyn PredictiveModel,
) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::domain("no posterior draws"));
    }
    let mut total: Vec<f64> = Vec::new();
    for t in &draws.thetas {
        let p = model
            .pmf(t, x)
            .ok_or_else(|| Error::domain("predictive model has no mass function"))?;
        if total.is_empty() {
            total = vec![0.0; p.len()];
        }
        if p.len() != total.len() {
            return Err(Error::DimensionMismatch {
                what: "mass function support",
                expected: total.len(),
                actual: p.len(),
            });
        }
        for (a, b) in total.iter_mut().zip(p) {
            *a += b;
        }
    }
    let m = draws.len() as f64;
    Ok(total.into_iter().map(|v| v / m).collect())
}
