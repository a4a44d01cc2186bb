//! Learned transport maps `g_φ(ω, h) ≈ θ̂(ω, h)`.
//!
//! Two families are provided: a linear map over a fixed feature vector and a
//! small fully connected network over the same features. Features are built
//! from `s`, the log of λ rescaled to `[-1, 1]` over the proposal's support,
//! its powers, rescaled η components and an encoding of `ω − 1`.
//!
//! Training comes in two modes:
//! * supervised ([`train_supervised`]): fit φ to `B` exact optimizer labels;
//! * criterion-based ([`train_criterion`]): plug `g_φ` into the weighted
//!   objective and run SGD on φ with fresh `(ω, h)` every step. No optimizer
//!   labels are computed.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{OptimizerMap, WeightedObjective};
use crate::rng::{self, StreamRng};
use crate::stats::{McEstimate, RunningMoments};
use crate::weights::{WeightDraw, WeightLaw};

/// Hyper-parameters `h = (λ, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub lambda: f64,
    #[serde(default)]
    pub eta: Vec<f64>,
}

impl HyperConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            eta: Vec::new(),
        }
    }

    pub fn with_eta(lambda: f64, eta: Vec<f64>) -> Self {
        Self { lambda, eta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LambdaLaw {
    LogUniform { lo: f64, hi: f64 },
    Grid { points: Vec<f64> },
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum EtaLaw {
    Uniform { lo: f64, hi: f64 },
    Grid { points: Vec<f64> },
    Fixed { value: f64 },
}

/// Proposal Π(λ, η) from which training and evaluation hyper-parameters are
/// drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperProposal {
    pub lambda: LambdaLaw,
    #[serde(default)]
    pub eta: Vec<EtaLaw>,
}

fn check_points(points: &[f64], positive: bool) -> Result<()> {
    if points.is_empty() || points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain(
            "grid must be nonempty and strictly increasing",
        ));
    }
    if points
        .iter()
        .any(|v| !v.is_finite() || (positive && *v <= 0.0))
    {
        return Err(Error::domain(
            "grid values must be finite (and positive for lambda)",
        ));
    }
    Ok(())
}

impl HyperProposal {
    pub fn log_uniform(lo: f64, hi: f64) -> Self {
        Self {
            lambda: LambdaLaw::LogUniform { lo, hi },
            eta: Vec::new(),
        }
    }

    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda: LambdaLaw::Fixed { value: lambda },
            eta: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.lambda {
            LambdaLaw::LogUniform { lo, hi } => {
                if !(*lo > 0.0 && lo < hi && hi.is_finite()) {
                    return Err(Error::domain(format!(
                        "log-uniform law needs 0 < lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            LambdaLaw::Grid { points } => check_points(points, true)?,
            LambdaLaw::Fixed { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(Error::domain("fixed lambda must be positive"));
                }
            }
        }
        for law in &self.eta {
            match law {
                EtaLaw::Uniform { lo, hi } => {
                    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                        return Err(Error::domain("eta uniform law needs lo < hi"));
                    }
                }
                EtaLaw::Grid { points } => check_points(points, false)?,
                EtaLaw::Fixed { value } => {
                    if !value.is_finite() {
                        return Err(Error::domain("fixed eta must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Support of λ as `(lo, hi)`.
    pub fn lambda_support(&self) -> (f64, f64) {
        match &self.lambda {
            LambdaLaw::LogUniform { lo, hi } => (*lo, *hi),
            LambdaLaw::Grid { points } => (points[0], points[points.len() - 1]),
            LambdaLaw::Fixed { value } => (*value, *value),
        }
    }

    pub fn eta_supports(&self) -> Vec<(f64, f64)> {
        self.eta
            .iter()
            .map(|law| match law {
                EtaLaw::Uniform { lo, hi } => (*lo, *hi),
                EtaLaw::Grid { points } => (points[0], points[points.len() - 1]),
                EtaLaw::Fixed { value } => (*value, *value),
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut StreamRng) -> HyperConfig {
        let lambda = match &self.lambda {
            LambdaLaw::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                (a + (b - a) * rng.random::<f64>()).exp()
            }
            LambdaLaw::Grid { points } => points[rng.random_range(0..points.len())],
            LambdaLaw::Fixed { value } => *value,
        };
        let eta = self
            .eta
            .iter()
            .map(|law| match law {
                EtaLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                EtaLaw::Grid { points } => points[rng.random_range(0..points.len())],
                EtaLaw::Fixed { value } => *value,
            })
            .collect();
        HyperConfig { lambda, eta }
    }
}

/// The `index`-th `(ω, h)` pair of the family rooted at `seed`. Weights and
/// hyper-parameters use separate child streams.
pub fn draw_pair(
    proposal: &HyperProposal,
    law: &WeightLaw,
    seed: u64,
    index: u64,
) -> (WeightDraw, HyperConfig) {
    let base = rng::derive_seed(seed, index);
    let w = law.sample(rng::derive_seed(base, 0));
    let h = proposal.sample(&mut rng::child_stream(base, 1));
    (w, h)
}

/// How ω enters the feature vector. Encodings act on `ω − 1`, which is
/// centred for every law with unit mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaEncoding {
    None,
    /// All `n` coordinates.
    Full {
        n: usize,
    },
    /// Sorted-weight quantiles plus fixed random ±1 projections.
    Summary {
        n: usize,
        quantiles: usize,
        projections: usize,
        seed: u64,
    },
}

impl OmegaEncoding {
    /// Full vector up to `n = 256`, otherwise 8 quantiles and 8 projections.
    pub fn default_for(n: usize) -> Self {
        if n <= 256 {
            OmegaEncoding::Full { n }
        } else {
            OmegaEncoding::Summary {
                n,
                quantiles: 8,
                projections: 8,
                seed: 0,
            }
        }
    }

    pub fn width(&self) -> usize {
        match self {
            OmegaEncoding::None => 0,
            OmegaEncoding::Full { n } => *n,
            OmegaEncoding::Summary {
                quantiles,
                projections,
                ..
            } => quantiles + projections,
        }
    }

    fn expected_n(&self) -> Option<usize> {
        match self {
            OmegaEncoding::None => None,
            OmegaEncoding::Full { n } | OmegaEncoding::Summary { n, .. } => Some(*n),
        }
    }

    fn encode(&self, w: &WeightDraw, out: &mut Vec<f64>) {
        match self {
            OmegaEncoding::None => {}
            OmegaEncoding::Full { .. } => out.extend(w.obs_weights.iter().map(|v| v - 1.0)),
            OmegaEncoding::Summary {
                n,
                quantiles,
                projections,
                seed,
            } => {
                let sorted = crate::stats::sorted_copy(&w.obs_weights);
                for j in 0..*quantiles {
                    let level = (j as f64 + 0.5) / *quantiles as f64;
                    out.push(crate::stats::quantile_sorted(&sorted, level) - 1.0);
                }
                let scale = 1.0 / (*n as f64).sqrt();
                for j in 0..*projections {
                    let mut r = rng::child_stream(*seed, j as u64);
                    let dot: f64 = w
                        .obs_weights
                        .iter()
                        .map(|v| if r.random::<bool>() { v - 1.0 } else { 1.0 - v })
                        .sum();
                    out.push(dot * scale);
                }
            }
        }
    }
}

/// Which inputs the generator sees and how they are normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    /// Support of λ used to rescale `log λ` to `[-1, 1]`.
    pub lambda_range: (f64, f64),
    /// Highest power of `s` in the features (0 = intercept only).
    pub lambda_degree: usize,
    /// Supports of the η components, each rescaled to `[-1, 1]`.
    #[serde(default)]
    pub eta_ranges: Vec<(f64, f64)>,
    pub omega: OmegaEncoding,
}

fn rescale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        2.0 * (v - lo) / (hi - lo) - 1.0
    } else {
        0.0
    }
}

impl InputSpec {
    /// Quadratic features in `s` over the proposal's support.
    pub fn for_proposal(proposal: &HyperProposal, omega: OmegaEncoding) -> Self {
        Self {
            lambda_range: proposal.lambda_support(),
            lambda_degree: 2,
            eta_ranges: proposal.eta_supports(),
            omega,
        }
    }

    /// Number of features, including the leading constant.
    pub fn width(&self) -> usize {
        1 + self.lambda_degree + self.eta_ranges.len() + self.omega.width()
    }

    /// Normalized log λ.
    pub fn lambda_coordinate(&self, lambda: f64) -> f64 {
        let (lo, hi) = self.lambda_range;
        rescale(lambda.ln(), lo.ln(), hi.ln())
    }

    pub fn features(&self, w: &WeightDraw, h: &HyperConfig) -> Result<Vec<f64>> {
        if let Some(n) = self.omega.expected_n() {
            if w.n() != n {
                return Err(Error::DimensionMismatch {
                    what: "weight vector length",
                    expected: n,
                    actual: w.n(),
                });
            }
        }
        if h.eta.len() != self.eta_ranges.len() {
            return Err(Error::DimensionMismatch {
                what: "eta length",
                expected: self.eta_ranges.len(),
                actual: h.eta.len(),
            });
        }
        if !(h.lambda > 0.0) {
            return Err(Error::domain(format!(
                "lambda must be positive, got {}",
                h.lambda
            )));
        }
        let mut f = Vec::with_capacity(self.width());
        f.push(1.0);
        let s = self.lambda_coordinate(h.lambda);
        let mut pow = 1.0;
        for _ in 0..self.lambda_degree {
            pow *= s;
            f.push(pow);
        }
        for (e, (lo, hi)) in h.eta.iter().zip(&self.eta_ranges) {
            f.push(rescale(*e, *lo, *hi));
        }
        self.omega.encode(w, &mut f);
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `θ = Φ f(ω, h)` with Φ stored row-major (p × width).
    Linear,
    /// Fully connected network from the features to θ.
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Mlp { .. } => "mlp",
        }
    }
}

/// A parametric map from `(ω, h)` to a length-`output_dim` parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub family: Family,
    pub input: InputSpec,
    pub output_dim: usize,
    pub phi: Vec<f64>,
}

/// Activations kept from a forward pass for back-propagation.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl GeneratorModel {
    /// Linear generator with all coefficients zero.
    pub fn linear(input: InputSpec, output_dim: usize) -> Self {
        let width = input.width();
        Self {
            family: Family::Linear,
            input,
            output_dim,
            phi: vec![0.0; width * output_dim],
        }
    }

    /// MLP generator with scaled Gaussian initial weights, zero biases and
    /// a zero output layer (the untrained map is identically 0).
    pub fn mlp(
        input: InputSpec,
        output_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        seed: u64,
    ) -> Self {
        let sizes = Self::layer_sizes(input.width(), &hidden, output_dim);
        let mut rng = rng::stream(seed);
        let mut phi = Vec::new();
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = l + 2 == sizes.len();
            let scale = (1.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                phi.push(if last { 0.0 } else { z * scale });
            }
            phi.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            family: Family::Mlp { hidden, activation },
            input,
            output_dim,
            phi,
        }
    }

    fn layer_sizes(width: usize, hidden: &[usize], out: usize) -> Vec<usize> {
        let mut s = vec![width];
        s.extend_from_slice(hidden);
        s.push(out);
        s
    }

    pub fn param_count(&self) -> usize {
        match &self.family {
            Family::Linear => self.input.width() * self.output_dim,
            Family::Mlp { hidden, .. } => {
                Self::layer_sizes(self.input.width(), hidden, self.output_dim)
                    .windows(2)
                    .map(|p| p[0] * p[1] + p[1])
                    .sum()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "generator parameter count",
                expected: self.param_count(),
                actual: self.phi.len(),
            });
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("generator parameters must be finite"));
        }
        Ok(())
    }

    /// Evaluates the map on a prepared feature vector.
    pub fn forward_features(&self, f: &[f64], out: &mut [f64], cache: Option<&mut ForwardCache>) {
        match &self.family {
            Family::Linear => {
                let d = f.len();
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &self.phi[j * d..(j + 1) * d];
                    *o = row.iter().zip(f).map(|(a, b)| a * b).sum();
                }
            }
            Family::Mlp { hidden, activation } => {
                let sizes = Self::layer_sizes(f.len(), hidden, self.output_dim);
                let mut acts: Vec<Vec<f64>> = vec![f.to_vec()];
                let mut offset = 0;
                for (l, pair) in sizes.windows(2).enumerate() {
                    let (fi, fo) = (pair[0], pair[1]);
                    let w = &self.phi[offset..offset + fi * fo];
                    let b = &self.phi[offset + fi * fo..offset + fi * fo + fo];
                    offset += fi * fo + fo;
                    let input = &acts[l];
                    let last = l + 2 == sizes.len();
                    let next: Vec<f64> = (0..fo)
                        .map(|o| {
                            let z = b[o]
                                + w[o * fi..(o + 1) * fi]
                                    .iter()
                                    .zip(input)
                                    .map(|(a, c)| a * c)
                                    .sum::<f64>();
                            if last {
                                z
                            } else {
                                activation.apply(z)
                            }
                        })
                        .collect();
                    acts.push(next);
                }
                out.copy_from_slice(acts.last().expect("output layer"));
                if let Some(c) = cache {
                    c.activations = acts;
                }
            }
        }
    }

    /// Accumulates `∂⟨grad_out, g(f)⟩/∂φ` into `grad_phi`. The MLP family
    /// needs the cache filled by the matching forward pass.
    pub fn backward_features(
        &self,
        f: &[f64],
        cache: &ForwardCache,
        grad_out: &[f64],
        grad_phi: &mut [f64],
    ) {
        match &self.family {
            Family::Linear => {
                let d = f.len();
                for (j, g) in grad_out.iter().enumerate() {
                    for (gp, fk) in grad_phi[j * d..(j + 1) * d].iter_mut().zip(f) {
                        *gp += g * fk;
                    }
                }
            }
            Family::Mlp { hidden, activation } => {
                let sizes = Self::layer_sizes(f.len(), hidden, self.output_dim);
                let mut offsets = Vec::new();
                let mut off = 0;
                for pair in sizes.windows(2) {
                    offsets.push(off);
                    off += pair[0] * pair[1] + pair[1];
                }
                let mut delta = grad_out.to_vec();
                for l in (0..sizes.len() - 1).rev() {
                    let (fi, fo) = (sizes[l], sizes[l + 1]);
                    let off = offsets[l];
                    let input = &cache.activations[l];
                    for o in 0..fo {
                        let d = delta[o];
                        for (gp, a) in grad_phi[off + o * fi..off + (o + 1) * fi]
                            .iter_mut()
                            .zip(input)
                        {
                            *gp += d * a;
                        }
                        grad_phi[off + fi * fo + o] += d;
                    }
                    if l > 0 {
                        let w = &self.phi[off..off + fi * fo];
                        let prev: Vec<f64> = (0..fi)
                            .map(|i| {
                                let s: f64 = (0..fo).map(|o| w[o * fi + i] * delta[o]).sum();
                                s * activation.derivative_from_output(input[i])
                            })
                            .collect();
                        delta = prev;
                    }
                }
            }
        }
    }

    pub fn forward(&self, w: &WeightDraw, h: &HyperConfig) -> Result<DVector<f64>> {
        let f = self.input.features(w, h)?;
        let mut out = vec![0.0; self.output_dim];
        self.forward_features(&f, &mut out, None);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("generator produced a non-finite output"));
        }
        Ok(DVector::from_vec(out))
    }
}

impl OptimizerMap for GeneratorModel {
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn evaluate(&self, w: &WeightDraw, h: &HyperConfig) -> Result<DVector<f64>> {
        self.forward(w, h)
    }
}

/// Momentum SGD settings. The step size decays geometrically from
/// `learning_rate` to `learning_rate * lr_final_fraction` over `steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr_final_fraction: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            steps: 2000,
            batch_size: 8,
            lr_final_fraction: 0.01,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.momentum)
            || self.batch_size == 0
        {
            return Err(Error::domain(
                "SGD needs learning_rate > 0, momentum in [0, 1) and batch_size >= 1",
            ));
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return Err(Error::domain("lr_final_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn rate_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.learning_rate;
        }
        let t = step as f64 / (self.steps - 1) as f64;
        self.learning_rate * self.lr_final_fraction.powf(t)
    }
}

/// Heavy-ball update `v ← μv − ηg`, `φ ← φ + v`.
pub fn momentum_step(
    phi: &mut [f64],
    velocity: &mut [f64],
    grad: &[f64],
    rate: f64,
    momentum: f64,
) {
    for ((p, v), g) in phi.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v - rate * g;
        *p += *v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedConfig {
    /// Full-batch gradient steps on the parameter-matching loss.
    pub steps: usize,
    /// Step size; `None` picks `1/L` from the feature Gram matrix
    /// (linear family only).
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    /// Stop early once the matching loss drops below this value (0 never
    /// stops early).
    pub loss_tol: f64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            learning_rate: None,
            momentum: 0.9,
            loss_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupervisedReport {
    pub model: GeneratorModel,
    pub labels: usize,
    /// Draws whose inner solve failed and were replaced.
    pub resampled: usize,
    pub label_seconds: f64,
    pub train_seconds: f64,
    pub final_loss: f64,
    pub steps_run: usize,
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..500 {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = mv / norm;
        if (next - lam).abs() <= 1e-12 * next {
            return next;
        }
        lam = next;
    }
    lam
}

/// Mode (A): draw `b` pairs, solve each exactly, and regress the generator
/// onto the labels by full-batch momentum gradient descent on
/// `(1/B) Σ ‖θ̂⁽ᵇ⁾ − g_φ(ω⁽ᵇ⁾, h⁽ᵇ⁾)‖²`.
#[allow(clippy::too_many_arguments)]
pub fn train_supervised(
    init: GeneratorModel,
    proposal: &HyperProposal,
    law: &WeightLaw,
    solver: &dyn OptimizerMap,
    b: usize,
    cfg: &SupervisedConfig,
    seed: u64,
) -> Result<SupervisedReport> {
    proposal.validate()?;
    init.validate()?;
    if b == 0 {
        return Err(Error::domain("supervised training needs B >= 1"));
    }
    if solver.output_dim() != init.output_dim {
        return Err(Error::DimensionMismatch {
            what: "solver output dimension",
            expected: init.output_dim,
            actual: solver.output_dim(),
        });
    }
    let label_start = Instant::now();
    let mut features = Vec::with_capacity(b);
    let mut labels = Vec::with_capacity(b);
    let mut index = 0u64;
    let mut resampled = 0usize;
    let max_attempts = 10 * b as u64 + 10;
    while labels.len() < b {
        if index >= max_attempts {
            return Err(Error::domain(format!(
                "inner solver failed on {resampled} of {index} draws; giving up"
            )));
        }
        let (w, h) = draw_pair(proposal, law, seed, index);
        index += 1;
        match solver.evaluate(&w, &h) {
            Ok(theta) if theta.iter().all(|v| v.is_finite()) => {
                features.push(init.input.features(&w, &h)?);
                labels.push(theta);
            }
            _ => resampled += 1,
        }
    }
    let label_seconds = label_start.elapsed().as_secs_f64();

    let train_start = Instant::now();
    let mut model = init;
    let p = model.output_dim;
    let d = model.input.width();
    let bf = b as f64;
    let mut velocity = vec![0.0; model.phi.len()];
    let mut grad = vec![0.0; model.phi.len()];
    let mut final_loss = f64::INFINITY;
    let mut steps_run = 0;

    match model.family {
        Family::Linear => {
            // Loss and gradient only need FᵀF/B, ΘᵀF/B and tr(ΘᵀΘ)/B.
            let fmat = DMatrix::from_fn(b, d, |i, k| features[i][k]);
            let tmat = DMatrix::from_fn(b, p, |i, j| labels[i][j]);
            let ftf = fmat.tr_mul(&fmat) / bf;
            let ttf = tmat.tr_mul(&fmat) / bf;
            let ttt = tmat.norm_squared() / bf;
            let rate = match cfg.learning_rate {
                Some(r) => r,
                None => {
                    let top = top_eigenvalue(&ftf);
                    if top > 0.0 {
                        1.0 / (2.0 * top)
                    } else {
                        1.0
                    }
                }
            };
            for step in 0..cfg.steps {
                let phi = DMatrix::from_row_slice(p, d, &model.phi);
                let phi_ftf = &phi * &ftf;
                let loss =
                    (phi_ftf.component_mul(&phi)).sum() - 2.0 * phi.component_mul(&ttf).sum() + ttt;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        loss,
                        last_finite: Some(final_loss),
                    });
                }
                final_loss = loss.max(0.0);
                steps_run = step;
                if final_loss < cfg.loss_tol {
                    break;
                }
                let g = (phi_ftf - &ttf) * 2.0;
                for j in 0..p {
                    for k in 0..d {
                        grad[j * d + k] = g[(j, k)];
                    }
                }
                momentum_step(&mut model.phi, &mut velocity, &grad, rate, cfg.momentum);
                steps_run = step + 1;
            }
            let phi = DMatrix::from_row_slice(p, d, &model.phi);
            final_loss = ((&phi * &ftf).component_mul(&phi).sum()
                - 2.0 * phi.component_mul(&ttf).sum()
                + ttt)
                .max(0.0);
        }
        Family::Mlp { .. } => {
            let rate = cfg
                .learning_rate
                .ok_or_else(|| Error::domain("MLP generators need an explicit learning rate"))?;
            let mut out = vec![0.0; p];
            let mut cache = ForwardCache::default();
            for step in 0..cfg.steps {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                for (f, t) in features.iter().zip(&labels) {
                    model.forward_features(f, &mut out, Some(&mut cache));
                    let go: Vec<f64> = out
                        .iter()
                        .zip(t.iter())
                        .map(|(o, ti)| 2.0 * (o - ti) / bf)
                        .collect();
                    loss += out
                        .iter()
                        .zip(t.iter())
                        .map(|(o, ti)| (o - ti).powi(2))
                        .sum::<f64>()
                        / bf;
                    model.backward_features(f, &cache, &go, &mut grad);
                }
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        loss,
                        last_finite: Some(final_loss),
                    });
                }
                final_loss = loss;
                steps_run = step;
                if loss < cfg.loss_tol {
                    break;
                }
                momentum_step(&mut model.phi, &mut velocity, &grad, rate, cfg.momentum);
                steps_run = step + 1;
            }
        }
    }
    Ok(SupervisedReport {
        model,
        labels: b,
        resampled,
        label_seconds,
        train_seconds: train_start.elapsed().as_secs_f64(),
        final_loss,
        steps_run,
    })
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub model: GeneratorModel,
    /// Mean objective value over each step's batch.
    pub loss_trace: Vec<f64>,
    pub train_seconds: f64,
}

/// Mode (B): minimize `E_{(ω,h)~P} L(g_φ(ω, h); ω, h)` by momentum SGD,
/// drawing `batch_size` fresh pairs per step and back-propagating the
/// objective's θ-gradient through the generator.
pub fn train_criterion(
    init: GeneratorModel,
    proposal: &HyperProposal,
    law: &WeightLaw,
    objective: &dyn WeightedObjective,
    cfg: &SgdConfig,
    seed: u64,
) -> Result<CriterionReport> {
    proposal.validate()?;
    init.validate()?;
    cfg.validate()?;
    if objective.dim() != init.output_dim {
        return Err(Error::DimensionMismatch {
            what: "objective dimension",
            expected: init.output_dim,
            actual: objective.dim(),
        });
    }
    let start = Instant::now();
    let mut model = init;
    let p = model.output_dim;
    let mut velocity = vec![0.0; model.phi.len()];
    let mut grad = vec![0.0; model.phi.len()];
    let mut theta = vec![0.0; p];
    let mut g_theta = vec![0.0; p];
    let mut cache = ForwardCache::default();
    let mut trace = Vec::with_capacity(cfg.steps);
    let scale = 1.0 / cfg.batch_size as f64;
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for k in 0..cfg.batch_size {
            let (w, h) = draw_pair(proposal, law, seed, (step * cfg.batch_size + k) as u64);
            let f = model.input.features(&w, &h)?;
            model.forward_features(&f, &mut theta, Some(&mut cache));
            loss += objective.value_grad(&theta, &w, &h, &mut g_theta) * scale;
            g_theta.iter_mut().for_each(|g| *g *= scale);
            model.backward_features(&f, &cache, &g_theta, &mut grad);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                step,
                loss,
                last_finite: trace.last().copied(),
            });
        }
        trace.push(loss);
        momentum_step(
            &mut model.phi,
            &mut velocity,
            &grad,
            cfg.rate_at(step),
            cfg.momentum,
        );
    }
    Ok(CriterionReport {
        model,
        loss_trace: trace,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Monte Carlo estimate of `E‖g(ω, h) − θ̂(ω, h)‖²` over `m` fresh draws.
pub fn ipl(
    model: &dyn OptimizerMap,
    proposal: &HyperProposal,
    law: &WeightLaw,
    oracle: &dyn OptimizerMap,
    m: usize,
    seed: u64,
) -> Result<McEstimate> {
    if m < 2 {
        return Err(Error::domain("IPL needs at least two draws"));
    }
    proposal.validate()?;
    let sq: Vec<Result<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let (w, h) = draw_pair(proposal, law, seed, i);
            let g = model.evaluate(&w, &h)?;
            let t = oracle.evaluate(&w, &h)?;
            Ok((g - t).norm_squared())
        })
        .collect();
    let mut acc = RunningMoments::default();
    for v in sq {
        acc.push(v?);
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightKind;

    fn spec(n: usize, degree: usize) -> InputSpec {
        InputSpec {
            lambda_range: (1e-3, 1.0),
            lambda_degree: degree,
            eta_ranges: vec![],
            omega: OmegaEncoding::Full { n },
        }
    }

    #[test]
    fn zero_linear_map_outputs_zero() {
        let g = GeneratorModel::linear(spec(4, 2), 3);
        let law = WeightLaw::new(WeightKind::Wbb, 4).unwrap();
        for lambda in [1e-3, 0.05, 1.0] {
            let out = g
                .forward(&law.sample(1), &HyperConfig::new(lambda))
                .unwrap();
            assert!(out.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn intercept_only_map_is_constant() {
        let input = InputSpec {
            lambda_range: (1e-3, 1.0),
            lambda_degree: 0,
            eta_ranges: vec![],
            omega: OmegaEncoding::None,
        };
        let mut g = GeneratorModel::linear(input, 2);
        g.phi = vec![1.5, -0.5];
        for lambda in [1e-3, 0.2, 0.9] {
            let out = g
                .forward(&WeightDraw::ones(7), &HyperConfig::new(lambda))
                .unwrap();
            assert_eq!(out.as_slice(), &[1.5, -0.5]);
        }
    }

    #[test]
    fn lambda_coordinate_spans_unit_interval() {
        let s = spec(1, 2);
        assert!((s.lambda_coordinate(1e-3) + 1.0).abs() < 1e-12);
        assert!((s.lambda_coordinate(1.0) - 1.0).abs() < 1e-12);
        assert!(s.lambda_coordinate((1e-3f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn forward_checks_shapes() {
        let g = GeneratorModel::linear(spec(4, 2), 3);
        assert!(g
            .forward(&WeightDraw::ones(5), &HyperConfig::new(0.1))
            .is_err());
        assert!(g
            .forward(&WeightDraw::ones(4), &HyperConfig::with_eta(0.1, vec![0.5]))
            .is_err());
        assert!(g
            .forward(&WeightDraw::ones(4), &HyperConfig::new(0.0))
            .is_err());
    }

    #[test]
    fn summary_encoding_has_fixed_width() {
        let enc = OmegaEncoding::default_for(1000);
        assert_eq!(enc.width(), 16);
        let law = WeightLaw::new(WeightKind::Wbb, 1000).unwrap();
        let mut f = Vec::new();
        enc.encode(&law.sample(3), &mut f);
        assert_eq!(f.len(), 16);
        let mut f2 = Vec::new();
        enc.encode(&WeightDraw::ones(1000), &mut f2);
        assert!(f2.iter().all(|v| *v == 0.0));
        assert_eq!(
            OmegaEncoding::default_for(256),
            OmegaEncoding::Full { n: 256 }
        );
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn mlp_backward_matches_finite_differences() {
        let input = spec(3, 2);
        let mut g = GeneratorModel::mlp(input, 2, vec![4], Activation::Tanh, 9);
        let mut r = rng::stream(1);
        for v in g.phi.iter_mut() {
            *v += 0.3 * r.sample::<f64, _>(StandardNormal);
        }
        let w = WeightLaw::new(WeightKind::Wbb, 3).unwrap().sample(2);
        let f = g.input.features(&w, &HyperConfig::new(0.02)).unwrap();
        let go = [0.7, -1.3];
        let mut out = [0.0; 2];
        let mut cache = ForwardCache::default();
        g.forward_features(&f, &mut out, Some(&mut cache));
        let mut grad = vec![0.0; g.phi.len()];
        g.backward_features(&f, &cache, &go, &mut grad);
        for k in 0..g.phi.len() {
            let mut gp = g.clone();
            let mut gm = g.clone();
            gp.phi[k] += 1e-6;
            gm.phi[k] -= 1e-6;
            let (mut op, mut om) = ([0.0; 2], [0.0; 2]);
            gp.forward_features(&f, &mut op, None);
            gm.forward_features(&f, &mut om, None);
            let fd = ((op[0] - om[0]) * go[0] + (op[1] - om[1]) * go[1]) / 2e-6;
            assert!(
                (fd - grad[k]).abs() < 1e-7 * (1.0 + fd.abs()),
                "coord {k}: {fd} vs {}",
                grad[k]
            );
        }
    }

    #[test]
    fn proposal_validation() {
        assert!(HyperProposal::log_uniform(1.0, 0.1).validate().is_err());
        assert!(HyperProposal::fixed(-1.0).validate().is_err());
        let grid = HyperProposal {
            lambda: LambdaLaw::Grid {
                points: vec![0.1, 0.1],
            },
            eta: vec![],
        };
        assert!(grid.validate().is_err());
        let ok = HyperProposal {
            lambda: LambdaLaw::Grid {
                points: vec![0.1, 0.3],
            },
            eta: vec![EtaLaw::Uniform { lo: 0.1, hi: 0.9 }],
        };
        ok.validate().unwrap();
        let h = ok.sample(&mut rng::stream(0));
        assert!(h.lambda == 0.1 || h.lambda == 0.3);
        assert!(h.eta[0] > 0.1 && h.eta[0] < 0.9);
    }
}
