//! Training loops for the hypernetwork and the fixed-λ baseline, and the
//! amortized tuning curve.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use gentune_core::generator::{momentum_step, SgdConfig};
use gentune_core::rng::{self, StreamRng};
use gentune_core::weights::WeightKind;

use crate::dataset::Labeled;
use crate::error::MnistError;
use crate::hypernet::HyperNet;
use crate::mlp::{evaluate, loss_and_grad, MlpSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    /// Per-example weights: `ones` or `wbb` (fresh Exp(1) per example).
    #[serde(default = "default_weights")]
    pub weights: WeightKind,
    /// Rescale the gradient to at most this Euclidean norm.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
}

fn default_weights() -> WeightKind {
    WeightKind::Ones
}

impl TrainConfig {
    pub fn new(sgd: SgdConfig, weights: WeightKind) -> Self {
        Self {
            sgd,
            weights,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MnistError> {
        if self.sgd.steps > 0 {
            self.sgd.validate()?;
        }
        if !matches!(self.weights, WeightKind::Ones | WeightKind::Wbb) {
            return Err(MnistError::Config(format!(
                "MNIST training supports ones or wbb weights, not {}",
                self.weights
            )));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(MnistError::Config(format!(
                    "max_grad_norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Mini-batches from successive seeded permutations of the training set.
struct BatchSampler {
    n: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            n,
            seed,
            epoch: 0,
            order: (0..n).collect(),
            pos: n,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        self.order
            .shuffle(&mut rng::child_stream(self.seed, self.epoch));
        self.epoch += 1;
        self.pos = 0;
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.n {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn clip(grad: &mut [f64], max_norm: Option<f64>) {
    if let Some(c) = max_norm {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > c {
            let s = c / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
}

fn example_weights(kind: WeightKind, size: usize, rng: &mut StreamRng) -> Option<Vec<f64>> {
    match kind {
        WeightKind::Wbb => Some(
            (0..size)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect(),
        ),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct HypernetReport {
    pub net: HyperNet,
    /// Penalized training loss per step.
    pub loss_trace: Vec<f64>,
    pub train_seconds: f64,
}

/// Criterion-based training: every step draws `λ ~ LogUniform` over the
/// hypernet's range and a mini-batch, and descends
/// `(1/B) Σ ωᵢ CEᵢ(θ(λ)) + λ‖θ(λ)‖²` with respect to the hypernet.
pub fn train_hypernet_criterion(
    init: HyperNet,
    train: &Labeled,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<HypernetReport, MnistError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(MnistError::Shape("empty training set".into()));
    }
    let start = Instant::now();
    let mut net = init;
    let (lo, hi) = net.spec.lambda_range;
    let mut sampler = BatchSampler::new(train.len(), rng::derive_seed(seed, 0));
    let mut velocity = vec![0.0; net.param_count()];
    let mut grad = vec![0.0; net.param_count()];
    let mut grad_theta = vec![0.0; net.spec.mlp.param_count()];
    let mut trace = Vec::with_capacity(cfg.sgd.steps);
    for step in 0..cfg.sgd.steps {
        let mut r = rng::child_stream(rng::derive_seed(seed, 1), step as u64);
        let lambda = (lo.ln() + (hi.ln() - lo.ln()) * r.random::<f64>()).exp();
        let batch = train.gather(&sampler.next(cfg.sgd.batch_size));
        let w = example_weights(cfg.weights, batch.len(), &mut r);
        let omega_mean = w
            .as_ref()
            .map_or(1.0, |v| v.iter().sum::<f64>() / v.len() as f64);
        let theta = net.forward_with(lambda, omega_mean);
        let loss = loss_and_grad(
            &net.spec.mlp,
            &theta,
            &batch,
            w.as_deref(),
            lambda,
            &mut grad_theta,
        )?;
        if !loss.is_finite() {
            return Err(MnistError::Divergence { step, loss });
        }
        trace.push(loss);
        grad.iter_mut().for_each(|g| *g = 0.0);
        net.backward_with(lambda, omega_mean, &grad_theta, &mut grad);
        clip(&mut grad, cfg.max_grad_norm);
        momentum_step(
            &mut net.params,
            &mut velocity,
            &grad,
            cfg.sgd.rate_at(step),
            cfg.sgd.momentum,
        );
    }
    Ok(HypernetReport {
        net,
        loss_trace: trace,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub params: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub train_seconds: f64,
}

/// Plain SGD on the MLP at a fixed `λ`, starting from `spec.init(seed)`.
pub fn train_baseline(
    spec: &MlpSpec,
    lambda: f64,
    train: &Labeled,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BaselineReport, MnistError> {
    spec.validate()?;
    cfg.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(MnistError::Config(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let start = Instant::now();
    let mut params = spec.init(seed);
    let mut sampler = BatchSampler::new(train.len(), rng::derive_seed(seed, 0));
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(cfg.sgd.steps);
    for step in 0..cfg.sgd.steps {
        let mut r = rng::child_stream(rng::derive_seed(seed, 1), step as u64);
        let batch = train.gather(&sampler.next(cfg.sgd.batch_size));
        let w = example_weights(cfg.weights, batch.len(), &mut r);
        let loss = loss_and_grad(spec, &params, &batch, w.as_deref(), lambda, &mut grad)?;
        if !loss.is_finite() {
            return Err(MnistError::Divergence { step, loss });
        }
        trace.push(loss);
        clip(&mut grad, cfg.max_grad_norm);
        momentum_step(
            &mut params,
            &mut velocity,
            &grad,
            cfg.sgd.rate_at(step),
            cfg.sgd.momentum,
        );
    }
    Ok(BaselineReport {
        params,
        loss_trace: trace,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub lambda: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct CurveReport {
    pub rows: Vec<CurveRow>,
    pub seconds: f64,
}

impl CurveReport {
    /// Row with the smallest validation loss (ties to the larger λ).
    pub fn argmin(&self) -> Option<&CurveRow> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.val_loss.is_finite())
            .min_by(|(i, a), (j, b)| a.val_loss.total_cmp(&b.val_loss).then(j.cmp(i)))
            .map(|(_, r)| r)
    }
}

/// One hypernet forward pass and one validation pass per grid point.
pub fn tuning_curve(
    net: &HyperNet,
    validation: &Labeled,
    grid: &[f64],
) -> Result<CurveReport, MnistError> {
    gentune_core::select::check_grid(grid)?;
    let start = Instant::now();
    let rows = grid
        .iter()
        .map(|&lambda| {
            let e = evaluate(&net.spec.mlp, &net.forward(lambda), validation)?;
            Ok(CurveRow {
                lambda,
                val_loss: e.loss,
                val_acc: e.accuracy,
            })
        })
        .collect::<Result<Vec<_>, MnistError>>()?;
    Ok(CurveReport {
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}
