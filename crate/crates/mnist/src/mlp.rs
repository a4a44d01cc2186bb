//! One-hidden-layer ReLU classifier with a flat parameter vector.
//!
//! Parameter layout: `W1` (hidden × input, row-major), `b1`, `W2`
//! (output × hidden, row-major), `b2`. Examples are matrix columns. Logits
//! are clamped to `[-30, 30]` before the log-softmax.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Labeled;
use crate::error::MnistError;

pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

/// Offsets of the four parameter blocks.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub total: usize,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
        }
    }

    pub fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        Layout {
            w1,
            b1,
            w2,
            b2,
            total: b2 + self.output,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub fn validate(&self) -> Result<(), MnistError> {
        if self.input == 0 || self.hidden == 0 || self.output < 2 {
            return Err(MnistError::Config(format!("invalid MLP shape {self:?}")));
        }
        Ok(())
    }

    /// He-scaled Gaussian weights, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let l = self.layout();
        let mut rng = gentune_core::rng::stream(seed);
        let mut p = vec![0.0; l.total];
        let s1 = (2.0 / self.input as f64).sqrt();
        for v in &mut p[l.w1..l.b1] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let s2 = (2.0 / self.hidden as f64).sqrt();
        for v in &mut p[l.w2..l.b2] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }

    fn check(&self, params: &[f64], images: &DMatrix<f64>) -> Result<(), MnistError> {
        if params.len() != self.param_count() {
            return Err(MnistError::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if images.nrows() != self.input {
            return Err(MnistError::Shape(format!(
                "expected {} inputs per example, got {}",
                self.input,
                images.nrows()
            )));
        }
        Ok(())
    }
}

struct Forward {
    a1: DMatrix<f64>,
    logits: DMatrix<f64>,
}

fn forward(spec: &MlpSpec, params: &[f64], images: &DMatrix<f64>) -> Forward {
    let l = spec.layout();
    let w1 = DMatrix::from_row_slice(spec.hidden, spec.input, &params[l.w1..l.b1]);
    let b1 = DVector::from_column_slice(&params[l.b1..l.w2]);
    let w2 = DMatrix::from_row_slice(spec.output, spec.hidden, &params[l.w2..l.b2]);
    let b2 = DVector::from_column_slice(&params[l.b2..l.total]);
    let mut a1 = w1 * images;
    for mut col in a1.column_iter_mut() {
        col += &b1;
        col.apply(|v| *v = v.max(0.0));
    }
    let mut logits = w2 * &a1;
    for mut col in logits.column_iter_mut() {
        col += &b2;
    }
    Forward { a1, logits }
}

/// Softmax of clamped logits for one column, written in place.
fn softmax_in_place(col: &mut [f64]) {
    let max = col.iter().fold(f64::NEG_INFINITY, |m, v| {
        m.max(v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
    });
    let mut total = 0.0;
    for v in col.iter_mut() {
        *v = (v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP) - max).exp();
        total += *v;
    }
    for v in col.iter_mut() {
        *v /= total;
    }
}

/// Class probabilities, one column per example.
pub fn predict_proba(
    spec: &MlpSpec,
    params: &[f64],
    images: &DMatrix<f64>,
) -> Result<DMatrix<f64>, MnistError> {
    spec.check(params, images)?;
    let mut p = forward(spec, params, images).logits;
    for mut col in p.column_iter_mut() {
        softmax_in_place(col.as_mut_slice());
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean cross-entropy (no penalty).
    pub loss: f64,
    pub accuracy: f64,
}

pub fn evaluate(spec: &MlpSpec, params: &[f64], data: &Labeled) -> Result<Evaluation, MnistError> {
    let p = predict_proba(spec, params, &data.images)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (j, label) in data.labels.iter().enumerate() {
        let col = p.column(j);
        loss -= col[usize::from(*label)].max(f64::MIN_POSITIVE).ln();
        if col.imax() == usize::from(*label) {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// Value and gradient of `(1/B) Σᵢ wᵢ CEᵢ + λ‖θ‖²` over a batch. The
/// penalty covers every parameter, biases included.
pub fn loss_and_grad(
    spec: &MlpSpec,
    params: &[f64],
    batch: &Labeled,
    weights: Option<&[f64]>,
    lambda: f64,
    grad: &mut [f64],
) -> Result<f64, MnistError> {
    spec.check(params, &batch.images)?;
    let b = batch.len();
    if let Some(w) = weights {
        if w.len() != b {
            return Err(MnistError::Shape(format!(
                "{} weights for {b} examples",
                w.len()
            )));
        }
    }
    let l = spec.layout();
    let fwd = forward(spec, params, &batch.images);
    let mut delta = fwd.logits.clone();
    let mut data_loss = 0.0;
    for (j, label) in batch.labels.iter().enumerate() {
        let wj = weights.map_or(1.0, |w| w[j]) / b as f64;
        let z = fwd.logits.column(j);
        let mut col = delta.column_mut(j);
        softmax_in_place(col.as_mut_slice());
        let y = usize::from(*label);
        data_loss -= wj * col[y].max(f64::MIN_POSITIVE).ln();
        col[y] -= 1.0;
        for (k, v) in col.iter_mut().enumerate() {
            // The clamp has zero slope outside its range.
            *v = if z[k].abs() < LOGIT_CLAMP {
                *v * wj
            } else {
                0.0
            };
        }
    }
    let w2 = DMatrix::from_row_slice(spec.output, spec.hidden, &params[l.w2..l.b2]);
    let gw2 = &delta * fwd.a1.transpose();
    let mut da1 = w2.transpose() * &delta;
    da1.zip_apply(&fwd.a1, |d, a| {
        if a <= 0.0 {
            *d = 0.0
        }
    });
    let gw1 = &da1 * batch.images.transpose();

    grad[l.w1..l.b1].copy_from_slice(gw1.transpose().as_slice());
    for (g, row) in grad[l.b1..l.w2].iter_mut().zip(da1.row_iter()) {
        *g = row.sum();
    }
    grad[l.w2..l.b2].copy_from_slice(gw2.transpose().as_slice());
    for (g, row) in grad[l.b2..l.total].iter_mut().zip(delta.row_iter()) {
        *g = row.sum();
    }
    let mut penalty = 0.0;
    for (g, p) in grad.iter_mut().zip(params) {
        *g += 2.0 * lambda * p;
        penalty += p * p;
    }
    Ok(data_loss + lambda * penalty)
}
