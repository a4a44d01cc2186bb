//! Random observation weights ω and the penalty weight ω₀.
//!
//! All randomized laws are built from one primitive: an Exp(1) variate
//! computed as `ln(1/u)` with `u ~ Uniform(0, 1]`. Dirichlet-scaled weights
//! are normalized exponentials multiplied by `n`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// A realized perturbation: one weight per observation plus the penalty
/// weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDraw {
    pub obs_weights: Vec<f64>,
    pub penalty_weight: f64,
}

impl WeightDraw {
    pub fn ones(n: usize) -> Self {
        Self {
            obs_weights: vec![1.0; n],
            penalty_weight: 1.0,
        }
    }

    /// Exponential weights `ωᵢ = ln(1/uᵢ)`; the penalty weight is 1.
    pub fn from_uniform(u: &[f64]) -> Result<Self> {
        let obs_weights = u
            .iter()
            .map(|&ui| {
                if ui > 0.0 && ui <= 1.0 {
                    Ok((1.0 / ui).ln())
                } else {
                    Err(Error::domain(format!(
                        "uniform variate {ui} outside (0, 1]"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            obs_weights,
            penalty_weight: 1.0,
        })
    }

    pub fn with_penalty_weight(mut self, w0: f64) -> Result<Self> {
        if !(w0 >= 0.0) || !w0.is_finite() {
            return Err(Error::domain(format!(
                "penalty weight {w0} must be finite and >= 0"
            )));
        }
        self.penalty_weight = w0;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.obs_weights.len()
    }

    pub fn is_valid(&self) -> bool {
        self.penalty_weight >= 0.0
            && self.penalty_weight.is_finite()
            && self.obs_weights.iter().all(|w| *w >= 0.0 && w.is_finite())
    }

    /// Order-sensitive 64-bit fingerprint of the draw's bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h = rng::mix64(self.obs_weights.len() as u64);
        for w in self
            .obs_weights
            .iter()
            .chain(std::iter::once(&self.penalty_weight))
        {
            h = rng::mix64(h ^ w.to_bits());
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    /// ω ≡ 1: the unrandomized objective.
    Ones,
    /// i.i.d. Exp(1) weights (weighted Bayesian bootstrap).
    Wbb,
    /// Multinomial(n; 1/n, …, 1/n) counts (classical bootstrap).
    Multinomial,
    /// Dirichlet(1, …, 1) scaled to sum to n (Bayesian bootstrap).
    Dirichlet,
}

impl WeightKind {
    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Ones => "ones",
            WeightKind::Wbb => "wbb",
            WeightKind::Multinomial => "multinomial",
            WeightKind::Dirichlet => "dirichlet",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones" => Ok(WeightKind::Ones),
            "wbb" => Ok(WeightKind::Wbb),
            "multinomial" => Ok(WeightKind::Multinomial),
            "dirichlet" => Ok(WeightKind::Dirichlet),
            other => Err(Error::domain(format!(
                "unknown weight law {other:?} (expected ones, wbb, multinomial or dirichlet)"
            ))),
        }
    }
}

/// The distribution π(ω) over weight vectors of length `n`.
///
/// The penalty weight defaults to 1. With `random_penalty` set, randomized
/// laws draw it as one extra Exp(1) variate after the observation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightLaw {
    pub kind: WeightKind,
    pub n: usize,
    #[serde(default)]
    pub random_penalty: bool,
}

impl WeightLaw {
    pub fn new(kind: WeightKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("weight law needs n >= 1"));
        }
        Ok(Self {
            kind,
            n,
            random_penalty: false,
        })
    }

    pub fn with_random_penalty(mut self, random: bool) -> Self {
        self.random_penalty = random;
        self
    }

    pub fn is_deterministic(&self) -> bool {
        self.kind == WeightKind::Ones
    }

    /// Draws ω from the stream seeded by `seed`. Pure in `(self, seed)`.
    pub fn sample(&self, seed: u64) -> WeightDraw {
        let mut rng = rng::stream(seed);
        self.sample_with(&mut rng)
    }

    /// Draw number `index` of the family rooted at `base_seed`.
    pub fn sample_indexed(&self, base_seed: u64, index: u64) -> WeightDraw {
        self.sample(rng::derive_seed(base_seed, index))
    }

    pub fn sample_with(&self, rng: &mut StreamRng) -> WeightDraw {
        let n = self.n;
        let obs_weights = match self.kind {
            WeightKind::Ones => return WeightDraw::ones(n),
            WeightKind::Wbb => (0..n).map(|_| exp1(rng)).collect(),
            WeightKind::Dirichlet => {
                let mut w: Vec<f64> = (0..n).map(|_| exp1(rng)).collect();
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    let scale = n as f64 / total;
                    w.iter_mut().for_each(|v| *v *= scale);
                } else {
                    // Every variate underflowed to zero; fall back to the
                    // symmetric point of the simplex.
                    w.iter_mut().for_each(|v| *v = 1.0);
                }
                w
            }
            WeightKind::Multinomial => {
                let mut counts = vec![0.0; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1.0;
                }
                counts
            }
        };
        let penalty_weight = if self.random_penalty { exp1(rng) } else { 1.0 };
        WeightDraw {
            obs_weights,
            penalty_weight,
        }
    }
}

/// Exp(1) variate as `ln(1/u)`, `u ∈ (0, 1]`.
fn exp1(rng: &mut StreamRng) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    -u.ln()
}
