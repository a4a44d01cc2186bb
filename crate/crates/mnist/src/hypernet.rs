//! λ-conditioned hypernetwork producing MLP weights.
//!
//! With features `φ = (1, s, s²)` of the normalized log λ (optionally
//! followed by `ω̄ − 1`, the batch mean weight minus one), each layer is
//!
//! ```text
//! W(λ) = (1 + γ·φ) W₀ + Σ_r (a_r·φ) u_r v_rᵀ
//! b(λ) = (1 + γ·φ) b₀ + (e·φ) c
//! ```
//!
//! so a per-layer gain plus `rank` rank-1 modulations and a bias direction.
//! With γ, a and e all zero the output is θ₀ for every λ.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use gentune_core::model_io::{read_model, write_model, ModelHeader, FORMAT_VERSION};

use crate::error::MnistError;
use crate::mlp::MlpSpec;

pub const FAMILY_TAG: &str = "hypernet-mlp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperNetSpec {
    pub mlp: MlpSpec,
    pub lambda_range: (f64, f64),
    pub rank: usize,
    /// Append `ω̄ − 1` to the features.
    pub omega_feature: bool,
}

impl HyperNetSpec {
    pub fn feature_dim(&self) -> usize {
        if self.omega_feature {
            4
        } else {
            3
        }
    }

    /// `(out, in)` for each layer.
    pub fn layers(&self) -> [(usize, usize); 2] {
        [
            (self.mlp.hidden, self.mlp.input),
            (self.mlp.output, self.mlp.hidden),
        ]
    }

    fn layer_block(&self, out: usize, inp: usize) -> usize {
        let f = self.feature_dim();
        f + self.rank * (out + inp + f) + out + f
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
            + self
                .layers()
                .iter()
                .map(|(o, i)| self.layer_block(*o, *i))
                .sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), MnistError> {
        self.mlp.validate()?;
        let (lo, hi) = self.lambda_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(MnistError::Config(format!("bad lambda range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn lambda_coordinate(&self, lambda: f64) -> f64 {
        let (lo, hi) = self.lambda_range;
        2.0 * (lambda.ln() - lo.ln()) / (hi.ln() - lo.ln()) - 1.0
    }

    pub fn features(&self, lambda: f64, omega_mean: f64) -> Vec<f64> {
        let s = self.lambda_coordinate(lambda);
        let mut f = vec![1.0, s, s * s];
        if self.omega_feature {
            f.push(omega_mean - 1.0);
        }
        f
    }
}

/// Offsets of one layer's base and modulation parameters.
struct LayerOffsets {
    out: usize,
    inp: usize,
    w0: usize,
    b0: usize,
    gamma: usize,
    /// Start of `(u, v, a)` for each rank component.
    rank: Vec<(usize, usize, usize)>,
    c: usize,
    e: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet {
    pub spec: HyperNetSpec,
    pub params: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HyperNet {
    /// θ₀ from the MLP initializer, random unit-norm-scale directions, and
    /// zero modulation coefficients.
    pub fn init(spec: HyperNetSpec, seed: u64) -> Result<Self, MnistError> {
        spec.validate()?;
        let mut params = spec.mlp.init(seed);
        params.resize(spec.param_count(), 0.0);
        let mut net = Self { spec, params };
        let mut rng = gentune_core::rng::child_stream(seed, 1);
        let mut blocks = Vec::new();
        for off in net.offsets() {
            for &(u, v, _) in &off.rank {
                blocks.push((u, off.out));
                blocks.push((v, off.inp));
            }
            blocks.push((off.c, off.out));
        }
        for (start, len) in blocks {
            let s = 1.0 / (len as f64).sqrt();
            for v in &mut net.params[start..start + len] {
                *v = s * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(net)
    }

    fn offsets(&self) -> Vec<LayerOffsets> {
        let l = self.spec.mlp.layout();
        let f = self.spec.feature_dim();
        let mut cursor = self.spec.mlp.param_count();
        let bases = [(l.w1, l.b1), (l.w2, l.b2)];
        let mut out = Vec::new();
        for ((o, i), (w0, b0)) in self.spec.layers().into_iter().zip(bases) {
            let gamma = cursor;
            cursor += f;
            let mut rank = Vec::new();
            for _ in 0..self.spec.rank {
                let u = cursor;
                let v = u + o;
                let a = v + i;
                rank.push((u, v, a));
                cursor = a + f;
            }
            let c = cursor;
            let e = c + o;
            cursor = e + f;
            out.push(LayerOffsets {
                out: o,
                inp: i,
                w0,
                b0,
                gamma,
                rank,
                c,
                e,
            });
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// MLP parameters at `λ` (with `ω̄ = 1`).
    pub fn forward(&self, lambda: f64) -> Vec<f64> {
        self.forward_with(lambda, 1.0)
    }

    pub fn forward_with(&self, lambda: f64, omega_mean: f64) -> Vec<f64> {
        let (lo, hi) = self.spec.lambda_range;
        if lambda < lo * (1.0 - 1e-12) || lambda > hi * (1.0 + 1e-12) {
            log::warn!("lambda {lambda} outside the hypernet training range [{lo}, {hi}]");
        }
        let phi = self.spec.features(lambda, omega_mean);
        let p = &self.params;
        let mut theta = vec![0.0; self.spec.mlp.param_count()];
        for off in self.offsets() {
            let (out, inp) = (off.out, off.inp);
            let gain = 1.0 + dot(&p[off.gamma..off.gamma + phi.len()], &phi);
            for k in 0..out * inp {
                theta[off.w0 + k] = gain * p[off.w0 + k];
            }
            for k in 0..out {
                theta[off.b0 + k] = gain * p[off.b0 + k];
            }
            for &(u, v, a) in &off.rank {
                let coef = dot(&p[a..a + phi.len()], &phi);
                if coef == 0.0 {
                    continue;
                }
                for r in 0..out {
                    let cu = coef * p[u + r];
                    let row = &mut theta[off.w0 + r * inp..off.w0 + (r + 1) * inp];
                    for (t, vv) in row.iter_mut().zip(&p[v..v + inp]) {
                        *t += cu * vv;
                    }
                }
            }
            let ce = dot(&p[off.e..off.e + phi.len()], &phi);
            for k in 0..out {
                theta[off.b0 + k] += ce * p[off.c + k];
            }
        }
        theta
    }

    /// Accumulates the hypernet gradient given `∂L/∂θ` at `λ`.
    pub fn backward_with(
        &self,
        lambda: f64,
        omega_mean: f64,
        grad_theta: &[f64],
        grad: &mut [f64],
    ) {
        let phi = self.spec.features(lambda, omega_mean);
        let f = phi.len();
        let p = &self.params;
        for off in self.offsets() {
            let (out, inp) = (off.out, off.inp);
            let gw = &grad_theta[off.w0..off.w0 + out * inp];
            let gb = &grad_theta[off.b0..off.b0 + out];
            let gain = 1.0 + dot(&p[off.gamma..off.gamma + f], &phi);
            for k in 0..out * inp {
                grad[off.w0 + k] += gain * gw[k];
            }
            for k in 0..out {
                grad[off.b0 + k] += gain * gb[k];
            }
            let inner = dot(gw, &p[off.w0..off.w0 + out * inp]) + dot(gb, &p[off.b0..off.b0 + out]);
            for (g, ph) in grad[off.gamma..off.gamma + f].iter_mut().zip(&phi) {
                *g += ph * inner;
            }
            for &(u, v, a) in &off.rank {
                let coef = dot(&p[a..a + f], &phi);
                // G v and Gᵀ u
                let mut gv = vec![0.0; out];
                let mut gtu = vec![0.0; inp];
                for r in 0..out {
                    let row = &gw[r * inp..(r + 1) * inp];
                    gv[r] = dot(row, &p[v..v + inp]);
                    let ur = p[u + r];
                    for (acc, g) in gtu.iter_mut().zip(row) {
                        *acc += ur * g;
                    }
                }
                let ugv = dot(&p[u..u + out], &gv);
                for r in 0..out {
                    grad[u + r] += coef * gv[r];
                }
                for c in 0..inp {
                    grad[v + c] += coef * gtu[c];
                }
                for (g, ph) in grad[a..a + f].iter_mut().zip(&phi) {
                    *g += ph * ugv;
                }
            }
            let ce = dot(&p[off.e..off.e + f], &phi);
            for k in 0..out {
                grad[off.c + k] += ce * gb[k];
            }
            let gbc = dot(gb, &p[off.c..off.c + out]);
            for (g, ph) in grad[off.e..off.e + f].iter_mut().zip(&phi) {
                *g += ph * gbc;
            }
        }
    }

    pub fn header(&self, seed: u64, config_hash: &str) -> Result<ModelHeader, MnistError> {
        Ok(ModelHeader {
            format_version: FORMAT_VERSION,
            family: FAMILY_TAG.to_string(),
            output_dim: self.spec.mlp.param_count(),
            param_count: self.params.len(),
            seed,
            config_hash: config_hash.to_string(),
            spec: serde_json::to_value(&self.spec)
                .map_err(|e| MnistError::Config(e.to_string()))?,
        })
    }

    pub fn write_to<W: Write>(
        &self,
        out: W,
        seed: u64,
        config_hash: &str,
    ) -> Result<(), MnistError> {
        Ok(write_model(
            out,
            &self.header(seed, config_hash)?,
            &self.params,
        )?)
    }

    pub fn read_from<R: Read>(input: R) -> Result<(Self, ModelHeader), MnistError> {
        let (header, params) = read_model(input)?;
        if header.family != FAMILY_TAG {
            return Err(MnistError::Config(format!(
                "expected a {FAMILY_TAG} model, found {}",
                header.family
            )));
        }
        let spec: HyperNetSpec = serde_json::from_value(header.spec.clone())
            .map_err(|e| MnistError::Config(format!("hypernet spec: {e}")))?;
        if spec.param_count() != params.len() {
            return Err(MnistError::Shape(
                "hypernet parameter count does not match its spec".into(),
            ));
        }
        Ok((Self { spec, params }, header))
    }
}
