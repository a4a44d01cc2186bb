//! Amortized hyper-parameter tuning built on randomized, weighted inner
//! objectives.
//!
//! The crate is organised around one template: draw random observation
//! weights ω, solve (or approximate) the weighted penalized problem
//! `θ̂(ω, h) = argmin (1/n) Σ ωᵢ ℓ_η(yᵢ | θ) + λ ω₀ φ(θ)`, and score the
//! result with an outer criterion. The pieces are:
//!
//! * [`weights`]: weight laws (ones, exponential, multinomial, Dirichlet).
//! * [`ridge`]: closed-form weighted ridge, hat matrix and GCV.
//! * [`cv`]: K-fold splits and cross-validated risk curves.
//! * [`quantile`]: check loss and the envelope-based IRLS solver.
//! * [`generator`]: learned maps `g_φ(ω, h) ≈ θ̂(ω, h)` and their training.
//! * [`tuner`]: Monte Carlo outer criteria, grid selection and posterior
//!   predictive summaries.
//! * [`ecme`]: closed-form update for a penalty scale hyper-parameter.
//!
//! Objectives carry a `1/n` data-fit scaling throughout, so the ridge normal
//! equations read `(XᵀWX + nλI) θ = XᵀWy`. Software that drops the `1/n`
//! uses a penalty that is `n` times larger for the same numerical λ.

// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cv;
pub mod data;
pub mod ecme;
pub mod error;
pub mod generator;
pub mod model_io;
pub mod objective;
pub mod quantile;
pub mod ridge;
pub mod rng;
pub mod select;
pub mod stats;
pub mod tuner;
pub mod weights;

pub use data::Dataset;
pub use error::{Error, Result};
pub use generator::{GeneratorModel, HyperConfig, HyperProposal};
pub use objective::{OptimizerMap, WeightedObjective};
pub use weights::{WeightDraw, WeightKind, WeightLaw};
