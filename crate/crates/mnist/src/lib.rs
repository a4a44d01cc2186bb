//! Desk-scale MNIST demonstration: IDX loading, a one-hidden-layer MLP, and
//! a hypernetwork that maps the weight-decay strength λ to MLP weights so a
//! whole validation curve costs one forward pass per λ.

pub mod dataset;
pub mod error;
pub mod hypernet;
pub mod idx;
pub mod mlp;
pub mod train;

pub use dataset::{Labeled, Split, SplitSizes};
pub use error::MnistError;
pub use hypernet::{HyperNet, HyperNetSpec};
pub use mlp::{Evaluation, MlpSpec};
pub use train::{CurveReport, CurveRow, TrainConfig};
