#![allow(dead_code)]

use gentune_core::data::{CorrelatedDesign, Dataset};
use gentune_core::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Gaussian design and response with independent entries.
pub fn gaussian_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
    Dataset::new(x, y).unwrap()
}

/// The toy regression used throughout the generator tests.
pub fn toy_design() -> CorrelatedDesign {
    CorrelatedDesign {
        n: 100,
        rho: 0.5,
        noise_sd: 1.0,
        theta: vec![2.0, 1.0, 0.0, 0.0, -1.0],
    }
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}
