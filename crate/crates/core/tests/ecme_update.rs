mod common;

use common::gaussian_dataset;
use gentune_core::ecme::{ecme_iterate, nu_update, EcmeState};
use proptest::prelude::*;

fn state(beta: Vec<f64>, sigma: Vec<f64>, alpha: f64, a: f64, b: f64) -> EcmeState {
    EcmeState {
        beta,
        sigma,
        alpha,
        a,
        b,
        nu_inv_alpha: 1.0,
    }
}

#[test]
fn analytic_examples_are_exact() {
    let v = nu_update(&state(vec![1.0], vec![1.0], 1.0, 2.0, 1.0)).unwrap();
    assert!((v - 1.0).abs() <= 1e-12);
    let v = nu_update(&state(vec![0.0, 0.0], vec![1.0, 1.0], 1.0, 3.0, 4.0)).unwrap();
    assert!((v - 1.0).abs() <= 1e-12);
}

#[test]
fn fixed_point_iteration_converges() {
    let data = gaussian_dataset(30, 4, 12);
    let init = state(vec![0.0; 4], vec![1.0; 4], 2.0, 3.0, 0.5);
    let trace = ecme_iterate(&data, init, 100, 1e-8).unwrap();
    assert!(trace.converged, "history {:?}", trace.history);
    assert!(trace.iterations <= 100);
    let h = &trace.history;
    assert!((h[h.len() - 1] - h[h.len() - 2]).abs() <= 1e-8);
}

fn valid_state() -> impl Strategy<Value = EcmeState> {
    (1usize..6, 0.2f64..4.0, 1.01f64..5.0, 0.01f64..5.0).prop_flat_map(|(k, alpha, a, b)| {
        (
            prop::collection::vec(-3.0f64..3.0, k),
            prop::collection::vec(0.1f64..3.0, k),
        )
            .prop_map(move |(beta, sigma)| state(beta, sigma, alpha, a, b))
    })
}

proptest! {
    #[test]
    fn update_is_positive_and_increasing_in_b(s in valid_state(), db in 0.001f64..2.0) {
        let v = nu_update(&s).unwrap();
        prop_assert!(v > 0.0);
        let mut t = s.clone();
        t.b += db;
        prop_assert!(nu_update(&t).unwrap() > v);
    }

    #[test]
    fn update_is_scale_equivariant(s in valid_state(), c in 0.1f64..10.0) {
        let mut t = s.clone();
        t.beta.iter_mut().for_each(|b| *b *= c);
        t.sigma.iter_mut().for_each(|v| *v *= c);
        let (u, v) = (nu_update(&s).unwrap(), nu_update(&t).unwrap());
        prop_assert!((u - v).abs() <= 1e-12 * u);
    }
}
