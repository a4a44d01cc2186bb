use gentune_core::generator::SgdConfig;
use gentune_core::weights::WeightKind;
use gentune_mnist::dataset::Labeled;
use gentune_mnist::hypernet::{HyperNet, HyperNetSpec};
use gentune_mnist::mlp::{loss_and_grad, MlpSpec};
use gentune_mnist::train::{train_hypernet_criterion, tuning_curve, TrainConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_data() -> Labeled {
    let images = DMatrix::from_row_slice(2, 4, &[0.1, 0.9, 0.4, 0.7, 0.8, 0.2, 0.5, 0.3]);
    Labeled::new(images, vec![0, 3, 7, 3]).unwrap()
}

fn tiny_spec(omega_feature: bool) -> HyperNetSpec {
    HyperNetSpec {
        mlp: MlpSpec::new(2, 3, 10),
        lambda_range: (1e-4, 1.0),
        rank: 2,
        omega_feature,
    }
}

fn randomized(spec: HyperNetSpec, seed: u64) -> HyperNet {
    let mut net = HyperNet::init(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut net.params {
        *p += 0.3 * (rng.random::<f64>() - 0.5);
    }
    net
}

fn composed_loss(net: &HyperNet, data: &Labeled, w: &[f64], lambda: f64, omega: f64) -> f64 {
    let theta = net.forward_with(lambda, omega);
    let mut g = vec![0.0; theta.len()];
    loss_and_grad(&net.spec.mlp, &theta, data, Some(w), lambda, &mut g).unwrap()
}

#[test]
fn hypernet_gradient_matches_finite_differences() {
    let data = tiny_data();
    let w = [0.5, 1.7, 0.9, 1.3];
    let omega = w.iter().sum::<f64>() / 4.0;
    for omega_feature in [false, true] {
        let net = randomized(tiny_spec(omega_feature), 11);
        let lambda = 0.03;
        let theta = net.forward_with(lambda, omega);
        let mut gt = vec![0.0; theta.len()];
        loss_and_grad(&net.spec.mlp, &theta, &data, Some(&w), lambda, &mut gt).unwrap();
        let mut grad = vec![0.0; net.param_count()];
        net.backward_with(lambda, omega, &gt, &mut grad);
        let h = 1e-6;
        for (k, &g) in grad.iter().enumerate() {
            let mut plus = net.clone();
            plus.params[k] += h;
            let mut minus = net.clone();
            minus.params[k] -= h;
            let fd = (composed_loss(&plus, &data, &w, lambda, omega)
                - composed_loss(&minus, &data, &w, lambda, omega))
                / (2.0 * h);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {k}: fd {fd} vs analytic {g}");
        }
    }
}

#[test]
fn fresh_hypernet_outputs_base_weights_for_every_lambda() {
    let net = HyperNet::init(tiny_spec(true), 5).unwrap();
    let base = net.spec.mlp.init(5);
    for lambda in [1e-4, 1e-2, 1.0] {
        assert_eq!(net.forward(lambda), base);
        assert_eq!(net.forward_with(lambda, 1.4), base);
    }
}

#[test]
fn hypernet_serialization_round_trips() {
    let net = randomized(tiny_spec(false), 3);
    let mut bytes = Vec::new();
    net.write_to(&mut bytes, 3, "abc").unwrap();
    let (back, header) = HyperNet::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back, net);
    assert_eq!(header.seed, 3);
    assert_eq!(header.config_hash, "abc");
    let mut again = Vec::new();
    back.write_to(&mut again, 3, "abc").unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn zero_steps_leave_the_hypernet_unchanged() {
    let net = randomized(tiny_spec(false), 8);
    let cfg = TrainConfig::new(
        SgdConfig {
            steps: 0,
            ..SgdConfig::default()
        },
        WeightKind::Ones,
    );
    let report = train_hypernet_criterion(net.clone(), &tiny_data(), &cfg, 1).unwrap();
    assert_eq!(report.net, net);
    assert!(report.loss_trace.is_empty());
}

#[test]
fn training_lowers_the_loss_and_is_deterministic() {
    let data = tiny_data();
    let net = HyperNet::init(tiny_spec(true), 2).unwrap();
    let sgd = SgdConfig {
        steps: 400,
        batch_size: 4,
        learning_rate: 0.05,
        ..SgdConfig::default()
    };
    let cfg = TrainConfig::new(sgd, WeightKind::Wbb);
    let a = train_hypernet_criterion(net.clone(), &data, &cfg, 9).unwrap();
    let b = train_hypernet_criterion(net, &data, &cfg, 9).unwrap();
    assert_eq!(a.net, b.net);
    let head: f64 = a.loss_trace[..20].iter().sum();
    let tail: f64 = a.loss_trace[380..].iter().sum();
    assert!(tail < 0.5 * head, "head {head} tail {tail}");
    let curve = tuning_curve(&a.net, &data, &[1e-4, 1e-2, 1.0]).unwrap();
    assert_eq!(curve.rows.len(), 3);
    assert!(curve.rows.iter().all(|r| (0.0..=1.0).contains(&r.val_acc)));
}

#[test]
fn curve_cost_grows_linearly_in_grid_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let images = DMatrix::from_fn(784, 500, |_, _| rng.random::<f64>());
    let labels = (0..500).map(|i| (i % 10) as u8).collect();
    let data = Labeled::new(images, labels).unwrap();
    let spec = HyperNetSpec {
        mlp: MlpSpec::new(784, 32, 10),
        lambda_range: (1e-5, 1e-1),
        rank: 4,
        omega_feature: false,
    };
    let net = randomized(spec, 6);
    let grid: Vec<f64> = (0..20)
        .map(|i| 1e-5 * 10f64.powf(4.0 * i as f64 / 19.0))
        .collect();
    let single = (0..3)
        .map(|_| tuning_curve(&net, &data, &grid[..1]).unwrap().seconds)
        .fold(f64::INFINITY, f64::min);
    let full = tuning_curve(&net, &data, &grid).unwrap().seconds;
    assert!(
        full <= 25.0 * single,
        "20 points {full}s vs one point {single}s"
    );
}
