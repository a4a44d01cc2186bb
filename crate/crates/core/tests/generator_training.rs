mod common;

use common::{gaussian_dataset, toy_design};
use gentune_core::error::{Error, Result};
use gentune_core::generator::{
    draw_pair, ipl, train_criterion, train_supervised, Activation, GeneratorModel, HyperConfig,
    HyperProposal, InputSpec, OmegaEncoding, SgdConfig, SupervisedConfig,
};
use gentune_core::objective::{OptimizerMap, RidgeProblem, WeightedObjective};
use gentune_core::ridge::solve_weighted_ridge;
use gentune_core::stats::RunningMoments;
use gentune_core::weights::{WeightDraw, WeightKind, WeightLaw};
use gentune_oracles as oracle;
use nalgebra::DVector;

fn toy() -> RidgeProblem {
    RidgeProblem::new(toy_design().simulate(1).unwrap())
}

fn toy_input(proposal: &HyperProposal) -> InputSpec {
    InputSpec::for_proposal(proposal, OmegaEncoding::Full { n: 100 })
}

struct ConstantSolver(DVector<f64>);

impl OptimizerMap for ConstantSolver {
    fn output_dim(&self) -> usize {
        self.0.len()
    }
    fn evaluate(&self, _w: &WeightDraw, _h: &HyperConfig) -> Result<DVector<f64>> {
        Ok(self.0.clone())
    }
}

/// `L(θ) = (Σᵢ ωᵢ / n) ‖θ − c‖²`: the minimizer is `c` for every `(ω, h)`.
struct Bowl(Vec<f64>);

impl WeightedObjective for Bowl {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value_grad(&self, theta: &[f64], w: &WeightDraw, _h: &HyperConfig, grad: &mut [f64]) -> f64 {
        let scale = w.obs_weights.iter().sum::<f64>() / w.n() as f64;
        let mut v = 0.0;
        for ((g, t), c) in grad.iter_mut().zip(theta).zip(&self.0) {
            *g = 2.0 * scale * (t - c);
            v += scale * (t - c).powi(2);
        }
        v
    }
}

#[test]
fn single_label_is_interpolated() {
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let rep = train_supervised(
        GeneratorModel::linear(toy_input(&proposal), 5),
        &proposal,
        &law,
        &toy(),
        1,
        &SupervisedConfig::default(),
        3,
    )
    .unwrap();
    assert!(rep.final_loss <= 1e-10, "loss {}", rep.final_loss);
}

#[test]
fn constant_labels_give_a_constant_map() {
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 8).unwrap();
    let c = DVector::from_vec(vec![1.5, -0.25, 3.0]);
    let input = InputSpec::for_proposal(&proposal, OmegaEncoding::Full { n: 8 });
    let cfg = SupervisedConfig {
        steps: 20_000,
        ..SupervisedConfig::default()
    };
    let rep = train_supervised(
        GeneratorModel::linear(input, 3),
        &proposal,
        &law,
        &ConstantSolver(c.clone()),
        200,
        &cfg,
        5,
    )
    .unwrap();
    for i in 0..50 {
        let (w, h) = draw_pair(&proposal, &law, 77, i);
        let out = rep.model.forward(&w, &h).unwrap();
        assert!((out - &c).amax() <= 1e-6);
    }
}

#[test]
fn failed_labels_are_resampled() {
    struct Flaky(RidgeProblem);
    impl OptimizerMap for Flaky {
        fn output_dim(&self) -> usize {
            5
        }
        fn evaluate(&self, w: &WeightDraw, h: &HyperConfig) -> Result<DVector<f64>> {
            if h.lambda < 0.01 {
                Err(Error::Singular("refused".into()))
            } else {
                self.0.evaluate(w, h)
            }
        }
    }
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let rep = train_supervised(
        GeneratorModel::linear(toy_input(&proposal), 5),
        &proposal,
        &law,
        &Flaky(toy()),
        40,
        &SupervisedConfig {
            steps: 10,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    assert_eq!(rep.labels, 40);
    assert!(rep.resampled > 0);
}

#[test]
fn criterion_training_finds_the_single_optimizer() {
    let problem = toy();
    let lambda = 0.05;
    let proposal = HyperProposal::fixed(lambda);
    let law = WeightLaw::new(WeightKind::Ones, 100).unwrap();
    let input = InputSpec {
        lambda_range: (lambda, lambda),
        lambda_degree: 0,
        eta_ranges: vec![],
        omega: OmegaEncoding::None,
    };
    let cfg = SgdConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        steps: 3000,
        batch_size: 1,
        lr_final_fraction: 0.1,
    };
    let rep = train_criterion(
        GeneratorModel::linear(input, 5),
        &proposal,
        &law,
        &problem,
        &cfg,
        0,
    )
    .unwrap();
    assert_eq!(problem.solve_count(), 0);
    let exact = solve_weighted_ridge(problem.data(), &WeightDraw::ones(100), lambda)
        .unwrap()
        .theta;
    let got = rep
        .model
        .forward(&WeightDraw::ones(100), &HyperConfig::new(lambda))
        .unwrap();
    assert!((got - exact).amax() <= 1e-3);
}

#[test]
fn constant_minimizer_collapses_the_generator() {
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 10).unwrap();
    let input = InputSpec::for_proposal(&proposal, OmegaEncoding::Full { n: 10 });
    let c = vec![0.7, -1.2];
    let cfg = SgdConfig {
        learning_rate: 0.02,
        steps: 6000,
        ..SgdConfig::default()
    };
    let rep = train_criterion(
        GeneratorModel::linear(input, 2),
        &proposal,
        &law,
        &Bowl(c.clone()),
        &cfg,
        2,
    )
    .unwrap();
    for i in 0..50 {
        let (w, h) = draw_pair(&proposal, &law, 991, i);
        let out = rep.model.forward(&w, &h).unwrap();
        assert!((out - DVector::from_vec(c.clone())).amax() <= 1e-3);
    }
}

#[test]
fn criterion_training_is_label_free_deterministic_and_makes_progress() {
    let problem = toy();
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let cfg = SgdConfig {
        learning_rate: 1e-3,
        steps: 4000,
        ..SgdConfig::default()
    };
    let run = || {
        train_criterion(
            GeneratorModel::linear(toy_input(&proposal), 5),
            &proposal,
            &law,
            &problem,
            &cfg,
            9,
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(problem.solve_count(), 0);
    assert_eq!(a.model.phi, b.model.phi);
    let tr = &a.loss_trace;
    let first: f64 = tr[..100].iter().sum::<f64>() / 100.0;
    let last: f64 = tr[tr.len() - 100..].iter().sum::<f64>() / 100.0;
    assert!(last <= first);

    let mlp = || {
        let init = GeneratorModel::mlp(toy_input(&proposal), 5, vec![16], Activation::Tanh, 4);
        train_criterion(
            init,
            &proposal,
            &law,
            &problem,
            &SgdConfig {
                steps: 300,
                ..cfg.clone()
            },
            9,
        )
        .unwrap()
    };
    assert_eq!(mlp().model.phi, mlp().model.phi);
}

#[test]
fn divergence_is_reported() {
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let cfg = SgdConfig {
        learning_rate: 10.0,
        steps: 500,
        lr_final_fraction: 1.0,
        ..SgdConfig::default()
    };
    let err = train_criterion(
        GeneratorModel::linear(toy_input(&proposal), 5),
        &proposal,
        &law,
        &toy(),
        &cfg,
        0,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
}

#[test]
fn ipl_of_the_oracle_is_zero() {
    let problem = toy();
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let est = ipl(&problem, &proposal, &law, &problem, 50, 1).unwrap();
    assert_eq!(est.mean, 0.0);
    assert_eq!(est.std_err, 0.0);
}

#[test]
fn ipl_of_the_zero_map_is_the_oracle_second_moment() {
    let problem = toy();
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let zero = GeneratorModel::linear(toy_input(&proposal), 5);
    let est = ipl(&zero, &proposal, &law, &problem, 2000, 1).unwrap();

    let data = problem.data();
    let mut direct = RunningMoments::default();
    for i in 0..2000 {
        let (w, h) = draw_pair(&proposal, &law, 12345, i);
        direct.push(
            oracle::ridge_explicit(data.x(), data.y(), &w.obs_weights, h.lambda).norm_squared(),
        );
    }
    let se = (est.std_err.powi(2) + direct.std_err().powi(2)).sqrt();
    assert!(
        (est.mean - direct.mean()).abs() <= 3.0 * se,
        "{} vs {}",
        est.mean,
        direct.mean()
    );
}

#[test]
fn supervised_ipl_improves_with_more_labels() {
    let problem = toy();
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let fit = |b| {
        let rep = train_supervised(
            GeneratorModel::linear(toy_input(&proposal), 5),
            &proposal,
            &law,
            &problem,
            b,
            &SupervisedConfig::default(),
            21,
        )
        .unwrap();
        ipl(&rep.model, &proposal, &law, &problem, 500, 22)
            .unwrap()
            .mean
    };
    assert!(fit(50) > 1.5 * fit(800));
}

#[test]
fn generators_reject_mismatched_problems() {
    let proposal = HyperProposal::log_uniform(1e-3, 1.0);
    let law = WeightLaw::new(WeightKind::Ones, 20).unwrap();
    let problem = RidgeProblem::new(gaussian_dataset(20, 3, 0));
    let input = InputSpec::for_proposal(&proposal, OmegaEncoding::None);
    assert!(train_criterion(
        GeneratorModel::linear(input.clone(), 4),
        &proposal,
        &law,
        &problem,
        &SgdConfig::default(),
        0
    )
    .is_err());
    assert!(train_supervised(
        GeneratorModel::linear(input, 4),
        &proposal,
        &law,
        &problem,
        3,
        &SupervisedConfig::default(),
        0
    )
    .is_err());
}
