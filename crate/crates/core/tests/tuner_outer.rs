mod common;

use common::toy_design;
use gentune_core::generator::{
    train_criterion, GeneratorModel, HyperConfig, HyperProposal, InputSpec, OmegaEncoding,
    SgdConfig,
};
use gentune_core::objective::{OptimizerMap, RidgeProblem};
use gentune_core::ridge::solve_weighted_ridge;
use gentune_core::stats::{ks_distance, RunningMoments};
use gentune_core::tuner::{
    estimate_outer, posterior_draws, predictive_pmf, predictive_summary, select_hyper,
    GaussianLinear, LogisticLinear, OuterCriterion, PosteriorDrawSet, TuningCriterion,
};
use gentune_core::weights::{WeightDraw, WeightKind, WeightLaw};
use gentune_oracles as oracle;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn toy_problem() -> (RidgeProblem, TuningCriterion) {
    let design = toy_design();
    let train = design.simulate(1).unwrap();
    let valid = design.simulate_rows(200, 2).unwrap();
    (
        RidgeProblem::new(train),
        TuningCriterion::ValidationMse(valid),
    )
}

#[test]
fn deterministic_weights_give_an_exact_estimate() {
    let (problem, crit) = toy_problem();
    let law = WeightLaw::new(WeightKind::Ones, 100).unwrap();
    let h = HyperConfig::new(0.1);
    let est = estimate_outer(&problem, &h, &crit, &law, 16, 3).unwrap();
    let direct = crit
        .evaluate(&problem.evaluate(&WeightDraw::ones(100), &h).unwrap(), &h)
        .unwrap();
    assert_eq!(est.mean, direct);
    assert_eq!(est.std_err, 0.0);
}

#[test]
fn oracle_estimate_matches_direct_monte_carlo() {
    let (problem, crit) = toy_problem();
    let TuningCriterion::ValidationMse(valid) = &crit else {
        unreachable!()
    };
    let law = WeightLaw::new(WeightKind::Wbb, 100).unwrap();
    let h = HyperConfig::new(0.02);
    let est = estimate_outer(&problem, &h, &crit, &law, 400, 5).unwrap();
    let data = problem.data();
    let mut direct = RunningMoments::default();
    for s in 0..400u64 {
        let w = law.sample(s.wrapping_mul(7919).wrapping_add(13));
        let theta = oracle::ridge_explicit(data.x(), data.y(), &w.obs_weights, h.lambda);
        direct.push((valid.y() - valid.x() * theta).norm_squared() / valid.n() as f64);
    }
    let se = (est.std_err.powi(2) + direct.std_err().powi(2)).sqrt();
    assert!((est.mean - direct.mean()).abs() <= 3.0 * se);
}

#[test]
fn standard_error_shrinks_at_the_clt_rate() {
    let (problem, crit) = toy_problem();
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let h = HyperConfig::new(0.05);
    let (mut small, mut large) = (0.0, 0.0);
    for rep in 0..20 {
        small += estimate_outer(&problem, &h, &crit, &law, 100, 1000 + rep)
            .unwrap()
            .std_err;
        large += estimate_outer(&problem, &h, &crit, &law, 200, 2000 + rep)
            .unwrap()
            .std_err;
    }
    let ratio = large / small;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() <= 0.3, "ratio {ratio}");
}

#[test]
fn selection_uses_common_random_numbers() {
    let (problem, crit) = toy_problem();
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let grid: Vec<HyperConfig> = [1e-3, 1e-2, 1e-1, 1.0]
        .iter()
        .map(|l| HyperConfig::new(*l))
        .collect();
    let sel = select_hyper(&problem, &grid, &crit, &law, 30, 8).unwrap();
    let single = select_hyper(&problem, &grid[2..3], &crit, &law, 30, 8).unwrap();
    assert_eq!(sel.draw_fingerprint, single.draw_fingerprint);
    assert_eq!(single.index, 0);
    for pt in &sel.curve {
        let alone = estimate_outer(&problem, &pt.hyper, &crit, &law, 30, 8).unwrap();
        assert_eq!(alone, pt.estimate);
    }
}

#[test]
fn clearly_separated_candidates_are_ranked() {
    let (problem, crit) = toy_problem();
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let grid = vec![HyperConfig::new(0.01), HyperConfig::new(50.0)];
    let sel = select_hyper(&problem, &grid, &crit, &law, 40, 1).unwrap();
    let (a, b) = (&sel.curve[0].estimate, &sel.curve[1].estimate);
    assert!(b.mean - a.mean > 3.0 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt());
    assert_eq!(sel.index, 0);
}

#[test]
fn selection_is_stable_across_seeds() {
    let (problem, crit) = toy_problem();
    let law = WeightLaw::new(WeightKind::Dirichlet, 100).unwrap();
    let grid: Vec<HyperConfig> = (0..9)
        .map(|i| HyperConfig::new(10f64.powf(-3.0 + 0.5 * i as f64)))
        .collect();
    let a = select_hyper(&problem, &grid, &crit, &law, 100, 1).unwrap();
    let b = select_hyper(&problem, &grid, &crit, &law, 100, 2).unwrap();
    assert!(a.index.abs_diff(b.index) <= 1);
}

#[test]
fn gcv_criterion_equals_gcv_score_at_the_exact_fit() {
    let (problem, _) = toy_problem();
    let crit = TuningCriterion::GcvScore(problem.data().clone());
    let h = HyperConfig::new(0.03);
    let theta = problem.evaluate(&WeightDraw::ones(100), &h).unwrap();
    let v = crit.evaluate(&theta, &h).unwrap();
    let direct = gentune_core::ridge::gcv_score(problem.data(), 0.03).unwrap();
    assert!((v - direct).abs() <= 1e-12 * direct);
}

#[test]
fn single_deterministic_draw_is_the_point_estimate() {
    let (problem, _) = toy_problem();
    let law = WeightLaw::new(WeightKind::Ones, 100).unwrap();
    let h = HyperConfig::new(0.1);
    let d = posterior_draws(&problem, &h, &law, 1, 0).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(
        d.thetas[0],
        solve_weighted_ridge(problem.data(), &WeightDraw::ones(100), 0.1)
            .unwrap()
            .theta
    );
    assert_eq!(law.sample(d.seeds[0]), WeightDraw::ones(100));
}

#[test]
fn oracle_draw_covariance_is_symmetric_psd() {
    let (problem, _) = toy_problem();
    let law = WeightLaw::new(WeightKind::Wbb, 100).unwrap();
    let d = posterior_draws(&problem, &HyperConfig::new(0.05), &law, 300, 4).unwrap();
    let m = d.len() as f64;
    let mean = d.thetas.iter().fold(DVector::zeros(5), |acc, t| acc + t) / m;
    let cov = d.thetas.iter().fold(DMatrix::zeros(5, 5), |acc, t| {
        let c = t - &mean;
        acc + &c * c.transpose()
    }) / (m - 1.0);
    assert!((&cov - cov.transpose()).amax() == 0.0);
    assert!(SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .all(|e| *e >= -1e-12));
}

/// Posterior draws are taken at the selected λ, so the generator is trained
/// on that λ alone. Both draw sets share their ω seeds; the comparison then
/// measures the generator rather than Monte Carlo noise.
#[test]
fn generator_draws_match_oracle_wbb_draws() {
    let (problem, _) = toy_problem();
    let law = WeightLaw::new(WeightKind::Wbb, 100).unwrap();
    let h = HyperConfig::new(0.05);
    let proposal = HyperProposal::fixed(h.lambda);
    let input = InputSpec::for_proposal(&proposal, OmegaEncoding::Full { n: 100 });
    let cfg = SgdConfig {
        learning_rate: 1e-3,
        steps: 12_000,
        ..SgdConfig::default()
    };
    let model = train_criterion(
        GeneratorModel::linear(input, 5),
        &proposal,
        &law,
        &problem,
        &cfg,
        3,
    )
    .unwrap()
    .model;
    let generated = posterior_draws(&model, &h, &law, 500, 77).unwrap();
    let exact = posterior_draws(&problem, &h, &law, 500, 77).unwrap();
    for j in 0..5 {
        let (a, b) = (generated.coordinate(j), exact.coordinate(j));
        let ks = ks_distance(&a, &b);
        assert!((ks - oracle::ks_brute_force(&a, &b)).abs() <= 1e-12);
        assert!(ks <= 0.1, "coordinate {j}: KS {ks}");
        let spread = |v: &[f64]| {
            RunningMoments::from_iter(v.iter().copied())
                .variance()
                .sqrt()
        };
        let ratio = spread(&a) / spread(&b);
        assert!(
            (ratio - 1.0).abs() <= 0.2,
            "coordinate {j}: spread ratio {ratio}"
        );
    }
}

#[test]
fn gaussian_mixture_moments_are_analytic() {
    let thetas: Vec<DVector<f64>> = [0.3, -1.1, 2.4, 0.0]
        .iter()
        .map(|v| DVector::from_vec(vec![*v, 1.0]))
        .collect();
    let draws = PosteriorDrawSet {
        thetas: thetas.clone(),
        hyper: HyperConfig::new(1.0),
        seeds: vec![0; 4],
    };
    let x = DVector::from_vec(vec![2.0, 0.5]);
    let s2 = 0.4;
    let s = predictive_summary(
        &draws,
        &x,
        &GaussianLinear { noise_var: s2 },
        &[0.5],
        200,
        1,
    )
    .unwrap();
    let means: Vec<f64> = thetas.iter().map(|t| x.dot(t)).collect();
    let mix_mean = means.iter().sum::<f64>() / 4.0;
    let mix_var = s2 + means.iter().map(|m| m * m).sum::<f64>() / 4.0 - mix_mean * mix_mean;
    assert!((s.mean - mix_mean).abs() <= 1e-12);
    assert!((s.variance - mix_var).abs() <= 1e-12);
    assert_eq!(s.quantiles.len(), 1);

    let one = PosteriorDrawSet {
        thetas: vec![thetas[1].clone()],
        hyper: HyperConfig::new(1.0),
        seeds: vec![0],
    };
    let s = predictive_summary(&one, &x, &GaussianLinear { noise_var: s2 }, &[], 0, 0).unwrap();
    assert_eq!((s.mean, s.variance), (means[1], s2));
}

#[test]
fn discrete_predictive_mass_is_normalized() {
    let (problem, _) = toy_problem();
    let law = WeightLaw::new(WeightKind::Wbb, 100).unwrap();
    let d = posterior_draws(&problem, &HyperConfig::new(0.05), &law, 64, 4).unwrap();
    for k in 0..10 {
        let x = DVector::from_fn(5, |j, _| ((j + k) as f64).sin());
        let pmf = predictive_pmf(&d, &x, &LogisticLinear).unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
