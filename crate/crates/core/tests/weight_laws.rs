use gentune_core::stats::RunningMoments;
use gentune_core::weights::{WeightDraw, WeightKind, WeightLaw};
use proptest::prelude::*;

proptest! {
    #[test]
    fn draws_satisfy_their_law(n in 1usize..300, seed in any::<u64>()) {
        let d = WeightLaw::new(WeightKind::Dirichlet, n).unwrap().sample(seed);
        prop_assert!((d.obs_weights.iter().sum::<f64>() - n as f64).abs() <= 1e-9);
        let m = WeightLaw::new(WeightKind::Multinomial, n).unwrap().sample(seed);
        prop_assert!(m.obs_weights.iter().all(|w| w.fract() == 0.0 && *w >= 0.0));
        prop_assert_eq!(m.obs_weights.iter().sum::<f64>(), n as f64);
        for kind in [WeightKind::Ones, WeightKind::Wbb, WeightKind::Multinomial, WeightKind::Dirichlet] {
            let law = WeightLaw::new(kind, n).unwrap();
            let a = law.sample(seed);
            prop_assert!(a.is_valid());
            prop_assert_eq!(a.penalty_weight, 1.0);
            prop_assert_eq!(a, law.sample(seed));
        }
        prop_assert_eq!(WeightLaw::new(WeightKind::Ones, n).unwrap().sample(seed), WeightDraw::ones(n));
    }
}

#[test]
fn exponential_weights_have_unit_mean_and_variance() {
    let law = WeightLaw::new(WeightKind::Wbb, 1000).unwrap();
    let m: RunningMoments = (0..100).flat_map(|s| law.sample(s).obs_weights).collect();
    assert!((m.mean() - 1.0).abs() <= 0.01);
    assert!((m.variance() - 1.0).abs() <= 0.05);
}
