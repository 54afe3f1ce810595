use combo::environment::{make_lower_bound_instance, ContextProcess, NoiseModel};
use combo::rng::{substream, StreamPurpose};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn uniform_contexts_have_unit_interval_mean() {
    let process = ContextProcess::uniform(1, 3).unwrap();
    let mut rng = substream(1, 0, StreamPurpose::Context, 0);
    let n = 100_000;
    let sum = (1..=n).fold(DVector::zeros(3), |acc, t| {
        acc + process.sample(0, t, &mut rng)
    });
    for v in (sum / n as f64).iter() {
        assert!((0.49..=0.51).contains(v), "{v}");
    }
}

#[test]
fn score_noise_has_configured_sd() {
    let noise = NoiseModel::new(0.05).unwrap();
    let mut rng = substream(2, 0, StreamPurpose::Noise, 0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| noise.sample_score(0.0, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((0.049..=0.051).contains(&sd), "{sd}");
}

#[test]
fn substreams_reproduce() {
    let a: Vec<f64> = {
        let noise = NoiseModel::new(1.0).unwrap();
        let mut rng = substream(9, 3, StreamPurpose::Noise, 1);
        (0..50).map(|_| noise.sample_score(0.0, &mut rng)).collect()
    };
    let noise = NoiseModel::new(1.0).unwrap();
    let mut rng = substream(9, 3, StreamPurpose::Noise, 1);
    let b: Vec<f64> = (0..50).map(|_| noise.sample_score(0.0, &mut rng)).collect();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn normalized_samples_have_unit_norm(
        mean in prop::collection::vec(0.1f64..1.0, 2..6),
        zeta in 0.0f64..0.05,
        seed in any::<u64>(),
    ) {
        let process = ContextProcess::fixed_gaussian(vec![DVector::from_column_slice(&mean)], zeta, true).unwrap();
        let mut rng = substream(seed, 0, StreamPurpose::Context, 0);
        for t in 1..20 {
            prop_assert!((process.sample(0, t, &mut rng).norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn lower_bound_instance_is_well_formed(d in 3usize..8, h in 6usize..500) {
        let (params, contexts, _) = make_lower_bound_instance(d, h, 0.05).unwrap();
        prop_assert_eq!(params.agents(), 2);
        prop_assert_eq!(contexts.arms(), 3);
        prop_assert_eq!(contexts.dim(), d);
        for th in params.thetas() {
            prop_assert!(th.iter().all(|v| v.is_finite()));
        }
    }
}
