use combo::bounds::{
    bad_event_lower_bound, event_nus, gaussian_tail_bounds, good_event_lower_bound,
    posterior_moments, EstimatorMoments, Standardization,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

fn upper_tail(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Draws of `θ̂ ~ N(θ̄, σ²M)`.
fn draw_estimates(m: &EstimatorMoments, sigma: f64, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let d = m.mean.len();
    let chol = (&m.scale * (sigma * sigma)).cholesky().unwrap().l();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            &m.mean + &chol * z
        })
        .collect()
}

fn fixture(h: usize, seed: u64) -> (EstimatorMoments, Vec<DVector<f64>>, [usize; 3]) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(h, 3, |_, _| rng.random_range(0.0..1.0));
    let theta = DVector::from_column_slice(&[0.9, 0.3, 0.1]);
    let moments = posterior_moments(&x, 0.1, &theta).unwrap();
    let ctx = vec![
        DVector::from_column_slice(&[0.9, 0.2, 0.3]),
        DVector::from_column_slice(&[0.5, 0.5, 0.4]),
        DVector::from_column_slice(&[0.1, 0.6, 0.7]),
    ];
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        moments
            .mean
            .dot(&ctx[b])
            .total_cmp(&moments.mean.dot(&ctx[a]))
    });
    (moments, ctx, order)
}

#[test]
fn good_event_bound_holds_by_simulation() {
    let sigma = 0.3;
    let (m, ctx, order) = fixture(30, 1);
    let nus = event_nus(&m, &ctx, sigma, order, Standardization::SquareRoot).unwrap();
    let bound = good_event_lower_bound(&nus.nus()).unwrap();
    let draws = draw_estimates(&m, sigma, 100_000, 2);
    let [a, b, c] = order;
    let hits = draws
        .iter()
        .filter(|th| th.dot(&ctx[a]) > th.dot(&ctx[b]) && th.dot(&ctx[b]) > th.dot(&ctx[c]))
        .count();
    let p = hits as f64 / draws.len() as f64;
    assert!(
        bound > 0.0,
        "fixture should give a nonvacuous bound, got {bound}"
    );
    assert!(p >= bound, "empirical {p} < bound {bound}");
}

#[test]
fn bad_event_bound_holds_by_simulation() {
    let sigma = 0.5;
    let (m, ctx, order) = fixture(30, 3);
    let nus = event_nus(&m, &ctx, sigma, order, Standardization::SquareRoot).unwrap();
    let tilde = nus.bad_pair_nus().map(|v| v.unwrap());
    let bound = bad_event_lower_bound(&tilde).unwrap();
    let draws = draw_estimates(&m, sigma, 100_000, 4);
    let [a, b, c] = order;
    let n = draws.len() as f64;
    let p12 = draws
        .iter()
        .filter(|th| th.dot(&ctx[b]) > th.dot(&ctx[a]))
        .count() as f64
        / n;
    let p23 = draws
        .iter()
        .filter(|th| th.dot(&ctx[c]) > th.dot(&ctx[b]))
        .count() as f64
        / n;
    assert!(
        bound > 0.0,
        "fixture should give a nonvacuous bound, got {bound} from {tilde:?}"
    );
    assert!(
        p12.min(p23) >= bound,
        "empirical {p12}, {p23} vs bound {bound}"
    );
    // ν̃ standardizes the difference exactly, so each flip probability is a tail value
    for (p, t) in [(p12, tilde[0]), (p23, tilde[1])] {
        let exact = upper_tail(t);
        assert!(
            (p - exact).abs() <= 4.0 * (exact * (1.0 - exact) / n).sqrt(),
            "{p} vs {exact}"
        );
    }
}

#[test]
fn tail_sandwich_on_dense_grid() {
    for k in 1..=600 {
        let t = k as f64 / 100.0;
        let (lo, hi) = gaussian_tail_bounds(t).unwrap();
        let exact = upper_tail(t);
        assert!(lo <= exact && exact <= hi, "t = {t}");
    }
}

proptest! {
    #[test]
    fn sigma_tilde_drops_the_cross_term(
        design in prop::collection::vec(0.0f64..1.0, 30),
        contexts in prop::collection::vec(0.0f64..1.0, 9),
        theta in prop::collection::vec(0.05f64..1.0, 3),
        sigma in 0.01f64..1.0,
    ) {
        let x = DMatrix::from_row_slice(10, 3, &design);
        let m = posterior_moments(&x, 0.1, &DVector::from_column_slice(&theta)).unwrap();
        let ctx: Vec<DVector<f64>> = contexts.chunks(3).map(DVector::from_column_slice).collect();
        let nus = event_nus(&m, &ctx, sigma, [0, 1, 2], Standardization::SquareRoot).unwrap();
        for p in nus.pairs {
            let (a, b) = p.pair;
            let cross = ctx[a].dot(&(&m.scale * &ctx[b]));
            let expected = p.sigma - 2.0 * sigma * sigma * cross;
            prop_assert!((p.sigma_tilde - expected).abs() <= 1e-12 * p.sigma.max(1.0));
            prop_assert_eq!(p.sigma_tilde <= p.sigma, cross >= 0.0 || p.sigma_tilde == p.sigma);
        }
    }
}

/// Nonnegative contexts do not make the cross term nonnegative: the ridge
/// covariance of a uniform design has negative off-diagonal entries.
#[test]
fn sigma_tilde_can_exceed_sigma_on_uniform_contexts() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(300, 3, |_, _| rng.random_range(0.0..1.0));
    let m = posterior_moments(&x, 0.1, &DVector::from_element(3, 0.5)).unwrap();
    let ctx = vec![
        DVector::from_column_slice(&[1.0, 0.0, 0.0]),
        DVector::from_column_slice(&[0.0, 1.0, 0.0]),
        DVector::from_column_slice(&[0.0, 0.0, 1.0]),
    ];
    let nus = event_nus(&m, &ctx, 0.05, [0, 1, 2], Standardization::SquareRoot).unwrap();
    assert!(nus.pairs.iter().all(|p| p.sigma_tilde > p.sigma));
}
