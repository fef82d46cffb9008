use dickman::dickman::certified_d1_identity;
use dickman::metrics::{reference_depth, reference_oracle, smooth_distance_lower, wasserstein1_with_seed};
use dickman::testfn::smooth_dictionary;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(0x3e7), failure_persistence: None, ..ProptestConfig::default() }
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..200).prop_flat_map(|m| (vec(-50.0f64..50.0, m), vec(-50.0f64..50.0, m), vec(0.0f64..10.0, m)))
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn triangle_inequality((a, b, c) in triple()) {
        let ab = wasserstein1_with_seed(&a, &b, 1).unwrap().value;
        let bc = wasserstein1_with_seed(&b, &c, 1).unwrap().value;
        let ac = wasserstein1_with_seed(&a, &c, 1).unwrap().value;
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn scale_equivariance((a, b, _) in triple(), lambda in 0.01f64..100.0) {
        let base = wasserstein1_with_seed(&a, &b, 2).unwrap().value;
        let sa: Vec<f64> = a.iter().map(|x| lambda * x).collect();
        let sb: Vec<f64> = b.iter().map(|x| lambda * x).collect();
        let scaled = wasserstein1_with_seed(&sa, &sb, 2).unwrap().value;
        prop_assert!((scaled - lambda * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
    }

    #[test]
    fn smooth_lower_bound_below_w1((a, b, _) in triple()) {
        let dict = smooth_dictionary(&[-10.0, 0.0, 10.0]);
        let w = wasserstein1_with_seed(&a, &b, 3).unwrap();
        let s = smooth_distance_lower(&a, &b, &dict).unwrap();
        prop_assert!(s.value <= w.value + 4.0 * (w.stderr.powi(2) + s.stderr.powi(2)).sqrt() + 1e-12);
    }

    #[test]
    fn certified_reference_matches_closed_form(theta in 0.05f64..10.0, k in 1i32..8) {
        let eps = 10f64.powi(-k);
        let depth = reference_depth(theta, eps).unwrap();
        let closed = certified_d1_identity(theta, depth);
        prop_assert!(closed <= eps);
        prop_assert!(depth == 0 || certified_d1_identity(theta, depth - 1) > eps);
        prop_assert!(certified_d1_identity(theta, depth + 1) < closed);
    }
}

#[test]
fn oracle_batch_carries_certificate() {
    for theta in [0.5, 1.0, 3.0] {
        let b = reference_oracle(theta, 1e-4, 1000, 5).unwrap();
        assert_eq!(b.certified_d1, Some(certified_d1_identity(theta, b.depth)));
        assert!(b.certified_d1.unwrap() <= 1e-4);
    }
}

#[test]
fn smooth_lower_bound_below_w1_on_dickman_batches() {
    let a = reference_oracle(1.0, 1e-3, 50_000, 1).unwrap().values;
    let b = dickman::dickman::sample_dtheta(1.0, 3, 50_000, 2).unwrap().values;
    let dict = smooth_dictionary(&[0.5, 1.0, 1.5]);
    let w = wasserstein1_with_seed(&a, &b, 3).unwrap();
    let s = smooth_distance_lower(&a, &b, &dict).unwrap();
    assert!(s.value > 0.0);
    assert!(s.value <= w.value + 4.0 * (w.stderr.powi(2) + s.stderr.powi(2)).sqrt());
}
