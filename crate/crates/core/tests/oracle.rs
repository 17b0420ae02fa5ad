mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_force, engine, gradient_gap, oracle_gap, random_instance};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn classify_matches_scalar_reference(seed in any::<u64>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 10, 10);
        let gap = oracle_gap(&inst);
        prop_assert!(gap.is_some(), "class disagreement on {inst:?}");
        prop_assert!(gap.unwrap() <= 1e-12, "score gap {:e}", gap.unwrap());
    }

    #[test]
    fn analytic_gradient_matches_central_difference(seed in any::<u64>()) {
        let gap = gradient_gap(seed, 1e-5, 1e-12);
        prop_assert!(gap <= 1e-4, "relative error {gap:e}");
    }
}

// Seed 0 draws m=4, n=3, fused, top 2/2/4, with captions.
#[test]
fn frozen_fused_instance() {
    let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(0), 6, 4);
    let want = [0.6803096149833608, -0.14534934322189672, 0.42083273484813];
    let (reference, class) = brute_force(&inst);
    let got = engine(&inst);
    assert_eq!((got.predicted_class, class), (0, 0));
    for ((a, b), w) in got.scores.iter().zip(&reference).zip(want) {
        assert!((a - w).abs() <= 1e-12 && (b - w).abs() <= 1e-12, "{a} {b} {w}");
    }
}
