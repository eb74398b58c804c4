mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siegel_core::famalg::{
    classify_degree, compose, evaluate_at_parameter, invert_parameter, normalize_second_coefficient,
    reverse_parameter_unchecked, DegreeClass, PerturbationFamily,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn degree_law(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = rng.gen_range(4..=12);
        let z0 = rc(&mut rng);
        let w0 = rc(&mut rng);
        let v0 = rc(&mut rng);
        let (f, g) = if rng.gen_bool(0.5) {
            (essentially_quadratic(&mut rng, z0, w0, order), sub_quadratic(&mut rng, w0, v0, order))
        } else {
            (sub_quadratic(&mut rng, z0, w0, order), essentially_quadratic(&mut rng, w0, v0, order))
        };
        let h = compose(&g, &f).unwrap();
        prop_assert!(classify_degree(&h).has(DegreeClass::EssentiallyQuadratic));
    }

    #[test]
    fn composition_commutes_with_evaluation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = rng.gen_range(2..=12);
        let z0 = rc(&mut rng);
        let w0 = rc(&mut rng);
        let f = essentially_quadratic(&mut rng, z0, w0, order);
        let v0 = rc(&mut rng);
        let g = sub_quadratic(&mut rng, w0, v0, order);
        let a = rc(&mut rng);
        let h = evaluate_at_parameter(&compose(&g, &f).unwrap(), a);
        let want = substitute(&evaluate_at_parameter(&g, a), &evaluate_at_parameter(&f, a), order);
        let scale = want.iter().map(|x| x.norm()).fold(1.0, f64::max);
        for (x, y) in h.iter().zip(&want) {
            prop_assert!((x - y).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn inversion_is_an_involution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = rng.gen_range(2..=12);
        let zero = c(0.0, 0.0);
        let f = normalize_second_coefficient(&essentially_quadratic(&mut rng, zero, zero, order)).unwrap();
        let g = invert_parameter(&f).unwrap();
        for k in 1..=order {
            prop_assert!(g.coeff(k).degree().is_none_or(|d| d + 1 <= k));
        }
        prop_assert_eq!(reverse_parameter_unchecked(&g), f);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (z0, w0) = (rc(&mut rng), rc(&mut rng));
        let f = essentially_quadratic(&mut rng, z0, w0, 8);
        let s = serde_json::to_string(&f).unwrap();
        let back: PerturbationFamily = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, f);
    }
}
