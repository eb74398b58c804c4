mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siegel_core::famalg::{invert_parameter, normalize_second_coefficient, ParamPoly, PerturbationFamily};
use siegel_core::linearizer::{
    formal_linearize, formal_linearize_family, koenigs_linearize, max_principle_check, resubstitution_residual,
    TruncatedSeries,
};

fn random_germ(rng: &mut ChaCha8Rng, lambda: Complex64, order: usize, odd: bool) -> TruncatedSeries {
    let mut v = vec![c(0.0, 0.0); order + 1];
    v[1] = lambda;
    for (k, x) in v.iter_mut().enumerate().skip(2).take(5) {
        if !odd || k % 2 == 1 {
            *x = rc(rng);
        }
    }
    TruncatedSeries::new(v).unwrap()
}

/// Multiplier with rotation number `frac(sqrt(n))`, a bounded-type irrational.
fn quadratic_irrational_multiplier(rng: &mut ChaCha8Rng) -> Complex64 {
    loop {
        let n: u32 = rng.gen_range(2..200);
        let s = (n as f64).sqrt();
        if s.fract() != 0.0 {
            return Complex64::from_polar(1.0, std::f64::consts::TAU * s.fract());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resubstitution_is_small(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = if rng.gen_bool(0.5) {
            quadratic_irrational_multiplier(&mut rng)
        } else {
            Complex64::from_polar(rng.gen_range(0.2..0.9), rng.gen_range(0.0..std::f64::consts::TAU))
        };
        let order = rng.gen_range(5..40);
        let f = random_germ(&mut rng, lambda, order, false);
        let r = formal_linearize(&f, order).unwrap();
        prop_assert!(r.residual < 1e-8, "residual {}", r.residual);
        prop_assert!(resubstitution_residual(f.coeffs(), &r.h) < 1e-8);
    }

    #[test]
    fn koenigs_matches_recursion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = Complex64::from_polar(rng.gen_range(0.2..0.8), rng.gen_range(0.0..std::f64::consts::TAU));
        let order = rng.gen_range(2..=20);
        let f = random_germ(&mut rng, lambda, order, false);
        let a = formal_linearize(&f, order).unwrap();
        let b = koenigs_linearize(&f, order, None).unwrap();
        for (x, y) in a.h.iter().zip(&b.h) {
            prop_assert!((x - y).norm() <= 1e-8 * x.norm().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn odd_germs_have_odd_linearizers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = quadratic_irrational_multiplier(&mut rng);
        let f = random_germ(&mut rng, lambda, 30, true);
        let r = formal_linearize(&f, 30).unwrap();
        for k in (2..=30).step_by(2) {
            prop_assert!(r.h[k].norm() < 1e-12);
        }
    }

    #[test]
    fn family_linearization_commutes_and_obeys_max_principle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = quadratic_irrational_multiplier(&mut rng);
        let order = rng.gen_range(3..=12);
        let zero = c(0.0, 0.0);
        let mut coeffs = vec![ParamPoly::zero(), ParamPoly::constant(lambda), rpoly(&mut rng, Some(1))];
        for n in 3..=order {
            let d = rdeg(&mut rng, n - 2);
            coeffs.push(rpoly(&mut rng, d));
        }
        let f = PerturbationFamily::new(zero, order, coeffs).unwrap();
        let g = invert_parameter(&normalize_second_coefficient(&f).unwrap()).unwrap();
        let h = formal_linearize_family(&g, order).unwrap();
        for k in 1..=order {
            prop_assert!(h.h[k].degree().is_none_or(|d| d < k));
            prop_assert!(max_principle_check(&h.h[k], 1.0, 64).holds);
        }
        for _ in 0..3 {
            let b = c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            prop_assert!(h.commutation_error(&g, b).unwrap() < 1e-8);
        }
    }
}
