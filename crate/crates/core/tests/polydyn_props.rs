mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siegel_core::polydyn::{
    self, find_cycles, fs_report, iterate_derivative_expanded, parabolic_structure, ComplexPoly, CycleClass,
    FsConfig,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cycles_close_and_satisfy_chain_rule(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(2..=3);
        let p = rcomplex_poly(&mut rng, d);
        let q_max = if d == 2 { 4 } else { 3 };
        let cycles = find_cycles(&p, q_max).unwrap();
        for cyc in &cycles {
            let expanded = iterate_derivative_expanded(&p, cyc);
            prop_assert!((expanded - cyc.multiplier).norm() <= 1e-8 * cyc.multiplier.norm().max(1.0));
            let last = *cyc.points.last().unwrap();
            prop_assert!((p.eval(last) - cyc.points[0]).norm() < 1e-6 * (1.0 + cyc.points[0].norm()));
            for k in 1..cyc.period {
                let w = p.iterate_with_derivative(cyc.points[0], k).0;
                prop_assert!((w - cyc.points[0]).norm() > 1e-6);
            }
        }
        // every root of P^q(z) - z belongs to exactly one cycle of period dividing q
        for q in 1..=q_max {
            let count: usize = cycles
                .iter()
                .filter(|c| q % c.period == 0)
                .map(|c| c.period * c.root_multiplicity)
                .sum();
            prop_assert_eq!(count, d.pow(q as u32));
        }
    }

    #[test]
    fn horner_matches_naive_powers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(2..=8);
        let p = rcomplex_poly(&mut rng, d);
        let z = rc(&mut rng);
        let naive: Complex64 = p.coeffs().iter().enumerate().map(|(k, ck)| ck * z.powu(k as u32)).sum();
        let scale: f64 = p.coeffs().iter().map(|x| x.norm()).sum();
        prop_assert!((p.eval(z) - naive).norm() < 1e-12 * scale);
    }

    #[test]
    fn index_inequalities_hold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rcomplex_poly(&mut rng, 3);
        let cfg = FsConfig { q_max: 3, ..FsConfig::default() };
        let r = fs_report(&p, &cfg).unwrap();
        prop_assert_eq!(r.gamma, r.gamma_irr + r.gamma_ap);
        prop_assert_eq!(r.n_inf, r.n_inf_j + r.n_inf_f);
        prop_assert!(r.alarms.is_empty(), "{:?}", r.alarms);
        prop_assert!(r.gamma <= r.n_inf && r.gamma_irr <= r.n_inf_j);
    }

    #[test]
    fn petal_count_divides_tangency(s in 1u64..6, t in 2u64..7) {
        prop_assume!(num_integer::gcd(s, t) == 1 && s < t);
        let lambda = Complex64::from_polar(1.0, std::f64::consts::TAU * s as f64 / t as f64);
        let p = ComplexPoly::new(vec![c(0.0, 0.0), lambda, c(1.0, 0.0)]).unwrap();
        let cycles = find_cycles(&p, 1).unwrap();
        let zero = cycles.iter().find(|c| c.points[0].norm() < 1e-6).unwrap();
        prop_assert_eq!(zero.class, CycleClass::RationallyIndifferent);
        let pd = parabolic_structure(&p, zero, 64).unwrap();
        prop_assert_eq!(pd.t, t);
        prop_assert_eq!(pd.m % t as usize, 0);
        prop_assert_eq!(polydyn::cycle_weight(zero).unwrap(), pd.r);
    }
}
