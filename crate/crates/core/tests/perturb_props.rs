mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siegel_core::famalg::{classify_degree, DegreeClass};
use siegel_core::perturb::{
    build_perturbation, cycle_iterate_family, expand_family_at, observability_time, relation_residuals,
    verify_vanishing, PointRole,
};
use siegel_core::polydyn::{critical_orbit_partition, find_cycles, ComplexPoly, CycleClass};

fn irrational_multiplier(rng: &mut ChaCha8Rng) -> Complex64 {
    loop {
        let n: u32 = rng.gen_range(2..200);
        let s = (n as f64).sqrt();
        if s.fract() != 0.0 {
            return Complex64::from_polar(1.0, std::f64::consts::TAU * s.fract());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn construction_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = rng.gen_range(0..3);
        let p = if kind == 0 {
            let l = irrational_multiplier(&mut rng);
            ComplexPoly::new(vec![c(0.0, 0.0), l, c(1.0, 0.0)]).unwrap()
        } else if kind == 1 {
            // post-critically finite: basilica, Chebyshev, and the z^2 + i dendrite
            let cpar = [c(-1.0, 0.0), c(-2.0, 0.0), c(0.0, 1.0)][rng.gen_range(0..3)];
            ComplexPoly::new(vec![cpar, c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
        } else {
            let cpar = c(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
            ComplexPoly::new(vec![cpar, c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
        };
        let cycles = find_cycles(&p, 2).unwrap();
        let orbits = critical_orbit_partition(&p, 200, &Default::default()).unwrap();
        let t = observability_time(&orbits);
        let plan = build_perturbation(&p, &cycles, &orbits, t, None).unwrap();
        prop_assert!(plan.n > p.degree());
        prop_assert!(verify_vanishing(&plan).is_ok());
        for f in &plan.factors {
            let fam = expand_family_at(&plan, f.root, 8).unwrap();
            let want = match f.role {
                PointRole::B1 => DegreeClass::Quadratic,
                PointRole::B2 => DegreeClass::SubQuadratic,
            };
            prop_assert!(classify_degree(&fam).has(want));
        }
        let samples = [c(0.01, 0.0), c(0.0, 0.02), c(-0.015, 0.01)];
        for cyc in cycles.iter().filter(|c| c.class != CycleClass::Repelling) {
            let z1 = cyc.points[0];
            let lambda0 = plan.iterate_a(c(0.0, 0.0), z1, cyc.period).1;
            for &a in &samples {
                for &z in &cyc.points {
                    prop_assert!((plan.eval_a(a, z).0 - p.eval(z)).norm() < 1e-10);
                }
                prop_assert!((plan.iterate_a(a, z1, cyc.period).1 - lambda0).norm() < 1e-10);
            }
            if cyc.class == CycleClass::IrrationallyIndifferent {
                let fam = cycle_iterate_family(&plan, cyc, 8).unwrap();
                prop_assert!(classify_degree(&fam).has(DegreeClass::EssentiallyQuadratic));
            }
        }
        for &a in &samples {
            prop_assert!(relation_residuals(&plan, &orbits, a).iter().all(|r| *r < 1e-8));
        }
    }
}
