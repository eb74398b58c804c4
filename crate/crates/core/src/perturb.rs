//! The perturbation `P_a = P + a Q` of a polynomial, vanishing to prescribed
//! orders on its non-repelling cycles and critical orbits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::famalg::{self, DegreeClass, FamilyError, ParamPoly, PerturbationFamily};
use crate::linearizer::{self, ProbeConfig};
use crate::polydyn::{ComplexPoly, CriticalOrbitRecord, CycleClass, CycleRecord};
use crate::series;

/// Points closer than this are the same point of `B`.
pub const SAME_POINT_TOL: f64 = 1e-9;
/// Distinct points of `B` closer than this collide.
pub const COLLISION_TOL: f64 = 1e-6;
/// Vanishing-order test threshold relative to the coefficient scale.
pub const VANISHING_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("point {b1} of B1 is within {dist:.3e} of {b2} in B2")]
    PointCollision { b1: Complex64, b2: Complex64, dist: f64 },
    #[error("N = {n} must exceed the degree {degree} and every tangency index (max {tau})")]
    InvalidN { n: usize, degree: usize, tau: usize },
    #[error("parabolic cycle of period {0} lacks petal data")]
    MissingParabolicData(usize),
    #[error("expected {want:?} at {z0}, found {got:?}")]
    ClassificationViolation { z0: Complex64, want: DegreeClass, got: DegreeClass },
    #[error("vanishing order at {b}: {detail}")]
    VanishingOrder { b: Complex64, detail: String },
    #[error("cycle is not irrationally indifferent")]
    NotIrrational,
    #[error("cycle point {0} is not in B")]
    CycleNotInB(Complex64),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointRole {
    B1,
    B2,
}

/// One root of `Q` with its exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QFactor {
    pub root: Complex64,
    pub exponent: usize,
    pub role: PointRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub b1: Vec<Complex64>,
    pub b2: Vec<Complex64>,
    pub t: usize,
    pub n: usize,
    /// `Q = prod (z - root)^exponent`.
    pub factors: Vec<QFactor>,
    /// Monomial coefficients of `Q`.
    pub q_coeffs: Vec<Complex64>,
    /// Coefficients of the unperturbed `P`.
    pub p_coeffs: Vec<Complex64>,
    pub flags: Vec<String>,
}

/// Smallest `T` covering every finiteness and equivalence witness.
pub fn observability_time(orbits: &[CriticalOrbitRecord]) -> usize {
    let mut t = 0;
    for o in orbits {
        if let Some((m, n)) = o.finite_witness {
            t = t.max(m).max(n);
        }
        for &(_, _, m, n) in &o.equivalence_witnesses {
            t = t.max(m).max(n);
        }
    }
    t
}

fn max_tangency(cycles: &[CycleRecord]) -> Result<usize, PerturbError> {
    let mut tau = 0;
    for c in cycles.iter().filter(|c| c.class == CycleClass::RationallyIndifferent) {
        let pd = c.parabolic.ok_or(PerturbError::MissingParabolicData(c.period))?;
        tau = tau.max(pd.tau);
    }
    Ok(tau)
}

/// Default `N = max(d, max tau) + 1`.
pub fn default_n(p: &ComplexPoly, cycles: &[CycleRecord]) -> Result<usize, PerturbError> {
    Ok(p.degree().max(max_tangency(cycles)?) + 1)
}

/// Assembles `B1`, `B2` and `Q` and verifies the vanishing orders.
pub fn build_perturbation(
    p: &ComplexPoly,
    cycles: &[CycleRecord],
    orbits: &[CriticalOrbitRecord],
    t: usize,
    n_override: Option<usize>,
) -> Result<PerturbationPlan, PerturbError> {
    let tau = max_tangency(cycles)?;
    let d = p.degree();
    let n = match n_override {
        Some(n) if n <= d || n <= tau => return Err(PerturbError::InvalidN { n, degree: d, tau }),
        Some(n) => n,
        None => d.max(tau) + 1,
    };
    let plan = build_unchecked(p, cycles, orbits, t, n)?;
    verify_vanishing(&plan)?;
    Ok(plan)
}

/// Same construction with any `N >= 1`; used to build deliberately broken plans.
pub fn build_unchecked(
    p: &ComplexPoly,
    cycles: &[CycleRecord],
    orbits: &[CriticalOrbitRecord],
    t: usize,
    n: usize,
) -> Result<PerturbationPlan, PerturbError> {
    let mut b1 = Vec::new();
    let mut b2_raw = Vec::new();
    for c in cycles {
        match c.class {
            CycleClass::Repelling => {}
            CycleClass::IrrationallyIndifferent => {
                b1.push(c.points[0]);
                b2_raw.extend(c.points[1..].iter().copied());
            }
            _ => b2_raw.extend(c.points.iter().copied()),
        }
    }
    for o in orbits {
        for &(c, _) in &o.representatives {
            let mut z = c;
            b2_raw.push(z);
            for _ in 0..t {
                z = p.eval(z);
                b2_raw.push(z);
            }
        }
    }
    let mut flags = Vec::new();
    let mut b2: Vec<Complex64> = Vec::new();
    'outer: for z in b2_raw {
        for &w in &b1 {
            let dist = (z - w).norm();
            if dist < COLLISION_TOL * (1.0 + w.norm()) {
                return Err(PerturbError::PointCollision { b1: w, b2: z, dist });
            }
        }
        for w in &b2 {
            let dist = (z - w).norm();
            if dist < SAME_POINT_TOL * (1.0 + w.norm()) {
                continue 'outer;
            }
            if dist < COLLISION_TOL * (1.0 + w.norm()) {
                flags.push(format!("merged {z} into {w} at distance {dist:.3e}"));
                continue 'outer;
            }
        }
        b2.push(z);
    }
    let mut factors: Vec<QFactor> = b1.iter().map(|&root| QFactor { root, exponent: 2, role: PointRole::B1 }).collect();
    factors.extend(b2.iter().map(|&root| QFactor { root, exponent: n, role: PointRole::B2 }));
    let mut q = vec![Complex64::new(1.0, 0.0)];
    for f in &factors {
        for _ in 0..f.exponent {
            q = mul_linear(&q, f.root);
        }
    }
    Ok(PerturbationPlan { b1, b2, t, n, factors, q_coeffs: q, p_coeffs: p.coeffs().to_vec(), flags })
}

/// `q(z) (z - r)`.
fn mul_linear(q: &[Complex64], r: Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); q.len() + 1];
    for (k, &c) in q.iter().enumerate() {
        out[k + 1] += c;
        out[k] -= c * r;
    }
    out
}

/// Checks that the expanded `Q` vanishes to the constructed order at each root.
pub fn verify_vanishing(plan: &PerturbationPlan) -> Result<(), PerturbError> {
    for f in &plan.factors {
        let b = f.root;
        let scale: f64 = plan
            .q_coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm() * b.norm().max(1.0).powi(k as i32))
            .sum();
        // Q^{(j)}(b) / j!
        let tay = series::taylor_shift(&plan.q_coeffs, b);
        let tol = VANISHING_TOL * scale;
        if let Some(j) = (0..f.exponent).find(|&j| tay[j].norm() > tol) {
            return Err(PerturbError::VanishingOrder {
                b,
                detail: format!("derivative {j} = {:.3e} exceeds {tol:.3e}", tay[j].norm()),
            });
        }
        if tay[f.exponent].norm() <= tol {
            return Err(PerturbError::VanishingOrder { b, detail: format!("derivative {} vanishes", f.exponent) });
        }
    }
    Ok(())
}

impl PerturbationPlan {
    pub fn p(&self) -> ComplexPoly {
        ComplexPoly::new(self.p_coeffs.clone()).expect("stored polynomial is valid")
    }

    /// `Q(z)` and `Q'(z)`.
    pub fn q_eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for &c in self.q_coeffs.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        (v, d)
    }

    /// `P_a(z)` and `P_a'(z)`.
    pub fn eval_a(&self, a: Complex64, z: Complex64) -> (Complex64, Complex64) {
        let (p, dp) = self.p().eval_with_derivative(z);
        let (q, dq) = self.q_eval(z);
        (p + a * q, dp + a * dq)
    }

    /// `P_a^n(z)` and its derivative.
    pub fn iterate_a(&self, a: Complex64, z: Complex64, n: usize) -> (Complex64, Complex64) {
        let p = self.p();
        let mut w = z;
        let mut d = Complex64::new(1.0, 0.0);
        for _ in 0..n {
            let (pv, dp) = p.eval_with_derivative(w);
            let (qv, dq) = self.q_eval(w);
            d *= dp + a * dq;
            w = pv + a * qv;
        }
        (w, d)
    }

    /// Factor of `B` within `SAME_POINT_TOL` of `z0`.
    pub fn role_of(&self, z0: Complex64) -> Option<&QFactor> {
        self.factors.iter().find(|f| (f.root - z0).norm() < COLLISION_TOL * (1.0 + z0.norm()))
    }

    /// Taylor coefficients of `Q` at `z0` through order `m`, from the factored form.
    ///
    /// The factor belonging to `z0` contributes an exact `w^e`.
    pub fn q_local(&self, z0: Complex64, m: usize) -> Vec<Complex64> {
        let own = self.role_of(z0).map(|f| f.root);
        let mut acc = vec![Complex64::new(0.0, 0.0); m + 1];
        acc[0] = Complex64::new(1.0, 0.0);
        for f in &self.factors {
            let shift = if Some(f.root) == own { Complex64::new(0.0, 0.0) } else { z0 - f.root };
            let lin = [shift, Complex64::new(1.0, 0.0)];
            for _ in 0..f.exponent {
                acc = series::mul(&acc, &lin, m);
            }
        }
        acc
    }

    /// Largest `|Q|` on `|z| = r`, sampled.
    pub fn q_norm_on_circle(&self, r: f64, samples: usize) -> f64 {
        (0..samples)
            .map(|j| self.q_eval(Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / samples as f64)).0.norm())
            .fold(0.0, f64::max)
    }
}

/// Local family `f_n(a) = (P^{(n)}(z_0) + a Q^{(n)}(z_0)) / n!` with the
/// degree contract checked on `B`.
pub fn expand_family_at(plan: &PerturbationPlan, z0: Complex64, m: usize) -> Result<PerturbationFamily, PerturbError> {
    let role = plan.role_of(z0).copied();
    let z0 = role.map(|f| f.root).unwrap_or(z0);
    let p_loc = plan.p().local_series(z0, m);
    let q_loc = plan.q_local(z0, m);
    let coeffs: Vec<ParamPoly> = p_loc.iter().zip(&q_loc).map(|(&p, &q)| ParamPoly::linear(p, q)).collect();
    let fam = PerturbationFamily::new(z0, m, coeffs)?;
    if let Some(f) = role {
        let want = match f.role {
            PointRole::B1 => DegreeClass::Quadratic,
            PointRole::B2 => DegreeClass::SubQuadratic,
        };
        let cls = famalg::classify_degree(&fam);
        if !cls.has(want) {
            return Err(PerturbError::ClassificationViolation { z0, want, got: cls.class });
        }
    }
    Ok(fam)
}

/// Family of `P_a^q` at the cycle's representative in `B1`.
pub fn cycle_iterate_family(plan: &PerturbationPlan, cycle: &CycleRecord, m: usize) -> Result<PerturbationFamily, PerturbError> {
    if cycle.class != CycleClass::IrrationallyIndifferent {
        return Err(PerturbError::NotIrrational);
    }
    let mut acc: Option<PerturbationFamily> = None;
    for &z in &cycle.points {
        if plan.role_of(z).is_none() {
            return Err(PerturbError::CycleNotInB(z));
        }
        let local = expand_family_at(plan, z, m)?;
        acc = Some(match acc {
            None => local,
            Some(inner) => famalg::compose(&local, &inner)?,
        });
    }
    let fam = acc.ok_or(PerturbError::NotIrrational)?;
    let cls = famalg::classify_degree(&fam);
    if !cls.has(DegreeClass::EssentiallyQuadratic) {
        return Err(PerturbError::ClassificationViolation {
            z0: fam.base_point(),
            want: DegreeClass::EssentiallyQuadratic,
            got: cls.class,
        });
    }
    Ok(fam)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceConfig {
    /// Parameters before scaling by `1 / max |Q|` on the reference circle.
    pub a_samples: Vec<Complex64>,
    /// Radius of the reference circle `|z| = r` for the scaling.
    pub reference_radius: f64,
    /// Largest probe radius.
    pub probe_r_max: f64,
    pub probe_points: usize,
    pub probe: ProbeConfig,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        Self {
            a_samples: vec![
                Complex64::new(0.1, 0.0),
                Complex64::new(0.0, 0.1),
                Complex64::new(-0.2, 0.0),
                Complex64::new(0.05, -0.05),
            ],
            reference_radius: 1.0,
            probe_r_max: 0.5,
            probe_points: 20,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceSample {
    pub a: Complex64,
    /// `max_k |P_a(z_k) - P(z_k)|` over the cycle.
    pub cycle_residual: f64,
    /// `|(P_a^q)'(z_1) - (P^q)'(z_1)|`.
    pub multiplier_residual: f64,
    pub probe_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub samples: Vec<PersistenceSample>,
    /// `max |Q|` on the reference circle used to scale the samples.
    pub q_norm: f64,
    pub reference_radius: f64,
    /// Largest `|a|` actually sampled.
    pub sampling_radius: f64,
    pub unperturbed_probe_radius: f64,
    pub max_multiplier_residual: f64,
    pub max_cycle_residual: f64,
}

/// Fixedness of the cycle and of its multiplier along `P_a`, plus orbit probes.
pub fn persistence_probe(plan: &PerturbationPlan, cycle: &CycleRecord, cfg: &PersistenceConfig) -> PersistenceReport {
    let q_norm = plan.q_norm_on_circle(cfg.reference_radius, 256);
    let scale = if q_norm > 0.0 { 1.0 / q_norm } else { 1.0 };
    let z1 = cycle.points[0];
    let q = cycle.period;
    let zero = Complex64::new(0.0, 0.0);
    let lambda0 = plan.iterate_a(zero, z1, q).1;
    let grid = linearizer::radius_grid(cfg.probe_r_max, cfg.probe_points);
    let escape = 2.0 * plan.p().escape_radius();
    let probe = |a: Complex64| {
        linearizer::siegel_orbit_probe(
            |w| plan.iterate_a(a, z1 + w, q).0 - z1,
            &grid,
            &ProbeConfig { escape, ..cfg.probe },
        )
        .in_radius
    };
    let unperturbed = probe(zero);
    let samples: Vec<PersistenceSample> = cfg
        .a_samples
        .iter()
        .map(|&a0| {
            let a = a0 * scale;
            let cycle_residual = cycle
                .points
                .iter()
                .map(|&z| (plan.eval_a(a, z).0 - plan.eval_a(zero, z).0).norm())
                .fold(0.0, f64::max);
            let multiplier_residual = (plan.iterate_a(a, z1, q).1 - lambda0).norm();
            PersistenceSample { a, cycle_residual, multiplier_residual, probe_radius: probe(a) }
        })
        .collect();
    PersistenceReport {
        q_norm,
        reference_radius: cfg.reference_radius,
        sampling_radius: samples.iter().map(|s| s.a.norm()).fold(0.0, f64::max),
        unperturbed_probe_radius: unperturbed,
        max_multiplier_residual: samples.iter().map(|s| s.multiplier_residual).fold(0.0, f64::max),
        max_cycle_residual: samples.iter().map(|s| s.cycle_residual).fold(0.0, f64::max),
        samples,
    }
}

/// `|P_a^m(c_i) - P_a^n(c_j)|` for every witness recorded in `orbits`.
pub fn relation_residuals(plan: &PerturbationPlan, orbits: &[CriticalOrbitRecord], a: Complex64) -> Vec<f64> {
    let mut out = Vec::new();
    for o in orbits {
        let c0 = o.representatives[0].0;
        if let Some((m, n)) = o.finite_witness {
            out.push((plan.iterate_a(a, c0, m).0 - plan.iterate_a(a, c0, n).0).norm());
        }
        for &(i, j, m, n) in &o.equivalence_witnesses {
            let (ci, cj) = (o.representatives[i].0, o.representatives[j].0);
            out.push((plan.iterate_a(a, ci, m).0 - plan.iterate_a(a, cj, n).0).norm());
        }
    }
    out
}
