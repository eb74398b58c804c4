//! Perturbation families: power series in `z` whose coefficients are
//! polynomials in a parameter `a`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::series::{self, Ring};

/// Default relative tolerance for matching a family's constant term to a base point.
pub const BASE_POINT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("truncation order {0} is below 2")]
    OrderTooLow(usize),
    #[error("coefficient list has {got} entries, expected order + 1 = {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("coefficient f_{0} depends on the parameter")]
    NonConstantLowOrder(usize),
    #[error("constant term {got} does not match base point {want} (distance {dist:e})")]
    BasePointMismatch { got: Complex64, want: Complex64, dist: f64 },
    #[error("linear part vanishes: f_1 = {0}")]
    DegenerateLinearPart(Complex64),
    #[error("family is not essentially quadratic: {0}")]
    NotEssentiallyQuadratic(String),
    #[error("base point {0} is not the origin")]
    NonzeroBasePoint(Complex64),
    #[error("constant term {0} is nonzero, so 0 is not fixed")]
    NonzeroConstantTerm(Complex64),
    #[error("leading coefficient of f_2 vanishes")]
    DegenerateSecondCoefficient,
}

/// Polynomial `c_0 + c_1 a + ... + c_D a^D` stored with trailing zeros trimmed.
#[derive(Clone, PartialEq, Default)]
pub struct ParamPoly {
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for ParamPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParamPoly{:?}", self.coeffs)
    }
}

impl ParamPoly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// `c0 + c1 a`.
    pub fn linear(c0: Complex64, c1: Complex64) -> Self {
        Self::new(vec![c0, c1])
    }

    /// `c a^j`.
    pub fn monomial(c: Complex64, j: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); j + 1];
        v[j] = c;
        Self::new(v)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Exact degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> Option<Complex64> {
        self.coeffs.last().copied()
    }

    /// Value at `a = 0`.
    pub fn constant_term(&self) -> Complex64 {
        self.coeffs.first().copied().unwrap_or_default()
    }

    pub fn eval(&self, a: Complex64) -> Complex64 {
        series::horner(&self.coeffs, a)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Coefficients reversed inside a window of `len` slots: `a^{len-1} p(1/a)`.
    ///
    /// Requires `len > degree`.
    pub fn reversed(&self, len: usize) -> Self {
        assert!(self.coeffs.len() <= len, "degree exceeds reversal window");
        let mut v = vec![Complex64::new(0.0, 0.0); len];
        for (j, c) in self.coeffs.iter().enumerate() {
            v[len - 1 - j] = *c;
        }
        Self::new(v)
    }

    /// Largest coefficient modulus.
    pub fn scale_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl Ring for ParamPoly {
    fn zero_like(&self) -> Self {
        Self::zero()
    }
    fn one_like(&self) -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }
    fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let z = Complex64::new(0.0, 0.0);
        Self::new(
            (0..n)
                .map(|i| {
                    self.coeffs.get(i).copied().unwrap_or(z) + o.coeffs.get(i).copied().unwrap_or(z)
                })
                .collect(),
        )
    }
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }
    fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self::zero();
        }
        let mut v = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Self::new(v)
    }
}

impl Serialize for ParamPoly {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(Self::new(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()))
    }
}

/// Series `f(a, z) = sum_n f_n(a) (z - z_0)^n` truncated at `order`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationFamily {
    #[serde(serialize_with = "ser_c64")]
    base_point: Complex64,
    order: usize,
    coeffs: Vec<ParamPoly>,
}

fn ser_c64<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

#[derive(Deserialize)]
struct RawFamily {
    base_point: [f64; 2],
    order: usize,
    coeffs: Vec<ParamPoly>,
}

impl<'de> Deserialize<'de> for PerturbationFamily {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawFamily::deserialize(d)?;
        let z0 = Complex64::new(raw.base_point[0], raw.base_point[1]);
        Self::new(z0, raw.order, raw.coeffs).map_err(serde::de::Error::custom)
    }
}

impl PerturbationFamily {
    pub fn new(base_point: Complex64, order: usize, coeffs: Vec<ParamPoly>) -> Result<Self, FamilyError> {
        if order < 2 {
            return Err(FamilyError::OrderTooLow(order));
        }
        if coeffs.len() != order + 1 {
            return Err(FamilyError::LengthMismatch { got: coeffs.len(), want: order + 1 });
        }
        for (n, c) in coeffs.iter().enumerate().take(2) {
            if c.degree().unwrap_or(0) > 0 {
                return Err(FamilyError::NonConstantLowOrder(n));
            }
        }
        Ok(Self { base_point, order, coeffs })
    }

    /// Family from explicit `(n, polynomial)` entries, missing ones zero.
    pub fn from_terms(
        base_point: Complex64,
        order: usize,
        terms: &[(usize, ParamPoly)],
    ) -> Result<Self, FamilyError> {
        let mut coeffs = vec![ParamPoly::zero(); order + 1];
        for (n, p) in terms {
            if *n <= order {
                coeffs[*n] = coeffs[*n].add(p);
            }
        }
        Self::new(base_point, order, coeffs)
    }

    /// `lambda z + a z^2` at the origin.
    pub fn quadratic_perturbation(lambda: Complex64, order: usize) -> Result<Self, FamilyError> {
        let one = Complex64::new(1.0, 0.0);
        Self::from_terms(
            Complex64::new(0.0, 0.0),
            order,
            &[(1, ParamPoly::constant(lambda)), (2, ParamPoly::monomial(one, 1))],
        )
    }

    /// Parameter-free series `c_0 + c_1 w + ...` centered at `base_point`.
    pub fn constant_in_parameter(base_point: Complex64, c: &[Complex64], order: usize) -> Result<Self, FamilyError> {
        let coeffs = (0..=order)
            .map(|n| ParamPoly::constant(c.get(n).copied().unwrap_or_default()))
            .collect();
        Self::new(base_point, order, coeffs)
    }

    pub fn base_point(&self) -> Complex64 {
        self.base_point
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[ParamPoly] {
        &self.coeffs
    }

    pub fn coeff(&self, n: usize) -> &ParamPoly {
        &self.coeffs[n]
    }

    /// `d_n` for `n = 0..=order`.
    pub fn degrees(&self) -> Vec<Option<usize>> {
        self.coeffs.iter().map(ParamPoly::degree).collect()
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeffs[0].constant_term()
    }

    pub fn linear_part(&self) -> Complex64 {
        self.coeffs[1].constant_term()
    }

    /// Relative size `|lead(f_n)| / max_j |c_j|` of each nonzero leading coefficient.
    ///
    /// A value near machine epsilon means the recorded degree may be an
    /// artifact of cancellation rather than a genuine nonzero term.
    pub fn leading_coefficient_audit(&self) -> Vec<(usize, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter_map(|(n, p)| p.leading().map(|l| (n, l.norm() / p.scale_norm())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegreeClass {
    Quadratic,
    EssentiallyQuadratic,
    SubQuadratic,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeClassification {
    /// Most specific label.
    pub class: DegreeClass,
    /// Every label that holds, most specific first.
    pub labels: Vec<DegreeClass>,
    /// `(n, d_n)` violating the candidate class when `class` is General.
    pub witness: Option<(usize, Option<usize>)>,
    /// Labels only speak about `2 <= n <= order`.
    pub order: usize,
}

impl DegreeClassification {
    pub fn has(&self, c: DegreeClass) -> bool {
        self.labels.contains(&c)
    }
}

fn lt(d: Option<usize>, bound: usize) -> bool {
    d.is_none_or(|d| d < bound)
}

fn le(d: Option<usize>, bound: usize) -> bool {
    d.is_none_or(|d| d <= bound)
}

/// Degree labels from the exact degrees `d_2 .. d_M`.
pub fn classify_degree(f: &PerturbationFamily) -> DegreeClassification {
    let d = f.degrees();
    let m = f.order;
    let higher = || (3..=m).map(|n| (n, d[n]));
    let mut labels = Vec::new();
    let mut witness = None;
    if d[2] == Some(1) {
        let eq_fail = higher().find(|&(n, dn)| !lt(dn, n - 1));
        match eq_fail {
            None => {
                if higher().all(|(_, dn)| le(dn, 1)) {
                    labels.push(DegreeClass::Quadratic);
                }
                labels.push(DegreeClass::EssentiallyQuadratic);
            }
            Some(w) => witness = Some(w),
        }
    } else if lt(d[2], 1) {
        match higher().find(|&(n, dn)| !lt(dn, n - 1)) {
            None => labels.push(DegreeClass::SubQuadratic),
            Some(w) => witness = Some(w),
        }
    } else {
        witness = Some((2, d[2]));
    }
    if labels.is_empty() {
        labels.push(DegreeClass::General);
    }
    DegreeClassification { class: labels[0], labels, witness, order: m }
}

/// `g ∘ f`, with `f` centered at `z_0` and `g` centered at `f`'s constant term.
///
/// Truncates at the smaller of the two orders.
pub fn compose(g: &PerturbationFamily, f: &PerturbationFamily) -> Result<PerturbationFamily, FamilyError> {
    compose_with_tol(g, f, BASE_POINT_TOL)
}

pub fn compose_with_tol(
    g: &PerturbationFamily,
    f: &PerturbationFamily,
    tol: f64,
) -> Result<PerturbationFamily, FamilyError> {
    let f0 = f.constant_term();
    let w0 = g.base_point;
    let dist = (f0 - w0).norm();
    if dist > tol * w0.norm().max(1.0) {
        return Err(FamilyError::BasePointMismatch { got: f0, want: w0, dist });
    }
    for l in [f.linear_part(), g.linear_part()] {
        if l == Complex64::new(0.0, 0.0) {
            return Err(FamilyError::DegenerateLinearPart(l));
        }
    }
    let m = f.order.min(g.order);
    let mut inner: Vec<ParamPoly> = f.coeffs[..=m].to_vec();
    inner[0] = ParamPoly::zero();
    let h = series::compose(&g.coeffs[..=m], &inner, m);
    PerturbationFamily::new(f.base_point, m, h)
}

/// `b^{k-1} f_k(1/b)` coefficientwise, without checking any preconditions.
///
/// Applying it twice returns the input exactly, provided every `deg f_k <= k - 1`.
pub fn reverse_parameter_unchecked(f: &PerturbationFamily) -> PerturbationFamily {
    let coeffs = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 { p.clone() } else { p.reversed(k) })
        .collect();
    PerturbationFamily { base_point: f.base_point, order: f.order, coeffs }
}

/// `F(b, z) = b^{-1} f(1/b, b z)` for an essentially quadratic family at 0.
pub fn invert_parameter(f: &PerturbationFamily) -> Result<PerturbationFamily, FamilyError> {
    if f.base_point != Complex64::new(0.0, 0.0) {
        return Err(FamilyError::NonzeroBasePoint(f.base_point));
    }
    if !f.coeffs[0].is_zero() {
        return Err(FamilyError::NonzeroConstantTerm(f.constant_term()));
    }
    let class = classify_degree(f);
    if !class.has(DegreeClass::EssentiallyQuadratic) {
        return Err(FamilyError::NotEssentiallyQuadratic(format!(
            "{:?} with witness {:?}",
            class.class, class.witness
        )));
    }
    Ok(reverse_parameter_unchecked(f))
}

/// Rescale `z - z_0` so that the leading coefficient of `f_2` becomes 1.
///
/// With `s = lead(f_2)` the new coefficients are `f_n s^{1-n}`, which is the
/// conjugation `u -> s u` of the centered series.
pub fn normalize_second_coefficient(f: &PerturbationFamily) -> Result<PerturbationFamily, FamilyError> {
    let s = f.coeffs[2].leading().ok_or(FamilyError::DegenerateSecondCoefficient)?;
    let inv = s.inv();
    let z0 = f.base_point;
    let mut coeffs = Vec::with_capacity(f.order + 1);
    let mut scale = Complex64::new(1.0, 0.0);
    for (n, p) in f.coeffs.iter().enumerate() {
        if n == 0 {
            let centered = p.sub(&ParamPoly::constant(z0)).scale(s);
            coeffs.push(centered.add(&ParamPoly::constant(z0)));
        } else {
            if n > 1 {
                scale *= inv;
            }
            coeffs.push(p.scale(scale));
        }
    }
    // f_2 must come out with leading coefficient exactly 1
    if let Some(last) = coeffs[2].coeffs.last_mut() {
        *last = Complex64::new(1.0, 0.0);
    }
    PerturbationFamily::new(z0, f.order, coeffs)
}

/// Coefficients `f_n(a)` of the single-variable series at parameter `a`.
pub fn evaluate_at_parameter(f: &PerturbationFamily, a: Complex64) -> Vec<Complex64> {
    f.coeffs.iter().map(|p| p.eval(a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lam() -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 0.618_033_988_749_895)
    }

    #[test]
    fn zero_polynomial_has_no_degree() {
        assert_eq!(ParamPoly::new(vec![c(0.0, 0.0); 3]).degree(), None);
        assert_eq!(ParamPoly::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).degree(), Some(0));
    }

    #[test]
    fn classification_examples() {
        let q = PerturbationFamily::quadratic_perturbation(lam(), 5).unwrap();
        let cl = classify_degree(&q);
        assert_eq!(cl.class, DegreeClass::Quadratic);
        assert!(cl.has(DegreeClass::EssentiallyQuadratic));

        let free = PerturbationFamily::constant_in_parameter(c(0.0, 0.0), &[c(0.0, 0.0), lam(), c(1.0, 0.0)], 5)
            .unwrap();
        assert_eq!(classify_degree(&free).labels, vec![DegreeClass::SubQuadratic]);

        let one = c(1.0, 0.0);
        let gen = PerturbationFamily::from_terms(
            c(0.0, 0.0),
            5,
            &[
                (1, ParamPoly::constant(lam())),
                (2, ParamPoly::monomial(one, 1)),
                (3, ParamPoly::monomial(one, 2)),
            ],
        )
        .unwrap();
        let cl = classify_degree(&gen);
        assert_eq!(cl.class, DegreeClass::General);
        assert_eq!(cl.witness, Some((3, Some(2))));
    }

    #[test]
    fn constructor_rejects_parameter_dependent_linear_part() {
        let bad = PerturbationFamily::from_terms(c(0.0, 0.0), 3, &[(1, ParamPoly::linear(lam(), c(1.0, 0.0)))]);
        assert_eq!(bad, Err(FamilyError::NonConstantLowOrder(1)));
        assert!(matches!(
            PerturbationFamily::from_terms(c(0.0, 0.0), 1, &[]),
            Err(FamilyError::OrderTooLow(1))
        ));
    }

    #[test]
    fn second_coefficient_of_composition() {
        let l = lam();
        let g = PerturbationFamily::constant_in_parameter(c(0.0, 0.0), &[c(0.0, 0.0), l, c(1.0, 0.0)], 4).unwrap();
        let f = PerturbationFamily::quadratic_perturbation(l, 4).unwrap();
        let h = compose(&g, &f).unwrap();
        // g_1 f_2 + g_2 f_1^2 = lambda a + lambda^2
        let h2 = h.coeff(2);
        assert_eq!(h2.degree(), Some(1));
        assert!((h2.coeffs()[0] - l * l).norm() < 1e-15);
        assert!((h2.coeffs()[1] - l).norm() < 1e-15);
        assert!((h.linear_part() - l * l).norm() < 1e-15);
    }

    #[test]
    fn identity_composition_is_neutral() {
        let f = PerturbationFamily::quadratic_perturbation(lam(), 6).unwrap();
        let id = PerturbationFamily::constant_in_parameter(c(0.0, 0.0), &[c(0.0, 0.0), c(1.0, 0.0)], 6).unwrap();
        assert_eq!(compose(&id, &f).unwrap(), f);
    }

    #[test]
    fn composition_checks_base_points_and_linear_parts() {
        let f = PerturbationFamily::quadratic_perturbation(lam(), 4).unwrap();
        let g = PerturbationFamily::constant_in_parameter(c(1.0, 0.0), &[c(1.0, 0.0), c(1.0, 0.0)], 4).unwrap();
        assert!(matches!(compose(&g, &f), Err(FamilyError::BasePointMismatch { .. })));
        let flat = PerturbationFamily::constant_in_parameter(c(0.0, 0.0), &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], 4)
            .unwrap();
        assert!(matches!(compose(&flat, &f), Err(FamilyError::DegenerateLinearPart(_))));
    }

    #[test]
    fn inversion_examples() {
        let l = lam();
        let one = c(1.0, 0.0);
        let f = PerturbationFamily::from_terms(
            c(0.0, 0.0),
            4,
            &[(1, ParamPoly::constant(l)), (2, ParamPoly::linear(one, one)), (3, ParamPoly::monomial(one, 1))],
        )
        .unwrap();
        let g = invert_parameter(&f).unwrap();
        assert_eq!(g.coeff(2), &ParamPoly::linear(one, one));
        assert_eq!(g.coeff(3), &ParamPoly::monomial(one, 1));
        assert_eq!(g.coeff(3).constant_term(), c(0.0, 0.0));

        let q = PerturbationFamily::quadratic_perturbation(l, 5).unwrap();
        let g = invert_parameter(&q).unwrap();
        assert_eq!(g.coeff(2), &ParamPoly::constant(one));
        assert!(g.coeffs()[3..].iter().all(ParamPoly::is_zero));
    }

    #[test]
    fn inversion_preconditions() {
        let l = lam();
        let one = c(1.0, 0.0);
        let shifted = PerturbationFamily::from_terms(c(1.0, 0.0), 3, &[(0, ParamPoly::constant(one))]).unwrap();
        assert!(matches!(invert_parameter(&shifted), Err(FamilyError::NonzeroBasePoint(_))));
        let free = PerturbationFamily::constant_in_parameter(c(0.0, 0.0), &[c(0.0, 0.0), l, one], 3).unwrap();
        assert!(matches!(invert_parameter(&free), Err(FamilyError::NotEssentiallyQuadratic(_))));
    }

    #[test]
    fn normalization_example() {
        let l = lam();
        let f = PerturbationFamily::from_terms(
            c(0.0, 0.0),
            4,
            &[(1, ParamPoly::constant(l)), (2, ParamPoly::monomial(c(4.0, 0.0), 1)), (3, ParamPoly::constant(c(2.0, 0.0)))],
        )
        .unwrap();
        let n = normalize_second_coefficient(&f).unwrap();
        assert_eq!(n.coeff(2), &ParamPoly::monomial(c(1.0, 0.0), 1));
        assert_eq!(n.coeff(1), &ParamPoly::constant(l));
        assert!((n.coeff(3).constant_term() - c(0.125, 0.0)).norm() < 1e-15);
        assert_eq!(normalize_second_coefficient(&n).unwrap(), n);
        let free = PerturbationFamily::constant_in_parameter(c(0.0, 0.0), &[c(0.0, 0.0), l], 3).unwrap();
        assert_eq!(normalize_second_coefficient(&free), Err(FamilyError::DegenerateSecondCoefficient));
    }

    #[test]
    fn evaluation_examples() {
        let l = lam();
        let f = PerturbationFamily::quadratic_perturbation(l, 4).unwrap();
        assert_eq!(evaluate_at_parameter(&f, c(0.0, 0.0)), vec![c(0.0, 0.0), l, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(evaluate_at_parameter(&f, c(1.0, 0.0))[2], c(1.0, 0.0));
    }

    #[test]
    fn json_round_trip() {
        let f = PerturbationFamily::quadratic_perturbation(lam(), 3).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: PerturbationFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
