//! Periodic cycles, critical orbits and index counts for complex polynomials.

use std::collections::HashMap;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linearizer::{self, ProbeConfig, TruncatedSeries};
use crate::rotation::detect_root_of_unity;
use crate::series;

/// Multipliers below this modulus count as superattracting.
pub const SUPERATTRACTING_TOL: f64 = 1e-10;
/// Band `||lambda| - 1| <= tol` treated as indifferent.
pub const INDIFFERENCE_TOL: f64 = 1e-8;
/// Largest root-of-unity denominator recognised in a multiplier.
pub const DENOMINATOR_CAP: u64 = 64;
/// Relative size below which a return-map coefficient counts as vanishing.
pub const PARABOLIC_POINT_TOL: f64 = 1e-7;
/// Largest degree of `P^q(z) - z` solved for.
pub const ROOT_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("polynomial degree {0} is too low")]
    DegreeTooLow(usize),
    #[error("the zero polynomial is not a map")]
    ZeroPolynomial,
    #[error("degree {degree}^{q} exceeds the root cap {cap}")]
    RootCapExceeded { degree: usize, q: usize, cap: usize },
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("no nonvanishing coefficient of the return map below order {0}")]
    ExpansionOrderExceeded(usize),
    #[error("petal count defect: t = {t} does not divide m = {m}")]
    DivisibilityViolation { t: u64, m: usize },
    #[error("cycle is not rationally indifferent")]
    NotParabolic,
    #[error("parabolic cycle has no petal data")]
    MissingParabolicData,
}

/// `c_0 + c_1 z + ... + c_d z^d` with `c_d != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPoly {
    coeffs: Vec<Complex64>,
}

impl Serialize for ComplexPoly {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Self::new(v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()).map_err(serde::de::Error::custom)
    }
}

impl ComplexPoly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Result<Self, DynError> {
        while coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Err(DynError::ZeroPolynomial);
        }
        if coeffs.len() < 2 {
            return Err(DynError::DegreeTooLow(0));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        series::horner(&self.coeffs, z)
    }

    /// `(P(z), P'(z))` in one Horner pass.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn derivative_coeffs(&self) -> Vec<Complex64> {
        self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect()
    }

    pub fn derivative(&self) -> Option<ComplexPoly> {
        ComplexPoly::new(self.derivative_coeffs()).ok()
    }

    /// `P^n(z)` and `(P^n)'(z)` by iteration and the chain rule.
    pub fn iterate_with_derivative(&self, z: Complex64, n: usize) -> (Complex64, Complex64) {
        let mut w = z;
        let mut d = Complex64::new(1.0, 0.0);
        for _ in 0..n {
            let (p, dp) = self.eval_with_derivative(w);
            d *= dp;
            w = p;
        }
        (w, d)
    }

    /// Taylor coefficients of `P(z0 + w)` padded or truncated to `order`.
    pub fn local_series(&self, z0: Complex64, order: usize) -> Vec<Complex64> {
        let mut c = series::taylor_shift(&self.coeffs, z0);
        c.resize(order + 1, Complex64::new(0.0, 0.0));
        c.truncate(order + 1);
        c
    }

    /// Coefficients of `P^n` as an explicit polynomial.
    pub fn iterate_coeffs(&self, n: usize) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        for _ in 0..n {
            acc = compose_poly(&self.coeffs, &acc);
        }
        acc
    }

    /// `R = max(2, 2 max_k |c_k / c_d|^{1/(d-k)})`; orbits leaving `|z| > R` escape.
    pub fn escape_radius(&self) -> f64 {
        let d = self.degree();
        let cd = self.coeffs[d];
        let mut r: f64 = 2.0;
        for k in 0..d {
            let q = (self.coeffs[k] / cd).norm();
            if q > 0.0 {
                r = r.max(2.0 * q.powf(1.0 / (d - k) as f64));
            }
        }
        // a non-monic leading term needs |c_d| R^{d-1} >= 2 as well
        if cd.norm() < 1.0 && d > 1 {
            r = r.max(2.0 * cd.norm().powf(-1.0 / (d - 1) as f64));
        }
        r
    }
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `g(f(z))` as an untruncated polynomial.
fn compose_poly(g: &[Complex64], f: &[Complex64]) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0)];
    for &c in g.iter().rev() {
        acc = poly_mul(&acc, f);
        acc[0] += c;
    }
    acc
}

/// All complex roots of `c_0 + ... + c_n z^n` from companion-matrix eigenvalues.
///
/// Exact zero roots are split off first; Aberth iteration is the fallback
/// when the eigenvalue iteration stalls.
pub fn polynomial_roots(c: &[Complex64]) -> Result<Vec<Complex64>, DynError> {
    let zero = Complex64::new(0.0, 0.0);
    let mut c = c.to_vec();
    while c.last().is_some_and(|x| *x == zero) {
        c.pop();
    }
    if c.is_empty() {
        return Ok(Vec::new());
    }
    let k = c.iter().take_while(|x| **x == zero).count();
    let mut out = vec![zero; k];
    let c = &c[k..];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(out);
    }
    let lead = c[n];
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    match Schur::try_new(m, f64::EPSILON, 10_000).and_then(|s| s.eigenvalues()) {
        Some(ev) => out.extend(ev.iter().copied()),
        None => out.extend(aberth(c)?),
    }
    Ok(out)
}

fn aberth(c: &[Complex64]) -> Result<Vec<Complex64>, DynError> {
    let n = c.len() - 1;
    let dc: Vec<Complex64> = c.iter().enumerate().skip(1).map(|(k, x)| x * k as f64).collect();
    // Cauchy bound for the starting circle
    let r = 1.0 + c[..n].iter().map(|x| (x / c[n]).norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(0.5 * r, std::f64::consts::TAU * (j as f64 + 0.25) / n as f64))
        .collect();
    for _ in 0..2000 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let ratio = series::horner(c, z[i]) / series::horner(&dc, z[i]);
            let s: Complex64 = (0..n).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm() / z[i].norm().max(1.0));
            }
        }
        if moved < 1e-15 {
            return Ok(z);
        }
    }
    Err(DynError::EigenFailure)
}

/// Newton steps on `f` starting from `z`, keeping only improving steps.
fn polish<F: Fn(Complex64) -> (Complex64, Complex64)>(f: &F, mut z: Complex64, max_iter: usize) -> Complex64 {
    let (mut v, mut d) = f(z);
    for _ in 0..max_iter {
        if v.norm() == 0.0 || d.norm() == 0.0 {
            break;
        }
        let step = v / d;
        let cand = z - step;
        let (nv, nd) = f(cand);
        if !(nv.norm() < v.norm()) {
            break;
        }
        z = cand;
        v = nv;
        d = nd;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
            break;
        }
    }
    z
}

/// Groups nearby roots whose derivative is small (numerically multiple roots).
///
/// Returns `(centroid, multiplicity)` pairs.
fn cluster_roots<F: Fn(Complex64) -> (Complex64, Complex64)>(
    f: &F,
    roots: &[Complex64],
    cluster_tol: f64,
    dup_tol: f64,
) -> Vec<(Complex64, usize)> {
    let n = roots.len();
    let mut used = vec![false; n];
    let mut out = Vec::new();
    let flat: Vec<bool> = roots.iter().map(|&z| f(z).1.norm() < 1e-3).collect();
    for i in 0..n {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut members = vec![roots[i]];
        for j in i + 1..n {
            if used[j] {
                continue;
            }
            let dist = (roots[j] - roots[i]).norm();
            let scale = 1.0 + roots[i].norm();
            let close = if flat[i] && flat[j] { dist < cluster_tol * scale } else { dist < dup_tol * scale };
            if close {
                used[j] = true;
                members.push(roots[j]);
            }
        }
        let m = members.len();
        let centroid = members.iter().sum::<Complex64>() / m as f64;
        out.push((centroid, m));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CycleClass {
    SuperAttracting,
    Attracting,
    RationallyIndifferent,
    IrrationallyIndifferent,
    Repelling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubClass {
    SiegelLikely,
    CremerLikely,
    Unknown,
}

/// Petal data `(t, m, tau, r)` of a parabolic cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParabolicData {
    /// Order of the multiplier as a root of unity.
    pub t: u64,
    /// `P^{tq}(z) = z_1 + a_{m+1} (z - z_1)^{m+1} + ...`.
    pub m: usize,
    /// Tangency index `m + 1`.
    pub tau: usize,
    /// Number of invariant cycles of petals, `m / t`.
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub points: Vec<Complex64>,
    pub period: usize,
    pub multiplier: Complex64,
    pub class: CycleClass,
    pub sub_class: Option<SubClass>,
    pub weight: usize,
    pub parabolic: Option<ParabolicData>,
    /// Multiplicity of the cycle's points as roots of `P^q(z) - z`.
    pub root_multiplicity: usize,
    /// Rotation number `s/t` when rationally indifferent.
    pub rotation: Option<(u64, u64)>,
    /// In-radius from an orbit probe, for irrationally indifferent cycles.
    pub probe_radius: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub root_cap: usize,
    pub superattracting_tol: f64,
    pub indifference_tol: f64,
    pub denominator_cap: u64,
    /// Distance under which points count as the same periodic point.
    pub match_tol: f64,
    /// Distance under which near-multiple roots are merged.
    pub cluster_tol: f64,
    /// Order of the return-map linearization used for sub-classification.
    pub linearization_order: usize,
    /// Radius estimate above which an irrationally indifferent cycle may be Siegel.
    pub siegel_radius_threshold: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            root_cap: ROOT_CAP,
            superattracting_tol: SUPERATTRACTING_TOL,
            indifference_tol: INDIFFERENCE_TOL,
            denominator_cap: DENOMINATOR_CAP,
            match_tol: 1e-6,
            cluster_tol: 1e-3,
            linearization_order: 100,
            siegel_radius_threshold: 1e-3,
        }
    }
}

/// Roots of `P'` with multiplicities.
pub fn critical_points(p: &ComplexPoly) -> Result<Vec<(Complex64, usize)>, DynError> {
    if p.degree() < 2 {
        return Err(DynError::DegreeTooLow(p.degree()));
    }
    let dp = p.derivative().expect("degree >= 2");
    let roots = polynomial_roots(dp.coeffs())?;
    let scale = dp.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let flat_eval = |z: Complex64| {
        let (v, d) = dp.eval_with_derivative(z);
        (v, d / scale)
    };
    let polished: Vec<Complex64> = roots.iter().map(|&z| polish(&flat_eval, z, 50)).collect();
    Ok(cluster_roots(&flat_eval, &polished, 1e-3, 1e-9))
}

/// Class from the multiplier alone, plus the detected rotation `s/t`.
pub fn classify_multiplier(lambda: Complex64, cfg: &CycleConfig) -> (CycleClass, Option<(u64, u64)>) {
    let r = lambda.norm();
    if r < cfg.superattracting_tol {
        (CycleClass::SuperAttracting, None)
    } else if r < 1.0 - cfg.indifference_tol {
        (CycleClass::Attracting, None)
    } else if r > 1.0 + cfg.indifference_tol {
        (CycleClass::Repelling, None)
    } else {
        match detect_root_of_unity(lambda, cfg.denominator_cap, cfg.indifference_tol) {
            Some(st) => (CycleClass::RationallyIndifferent, Some(st)),
            None => (CycleClass::IrrationallyIndifferent, None),
        }
    }
}

/// Taylor coefficients of `P^n` at `points[0]`, following the orbit `points`.
pub fn return_map_series(p: &ComplexPoly, points: &[Complex64], n: usize, order: usize) -> Vec<Complex64> {
    return_map_with(p, points, n, order, |c| c)
}

/// Same composition with every local coefficient replaced by its modulus;
/// bounds the size of the terms summed into each coefficient.
fn return_map_magnitudes(p: &ComplexPoly, points: &[Complex64], n: usize, order: usize) -> Vec<f64> {
    return_map_with(p, points, n, order, |c| Complex64::new(c.norm(), 0.0)).iter().map(|c| c.re).collect()
}

fn return_map_with<F: Fn(Complex64) -> Complex64>(
    p: &ComplexPoly,
    points: &[Complex64],
    n: usize,
    order: usize,
    map: F,
) -> Vec<Complex64> {
    let q = points.len();
    let mut acc: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); order + 1];
    acc[1] = Complex64::new(1.0, 0.0);
    for i in 0..n {
        let mut local: Vec<Complex64> = p.local_series(points[i % q], order).into_iter().map(&map).collect();
        // recentre on the next orbit point
        local[0] = Complex64::new(0.0, 0.0);
        acc = series::compose(&local, &acc, order);
    }
    acc
}

/// Class and sub-class of a cycle; irrationally indifferent cycles are
/// probed through a linearization of the return map.
pub fn classify_cycle(p: &ComplexPoly, rec: &mut CycleRecord, cfg: &CycleConfig) {
    let (class, rot) = classify_multiplier(rec.multiplier, cfg);
    rec.class = class;
    rec.rotation = rot;
    rec.sub_class = None;
    if class != CycleClass::IrrationallyIndifferent {
        return;
    }
    let m = cfg.linearization_order;
    let series_c = return_map_series(p, &rec.points, rec.period, m);
    let lin = TruncatedSeries::new(series_c.clone()).and_then(|f| linearizer::formal_linearize(&f, m));
    let sub = match lin {
        Err(e) => {
            rec.flags.push(format!("linearization failed: {e}"));
            SubClass::Unknown
        }
        Ok(res) if !(res.radius_root_test > cfg.siegel_radius_threshold) => {
            rec.flags.push(format!("radius estimate {:.3e} below threshold", res.radius_root_test));
            SubClass::CremerLikely
        }
        Ok(res) => {
            let rad = res.radius_root_test.min(p.escape_radius());
            let grid = linearizer::radius_grid(rad, 20);
            let z1 = rec.points[0];
            let q = rec.period;
            let probe = linearizer::siegel_orbit_probe(
                |w| p.iterate_with_derivative(z1 + w, q).0 - z1,
                &grid,
                &ProbeConfig { escape: 2.0 * p.escape_radius(), ..ProbeConfig::default() },
            );
            rec.probe_radius = Some(probe.in_radius);
            if probe.in_radius > 0.0 {
                SubClass::SiegelLikely
            } else {
                rec.flags.push("orbit probe found no invariant circle".into());
                SubClass::Unknown
            }
        }
    };
    rec.flags.push("sub-class is heuristic".into());
    rec.sub_class = Some(sub);
}

/// `(t, m, tau, r)` from the first nonvanishing correction of `P^{tq}` at `z_1`.
pub fn parabolic_structure(p: &ComplexPoly, rec: &CycleRecord, max_order: usize) -> Result<ParabolicData, DynError> {
    let (_, t) = rec.rotation.ok_or(DynError::NotParabolic)?;
    let n = t as usize * rec.period;
    let s = return_map_series(p, &rec.points, n, max_order);
    let bound = return_map_magnitudes(p, &rec.points, n, max_order);
    // rounding in coefficient k is at most a few ulps of the magnitude sum per composition;
    // the cycle points themselves carry error near the indifference tolerance
    let first = (2..=max_order).find(|&k| {
        let tol = (1e3 * f64::EPSILON * (n * k) as f64).max(PARABOLIC_POINT_TOL) * bound[k];
        s[k].norm() > tol
    });
    let Some(k) = first else {
        return Err(DynError::ExpansionOrderExceeded(max_order));
    };
    let m = k - 1;
    if m % t as usize != 0 {
        return Err(DynError::DivisibilityViolation { t, m });
    }
    Ok(ParabolicData { t, m, tau: m + 1, r: m / t as usize })
}

/// Weight: 0 superattracting or repelling, 1 attracting or irrationally
/// indifferent, `r` for a parabolic cycle with `r` cycles of petals.
pub fn cycle_weight(rec: &CycleRecord) -> Result<usize, DynError> {
    match rec.class {
        CycleClass::SuperAttracting | CycleClass::Repelling => Ok(0),
        CycleClass::Attracting | CycleClass::IrrationallyIndifferent => Ok(1),
        CycleClass::RationallyIndifferent => rec.parabolic.map(|d| d.r).ok_or(DynError::MissingParabolicData),
    }
}

/// Periodic cycles of exact period `q <= q_max`.
pub fn find_cycles(p: &ComplexPoly, q_max: usize) -> Result<Vec<CycleRecord>, DynError> {
    find_cycles_with(p, q_max, &CycleConfig::default())
}

pub fn find_cycles_with(p: &ComplexPoly, q_max: usize, cfg: &CycleConfig) -> Result<Vec<CycleRecord>, DynError> {
    let d = p.degree();
    if d < 2 {
        return Err(DynError::DegreeTooLow(d));
    }
    let mut out: Vec<CycleRecord> = Vec::new();
    for q in 1..=q_max {
        let deg = (d as f64).powi(q as i32);
        if deg > cfg.root_cap as f64 {
            return Err(DynError::RootCapExceeded { degree: d, q, cap: cfg.root_cap });
        }
        let mut g = p.iterate_coeffs(q);
        g[1] -= Complex64::new(1.0, 0.0);
        let roots = polynomial_roots(&g)?;
        let eval = |z: Complex64| {
            let (w, dw) = p.iterate_with_derivative(z, q);
            (w - z, dw - Complex64::new(1.0, 0.0))
        };
        let polished: Vec<Complex64> = roots.iter().map(|&z| polish(&eval, z, 100)).collect();
        let clusters = cluster_roots(&eval, &polished, cfg.cluster_tol, 1e-9);
        let near = |a: Complex64, b: Complex64| (a - b).norm() < cfg.match_tol * (1.0 + a.norm());
        let mut remaining: Vec<(Complex64, usize)> = clusters
            .into_iter()
            .filter(|(z, _)| !out.iter().any(|c| c.period < q && q % c.period == 0 && c.points.iter().any(|&w| near(w, *z))))
            .collect();
        while let Some((z1, mult)) = remaining.first().copied() {
            remaining.remove(0);
            let mut points = vec![z1];
            let mut flags = Vec::new();
            let mut w = z1;
            let mut minimal = true;
            for k in 1..q {
                w = p.eval(w);
                if near(w, z1) {
                    minimal = false;
                    flags.push(format!("closes after {k} steps"));
                    break;
                }
                // snap to the polished root when available
                if let Some(pos) = remaining.iter().position(|(r, _)| near(*r, w)) {
                    w = remaining[pos].0;
                    remaining.remove(pos);
                } else {
                    flags.push(format!("orbit point {k} not among roots"));
                }
                points.push(w);
            }
            if !minimal {
                continue;
            }
            let closure = (p.eval(*points.last().unwrap()) - z1).norm();
            if closure > cfg.match_tol * (1.0 + z1.norm()) {
                flags.push(format!("closure residual {closure:.3e}"));
            }
            if mult > 1 {
                flags.push(format!("clustered root of multiplicity {mult}"));
            }
            let multiplier = points.iter().map(|&z| p.eval_with_derivative(z).1).product::<Complex64>();
            let mut rec = CycleRecord {
                points,
                period: q,
                multiplier,
                class: CycleClass::Repelling,
                sub_class: None,
                weight: 0,
                parabolic: None,
                root_multiplicity: mult,
                rotation: None,
                probe_radius: None,
                flags,
            };
            classify_cycle(p, &mut rec, cfg);
            if rec.class == CycleClass::RationallyIndifferent {
                match parabolic_structure(p, &rec, 64) {
                    Ok(pd) => rec.parabolic = Some(pd),
                    Err(e) => rec.flags.push(format!("parabolic structure: {e}")),
                }
            }
            rec.weight = cycle_weight(&rec).unwrap_or(0);
            out.push(rec);
        }
    }
    Ok(out)
}

/// `(P^q)'(z_1)` from the explicitly expanded iterate, for cross-checking the
/// product formula.
pub fn iterate_derivative_expanded(p: &ComplexPoly, rec: &CycleRecord) -> Complex64 {
    let c = p.iterate_coeffs(rec.period);
    let d: Vec<Complex64> = c.iter().enumerate().skip(1).map(|(k, x)| x * k as f64).collect();
    series::horner(&d, rec.points[0])
}

/// Orbit `z, P(z), ..., P^n(z)`, stopped early only when `|z|` leaves `f64` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub points: Vec<Complex64>,
    /// First index with `|P^k(z)| > R`.
    pub escaped_at: Option<usize>,
    /// The orbit was cut short because the next point would overflow.
    pub overflowed: bool,
}

const OVERFLOW_GUARD: f64 = 1e100;

pub fn iterate_polynomial(p: &ComplexPoly, z: Complex64, n: usize) -> Orbit {
    let r = p.escape_radius();
    let mut points = Vec::with_capacity(n + 1);
    let mut w = z;
    let mut escaped_at = None;
    let mut overflowed = false;
    for k in 0..=n {
        if escaped_at.is_none() && w.norm() > r {
            escaped_at = Some(k);
        }
        points.push(w);
        if k == n {
            break;
        }
        if w.norm() > OVERFLOW_GUARD {
            overflowed = true;
            break;
        }
        w = p.eval(w);
    }
    Orbit { points, escaped_at, overflowed }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// `z^d + c`.
    Unicritical,
    /// `z + c z^{d-1} + z^d`.
    Petal,
}

pub fn make_family(kind: FamilyKind, d: usize, c: Complex64) -> Result<ComplexPoly, DynError> {
    if d < 2 {
        return Err(DynError::DegreeTooLow(d));
    }
    let mut v = vec![Complex64::new(0.0, 0.0); d + 1];
    v[d] = Complex64::new(1.0, 0.0);
    match kind {
        FamilyKind::Unicritical => v[0] += c,
        FamilyKind::Petal => {
            v[1] += Complex64::new(1.0, 0.0);
            v[d - 1] += c;
        }
    }
    ComplexPoly::new(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrbitLocation {
    JuliaLikely,
    FatouLikely(String),
    Escaping,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalOrbitRecord {
    /// Critical points with multiplicities in this class.
    pub representatives: Vec<(Complex64, usize)>,
    pub orbit_class_id: usize,
    pub finite: bool,
    /// `(m, n)` with `m > n` and `P^m(c) = P^n(c)` when finite.
    pub finite_witness: Option<(usize, usize)>,
    /// `(i, j, m, n)`: `P^m(c_i) = P^n(c_j)` merged representatives `i` and `j`
    /// (indices into `representatives`).
    pub equivalence_witnesses: Vec<(usize, usize, usize, usize)>,
    pub location: OrbitLocation,
    pub notes: Vec<String>,
    pub observation_time_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitConfig {
    /// Two orbit points closer than this collide.
    pub tol: f64,
    /// A collision counts only if the predecessors are at least this far apart.
    pub landing_gap: f64,
    /// Steps checked after a collision for consistency.
    pub lookahead: usize,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self { tol: 1e-9, landing_gap: 1e-3, lookahead: 3 }
    }
}

/// Orbit points larger than this are not tested for collisions.
pub const HASH_LIMIT: f64 = 1e6;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let n = self.0[i];
            self.0[i] = r;
            i = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Critical-orbit classes observed through time `t`.
pub fn critical_orbit_partition(p: &ComplexPoly, t: usize, cfg: &OrbitConfig) -> Result<Vec<CriticalOrbitRecord>, DynError> {
    let crit = critical_points(p)?;
    let orbits: Vec<Vec<Complex64>> = crit
        .iter()
        .map(|&(c, _)| iterate_polynomial(p, c, t + cfg.lookahead).points)
        .collect();
    let cell = cfg.tol;
    let key = |z: Complex64| ((z.re / cell).floor() as i64, (z.im / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
    let mut uf = UnionFind((0..crit.len()).collect());
    let mut finite: Vec<Option<(usize, usize)>> = vec![None; crit.len()];
    let mut eq_witness = Vec::new();
    let mut notes: Vec<Vec<String>> = vec![Vec::new(); crit.len()];
    // visit points in time order so the first hits are the minimal witnesses
    for m in 0..=t {
        for i in 0..crit.len() {
            let Some(&z) = orbits[i].get(m) else { continue };
            // beyond this an absolute tolerance is below the float spacing
            if !(z.norm() <= HASH_LIMIT) {
                continue;
            }
            let (kx, ky) = key(z);
            let mut hits = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(v) = grid.get(&(kx + dx, ky + dy)) {
                        hits.extend(v.iter().copied());
                    }
                }
            }
            for (j, n) in hits {
                let w = orbits[j][n];
                if (z - w).norm() >= cfg.tol {
                    continue;
                }
                let genuine = m == 0 || n == 0 || {
                    let a = orbits[i][m - 1];
                    let b = orbits[j][n - 1];
                    (a - b).norm() >= cfg.landing_gap * (1.0 + a.norm())
                };
                if !genuine {
                    continue;
                }
                let diverges = (1..=cfg.lookahead).any(|k| match (orbits[i].get(m + k), orbits[j].get(n + k)) {
                    (Some(a), Some(b)) => (a - b).norm() > 1e-6 * (1.0 + a.norm()),
                    _ => false,
                });
                if j == i {
                    if finite[i].is_none() && m > n {
                        finite[i] = Some((m, n));
                        if diverges {
                            notes[i].push(format!("collision ({m},{n}) diverges within {} steps", cfg.lookahead));
                        }
                    }
                } else if uf.find(i) != uf.find(j) {
                    uf.union(i, j);
                    eq_witness.push((j, i, n, m));
                    if diverges {
                        notes[i].push(format!("equivalence ({j},{i}) diverges within {} steps", cfg.lookahead));
                    }
                }
            }
            grid.entry((kx, ky)).or_default().push((i, m));
        }
    }
    let mut classes: Vec<CriticalOrbitRecord> = Vec::new();
    let mut class_of: HashMap<usize, usize> = HashMap::new();
    let mut local = vec![0; crit.len()];
    for i in 0..crit.len() {
        let root = uf.find(i);
        let id = *class_of.entry(root).or_insert_with(|| {
            classes.push(CriticalOrbitRecord {
                representatives: Vec::new(),
                orbit_class_id: classes.len(),
                finite: false,
                finite_witness: None,
                equivalence_witnesses: Vec::new(),
                location: OrbitLocation::Unknown,
                notes: Vec::new(),
                observation_time_used: t,
            });
            classes.len() - 1
        });
        let rec = &mut classes[id];
        local[i] = rec.representatives.len();
        rec.representatives.push(crit[i]);
        if let Some(w) = finite[i] {
            rec.finite = true;
            if rec.finite_witness.is_none() {
                rec.finite_witness = Some(w);
            }
        }
        rec.notes.append(&mut notes[i]);
    }
    for (j, i, n, m) in eq_witness {
        let id = class_of[&uf.find(i)];
        classes[id].equivalence_witnesses.push((local[j], local[i], n, m));
    }
    Ok(classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocateConfig {
    pub n_iter: usize,
    /// Distance to an attracting cycle counted as convergence.
    pub converge_tol: f64,
    /// Largest period checked when an orbit converges to an unlisted cycle.
    pub max_unlisted_period: usize,
}

impl Default for LocateConfig {
    fn default() -> Self {
        Self { n_iter: 20_000, converge_tol: 1e-6, max_unlisted_period: 64 }
    }
}

/// Heuristic Fatou / Julia / escaping location of a critical orbit.
pub fn locate_orbit(
    p: &ComplexPoly,
    rec: &CriticalOrbitRecord,
    cycles: &[CycleRecord],
    cfg: &LocateConfig,
) -> (OrbitLocation, Vec<String>) {
    let mut notes = vec!["location is heuristic".to_string()];
    let (c, _) = rec.representatives[0];
    let orbit = iterate_polynomial(p, c, cfg.n_iter);
    if let Some(k) = orbit.escaped_at {
        notes.push(format!("left the escape radius {:.6} at step {k}", p.escape_radius()));
        return (OrbitLocation::Escaping, notes);
    }
    let pts = &orbit.points;
    let last = *pts.last().unwrap();
    let dist_to = |z: Complex64, cyc: &CycleRecord| cyc.points.iter().map(|&w| (z - w).norm()).fold(f64::INFINITY, f64::min);
    for (idx, cyc) in cycles.iter().enumerate() {
        let label = format!("cycle {idx} (period {}, {:?})", cyc.period, cyc.class);
        match cyc.class {
            CycleClass::SuperAttracting | CycleClass::Attracting => {
                if dist_to(last, cyc) < cfg.converge_tol {
                    notes.push(format!("converges to {label}"));
                    return (OrbitLocation::FatouLikely(label), notes);
                }
            }
            CycleClass::RationallyIndifferent => {
                let half = dist_to(pts[pts.len() / 2], cyc);
                let end = dist_to(last, cyc);
                if end < 0.05 && end < 0.95 * half {
                    notes.push(format!("slow approach to {label}: {half:.3e} -> {end:.3e}"));
                    return (OrbitLocation::FatouLikely(label), notes);
                }
            }
            CycleClass::IrrationallyIndifferent => {
                if let Some(rho) = cyc.probe_radius.filter(|r| *r > 0.0) {
                    if pts.iter().any(|&z| dist_to(z, cyc) < 0.9 * rho) {
                        notes.push(format!("enters the probed rotation domain of {label}"));
                        return (OrbitLocation::FatouLikely(label), notes);
                    }
                }
            }
            CycleClass::Repelling => {}
        }
    }
    let n = pts.len() - 1;
    for per in 1..=cfg.max_unlisted_period.min(n / 4) {
        let now = (pts[n] - pts[n - per]).norm();
        let before = (pts[n / 2] - pts[n / 2 - per]).norm();
        if now < cfg.converge_tol * 1e-3 && now < before {
            notes.push(format!("converges to an unlisted cycle of period dividing {per}"));
            return (OrbitLocation::FatouLikely(format!("unlisted cycle of period {per}")), notes);
        }
    }
    // recurrence: late orbit returns close to the start of its own orbit
    let early = &pts[..10.min(n)];
    let scale = p.escape_radius();
    let recur = pts[n / 2..]
        .iter()
        .map(|&z| early.iter().map(|&e| (z - e).norm()).fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    if recur < 1e-2 * scale {
        notes.push(format!("bounded, non-convergent, recurrent (closest return {recur:.3e})"));
        return (OrbitLocation::JuliaLikely, notes);
    }
    notes.push(format!("bounded without detected convergence or recurrence (closest return {recur:.3e})"));
    (OrbitLocation::Unknown, notes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: bool,
    pub heuristic: bool,
    pub basis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSReport {
    pub gamma_irr: usize,
    pub gamma_ap: usize,
    pub gamma: usize,
    pub n_inf_j: usize,
    pub n_inf_f: usize,
    pub n_inf: usize,
    pub saturated: Verdict,
    pub julia_saturated: Verdict,
    pub heuristic_flags: Vec<String>,
    /// Violations of the index inequalities; these indicate a numerical defect.
    pub alarms: Vec<String>,
    pub escape_radius: f64,
    pub cycles: Vec<CycleRecord>,
    pub orbits: Vec<CriticalOrbitRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsConfig {
    pub q_max: usize,
    pub t_cap: usize,
    pub cycles: CycleConfig,
    pub orbits: OrbitConfig,
    pub locate: LocateConfig,
}

impl Default for FsConfig {
    fn default() -> Self {
        Self {
            q_max: 4,
            t_cap: 200,
            cycles: CycleConfig::default(),
            orbits: OrbitConfig::default(),
            locate: LocateConfig::default(),
        }
    }
}

/// Index counts and saturation verdicts.
pub fn fs_report(p: &ComplexPoly, cfg: &FsConfig) -> Result<FSReport, DynError> {
    let cycles = find_cycles_with(p, cfg.q_max, &cfg.cycles)?;
    let mut orbits = critical_orbit_partition(p, cfg.t_cap, &cfg.orbits)?;
    for o in orbits.iter_mut() {
        let (loc, mut notes) = locate_orbit(p, o, &cycles, &cfg.locate);
        o.location = loc;
        o.notes.append(&mut notes);
    }
    Ok(assemble_report(p, cycles, orbits))
}

/// Counts and verdicts from already computed cycles and orbit classes.
pub fn assemble_report(p: &ComplexPoly, cycles: Vec<CycleRecord>, orbits: Vec<CriticalOrbitRecord>) -> FSReport {
    let mut flags = Vec::new();
    let mut gamma_irr = 0;
    let mut gamma_ap = 0;
    for c in &cycles {
        match c.class {
            CycleClass::IrrationallyIndifferent => gamma_irr += c.weight,
            CycleClass::Attracting | CycleClass::RationallyIndifferent => gamma_ap += c.weight,
            _ => {}
        }
        if c.class == CycleClass::RationallyIndifferent && c.parabolic.is_none() {
            flags.push(format!("parabolic cycle of period {} lacks petal data", c.period));
        }
    }
    let gamma = gamma_irr + gamma_ap;
    let infinite: Vec<&CriticalOrbitRecord> = orbits.iter().filter(|o| !o.finite).collect();
    let mut n_inf_f = 0;
    let mut n_inf_j = 0;
    let mut all_certain = true;
    for o in &infinite {
        match &o.location {
            OrbitLocation::Escaping => n_inf_f += 1,
            OrbitLocation::FatouLikely(_) => n_inf_f += 1,
            OrbitLocation::JuliaLikely => {
                n_inf_j += 1;
                all_certain = false;
            }
            OrbitLocation::Unknown => {
                n_inf_j += 1;
                all_certain = false;
                flags.push(format!("orbit class {} has unknown location, counted in the Julia set", o.orbit_class_id));
            }
        }
    }
    let n_inf = n_inf_f + n_inf_j;
    if !infinite.is_empty() {
        flags.push(format!(
            "{} orbit classes judged infinite from no collision through time {}",
            infinite.len(),
            infinite[0].observation_time_used
        ));
    }
    let forced = n_inf <= 1;
    let heuristic = !(all_certain || forced);
    if !all_certain {
        flags.push("Julia/Fatou location of critical orbits is heuristic".into());
    }
    let sat_basis = if forced {
        format!("gamma = {gamma}, n_inf = {n_inf}; at most one infinite critical orbit")
    } else {
        format!("gamma = {gamma}, n_inf = {n_inf}")
    };
    let j_forced = forced && gamma_irr == n_inf;
    let saturated = Verdict { value: gamma == n_inf, heuristic, basis: sat_basis };
    let julia_saturated = Verdict {
        value: gamma_irr == n_inf_j,
        heuristic: !(all_certain || j_forced),
        basis: format!("gamma_irr = {gamma_irr}, n_inf_J = {n_inf_j}"),
    };
    let mut alarms = Vec::new();
    if gamma > n_inf {
        alarms.push(format!("gamma = {gamma} exceeds n_inf = {n_inf}"));
    }
    if gamma_irr > n_inf_j {
        alarms.push(format!("gamma_irr = {gamma_irr} exceeds n_inf_J = {n_inf_j}"));
    }
    FSReport {
        gamma_irr,
        gamma_ap,
        gamma,
        n_inf_j,
        n_inf_f,
        n_inf,
        saturated,
        julia_saturated,
        heuristic_flags: flags,
        alarms,
        escape_radius: p.escape_radius(),
        cycles,
        orbits,
    }
}
