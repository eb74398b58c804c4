//! Linearization of a fixed point at the origin: solving `f(H(z)) = H(lambda z)`
//! order by order, plus diagnostics on the resulting coefficients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::famalg::{FamilyError, ParamPoly, PerturbationFamily};
use crate::mp::MpComplex;
use crate::rotation::detect_root_of_unity;
use crate::series::{self, Field, PowerTable};

/// Default smallest `|lambda^k - lambda|` accepted in double precision.
pub const DIVISOR_FLOOR: f64 = 1e-14;
/// Default precision used when the double-precision floor is crossed.
pub const ESCALATION_BITS: u32 = 256;
/// Tolerance on `arg(lambda)/2pi` for the exact root-of-unity test.
pub const ROOT_OF_UNITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizerError {
    #[error("truncation order {0} is below 2")]
    OrderTooLow(usize),
    #[error("multiplier {0} must be finite and nonzero")]
    InvalidMultiplier(Complex64),
    #[error("|lambda^{k} - lambda| = {magnitude:e} is below the floor (root of unity test: {root_of_unity:?})")]
    SmallDivisorUnderflow { k: usize, magnitude: f64, root_of_unity: Option<(u64, u64)> },
    #[error("multiplier is the root of unity e^(2 pi i {s}/{t})")]
    ParabolicMultiplier { s: u64, t: u64 },
    #[error("|lambda| = {0} is not in (0, 1)")]
    NonContracting(f64),
    #[error("family: {0}")]
    Family(#[from] FamilyError),
    #[error("family coefficient g_{k} has degree {degree}, above {bound}")]
    FamilyDegreeBound { k: usize, degree: usize, bound: usize },
    #[error("family linear part {0} is not of unit modulus")]
    FamilyNotIndifferent(Complex64),
    #[error("window ({0}, {1}) is empty or exceeds order {2}")]
    WindowOutOfRange(usize, usize, usize),
}

/// Germ `lambda z + c_2 z^2 + ... + c_M z^M` fixing the origin.
#[derive(Debug, Clone)]
pub struct TruncatedSeries {
    coeffs: Vec<Complex64>,
    lambda_hp: Option<MpComplex>,
}

impl TruncatedSeries {
    /// `coeffs[k]` is the coefficient of `z^k` for `k >= 1`; index 0 is ignored.
    pub fn new(mut coeffs: Vec<Complex64>) -> Result<Self, LinearizerError> {
        if coeffs.len() < 3 {
            return Err(LinearizerError::OrderTooLow(coeffs.len().saturating_sub(1)));
        }
        coeffs[0] = Complex64::new(0.0, 0.0);
        Ok(Self { coeffs, lambda_hp: None })
    }

    /// `lambda z + sum_k c_k z^k` padded with zeros up to `order`.
    pub fn from_terms(lambda: Complex64, terms: &[(usize, Complex64)], order: usize) -> Result<Self, LinearizerError> {
        if order < 2 {
            return Err(LinearizerError::OrderTooLow(order));
        }
        let mut c = vec![Complex64::new(0.0, 0.0); order + 1];
        c[1] = lambda;
        for &(k, v) in terms {
            if k <= order {
                c[k] += v;
            }
        }
        Self::new(c)
    }

    /// `lambda z + z^2`.
    pub fn quadratic(lambda: Complex64, order: usize) -> Result<Self, LinearizerError> {
        Self::from_terms(lambda, &[(2, Complex64::new(1.0, 0.0))], order)
    }

    /// Attach an extended-precision multiplier used if escalation happens.
    pub fn with_high_precision_multiplier(mut self, lambda: MpComplex) -> Self {
        self.coeffs[1] = lambda.to_c64();
        self.lambda_hp = Some(lambda);
        self
    }

    pub fn lambda(&self) -> Complex64 {
        self.coeffs[1]
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn padded(&self, m: usize) -> Vec<Complex64> {
        let mut c = self.coeffs.clone();
        c.resize(m + 1, Complex64::new(0.0, 0.0));
        c.truncate(m + 1);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizerConfig {
    pub divisor_floor: f64,
    pub escalation_bits: u32,
}

impl Default for LinearizerConfig {
    fn default() -> Self {
        Self { divisor_floor: DIVISOR_FLOOR, escalation_bits: ESCALATION_BITS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    /// Least-squares slope of `ln|H_k|` against `k` over the window.
    pub slope: f64,
    pub window: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationResult {
    pub lambda: Complex64,
    pub order: usize,
    /// `h[k]` for `k = 0..=order`, with `h[0] = 0` and `h[1] = 1`.
    pub h: Vec<Complex64>,
    /// `|lambda^k - lambda|` for `k = 2..=order`.
    pub small_divisors: Vec<f64>,
    pub radius_root_test: f64,
    pub radius_slope: f64,
    pub radius_window: (usize, usize),
    /// `|H_k|` for `k = 0..=order`.
    pub magnitudes: Vec<f64>,
    /// Componentwise relative size of `f(H(z)) - H(lambda z)` through the order.
    pub residual: f64,
    /// 53 for double precision, otherwise the extended precision used.
    pub precision_bits: u32,
}

/// Default root-test window `(M/2, M)`.
pub fn default_window(order: usize) -> (usize, usize) {
    ((order / 2).max(1), order)
}

fn check_multiplier(lambda: Complex64, m: usize) -> Result<(), LinearizerError> {
    if !lambda.re.is_finite() || !lambda.im.is_finite() || lambda.norm() == 0.0 {
        return Err(LinearizerError::InvalidMultiplier(lambda));
    }
    if (lambda.norm() - 1.0).abs() < ROOT_OF_UNITY_TOL {
        // lambda^k - lambda vanishes when t divides k - 1
        if let Some((s, t)) = detect_root_of_unity(lambda, (m as u64).saturating_sub(1).max(1), ROOT_OF_UNITY_TOL) {
            return Err(LinearizerError::ParabolicMultiplier { s, t });
        }
    }
    Ok(())
}

/// Coefficients `H_2..H_M` from `H_m (lambda^m - lambda) = sum_{j>=2} f_j [H^j]_m`.
///
/// Returns the index of the first divisor below `floor` on failure.
fn solve<F: Field>(f: &[F], lambda: &F, m: usize, floor: f64) -> Result<(Vec<F>, Vec<f64>), (usize, f64)> {
    let zero = lambda.zero_like();
    let one = lambda.one_like();
    let mut h = vec![zero.clone(); m + 1];
    h[1] = one;
    let mut table = PowerTable::new(zero, m);
    table.set_first(1, h[1].clone());
    let mut divisors = Vec::with_capacity(m.saturating_sub(1));
    let mut lam_pow = lambda.clone();
    for k in 2..=m {
        lam_pow = lam_pow.mul(lambda);
        let d = lam_pow.sub(lambda);
        let dm = d.magnitude();
        divisors.push(dm);
        if !(dm >= floor) {
            return Err((k, dm));
        }
        table.fill_higher(k);
        h[k] = table.higher_sum(f, k).div(&d);
        table.set_first(k, h[k].clone());
    }
    Ok((h, divisors))
}

/// Componentwise relative residual of `f(H(z)) = H(lambda z)`.
///
/// Each order is scaled by the sum of the moduli of all contributions, which is
/// the natural condition number of that coefficient.
pub fn resubstitution_residual(f: &[Complex64], h: &[Complex64]) -> f64 {
    let m = h.len() - 1;
    let lambda = f[1];
    let lhs = series::compose(f, h, m);
    let fa: Vec<Complex64> = f.iter().map(|c| Complex64::new(c.norm(), 0.0)).collect();
    let ha: Vec<Complex64> = h.iter().map(|c| Complex64::new(c.norm(), 0.0)).collect();
    let scale = series::compose(&fa, &ha, m);
    let mut lp = Complex64::new(1.0, 0.0);
    let mut worst: f64 = 0.0;
    for k in 1..=m {
        lp *= lambda;
        let rhs = lp * h[k];
        let diff = (lhs[k] - rhs).norm();
        let s = scale[k].re + rhs.norm();
        if s > 0.0 {
            worst = worst.max(diff / s);
        }
    }
    worst
}

fn finish(lambda: Complex64, h: Vec<Complex64>, small_divisors: Vec<f64>, f: &[Complex64], bits: u32) -> LinearizationResult {
    let order = h.len() - 1;
    let magnitudes: Vec<f64> = h.iter().map(|c| c.norm()).collect();
    let window = default_window(order);
    let est = radius_estimate(&magnitudes, window).expect("default window is valid");
    let residual = resubstitution_residual(f, &h);
    LinearizationResult {
        lambda,
        order,
        h,
        small_divisors,
        radius_root_test: est.radius,
        radius_slope: est.slope,
        radius_window: window,
        magnitudes,
        residual,
        precision_bits: bits,
    }
}

/// Formal linearizing series through order `m`.
pub fn formal_linearize(f: &TruncatedSeries, m: usize) -> Result<LinearizationResult, LinearizerError> {
    formal_linearize_with(f, m, &LinearizerConfig::default())
}

pub fn formal_linearize_with(
    f: &TruncatedSeries,
    m: usize,
    cfg: &LinearizerConfig,
) -> Result<LinearizationResult, LinearizerError> {
    if m < 2 {
        return Err(LinearizerError::OrderTooLow(m));
    }
    let lambda = f.lambda();
    check_multiplier(lambda, m)?;
    let c = f.padded(m);
    match solve(&c, &lambda, m, cfg.divisor_floor) {
        Ok((h, d)) => Ok(finish(lambda, h, d, &c, 53)),
        Err(_) => {
            let bits = cfg.escalation_bits.max(64);
            let prec = bits as usize;
            let lam_hp = match &f.lambda_hp {
                Some(l) => MpComplex::new(l.re.with_precision(prec), l.im.with_precision(prec)),
                None => MpComplex::from_c64(lambda, prec),
            };
            let c_hp: Vec<MpComplex> = c.iter().map(|z| MpComplex::from_c64(*z, prec)).collect();
            let mut c_hp = c_hp;
            c_hp[1] = lam_hp.clone();
            let floor = 2f64.powi(-(bits as i32 - 32).min(1000));
            match solve(&c_hp, &lam_hp, m, floor) {
                Ok((h, d)) => {
                    let h: Vec<Complex64> = h.iter().map(MpComplex::to_c64).collect();
                    Ok(finish(lambda, h, d, &c, bits))
                }
                Err((k, magnitude)) => Err(LinearizerError::SmallDivisorUnderflow {
                    k,
                    magnitude,
                    root_of_unity: detect_root_of_unity(lambda, k as u64, ROOT_OF_UNITY_TOL),
                }),
            }
        }
    }
}

/// Number of iterations bringing `|lambda|^n` below `1e-17`.
pub fn default_koenigs_iterations(lambda: Complex64) -> usize {
    let r = lambda.norm();
    ((-17.0 * std::f64::consts::LN_10) / r.ln()).ceil() as usize + 10
}

/// Linearizer of an attracting fixed point as the inverse of
/// `phi = lim lambda^{-n} f^n`, computed by `phi_{n+1} = lambda^{-1} phi_n(f)`.
pub fn koenigs_linearize(
    f: &TruncatedSeries,
    m: usize,
    n_iter: Option<usize>,
) -> Result<LinearizationResult, LinearizerError> {
    if m < 2 {
        return Err(LinearizerError::OrderTooLow(m));
    }
    let lambda = f.lambda();
    let r = lambda.norm();
    if !(r > 0.0 && r < 1.0) {
        return Err(LinearizerError::NonContracting(r));
    }
    let c = f.padded(m);
    let n = n_iter.unwrap_or_else(|| default_koenigs_iterations(lambda));
    let inv = lambda.inv();
    let mut phi = vec![Complex64::new(0.0, 0.0); m + 1];
    phi[1] = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        phi = series::compose(&phi, &c, m).into_iter().map(|x| x * inv).collect();
        phi[1] = Complex64::new(1.0, 0.0);
    }
    let h = series::revert(&phi, m);
    let mut lp = lambda;
    let divisors = (2..=m)
        .map(|_| {
            lp *= lambda;
            (lp - lambda).norm()
        })
        .collect();
    Ok(finish(lambda, h, divisors, &c, 53))
}

/// Linearizing series whose coefficients are polynomials in the family parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLinearization {
    pub lambda: Complex64,
    pub order: usize,
    /// `h[k]` for `k = 0..=order`.
    pub h: Vec<ParamPoly>,
    pub degrees: Vec<Option<usize>>,
}

impl ParamLinearization {
    pub fn evaluate(&self, b: Complex64) -> Vec<Complex64> {
        self.h.iter().map(|p| p.eval(b)).collect()
    }

    /// Largest relative gap between `H(b)` and the scalar linearization of `F(b, .)`.
    pub fn commutation_error(&self, family: &PerturbationFamily, b: Complex64) -> Result<f64, LinearizerError> {
        let coeffs = crate::famalg::evaluate_at_parameter(family, b);
        let scalar = formal_linearize(&TruncatedSeries::new(coeffs)?, self.order)?;
        let here = self.evaluate(b);
        let mut worst: f64 = 0.0;
        for (x, y) in here.iter().zip(&scalar.h).skip(1) {
            let s = x.norm().max(y.norm());
            if s > 0.0 {
                worst = worst.max((x - y).norm() / s);
            }
        }
        Ok(worst)
    }
}

/// Formal linearization of a family `F(b, z)` with polynomial-in-`b` coefficients.
///
/// Requires `deg g_k <= k - 1`, which holds for families produced by
/// parameter inversion.
pub fn formal_linearize_family(f: &PerturbationFamily, m: usize) -> Result<ParamLinearization, LinearizerError> {
    if m < 2 {
        return Err(LinearizerError::OrderTooLow(m));
    }
    if f.base_point() != Complex64::new(0.0, 0.0) {
        return Err(FamilyError::NonzeroBasePoint(f.base_point()).into());
    }
    if !f.coeff(0).is_zero() {
        return Err(FamilyError::NonzeroConstantTerm(f.constant_term()).into());
    }
    let lambda = f.linear_part();
    if (lambda.norm() - 1.0).abs() > 1e-12 {
        return Err(LinearizerError::FamilyNotIndifferent(lambda));
    }
    for k in 2..=f.order() {
        if let Some(d) = f.coeff(k).degree() {
            if d > k - 1 {
                return Err(LinearizerError::FamilyDegreeBound { k, degree: d, bound: k - 1 });
            }
        }
    }
    check_multiplier(lambda, m)?;
    let mut g: Vec<ParamPoly> = f.coeffs().to_vec();
    g.resize(m + 1, ParamPoly::zero());
    g.truncate(m + 1);
    let mut h = vec![ParamPoly::zero(); m + 1];
    h[1] = ParamPoly::constant(Complex64::new(1.0, 0.0));
    let mut table = PowerTable::new(ParamPoly::zero(), m);
    table.set_first(1, h[1].clone());
    let mut lp = lambda;
    for k in 2..=m {
        lp *= lambda;
        let d = lp - lambda;
        if !(d.norm() >= DIVISOR_FLOOR) {
            return Err(LinearizerError::SmallDivisorUnderflow {
                k,
                magnitude: d.norm(),
                root_of_unity: detect_root_of_unity(lambda, k as u64, ROOT_OF_UNITY_TOL),
            });
        }
        table.fill_higher(k);
        h[k] = table.higher_sum(&g, k).scale(d.inv());
        table.set_first(k, h[k].clone());
    }
    let degrees = h.iter().map(ParamPoly::degree).collect();
    Ok(ParamLinearization { lambda, order: m, h, degrees })
}

/// `1 / max_{k in window} |H_k|^{1/k}` and the slope of `ln|H_k|` against `k`.
///
/// Zero coefficients are skipped; an all-zero window gives an infinite radius.
pub fn radius_estimate(magnitudes: &[f64], window: (usize, usize)) -> Result<RadiusEstimate, LinearizerError> {
    let (lo, hi) = window;
    let order = magnitudes.len().saturating_sub(1);
    if lo == 0 || lo > hi || hi > order {
        return Err(LinearizerError::WindowOutOfRange(lo, hi, order));
    }
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .filter(|&k| magnitudes[k] > 0.0)
        .map(|k| (k as f64, magnitudes[k].ln()))
        .collect();
    let root = pts.iter().map(|&(k, l)| l / k).fold(f64::NEG_INFINITY, f64::max);
    let radius = (-root).exp();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        0.0
    };
    Ok(RadiusEstimate { radius, slope, window })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Bound minus measured value; negative when the check fails.
    pub margin: f64,
    pub measured: f64,
    pub bound: f64,
}

/// `|p(0)| <= max_{|b| = 1/r} |p(b)|` sampled at `n_samples` points.
///
/// At least `deg + 1` equally spaced samples are used, so that the sample mean
/// equals `p(0)` exactly and the inequality cannot fail for a correct `p`.
pub fn max_principle_check(p: &ParamPoly, r: f64, n_samples: usize) -> BoundCheck {
    let n = n_samples.max(p.degree().unwrap_or(0) + 1).max(1);
    let rad = 1.0 / r;
    let circle_max = (0..n)
        .map(|j| {
            let b = Complex64::from_polar(rad, std::f64::consts::TAU * j as f64 / n as f64);
            p.eval(b).norm()
        })
        .fold(0.0, f64::max);
    let center = p.constant_term().norm();
    let margin = circle_max - center;
    BoundCheck { holds: margin >= -1e-12 * circle_max.max(f64::MIN_POSITIVE), margin, measured: center, bound: circle_max }
}

/// `|H_k(b)| <= k delta^{-(k-1)}` at every sampled value.
pub fn debranges_check(values: &[Complex64], k: usize, delta: f64) -> BoundCheck {
    let bound = k as f64 * delta.powi(-(k as i32 - 1));
    let measured = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    BoundCheck { holds: measured <= bound, margin: bound - measured, measured, bound }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_test: usize,
    pub n_iter: usize,
    pub escape: f64,
    /// Required return distance as a fraction of the tested radius.
    pub return_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n_test: 16, n_iter: 2000, escape: 1e3, return_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Largest radius passing the test, 0 when none does.
    pub in_radius: f64,
    /// Radii tested in increasing order and whether each passed.
    pub tested: Vec<(f64, bool)>,
}

/// Ascending radius `grid` for `siegel_orbit_probe`.
pub fn radius_grid(r_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| r_max * i as f64 / n as f64).collect()
}

fn orbit_recurs<M: Fn(Complex64) -> Complex64>(map: &M, z0: Complex64, r: f64, cfg: &ProbeConfig) -> bool {
    let mut z = z0;
    let late = cfg.n_iter / 2;
    let mut returned = false;
    for i in 1..=cfg.n_iter {
        z = map(z);
        if !(z.norm() <= cfg.escape) {
            return false;
        }
        if i > late && (z - z0).norm() < cfg.return_fraction * r {
            returned = true;
        }
    }
    returned
}

/// Largest grid radius whose circle of test points is bounded and recurrent.
///
/// A point is recurrent if its orbit comes back within `return_fraction * r`
/// of the start during the second half of the run. The scan stops at the
/// first failing radius.
pub fn siegel_orbit_probe<M: Fn(Complex64) -> Complex64>(
    map: M,
    grid: &[f64],
    cfg: &ProbeConfig,
) -> ProbeResult {
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut in_radius = 0.0;
    let mut tested = Vec::new();
    for r in sorted {
        let ok = (0..cfg.n_test).all(|j| {
            let z0 = Complex64::from_polar(r, std::f64::consts::TAU * (j as f64 + 0.5) / cfg.n_test as f64);
            orbit_recurs(&map, z0, r, cfg)
        });
        tested.push((r, ok));
        if !ok {
            break;
        }
        in_radius = r;
    }
    ProbeResult { in_radius, tested }
}
