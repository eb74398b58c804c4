//! Rotation numbers, continued-fraction convergents and Brjuno partial sums.
//!
//! A [`RotationNumber`] is stored as a closed enclosure `[lo, hi]` with exact
//! rational endpoints. Expanding the continued fraction runs the Gauss map on
//! both endpoints at once, so a partial quotient is only emitted when every
//! point of the enclosure agrees on it.
//!
//! Convergents are seeded with `p_{-1} = 1, q_{-1} = 0, p_0 = 0, q_0 = 1`,
//! so that `p_1 / q_1 = 1 / a_1` for `alpha` in `(0, 1)`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_integer::{Integer, Roots};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mp::{MpComplex, MpReal};

/// Default working precision for rotation numbers, in bits.
pub const DEFAULT_PRECISION_BITS: u32 = 256;
/// Default cap on the bit length of quotients and convergent denominators.
pub const DEFAULT_MAX_BITS: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("rational number detected after {} quotients", quotients.len())]
    RationalDetected { quotients: Vec<BigUint> },
    #[error("precision exhausted after {certified} certified quotients")]
    PrecisionExhausted { certified: usize },
    #[error("integer size limit exceeded: {bits} bits > {limit}")]
    Overflow { bits: u64, limit: u64 },
    #[error("need at least {needed} convergent denominators, have {available}")]
    InsufficientTerms { needed: usize, available: usize },
    #[error("invalid rotation number: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RotationSource {
    Algebraic(String),
    Decimal(String),
    Quotients(Vec<BigUint>),
}

/// Irrational (or candidate irrational) number in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct RotationNumber {
    lo: BigRational,
    hi: BigRational,
    precision_bits: u32,
    source: RotationSource,
}

fn pow2(bits: u64) -> BigInt {
    BigInt::one() << bits
}

fn rat(n: BigInt, d: BigInt) -> BigRational {
    BigRational::new(n, d)
}

/// Ordering by cross-multiplication; `Ratio::cmp` recurses once per
/// continued-fraction term and overflows the stack on long expansions.
fn rcmp(a: &BigRational, b: &BigRational) -> std::cmp::Ordering {
    (a.numer() * b.denom()).cmp(&(b.numer() * a.denom()))
}

/// Round an enclosure outward onto the dyadic grid `2^-bits`.
fn dyadic_outward(lo: &BigRational, hi: &BigRational, bits: u64) -> (BigRational, BigRational) {
    let scale = BigRational::from_integer(pow2(bits));
    let l = (lo * &scale).floor().to_integer();
    let h = (hi * &scale).ceil().to_integer();
    (rat(l, pow2(bits)), rat(h, pow2(bits)))
}

/// Enclosure of `sqrt(n)` with width `2^-bits`.
fn sqrt_enclosure(n: u64, bits: u64) -> (BigRational, BigRational) {
    let scaled = BigUint::from(n) << (2 * bits);
    let s = BigInt::from(scaled.sqrt());
    let exact = &s * &s == BigInt::from(BigUint::from(n) << (2 * bits));
    let lo = rat(s.clone(), pow2(bits));
    let hi = if exact { lo.clone() } else { rat(s + 1, pow2(bits)) };
    (lo, hi)
}

/// Bracket `atan(1/x)` by two consecutive partial sums of its alternating series.
fn atan_inv_enclosure(x: u64, bits: u64) -> (BigRational, BigRational) {
    let x2 = BigInt::from(x) * BigInt::from(x);
    let mut sum = BigRational::zero();
    let mut power = BigInt::from(x);
    let mut k: u64 = 0;
    let bound = pow2(bits + 8);
    loop {
        let term = rat(BigInt::one(), BigInt::from(2 * k + 1) * &power);
        let prev = sum.clone();
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        if BigInt::from(2 * k + 1) * &power > bound && k % 2 == 1 {
            // the last step subtracted, so sum < atan < prev
            return (sum, prev);
        }
        power *= &x2;
        k += 1;
    }
}

fn e_enclosure(bits: u64) -> (BigRational, BigRational) {
    let mut sum = BigRational::zero();
    let mut fact = BigInt::one();
    let mut k: u64 = 0;
    let bound = pow2(bits + 8);
    loop {
        sum += rat(BigInt::one(), fact.clone());
        k += 1;
        fact *= BigInt::from(k);
        if fact > bound {
            break;
        }
    }
    // tail sum_{j >= k} 1/j! < 2/k!
    let tail = rat(BigInt::from(2), fact);
    let hi = &sum + tail;
    (sum, hi)
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match mant.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        rat(n, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

impl PartialEq for RotationNumber {
    fn eq(&self, o: &Self) -> bool {
        rcmp(&self.lo, &o.lo).is_eq()
            && rcmp(&self.hi, &o.hi).is_eq()
            && self.precision_bits == o.precision_bits
            && self.source == o.source
    }
}

impl RotationNumber {
    fn checked(
        lo: BigRational,
        hi: BigRational,
        precision_bits: u32,
        source: RotationSource,
    ) -> Result<Self, RotationError> {
        if rcmp(&lo, &hi).is_gt() {
            return Err(RotationError::Invalid("empty enclosure".into()));
        }
        if !lo.is_positive() || rcmp(&hi, &BigRational::one()).is_ge() {
            return Err(RotationError::Invalid("value must lie in (0, 1)".into()));
        }
        Ok(Self { lo, hi, precision_bits, source })
    }

    /// The golden mean `(sqrt 5 - 1) / 2`.
    pub fn golden(bits: u32) -> Self {
        let (lo, hi) = sqrt_enclosure(5, bits as u64 + 2);
        let one = BigRational::one();
        let two = BigRational::from_integer(BigInt::from(2));
        let lo = (lo - &one) / &two;
        let hi = (hi - &one) / &two;
        Self::checked(lo, hi, bits, RotationSource::Algebraic("golden mean (sqrt5-1)/2".into()))
            .expect("golden mean enclosure")
    }

    /// Fractional part of `sqrt(n)` for a non-square `n`.
    pub fn sqrt_fractional(n: u64, bits: u32) -> Result<Self, RotationError> {
        let r = n.sqrt();
        if r * r == n {
            return Err(RotationError::Invalid(format!("{n} is a perfect square")));
        }
        let (lo, hi) = sqrt_enclosure(n, bits as u64 + 2);
        let int = BigRational::from_integer(BigInt::from(r));
        Self::checked(
            lo - &int,
            hi - &int,
            bits,
            RotationSource::Algebraic(format!("frac(sqrt {n})")),
        )
    }

    /// `sqrt 2 - 1`, continued fraction `[0; 2, 2, 2, ...]`.
    pub fn silver(bits: u32) -> Self {
        let mut a = Self::sqrt_fractional(2, bits).expect("sqrt 2");
        a.source = RotationSource::Algebraic("sqrt2-1".into());
        a
    }

    /// `pi - 3` from Machin's formula with bracketing partial sums.
    pub fn pi_minus_3(bits: u32) -> Self {
        let b = bits as u64 + 8;
        let (l5, h5) = atan_inv_enclosure(5, b);
        let (l239, h239) = atan_inv_enclosure(239, b);
        let sixteen = BigRational::from_integer(BigInt::from(16));
        let four = BigRational::from_integer(BigInt::from(4));
        let three = BigRational::from_integer(BigInt::from(3));
        let lo = &sixteen * l5 - &four * h239 - &three;
        let hi = &sixteen * h5 - &four * l239 - &three;
        let (lo, hi) = dyadic_outward(&lo, &hi, b);
        Self::checked(lo, hi, bits, RotationSource::Algebraic("pi-3".into())).expect("pi enclosure")
    }

    /// `e - 2`, continued fraction `[0; 1, 2, 1, 1, 4, 1, 1, 6, ...]`.
    pub fn e_minus_2(bits: u32) -> Self {
        let b = bits as u64 + 8;
        let (lo, hi) = e_enclosure(b);
        let two = BigRational::from_integer(BigInt::from(2));
        let (lo, hi) = dyadic_outward(&(lo - &two), &(hi - &two), b);
        Self::checked(lo, hi, bits, RotationSource::Algebraic("e-2".into())).expect("e enclosure")
    }

    /// A decimal string taken as an exact rational.
    pub fn from_decimal(digits: &str, bits: u32) -> Result<Self, RotationError> {
        let r = parse_decimal(digits)
            .ok_or_else(|| RotationError::Invalid(format!("not a decimal number: {digits:?}")))?;
        Self::checked(r.clone(), r, bits, RotationSource::Decimal(digits.trim().to_string()))
    }

    /// Named constants understood by the command line: `golden`, `silver`,
    /// `pi`, `e`, `sqrt:N`, or a decimal literal.
    pub fn parse_named(name: &str, bits: u32) -> Result<Self, RotationError> {
        match name.trim() {
            "golden" => Ok(Self::golden(bits)),
            "silver" => Ok(Self::silver(bits)),
            "pi" => Ok(Self::pi_minus_3(bits)),
            "e" => Ok(Self::e_minus_2(bits)),
            other => {
                if let Some(n) = other.strip_prefix("sqrt:") {
                    let n: u64 = n
                        .parse()
                        .map_err(|_| RotationError::Invalid(format!("bad radicand {n:?}")))?;
                    Self::sqrt_fractional(n, bits)
                } else {
                    Self::from_decimal(other, bits)
                }
            }
        }
    }

    pub fn lower(&self) -> &BigRational {
        &self.lo
    }

    pub fn upper(&self) -> &BigRational {
        &self.hi
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn source(&self) -> &RotationSource {
        &self.source
    }

    pub fn is_exact(&self) -> bool {
        rcmp(&self.lo, &self.hi).is_eq()
    }

    /// Midpoint of the enclosure.
    pub fn midpoint(&self) -> BigRational {
        (&self.lo + &self.hi) / BigRational::from_integer(BigInt::from(2))
    }

    pub fn to_f64(&self) -> f64 {
        MpReal::from_rational(&self.midpoint(), 64).to_f64()
    }

    pub fn to_mp(&self) -> MpReal {
        MpReal::from_rational(&self.midpoint(), self.precision_bits as usize)
    }

    /// Width of the enclosure as a power of two, `None` when exact.
    pub fn width_log2(&self) -> Option<f64> {
        let w = &self.hi - &self.lo;
        if w.is_zero() {
            return None;
        }
        Some(ln_rational(&w) / std::f64::consts::LN_2)
    }
}

fn ln_rational(r: &BigRational) -> f64 {
    ln_biguint(&r.numer().magnitude().clone()) - ln_biguint(&r.denom().magnitude().clone())
}

/// Natural logarithm of a positive big integer without overflowing `f64`.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        x.to_f64().expect("finite").ln()
    } else {
        let shift = bits - 64;
        let top = (x >> shift).to_f64().expect("finite");
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Why an expansion stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionStatus {
    Complete,
    PrecisionExhausted { certified: usize },
}

/// Partial quotients `a_1..a_N` and convergents `p_0..p_N`, `q_0..q_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFractionExpansion {
    pub quotients: Vec<BigUint>,
    pub p: Vec<BigUint>,
    pub q: Vec<BigUint>,
    pub status: ExpansionStatus,
}

impl ContinuedFractionExpansion {
    /// Build convergents directly from a quotient list.
    pub fn from_quotients(quotients: &[BigUint], max_bits: u64) -> Result<Self, RotationError> {
        let mut cf = Self {
            quotients: Vec::with_capacity(quotients.len()),
            p: vec![BigUint::zero()],
            q: vec![BigUint::one()],
            status: ExpansionStatus::Complete,
        };
        for a in quotients {
            if a.is_zero() {
                return Err(RotationError::Invalid("partial quotients must be positive".into()));
            }
            cf.push(a.clone(), max_bits)?;
        }
        Ok(cf)
    }

    fn push(&mut self, a: BigUint, max_bits: u64) -> Result<(), RotationError> {
        let n = self.q.len();
        let (p_prev, q_prev) = if n >= 2 {
            (self.p[n - 2].clone(), self.q[n - 2].clone())
        } else {
            (BigUint::one(), BigUint::zero())
        };
        let p = &a * &self.p[n - 1] + p_prev;
        let q = &a * &self.q[n - 1] + q_prev;
        let bits = q.bits().max(a.bits());
        if bits > max_bits {
            return Err(RotationError::Overflow { bits, limit: max_bits });
        }
        self.quotients.push(a);
        self.p.push(p);
        self.q.push(q);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.quotients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotients.is_empty()
    }

    pub fn convergent(&self, n: usize) -> BigRational {
        rat(BigInt::from(self.p[n].clone()), BigInt::from(self.q[n].clone()))
    }

    /// Re-checks the three-term recurrence and coprimality with exact integers.
    pub fn verify_recurrence(&self) -> bool {
        let mut pp = (BigUint::one(), BigUint::zero());
        let mut qq = (BigUint::zero(), BigUint::one());
        if self.p[0] != pp.1 || self.q[0] != qq.1 {
            return false;
        }
        for (i, a) in self.quotients.iter().enumerate() {
            let p = a * &pp.1 + &pp.0;
            let q = a * &qq.1 + &qq.0;
            if p != self.p[i + 1] || q != self.q[i + 1] || !p.gcd(&q).is_one() {
                return false;
            }
            pp = (pp.1, p);
            qq = (qq.1, q);
        }
        true
    }
}

/// Expand `alpha` into at most `n_terms` certified partial quotients.
pub fn expand_continued_fraction(
    alpha: &RotationNumber,
    n_terms: usize,
) -> Result<ContinuedFractionExpansion, RotationError> {
    expand_with_limit(alpha, n_terms, DEFAULT_MAX_BITS)
}

pub fn expand_with_limit(
    alpha: &RotationNumber,
    n_terms: usize,
    max_bits: u64,
) -> Result<ContinuedFractionExpansion, RotationError> {
    let mut cf = ContinuedFractionExpansion::from_quotients(&[], max_bits)?;
    let mut lo = alpha.lo.clone();
    let mut hi = alpha.hi.clone();
    for _ in 0..n_terms {
        if lo.is_zero() {
            if hi.is_zero() {
                return Err(RotationError::RationalDetected { quotients: cf.quotients });
            }
            cf.status = ExpansionStatus::PrecisionExhausted { certified: cf.len() };
            return Ok(cf);
        }
        let y_lo = hi.recip();
        let y_hi = lo.recip();
        let a = y_lo.floor();
        if y_hi.floor() != a {
            cf.status = ExpansionStatus::PrecisionExhausted { certified: cf.len() };
            return Ok(cf);
        }
        let a_int = a.to_integer();
        cf.push(a_int.magnitude().clone(), max_bits)?;
        lo = y_lo - &a;
        hi = y_hi - &a;
    }
    Ok(cf)
}

/// Build a rotation number whose continued fraction starts with `quotients`.
///
/// The tail after the given quotients is the golden mean tail `[1, 1, 1, ...]`,
/// and the enclosure is tight enough to certify every given quotient.
pub fn synthesize_from_quotients(quotients: &[BigUint]) -> Result<RotationNumber, RotationError> {
    synthesize_with_limit(quotients, DEFAULT_MAX_BITS)
}

pub fn synthesize_with_limit(
    quotients: &[BigUint],
    max_bits: u64,
) -> Result<RotationNumber, RotationError> {
    if quotients.is_empty() {
        return Err(RotationError::Invalid("empty quotient list".into()));
    }
    let cf = ContinuedFractionExpansion::from_quotients(quotients, max_bits)?;
    let n = cf.len();
    let qn_bits = cf.q[n].bits();
    let bits = (2 * qn_bits + 64).max(DEFAULT_PRECISION_BITS as u64);
    // tail t = 1 + golden in [t_lo, t_hi]; alpha = (p_n t + p_{n-1}) / (q_n t + q_{n-1})
    let (s_lo, s_hi) = sqrt_enclosure(5, bits);
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let t_lo = (&one + s_lo) / &two;
    let t_hi = (&one + s_hi) / &two;
    let big = |x: &BigUint| BigRational::from_integer(BigInt::from(x.clone()));
    let (pn, qn) = (big(&cf.p[n]), big(&cf.q[n]));
    let (pm, qm) = if n >= 1 && n - 1 < cf.p.len() && n >= 2 {
        (big(&cf.p[n - 1]), big(&cf.q[n - 1]))
    } else if n == 1 {
        (big(&cf.p[0]), big(&cf.q[0]))
    } else {
        (one.clone(), BigRational::zero())
    };
    let mobius = |t: &BigRational| (&pn * t + &pm) / (&qn * t + &qm);
    let a = mobius(&t_lo);
    let b = mobius(&t_hi);
    let (lo, hi) = if rcmp(&a, &b).is_le() { (a, b) } else { (b, a) };
    let (lo, hi) = dyadic_outward(&lo, &hi, bits + 8);
    RotationNumber::checked(
        lo,
        hi,
        bits.min(u32::MAX as u64) as u32,
        RotationSource::Quotients(quotients.to_vec()),
    )
}

/// Quotient schedule `a_{n+1} = 2^{q_n}` starting from `q_0 = 1`, truncated at
/// the first quotient whose size would exceed `max_bits`.
pub fn power_tower_schedule(max_terms: usize, max_bits: u64) -> Vec<BigUint> {
    let mut cf = ContinuedFractionExpansion::from_quotients(&[], max_bits).expect("empty");
    for _ in 0..max_terms {
        let qn = cf.q.last().expect("q_0").clone();
        let Some(exp) = qn.to_u64().filter(|e| *e <= max_bits) else {
            break;
        };
        let a = BigUint::one() << exp;
        if cf.push(a, max_bits).is_err() {
            break;
        }
    }
    cf.quotients
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BrjunoVerdict {
    ConvergentLikely,
    DivergentLikely,
    Inconclusive,
}

impl fmt::Display for BrjunoVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::ConvergentLikely => "convergent-likely",
            Self::DivergentLikely => "divergent-likely",
            Self::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Terms `t_n = ln(q_{n+1}) / q_n` for `n = 1..=N` and their running sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrjunoSumResult {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub n: usize,
    /// Number of leading terms computed from materialized integers.
    pub exact_terms: usize,
    pub verdict: BrjunoVerdict,
    pub verdict_basis: String,
}

impl BrjunoSumResult {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

/// Heuristic settings for [`classify_brjuno_heuristic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrjunoHeuristic {
    pub window: usize,
    pub ratio_threshold: f64,
}

impl Default for BrjunoHeuristic {
    fn default() -> Self {
        Self { window: 8, ratio_threshold: 0.5 }
    }
}

/// Largest successive-term ratio accepted as geometric decay.
const GEOMETRIC_DECAY_MAX: f64 = 0.9;

fn brjuno_term(qn: &BigUint, qn1: &BigUint) -> f64 {
    let num = ln_biguint(qn1);
    if qn.bits() <= 1000 {
        num / qn.to_f64().expect("finite")
    } else {
        (num.ln() - ln_biguint(qn)).exp()
    }
}

pub fn brjuno_partial_sum(
    cf: &ContinuedFractionExpansion,
    n: usize,
    heuristic: Option<BrjunoHeuristic>,
) -> Result<BrjunoSumResult, RotationError> {
    // q_1 .. q_{N+1} are needed
    let needed = n + 2;
    if cf.q.len() < needed {
        return Err(RotationError::InsufficientTerms { needed: n + 1, available: cf.q.len() - 1 });
    }
    let mut terms = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n);
    let mut acc = 0.0;
    for k in 1..=n {
        let t = brjuno_term(&cf.q[k], &cf.q[k + 1]);
        acc += t;
        terms.push(t);
        partial_sums.push(acc);
    }
    Ok(finish_sum(terms, partial_sums, n, n, heuristic))
}

fn finish_sum(
    terms: Vec<f64>,
    partial_sums: Vec<f64>,
    n: usize,
    exact_terms: usize,
    heuristic: Option<BrjunoHeuristic>,
) -> BrjunoSumResult {
    let mut result = BrjunoSumResult {
        terms,
        partial_sums,
        n,
        exact_terms,
        verdict: BrjunoVerdict::Inconclusive,
        verdict_basis: "no heuristic requested".into(),
    };
    if let Some(h) = heuristic {
        let c = classify_brjuno_heuristic(&result, h.window, h.ratio_threshold);
        result.verdict = c.verdict;
        result.verdict_basis = c.basis;
    }
    result
}

/// Brjuno partial sum for the schedule `a_{n+1} = 2^{q_n}`, for any `N`.
///
/// Denominators are materialized while they fit in `max_bits`. Past that point
/// `ln q_{n+1} = q_n ln 2 + ln q_n + log1p(q_{n-1} / (a_{n+1} q_n))`, so
/// `t_n = ln 2 + ln(q_n)/q_n + (a positive remainder below 2^-q_n)`, which is
/// evaluated in log space. Every such term is strictly greater than `ln 2`.
pub fn power_tower_brjuno(
    n: usize,
    max_bits: u64,
    heuristic: Option<BrjunoHeuristic>,
) -> BrjunoSumResult {
    let sched = power_tower_schedule(n + 1, max_bits);
    let cf = ContinuedFractionExpansion::from_quotients(&sched, max_bits).expect("schedule fits");
    let exact_q = cf.q.len() - 1;
    let ln2 = std::f64::consts::LN_2;
    // log-space state (ln q_k, ln q_{k-1}); `step` returns t_k and moves to k + 1
    let mut ln_q = ln_biguint(&cf.q[exact_q]);
    let mut ln_q_prev = if exact_q >= 1 { ln_biguint(&cf.q[exact_q - 1]) } else { f64::NEG_INFINITY };
    let mut step = || {
        if !ln_q.is_finite() {
            return ln2;
        }
        let q = ln_q.exp();
        let rem = if q < 64.0 { (ln_q_prev.exp() / (2f64.powf(q) * q)).ln_1p() } else { 0.0 };
        let t = ln2 + (ln_q.ln() - ln_q).exp() + rem / q;
        ln_q_prev = ln_q;
        ln_q = q * ln2 + ln_q + rem;
        t
    };
    if exact_q == 0 {
        step();
    }
    let mut terms = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut exact_terms = 0;
    for k in 1..=n {
        let t = if k < exact_q {
            exact_terms += 1;
            brjuno_term(&cf.q[k], &cf.q[k + 1])
        } else {
            step()
        };
        acc += t;
        terms.push(t);
        partial_sums.push(acc);
    }
    finish_sum(terms, partial_sums, n, exact_terms, heuristic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrjunoClassification {
    pub verdict: BrjunoVerdict,
    pub basis: String,
}

/// Finite-window guess at Brjuno membership. Never a proof.
pub fn classify_brjuno_heuristic(
    result: &BrjunoSumResult,
    window: usize,
    ratio_threshold: f64,
) -> BrjunoClassification {
    let t = &result.terms;
    if window < 2 || t.len() < window {
        return BrjunoClassification {
            verdict: BrjunoVerdict::Inconclusive,
            basis: format!("window {window} needs at least 2 and at most {} terms", t.len()),
        };
    }
    let tail = &t[t.len() - window..];
    let first = t.len() - window + 1;
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= ratio_threshold {
        return BrjunoClassification {
            verdict: BrjunoVerdict::DivergentLikely,
            basis: format!(
                "terms t_{first}..t_{} bounded below by {min:.6} >= {ratio_threshold}",
                t.len()
            ),
        };
    }
    let max_ratio = tail.windows(2).map(|w| w[1] / w[0]).fold(0.0_f64, f64::max);
    if max_ratio <= GEOMETRIC_DECAY_MAX {
        return BrjunoClassification {
            verdict: BrjunoVerdict::ConvergentLikely,
            basis: format!(
                "terms t_{first}..t_{} decay geometrically, max successive ratio {max_ratio:.6} <= {GEOMETRIC_DECAY_MAX}",
                t.len()
            ),
        };
    }
    BrjunoClassification {
        verdict: BrjunoVerdict::Inconclusive,
        basis: format!(
            "terms t_{first}..t_{}: min {min:.6} < {ratio_threshold}, max successive ratio {max_ratio:.6} > {GEOMETRIC_DECAY_MAX}",
            t.len()
        ),
    }
}

/// `lambda = e^{2 pi i alpha}` at the rotation number's working precision.
pub fn multiplier_from_rotation(alpha: &RotationNumber) -> MpComplex {
    let prec = alpha.precision_bits as usize + 16;
    let a = MpReal::from_rational(&alpha.midpoint(), prec);
    let two_pi = MpReal::pi(prec).mul(&MpReal::from_f64(2.0, prec));
    MpComplex::cis(&two_pi.mul(&a))
}

/// `arg(lambda) / 2 pi` reduced to `[0, 1)`.
pub fn rotation_of_multiplier(lambda: Complex64) -> f64 {
    let t = lambda.arg() / std::f64::consts::TAU;
    if t < 0.0 {
        t + 1.0
    } else {
        t
    }
}

/// Detects `lambda = e^{2 pi i s/t}` with `t <= max_denominator`.
///
/// `arg(lambda)/2pi` is expanded exactly (as the dyadic rational stored in the
/// float) and the first convergent within `tol` is returned as `(s, t)`.
pub fn detect_root_of_unity(lambda: Complex64, max_denominator: u64, tol: f64) -> Option<(u64, u64)> {
    if !lambda.re.is_finite() || !lambda.im.is_finite() || lambda.norm() == 0.0 {
        return None;
    }
    let theta = rotation_of_multiplier(lambda);
    if theta < tol || 1.0 - theta < tol {
        return Some((0, 1));
    }
    let x = BigRational::from_float(theta)?;
    let cf = ContinuedFractionExpansion::from_quotients(&[], 4096).ok()?;
    let mut cf = cf;
    let mut rem = x.clone();
    loop {
        if rem.is_zero() {
            break;
        }
        let y = rem.recip();
        let a = y.floor();
        if cf.push(a.to_integer().magnitude().clone(), 4096).is_err() {
            break;
        }
        let n = cf.len();
        let q = cf.q[n].to_u64()?;
        if q > max_denominator {
            break;
        }
        let approx = cf.convergent(n);
        let err = (&x - &approx).abs();
        if MpReal::from_rational(&err, 64).to_f64() <= tol {
            let p = cf.p[n].to_u64()?;
            return Some((p % q, q));
        }
        rem = y - a;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn golden_mean_quotients_and_fibonacci() {
        let cf = expand_continued_fraction(&RotationNumber::golden(256), 10).unwrap();
        assert_eq!(cf.quotients, ints(&[1; 10]));
        assert_eq!(cf.q[1..], ints(&[1, 2, 3, 5, 8, 13, 21, 34, 55, 89])[..]);
        assert_eq!(cf.status, ExpansionStatus::Complete);
        assert!(cf.verify_recurrence());
    }

    #[test]
    fn silver_quotients() {
        let cf = expand_continued_fraction(&RotationNumber::silver(256), 6).unwrap();
        assert_eq!(cf.quotients, ints(&[2; 6]));
    }

    #[test]
    fn pi_quotients() {
        let cf = expand_continued_fraction(&RotationNumber::pi_minus_3(256), 4).unwrap();
        assert_eq!(cf.quotients, ints(&[7, 15, 1, 292]));
    }

    #[test]
    fn e_quotients() {
        let cf = expand_continued_fraction(&RotationNumber::e_minus_2(256), 11).unwrap();
        assert_eq!(cf.quotients, ints(&[1, 2, 1, 1, 4, 1, 1, 6, 1, 1, 8]));
    }

    #[test]
    fn rational_is_detected() {
        let half = RotationNumber::from_decimal("0.5", 64).unwrap();
        assert_eq!(expand_continued_fraction(&half, 1).unwrap().quotients, ints(&[2]));
        match expand_continued_fraction(&half, 3) {
            Err(RotationError::RationalDetected { quotients }) => assert_eq!(quotients, ints(&[2])),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precision_runs_out() {
        let g = RotationNumber::golden(64);
        let cf = expand_continued_fraction(&g, 500).unwrap();
        match cf.status {
            ExpansionStatus::PrecisionExhausted { certified } => {
                assert!(certified > 30 && certified < 60, "{certified}");
                assert!(cf.quotients.iter().all(|a| a.is_one()));
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(RotationNumber::from_decimal("1.5", 64).is_err());
        assert!(RotationNumber::from_decimal("0", 64).is_err());
        assert!(RotationNumber::from_decimal("abc", 64).is_err());
        assert!(RotationNumber::sqrt_fractional(9, 64).is_err());
    }

    #[test]
    fn synthesized_numbers_approximate_targets() {
        let ones = synthesize_from_quotients(&ints(&[1; 20])).unwrap();
        assert!((ones.to_f64() - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-8);
        let twos = synthesize_from_quotients(&ints(&[2; 20])).unwrap();
        assert!((twos.to_f64() - (2f64.sqrt() - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn synthesis_rejects_zero_and_overflow() {
        assert!(synthesize_from_quotients(&ints(&[1, 0, 2])).is_err());
        let huge = vec![BigUint::one() << 100u32];
        assert!(matches!(
            synthesize_with_limit(&huge, 64),
            Err(RotationError::Overflow { .. })
        ));
    }

    #[test]
    fn power_tower_reexpands() {
        let sched = power_tower_schedule(10, DEFAULT_MAX_BITS);
        assert_eq!(sched[..3], ints(&[2, 4, 512])[..]);
        assert_eq!(sched.len(), 4);
        let alpha = synthesize_from_quotients(&sched).unwrap();
        let cf = expand_continued_fraction(&alpha, sched.len()).unwrap();
        assert_eq!(cf.quotients, sched);
        for n in 1..sched.len() {
            assert!(cf.q[n + 1] >= BigUint::one() << cf.q[n].to_u64().unwrap());
        }
    }

    #[test]
    fn power_tower_sum_beats_linear_bound() {
        let ln2 = std::f64::consts::LN_2;
        let r = power_tower_brjuno(12, DEFAULT_MAX_BITS, Some(BrjunoHeuristic::default()));
        assert_eq!(r.exact_terms, 3);
        assert!(r.terms.iter().all(|&t| t >= ln2));
        assert!(r.partial_sums[4] > 5.0 * ln2);
        assert_eq!(r.verdict, BrjunoVerdict::DivergentLikely, "{}", r.verdict_basis);
    }

    #[test]
    fn power_tower_log_space_matches_exact_terms() {
        let exact = power_tower_brjuno(3, DEFAULT_MAX_BITS, None);
        let logspace = power_tower_brjuno(3, 64, None);
        assert_eq!(exact.exact_terms, 3);
        assert!(logspace.exact_terms < 3);
        for (a, b) in exact.terms.iter().zip(&logspace.terms) {
            assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
        }
        let tiny = power_tower_brjuno(3, 1, None);
        assert_eq!(tiny.exact_terms, 0);
        assert!((tiny.terms[0] - exact.terms[0]).abs() < 1e-12);
    }

    #[test]
    fn empty_brjuno_sum_is_zero() {
        let cf = expand_continued_fraction(&RotationNumber::golden(256), 3).unwrap();
        let r = brjuno_partial_sum(&cf, 0, None).unwrap();
        assert_eq!(r.total(), 0.0);
        assert!(r.terms.is_empty());
        assert!(matches!(
            brjuno_partial_sum(&cf, 5, None),
            Err(RotationError::InsufficientTerms { .. })
        ));
    }

    #[test]
    fn spike_is_inconclusive() {
        let mut q = vec![1u64; 12];
        q.push(1_000_000);
        q.extend([1u64; 4]);
        let cf = ContinuedFractionExpansion::from_quotients(&ints(&q), DEFAULT_MAX_BITS).unwrap();
        let r = brjuno_partial_sum(&cf, 15, Some(BrjunoHeuristic::default())).unwrap();
        assert_eq!(r.verdict, BrjunoVerdict::Inconclusive, "{}", r.verdict_basis);
    }

    #[test]
    fn short_results_are_inconclusive() {
        let cf = expand_continued_fraction(&RotationNumber::golden(256), 4).unwrap();
        let r = brjuno_partial_sum(&cf, 3, None).unwrap();
        assert_eq!(classify_brjuno_heuristic(&r, 8, 0.5).verdict, BrjunoVerdict::Inconclusive);
    }

    #[test]
    fn half_turn_multiplier() {
        let half = RotationNumber::from_decimal("0.5", 128).unwrap();
        let l = multiplier_from_rotation(&half).to_c64();
        assert!((l - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn roots_of_unity() {
        let w = Complex64::from_polar(1.0, std::f64::consts::TAU / 3.0);
        assert_eq!(detect_root_of_unity(w, 64, 1e-12), Some((1, 3)));
        let w = Complex64::from_polar(1.0, -std::f64::consts::TAU * 2.0 / 7.0);
        assert_eq!(detect_root_of_unity(w, 64, 1e-12), Some((5, 7)));
        assert_eq!(detect_root_of_unity(Complex64::new(1.0, 0.0), 64, 1e-12), Some((0, 1)));
        let g = Complex64::from_polar(1.0, std::f64::consts::TAU * (5f64.sqrt() - 1.0) / 2.0);
        assert_eq!(detect_root_of_unity(g, 64, 1e-12), None);
        let w = Complex64::from_polar(1.0, std::f64::consts::TAU / 97.0);
        assert_eq!(detect_root_of_unity(w, 64, 1e-12), None);
    }
}
