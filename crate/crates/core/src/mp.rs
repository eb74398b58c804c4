//! Extended-precision real and complex numbers backed by `astro-float`.
//!
//! Values carry their own working precision in bits; binary operations run at
//! the larger of the two operand precisions with round-to-nearest-even.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_bigint::{BigInt, BigUint, Sign as IntSign};
use num_complex::Complex64;
use num_rational::BigRational;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constant cache"));
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    CONSTS.with(|cc| f(&mut cc.borrow_mut()))
}

/// Real number with an explicit binary precision.
#[derive(Clone)]
pub struct MpReal {
    v: BigFloat,
    prec: usize,
}

impl fmt::Debug for MpReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MpReal({:e}, {} bits)", self.to_f64(), self.prec)
    }
}

impl MpReal {
    pub fn zero(prec: usize) -> Self {
        Self::from_f64(0.0, prec)
    }

    pub fn from_f64(x: f64, prec: usize) -> Self {
        Self { v: BigFloat::from_f64(x, prec), prec }
    }

    pub fn from_bigint(n: &BigInt, prec: usize) -> Self {
        let (sign, mag) = n.to_u64_digits();
        if mag.is_empty() {
            return Self::zero(prec);
        }
        let s = if sign == IntSign::Minus { Sign::Neg } else { Sign::Pos };
        let exp = (64 * mag.len()) as i32;
        let mut v = BigFloat::from_words(&mag, s, exp);
        // rounding to working precision keeps later operations cheap
        let _ = v.set_precision(prec.max(64), RM);
        Self { v, prec }
    }

    pub fn from_biguint(n: &BigUint, prec: usize) -> Self {
        Self::from_bigint(&BigInt::from(n.clone()), prec)
    }

    pub fn from_rational(r: &BigRational, prec: usize) -> Self {
        let num = Self::from_bigint(r.numer(), prec + 8);
        let den = Self::from_bigint(r.denom(), prec + 8);
        Self { v: num.v.div(&den.v, prec, RM), prec }
    }

    pub fn precision(&self) -> usize {
        self.prec
    }

    pub fn with_precision(&self, prec: usize) -> Self {
        let mut v = self.v.clone();
        let _ = v.set_precision(prec, RM);
        Self { v, prec }
    }

    pub fn pi(prec: usize) -> Self {
        let v = with_consts(|cc| cc.pi(prec, RM));
        Self { v, prec }
    }

    pub fn to_f64(&self) -> f64 {
        match self.v.as_raw_parts() {
            None => f64::NAN,
            Some((words, _n, sign, exp, _)) => {
                let len = words.len();
                if len == 0 || words[len - 1] == 0 {
                    return 0.0;
                }
                let hi = words[len - 1] as f64;
                let lo = if len > 1 { words[len - 2] as f64 } else { 0.0 };
                let mant = (hi + lo / 18446744073709551616.0) / 18446744073709551616.0;
                // split the scaling so that large exponents do not overflow early
                let e = exp;
                let half = e / 2;
                let x = mant * 2f64.powi(half) * 2f64.powi(e - half);
                if sign == Sign::Neg {
                    -x
                } else {
                    x
                }
            }
        }
    }

    fn p2(&self, o: &Self) -> usize {
        self.prec.max(o.prec)
    }

    pub fn add(&self, o: &Self) -> Self {
        let p = self.p2(o);
        Self { v: self.v.add(&o.v, p, RM), prec: p }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let p = self.p2(o);
        Self { v: self.v.sub(&o.v, p, RM), prec: p }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let p = self.p2(o);
        Self { v: self.v.mul(&o.v, p, RM), prec: p }
    }

    pub fn div(&self, o: &Self) -> Self {
        let p = self.p2(o);
        Self { v: self.v.div(&o.v, p, RM), prec: p }
    }

    pub fn neg(&self) -> Self {
        Self { v: self.v.neg(), prec: self.prec }
    }

    pub fn abs(&self) -> Self {
        Self { v: self.v.abs(), prec: self.prec }
    }

    pub fn sqrt(&self) -> Self {
        Self { v: self.v.sqrt(self.prec, RM), prec: self.prec }
    }

    pub fn sin(&self) -> Self {
        let v = with_consts(|cc| self.v.sin(self.prec, RM, cc));
        Self { v, prec: self.prec }
    }

    pub fn cos(&self) -> Self {
        let v = with_consts(|cc| self.v.cos(self.prec, RM, cc));
        Self { v, prec: self.prec }
    }

    pub fn atan(&self) -> Self {
        let v = with_consts(|cc| self.v.atan(self.prec, RM, cc));
        Self { v, prec: self.prec }
    }

    pub fn is_zero(&self) -> bool {
        self.v.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.v.is_negative()
    }

    pub fn cmp_value(&self, o: &Self) -> Ordering {
        match self.v.cmp(&o.v) {
            Some(c) if c < 0 => Ordering::Less,
            Some(c) if c > 0 => Ordering::Greater,
            _ => Ordering::Equal,
        }
    }

    /// Base-2 exponent `e` with `|x| in [2^(e-1), 2^e)`, or `None` for zero.
    pub fn exponent(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            self.v.exponent().map(i64::from)
        }
    }
}

/// Complex number made of two [`MpReal`] parts.
#[derive(Clone, Debug)]
pub struct MpComplex {
    pub re: MpReal,
    pub im: MpReal,
}

impl MpComplex {
    pub fn new(re: MpReal, im: MpReal) -> Self {
        Self { re, im }
    }

    pub fn zero(prec: usize) -> Self {
        Self::new(MpReal::zero(prec), MpReal::zero(prec))
    }

    pub fn one(prec: usize) -> Self {
        Self::new(MpReal::from_f64(1.0, prec), MpReal::zero(prec))
    }

    pub fn from_c64(z: Complex64, prec: usize) -> Self {
        Self::new(MpReal::from_f64(z.re, prec), MpReal::from_f64(z.im, prec))
    }

    /// `e^{i theta}` for a real angle.
    pub fn cis(theta: &MpReal) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn precision(&self) -> usize {
        self.re.prec.max(self.im.prec)
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.re.add(&o.re), self.im.add(&o.im))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.re.sub(&o.re), self.im.sub(&o.im))
    }

    pub fn mul(&self, o: &Self) -> Self {
        let re = self.re.mul(&o.re).sub(&self.im.mul(&o.im));
        let im = self.re.mul(&o.im).add(&self.im.mul(&o.re));
        Self::new(re, im)
    }

    pub fn div(&self, o: &Self) -> Self {
        let den = o.norm_sqr();
        let re = self.re.mul(&o.re).add(&self.im.mul(&o.im)).div(&den);
        let im = self.im.mul(&o.re).sub(&self.re.mul(&o.im)).div(&den);
        Self::new(re, im)
    }

    pub fn norm_sqr(&self) -> MpReal {
        self.re.mul(&self.re).add(&self.im.mul(&self.im))
    }

    pub fn abs(&self) -> MpReal {
        self.norm_sqr().sqrt()
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one(self.precision());
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            k >>= 1;
        }
        acc
    }

    /// Principal argument in `(-pi, pi]`.
    pub fn arg(&self) -> MpReal {
        let prec = self.precision();
        let pi = MpReal::pi(prec);
        if self.re.is_zero() {
            let half = pi.div(&MpReal::from_f64(2.0, prec));
            return if self.im.is_negative() { half.neg() } else { half };
        }
        let base = self.im.div(&self.re).atan();
        if !self.re.is_negative() {
            base
        } else if self.im.is_negative() {
            base.sub(&pi)
        } else {
            base.add(&pi)
        }
    }
}
