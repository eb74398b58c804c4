//! Truncated power series kernels generic over the coefficient ring.
//!
//! A series is a slice `c[0..=M]` holding the coefficients of `z^0 .. z^M`.

use num_complex::Complex64;

use crate::mp::MpComplex;

/// Commutative ring operations needed by the series kernels.
pub trait Ring: Clone {
    /// Additive identity compatible with `self` (same precision, etc.).
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
}

/// Ring with division and an `f64` size for diagnostics.
pub trait Field: Ring {
    fn div(&self, o: &Self) -> Self;
    fn magnitude(&self) -> f64;
    fn to_c64(&self) -> Complex64;
    fn lift(&self, z: Complex64) -> Self;
}

impl Ring for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one_like(&self) -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
}

impl Field for Complex64 {
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn to_c64(&self) -> Complex64 {
        *self
    }
    fn lift(&self, z: Complex64) -> Self {
        z
    }
}

impl Ring for MpComplex {
    fn zero_like(&self) -> Self {
        MpComplex::zero(self.precision())
    }
    fn one_like(&self) -> Self {
        MpComplex::one(self.precision())
    }
    fn add(&self, o: &Self) -> Self {
        MpComplex::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        MpComplex::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        MpComplex::mul(self, o)
    }
}

impl Field for MpComplex {
    fn div(&self, o: &Self) -> Self {
        MpComplex::div(self, o)
    }
    fn magnitude(&self) -> f64 {
        self.to_c64().norm()
    }
    fn to_c64(&self) -> Complex64 {
        MpComplex::to_c64(self)
    }
    fn lift(&self, z: Complex64) -> Self {
        MpComplex::from_c64(z, self.precision())
    }
}

/// `a * b` truncated after `z^m`.
pub fn mul<R: Ring>(a: &[R], b: &[R], m: usize) -> Vec<R> {
    let z = seed(a, b).zero_like();
    let mut out = vec![z; m + 1];
    for (i, ai) in a.iter().enumerate().take(m + 1) {
        for (j, bj) in b.iter().enumerate().take(m + 1 - i) {
            out[i + j] = out[i + j].add(&ai.mul(bj));
        }
    }
    out
}

fn seed<'a, R: Ring>(a: &'a [R], b: &'a [R]) -> &'a R {
    a.first().or_else(|| b.first()).expect("series needs at least one coefficient")
}

/// `g(f(z))` truncated after `z^m`; requires `f[0]` to be zero (not checked).
///
/// Horner's scheme: `g_0 + f (g_1 + f (g_2 + ...))`.
pub fn compose<R: Ring>(g: &[R], f: &[R], m: usize) -> Vec<R> {
    let z = seed(g, f).zero_like();
    let mut acc = vec![z.clone(); m + 1];
    for gk in g.iter().take(m + 1).rev() {
        let mut next = mul(&acc, f, m);
        next[0] = next[0].add(gk);
        acc = next;
    }
    acc
}

/// Incrementally built table `pow[j][k] = [h^j]_k` for a series with `h_0 = 0`.
///
/// Column `k` of every power only needs `h_1 .. h_{k-1}` plus `h_k` for the
/// first power, so triangular solvers can fill it one order at a time.
pub struct PowerTable<R> {
    /// `pow[j - 1][k]` is the coefficient of `z^k` in `h^j`.
    pow: Vec<Vec<R>>,
    zero: R,
}

impl<R: Ring> PowerTable<R> {
    pub fn new(zero: R, m: usize) -> Self {
        Self { pow: (0..m).map(|_| vec![zero.clone(); m + 1]).collect(), zero }
    }

    /// Coefficients `[h^j]_k` for `j >= 2`, using `h_1 .. h_{k-1}` already set.
    pub fn fill_higher(&mut self, k: usize) {
        for j in 2..=k {
            let mut s = self.zero.clone();
            for i in 1..=(k + 1 - j) {
                let t = self.pow[0][i].mul(&self.pow[j - 2][k - i]);
                s = s.add(&t);
            }
            self.pow[j - 1][k] = s;
        }
    }

    pub fn set_first(&mut self, k: usize, hk: R) {
        self.pow[0][k] = hk;
    }

    /// `sum_{j>=2} f_j [h^j]_k`.
    pub fn higher_sum(&self, f: &[R], k: usize) -> R {
        let mut s = self.zero.clone();
        for j in 2..=k.min(f.len().saturating_sub(1)) {
            s = s.add(&f[j].mul(&self.pow[j - 1][k]));
        }
        s
    }

    pub fn get(&self, j: usize, k: usize) -> &R {
        &self.pow[j - 1][k]
    }
}

/// Compositional inverse `g` with `f(g(w)) = w` through order `m`.
///
/// Needs `f_0 = 0` and invertible `f_1`.
pub fn revert<F: Field>(f: &[F], m: usize) -> Vec<F> {
    let zero = f[0].zero_like();
    let one = f[0].one_like();
    let mut t = PowerTable::new(zero.clone(), m);
    let mut g = vec![zero.clone(); m + 1];
    if m == 0 {
        return g;
    }
    g[1] = one.div(&f[1]);
    t.set_first(1, g[1].clone());
    for k in 2..=m {
        t.fill_higher(k);
        let rest = t.higher_sum(f, k);
        g[k] = zero.sub(&rest).div(&f[1]);
        t.set_first(k, g[k].clone());
    }
    g
}

/// Evaluate a coefficient list by Horner's scheme.
pub fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
}

/// Coefficients of `p(z0 + w)` in powers of `w`.
pub fn taylor_shift(c: &[Complex64], z0: Complex64) -> Vec<Complex64> {
    let mut out = c.to_vec();
    let n = out.len();
    // repeated synthetic division
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let t = out[j + 1] * z0;
            out[j] += t;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn multiplication_truncates() {
        let a = [c(1.0, 0.0), c(1.0, 0.0)];
        let sq = mul(&a, &a, 1);
        assert_eq!(sq, vec![c(1.0, 0.0), c(2.0, 0.0)]);
    }

    #[test]
    fn composition_of_polynomials() {
        // g(w) = w + w^2, f(z) = 2z  ->  2z + 4z^2
        let g = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let f = [c(0.0, 0.0), c(2.0, 0.0)];
        assert_eq!(compose(&g, &f, 3), vec![c(0.0, 0.0), c(2.0, 0.0), c(4.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn reversion_of_z_plus_z2() {
        // inverse of z + z^2 is the Catalan series w - w^2 + 2w^3 - 5w^4 + 14w^5
        let f = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let g = revert(&f, 5);
        let want = [0.0, 1.0, -1.0, 2.0, -5.0, 14.0];
        for (gk, w) in g.iter().zip(want) {
            assert!((gk - c(w, 0.0)).norm() < 1e-12);
        }
        let id = compose(&f, &g, 5);
        assert!((id[1] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(id[2..].iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let p = [c(1.0, 0.5), c(-2.0, 0.0), c(0.0, 3.0), c(1.0, 1.0)];
        let z0 = c(0.3, -0.7);
        let q = taylor_shift(&p, z0);
        let w = c(0.11, 0.05);
        assert!((horner(&q, w) - horner(&p, z0 + w)).norm() < 1e-13);
    }
}
