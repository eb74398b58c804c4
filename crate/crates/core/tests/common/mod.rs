#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use siegel_core::famalg::{ParamPoly, PerturbationFamily};
use siegel_core::polydyn::ComplexPoly;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rc(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Random polynomial of exact degree `deg` (`None` gives the zero polynomial).
pub fn rpoly(rng: &mut ChaCha8Rng, deg: Option<usize>) -> ParamPoly {
    match deg {
        None => ParamPoly::zero(),
        Some(d) => {
            let mut v: Vec<Complex64> = (0..=d).map(|_| rc(rng)).collect();
            // keep the leading coefficient away from zero
            v[d] = Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..std::f64::consts::TAU));
            ParamPoly::new(v)
        }
    }
}

/// Degree in `0..=max` or the zero polynomial.
pub fn rdeg(rng: &mut ChaCha8Rng, max: usize) -> Option<usize> {
    let k = rng.gen_range(0..=max + 1);
    if k == max + 1 { None } else { Some(k) }
}

fn rlinear(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..std::f64::consts::TAU))
}

/// `d_2 = 1` and `d_n <= n - 2`.
pub fn essentially_quadratic(rng: &mut ChaCha8Rng, z0: Complex64, w0: Complex64, order: usize) -> PerturbationFamily {
    let mut coeffs = vec![ParamPoly::constant(w0), ParamPoly::constant(rlinear(rng)), rpoly(rng, Some(1))];
    for n in 3..=order {
        let d = rdeg(rng, n - 2);
        coeffs.push(rpoly(rng, d));
    }
    PerturbationFamily::new(z0, order, coeffs).unwrap()
}

/// `d_2 <= 0` and `d_n <= n - 2`.
pub fn sub_quadratic(rng: &mut ChaCha8Rng, z0: Complex64, w0: Complex64, order: usize) -> PerturbationFamily {
    let mut coeffs = vec![ParamPoly::constant(w0), ParamPoly::constant(rlinear(rng))];
    let d2 = rdeg(rng, 0);
    coeffs.push(rpoly(rng, d2));
    for n in 3..=order {
        let d = rdeg(rng, n - 2);
        coeffs.push(rpoly(rng, d));
    }
    PerturbationFamily::new(z0, order, coeffs).unwrap()
}

/// Monic-free random polynomial with leading coefficient of modulus about one.
pub fn rcomplex_poly(rng: &mut ChaCha8Rng, d: usize) -> ComplexPoly {
    let mut v: Vec<Complex64> = (0..=d).map(|_| rc(rng)).collect();
    v[d] = Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..std::f64::consts::TAU));
    ComplexPoly::new(v).unwrap()
}

/// Brute-force `g(f(z))` truncated at `m`, by expanding powers of `f - f_0`.
pub fn substitute(g: &[Complex64], f: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut inner = f.to_vec();
    inner[0] = c(0.0, 0.0);
    let mut out = vec![c(0.0, 0.0); m + 1];
    let mut pow = vec![c(0.0, 0.0); m + 1];
    pow[0] = c(1.0, 0.0);
    for gk in g.iter().take(m + 1) {
        for i in 0..=m {
            out[i] += gk * pow[i];
        }
        let mut next = vec![c(0.0, 0.0); m + 1];
        for i in 0..=m {
            for j in 0..=m - i {
                next[i + j] += pow[i] * inner[j];
            }
        }
        pow = next;
    }
    out
}
