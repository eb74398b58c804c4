//! Numerical toolkit for linearization near irrationally indifferent fixed
//! points and for counting cycles and critical orbits of polynomials.

pub mod mp;
pub mod perturb;
pub mod polydyn;
pub mod famalg;
pub mod linearizer;
pub mod rotation;
pub mod series;
