//! Sparse multivariate polynomials with complex coefficients in up to three
//! variables.

use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::MAX_DIM;

pub type Exponents = [u32; MAX_DIM];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Exponents, Complex64>,
}

/// One monomial in the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term([0; MAX_DIM], c);
        p
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, Complex64::new(1.0, 0.0))
    }

    /// The coordinate `x_axis`.
    pub fn variable(dim: usize, axis: usize) -> Self {
        let mut e = [0; MAX_DIM];
        e[axis] = 1;
        let mut p = Self::zero(dim);
        p.add_term(e, Complex64::new(1.0, 0.0));
        p
    }

    /// Linear form `Σ_j coeffs[j]·x_j + offset`.
    pub fn linear(dim: usize, coeffs: &[Complex64], offset: Complex64) -> Self {
        let mut p = Self::constant(dim, offset);
        for (axis, &c) in coeffs.iter().enumerate().take(dim) {
            let mut e = [0; MAX_DIM];
            e[axis] = 1;
            p.add_term(e, c);
        }
        p
    }

    /// Univariate polynomial in `x_0` from ascending real coefficients.
    pub fn univariate(coeffs: &[f64]) -> Self {
        let mut p = Self::zero(1);
        for (d, &c) in coeffs.iter().enumerate() {
            p.add_term([d as u32, 0, 0], Complex64::new(c, 0.0));
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Complex64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, e: Exponents, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let slot = self.terms.entry(e).or_insert(Complex64::new(0.0, 0.0));
        *slot += c;
        if *slot == Complex64::new(0.0, 0.0) {
            self.terms.remove(&e);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, v) in &self.terms {
            out.add_term(*e, v * c);
        }
        out
    }

    pub fn conj(&self) -> Self {
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, v)| (*e, v.conj())).collect(),
        }
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, v) in &self.terms {
            if e[axis] > 0 {
                let mut d = *e;
                d[axis] -= 1;
                out.add_term(d, v * e[axis] as f64);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::one(self.dim), |acc, _| &acc * self)
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let m: f64 = (0..self.dim).map(|a| x[a].powi(e[a] as i32)).product();
                c * m
            })
            .sum()
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let m: Complex64 = (0..self.dim).map(|a| z[a].powu(e[a])).product();
                c * m
            })
            .sum()
    }

    /// `P(Mx + t)` for a real `dim × dim` matrix `m` (row-major) and offset `t`.
    pub fn substitute_affine(&self, m: &[f64], t: &[f64]) -> Self {
        let n = self.dim;
        let images: Vec<Polynomial> = (0..n)
            .map(|a| {
                let row: Vec<Complex64> =
                    (0..n).map(|b| Complex64::new(m[a * n + b], 0.0)).collect();
                Polynomial::linear(n, &row, Complex64::new(t[a], 0.0))
            })
            .collect();
        let mut out = Self::zero(n);
        for (e, c) in &self.terms {
            let mut term = Self::constant(n, *c);
            for a in 0..n {
                if e[a] > 0 {
                    term = &term * &images[a].pow(e[a]);
                }
            }
            out = &out + &term;
        }
        out
    }

    pub fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(e, c)| Term {
                exponents: e[..self.dim].to_vec(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn from_terms(dim: usize, terms: &[Term]) -> Option<Self> {
        let mut p = Self::zero(dim);
        for t in terms {
            if t.exponents.len() != dim {
                return None;
            }
            let mut e = [0; MAX_DIM];
            e[..dim].copy_from_slice(&t.exponents);
            p.add_term(e, Complex64::new(t.re, t.im));
        }
        Some(p)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, *c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.dim.max(rhs.dim));
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let mut e = [0; MAX_DIM];
                for a in 0..MAX_DIM {
                    e[a] = ea[a] + eb[a];
                }
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

/// Physicists' Hermite polynomial `H_m` in `x_0`.
pub fn hermite(m: u32) -> Polynomial {
    let x2 = Polynomial::univariate(&[0.0, 2.0]);
    let mut prev = Polynomial::one(1);
    if m == 0 {
        return prev;
    }
    let mut cur = x2.clone();
    for j in 1..m {
        let next = &(&x2 * &cur) + &prev.scale(Complex64::new(-2.0 * j as f64, 0.0));
        prev = cur;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn hermite_recurrence() {
        // H_3 = 8x³ − 12x, H_4 = 16x⁴ − 48x² + 12
        let h3 = hermite(3);
        assert_eq!(h3, Polynomial::univariate(&[0.0, -12.0, 0.0, 8.0]));
        let h4 = hermite(4);
        assert_eq!(h4, Polynomial::univariate(&[12.0, 0.0, -48.0, 0.0, 16.0]));
    }

    #[test]
    fn derivative_and_degree() {
        let p = Polynomial::univariate(&[1.0, 2.0, 3.0]);
        assert_eq!(p.derivative(0), Polynomial::univariate(&[2.0, 6.0]));
        assert_eq!(p.degree(), 2);
        assert!(Polynomial::zero(2).is_zero());
    }

    #[test]
    fn affine_substitution_2d() {
        // P = x0·x1, M = [[1,2],[3,4]], t = (1,0) → (x0+2x1+1)(3x0+4x1)
        let p = &Polynomial::variable(2, 0) * &Polynomial::variable(2, 1);
        let q = p.substitute_affine(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0]);
        for &(a, b) in &[(0.3, -1.2), (2.0, 0.5)] {
            let want = (a + 2.0 * b + 1.0) * (3.0 * a + 4.0 * b);
            assert!((q.eval(&[a, b]) - c(want)).norm() < 1e-12);
        }
    }

    #[test]
    fn terms_round_trip() {
        let p = &Polynomial::univariate(&[1.0, 0.0, -0.5]) + &Polynomial::constant(1, Complex64::new(0.0, 2.0));
        let back = Polynomial::from_terms(1, &p.to_terms()).unwrap();
        assert_eq!(back, p);
        assert!(Polynomial::from_terms(2, &p.to_terms()).is_none());
    }

    proptest! {
        #[test]
        fn product_evaluates_pointwise(
            a in prop::collection::vec(-3.0f64..3.0, 1..5),
            b in prop::collection::vec(-3.0f64..3.0, 1..5),
            x in -2.0f64..2.0,
        ) {
            let pa = Polynomial::univariate(&a);
            let pb = Polynomial::univariate(&b);
            let prod = &pa * &pb;
            let want = pa.eval(&[x]) * pb.eval(&[x]);
            prop_assert!((prod.eval(&[x]) - want).norm() <= 1e-9 * (1.0 + want.norm()));
        }
    }
}
