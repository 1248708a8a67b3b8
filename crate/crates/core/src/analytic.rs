//! Closed-form states `φ(x) = P(x)·exp(−⟨x,Qx⟩ + ⟨c,x⟩)` with `Q` real
//! symmetric positive definite and `c = shift + i·momentum`.
//!
//! The family is closed under the unitary Fourier transform. With
//! `w(k) = c − ik` and `q(k) = ¼ wᵀQ⁻¹w`,
//!
//! ```text
//! FT[e^{−xᵀQx + cᵀx}](k) = 2^{−n/2} det(Q)^{−1/2} e^{q(k)}
//! FT[x^α g](k)          = (i∂_k)^α FT[g](k)
//! ```
//!
//! so `φ̂(k) = 2^{−n/2} det(Q)^{−1/2} e^{q(k)} R(k)` for a polynomial `R` built
//! by exact coefficient algebra: `i∂_j (R e^q) = i(∂_j R + R·∂_j q) e^q` and
//! `∂_j q` is affine in `k`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Space};
use crate::poly::{self, Polynomial, Term};

pub const MAX_DEGREE: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticState {
    poly: Polynomial,
    quad: DMatrix<f64>,
    linear: Vec<Complex64>,
}

/// Exact Fourier transform of an [`AnalyticState`].
#[derive(Debug, Clone)]
pub struct AnalyticTransform {
    poly: Polynomial,
    prefactor: f64,
    quad_inv: DMatrix<f64>,
    linear: Vec<Complex64>,
}

/// JSON form: `{"dim", "poly": [{"exponents", "re", "im"}], "quad": [[..]],
/// "shift": [..], "momentum": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticStateSpec {
    pub dim: usize,
    pub poly: Vec<Term>,
    pub quad: Vec<Vec<f64>>,
    #[serde(default)]
    pub shift: Option<Vec<f64>>,
    #[serde(default)]
    pub momentum: Option<Vec<f64>>,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_matrix(m: &DMatrix<f64>, dim: usize, what: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::InvalidMatrix(format!(
            "{what} must be {dim}×{dim}, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl AnalyticState {
    pub fn new(poly: Polynomial, quad: DMatrix<f64>, linear: Vec<Complex64>) -> Result<Self> {
        let dim = poly.dim();
        if dim == 0 || dim > crate::grid::MAX_DIM {
            return Err(Error::Dimension(format!("unsupported dimension {dim}")));
        }
        check_matrix(&quad, dim, "quad")?;
        let asym = (&quad - quad.transpose()).abs().max();
        if asym > 1e-12 * quad.abs().max().max(1.0) {
            return Err(Error::InvalidMatrix(format!("quad is not symmetric (|Q−Qᵀ| = {asym})")));
        }
        let eig = quad.clone().symmetric_eigenvalues();
        if eig.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "quad must be positive definite, eigenvalues {:?}",
                eig.as_slice()
            )));
        }
        if linear.len() != dim {
            return Err(Error::Dimension(format!(
                "linear term has length {}, expected {dim}",
                linear.len()
            )));
        }
        if poly.degree() > MAX_DEGREE {
            return Err(Error::Unsupported(format!(
                "polynomial degree {} exceeds {MAX_DEGREE}",
                poly.degree()
            )));
        }
        Ok(AnalyticState { poly, quad, linear })
    }

    /// `π^{−n/4} e^{−|x|²/2}`, the normalized standard Gaussian.
    pub fn standard_gaussian(dim: usize) -> Self {
        let poly = Polynomial::constant(dim, c(PI.powf(-0.25 * dim as f64)));
        AnalyticState {
            poly,
            quad: DMatrix::identity(dim, dim) * 0.5,
            linear: vec![c(0.0); dim],
        }
    }

    /// Normalized packet `∝ exp(−|x−center|²/(2 width²) + i⟨momentum,x⟩)`.
    pub fn gaussian_packet(center: &[f64], width: f64, momentum: &[f64]) -> Result<Self> {
        let dim = center.len();
        if momentum.len() != dim {
            return Err(Error::Dimension("center and momentum lengths differ".into()));
        }
        if !(width > 0.0) {
            return Err(Error::Domain(format!("width must be positive, got {width}")));
        }
        let s2 = width * width;
        let linear: Vec<Complex64> = center
            .iter()
            .zip(momentum)
            .map(|(&x0, &p)| Complex64::new(x0 / s2, p))
            .collect();
        let r2: f64 = center.iter().map(|v| v * v).sum();
        let amp = (-r2 / (2.0 * s2)).exp() * (PI * s2).powf(-0.25 * dim as f64);
        Self::new(
            Polynomial::constant(dim, c(amp)),
            DMatrix::identity(dim, dim) / (2.0 * s2),
            linear,
        )
    }

    /// Normalized Hermite function `(2^m m! √π)^{−1/2} H_m(x) e^{−x²/2}`.
    pub fn hermite_function(m: u32) -> Self {
        let fact: f64 = (1..=m).map(|j| j as f64).product();
        let norm = (2f64.powi(m as i32) * fact * PI.sqrt()).powf(-0.5);
        AnalyticState {
            poly: poly::hermite(m).scale(c(norm)),
            quad: DMatrix::from_element(1, 1, 0.5),
            linear: vec![c(0.0)],
        }
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn quad(&self) -> &DMatrix<f64> {
        &self.quad
    }

    pub fn linear(&self) -> &[Complex64] {
        &self.linear
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let n = self.dim();
        let mut expo = Complex64::new(0.0, 0.0);
        for a in 0..n {
            let mut qx = 0.0;
            for b in 0..n {
                qx += self.quad[(a, b)] * x[b];
            }
            expo += self.linear[a] * x[a] - x[a] * qx;
        }
        self.poly.eval(x) * expo.exp()
    }

    /// `ln|φ(x)|`, finite far beyond where `|φ(x)|` underflows.
    pub fn ln_abs(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut expo = 0.0;
        for a in 0..n {
            let mut qx = 0.0;
            for b in 0..n {
                qx += self.quad[(a, b)] * x[b];
            }
            expo += self.linear[a].re * x[a] - x[a] * qx;
        }
        self.poly.eval(x).norm().ln() + expo
    }

    pub fn transform(&self) -> AnalyticTransform {
        let n = self.dim();
        let quad_inv = self
            .quad
            .clone()
            .try_inverse()
            .expect("positive definite matrix is invertible");
        let det = self.quad.determinant();
        let prefactor = 2f64.powf(-0.5 * n as f64) / det.sqrt();
        let i = Complex64::new(0.0, 1.0);
        // ∂_j q(k) = −(i/2)(Q⁻¹c)_j − ½ (Q⁻¹k)_j
        let dq: Vec<Polynomial> = (0..n)
            .map(|j| {
                let qc: Complex64 = (0..n).map(|l| self.linear[l] * quad_inv[(j, l)]).sum();
                let coeffs: Vec<Complex64> = (0..n).map(|l| c(-0.5 * quad_inv[(j, l)])).collect();
                Polynomial::linear(n, &coeffs, -0.5 * i * qc)
            })
            .collect();
        let apply = |r: &Polynomial, j: usize| -> Polynomial {
            (&r.derivative(j) + &(r * &dq[j])).scale(i)
        };
        let mut out = Polynomial::zero(n);
        for (e, coef) in self.poly.terms() {
            let mut r = Polynomial::one(n);
            for j in 0..n {
                for _ in 0..e[j] {
                    r = apply(&r, j);
                }
            }
            out = &out + &r.scale(*coef);
        }
        AnalyticTransform {
            poly: out,
            prefactor,
            quad_inv,
            linear: self.linear.clone(),
        }
    }

    pub fn eval_fourier(&self, k: &[f64]) -> Complex64 {
        self.transform().eval(k)
    }

    /// `‖φ‖²`, exact: `|φ|²` is again in the family and `∫g = (2π)^{n/2} ĝ(0)`.
    pub fn norm_sqr(&self) -> f64 {
        let n = self.dim();
        let density = AnalyticState {
            poly: &self.poly * &self.poly.conj(),
            quad: &self.quad * 2.0,
            linear: self.linear.iter().map(|v| c(2.0 * v.re)).collect(),
        };
        let zero = vec![0.0; n];
        (2.0 * PI).powf(0.5 * n as f64) * density.transform().eval(&zero).re
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        AnalyticState {
            poly: self.poly.scale(factor),
            quad: self.quad.clone(),
            linear: self.linear.clone(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(Error::Normalization(n2));
        }
        Ok(self.scaled(c(n2.sqrt().recip())))
    }

    /// `x ↦ φ(x − a)`.
    pub fn translated(&self, a: &[f64]) -> Self {
        let n = self.dim();
        let mut ident = vec![0.0; n * n];
        for d in 0..n {
            ident[d * n + d] = 1.0;
        }
        let minus_a: Vec<f64> = a.iter().map(|v| -v).collect();
        let mut qa = vec![0.0; n];
        for r in 0..n {
            for col in 0..n {
                qa[r] += self.quad[(r, col)] * a[col];
            }
        }
        let a_q_a: f64 = (0..n).map(|r| a[r] * qa[r]).sum();
        let c_a: Complex64 = (0..n).map(|r| self.linear[r] * a[r]).sum();
        let constant = (c(-a_q_a) - c_a).exp();
        AnalyticState {
            poly: self.poly.substitute_affine(&ident, &minus_a).scale(constant),
            quad: self.quad.clone(),
            linear: (0..n).map(|r| self.linear[r] + 2.0 * qa[r]).collect(),
        }
    }

    /// `x ↦ φ(λx)`, not renormalized.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("dilation must be positive, got {lambda}")));
        }
        let n = self.dim();
        let mut diag = vec![0.0; n * n];
        for d in 0..n {
            diag[d * n + d] = lambda;
        }
        Ok(AnalyticState {
            poly: self.poly.substitute_affine(&diag, &vec![0.0; n]),
            quad: &self.quad * (lambda * lambda),
            linear: self.linear.iter().map(|v| v * lambda).collect(),
        })
    }

    /// `x ↦ φ(Ax)` for invertible `A`, not renormalized.
    pub fn linear_map(&self, a: &DMatrix<f64>) -> Result<Self> {
        let n = self.dim();
        check_matrix(a, n, "A")?;
        let det = a.determinant();
        if det.abs() < 1e-14 {
            return Err(Error::InvalidMatrix(format!("A is singular (det = {det})")));
        }
        let row_major: Vec<f64> = (0..n * n).map(|i| a[(i / n, i % n)]).collect();
        let quad = a.transpose() * &self.quad * a;
        let quad = (&quad + quad.transpose()) * 0.5;
        let linear = (0..n)
            .map(|j| (0..n).map(|r| self.linear[r] * a[(r, j)]).sum())
            .collect();
        Ok(AnalyticState {
            poly: self.poly.substitute_affine(&row_major, &vec![0.0; n]),
            quad,
            linear,
        })
    }

    pub fn sample_position(&self, grid: &Grid) -> Result<GridFunction> {
        self.check_grid(grid)?;
        grid.sample_complex(Space::Position, |x| self.eval(x))
    }

    pub fn sample_fourier(&self, grid: &Grid) -> Result<GridFunction> {
        self.check_grid(grid)?;
        let t = self.transform();
        grid.sample_complex(Space::Fourier, |k| t.eval(k))
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "state is {}-d, grid is {}-d",
                self.dim(),
                grid.dim()
            )));
        }
        Ok(())
    }

    pub fn to_spec(&self) -> AnalyticStateSpec {
        let n = self.dim();
        AnalyticStateSpec {
            dim: n,
            poly: self.poly.to_terms(),
            quad: (0..n).map(|r| (0..n).map(|col| self.quad[(r, col)]).collect()).collect(),
            shift: Some(self.linear.iter().map(|v| v.re).collect()),
            momentum: Some(self.linear.iter().map(|v| v.im).collect()),
        }
    }

    pub fn from_spec(spec: &AnalyticStateSpec) -> Result<Self> {
        let n = spec.dim;
        let poly = Polynomial::from_terms(n, &spec.poly)
            .ok_or_else(|| Error::Dimension("polynomial exponent length does not match dim".into()))?;
        if spec.quad.len() != n || spec.quad.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix(format!("quad must be {n}×{n}")));
        }
        let quad = DMatrix::from_fn(n, n, |r, col| spec.quad[r][col]);
        let zeros = vec![0.0; n];
        let shift = spec.shift.as_deref().unwrap_or(&zeros);
        let momentum = spec.momentum.as_deref().unwrap_or(&zeros);
        if shift.len() != n || momentum.len() != n {
            return Err(Error::Dimension("shift/momentum length does not match dim".into()));
        }
        let linear = shift
            .iter()
            .zip(momentum)
            .map(|(&s, &p)| Complex64::new(s, p))
            .collect();
        Self::new(poly, quad, linear)
    }
}

impl AnalyticTransform {
    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn eval(&self, k: &[f64]) -> Complex64 {
        let n = self.linear.len();
        let w: Vec<Complex64> = (0..n)
            .map(|j| self.linear[j] - Complex64::new(0.0, k[j]))
            .collect();
        let mut q = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                q += w[a] * self.quad_inv[(a, b)] * w[b];
            }
        }
        self.poly.eval(k) * (0.25 * q).exp() * self.prefactor
    }

    /// `ln|φ̂(k)|`.
    pub fn ln_abs(&self, k: &[f64]) -> f64 {
        let n = self.linear.len();
        let w: Vec<Complex64> = (0..n)
            .map(|j| self.linear[j] - Complex64::new(0.0, k[j]))
            .collect();
        let mut q = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                q += w[a] * self.quad_inv[(a, b)] * w[b];
            }
        }
        self.poly.eval(k).norm().ln() + 0.25 * q.re + self.prefactor.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct Riemann-sum Fourier transform, independent of both the FFT and
    /// the closed form.
    fn quadrature_ft(f: impl Fn(f64) -> Complex64, k: f64) -> Complex64 {
        let dx = 0.005;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut x = -25.0;
        while x < 25.0 {
            acc += f(x) * Complex64::from_polar(1.0, -k * x);
            x += dx;
        }
        acc * dx / (2.0 * PI).sqrt()
    }

    #[test]
    fn closed_form_matches_quadrature_1d() {
        let poly = Polynomial::univariate(&[0.5, -1.0, 0.3, 0.2]);
        let s = AnalyticState::new(
            poly,
            DMatrix::from_element(1, 1, 0.7),
            vec![Complex64::new(0.4, -1.1)],
        )
        .unwrap();
        for &k in &[-2.0, -0.3, 0.0, 1.7] {
            let want = quadrature_ft(|x| s.eval(&[x]), k);
            let got = s.eval_fourier(&[k]);
            assert!((got - want).norm() < 1e-10, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn hermite_functions_are_fourier_eigenfunctions() {
        for m in 0..=6u32 {
            let s = AnalyticState::hermite_function(m);
            let phase = Complex64::new(0.0, -1.0).powu(m);
            for &k in &[-1.3, 0.0, 0.4, 2.2] {
                let want = s.eval(&[k]) * phase;
                assert!((s.eval_fourier(&[k]) - want).norm() < 1e-12);
            }
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_transform_agrees_with_exact_2d() {
        let poly = &Polynomial::variable(2, 0) * &Polynomial::variable(2, 1);
        let quad = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.45]);
        let s = AnalyticState::new(poly, quad, vec![Complex64::new(0.2, 0.5), Complex64::new(-0.1, 0.0)])
            .unwrap();
        let g = Grid::new(2, 64, 18.0).unwrap();
        let fft = g.forward(&s.sample_position(&g).unwrap()).unwrap();
        let exact = s.sample_fourier(&g).unwrap();
        let max_err = fft
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn exact_norm_matches_quadrature() {
        let s = AnalyticState::new(
            Polynomial::univariate(&[1.0, 2.0]),
            DMatrix::from_element(1, 1, 0.3),
            vec![Complex64::new(0.5, 2.0)],
        )
        .unwrap();
        let g = Grid::new(1, 1024, 60.0).unwrap();
        let q = s.sample_position(&g).unwrap().norm_sqr();
        assert!((s.norm_sqr() - q).abs() < 1e-10 * q);
    }

    #[test]
    fn group_actions_match_pointwise_definitions() {
        let s = AnalyticState::new(
            Polynomial::univariate(&[0.2, 1.0, -0.4]),
            DMatrix::from_element(1, 1, 0.8),
            vec![Complex64::new(0.3, 0.7)],
        )
        .unwrap();
        let t = s.translated(&[1.25]);
        let d = s.dilated(1.7).unwrap();
        let r = s.linear_map(&DMatrix::from_element(1, 1, -0.6)).unwrap();
        for &x in &[-1.0, 0.0, 0.8, 2.5] {
            assert!((t.eval(&[x]) - s.eval(&[x - 1.25])).norm() < 1e-12);
            assert!((d.eval(&[x]) - s.eval(&[1.7 * x])).norm() < 1e-12);
            assert!((r.eval(&[x]) - s.eval(&[-0.6 * x])).norm() < 1e-12);
        }
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let s2 = AnalyticState::gaussian_packet(&[0.3, -0.2], 0.9, &[0.5, 1.0]).unwrap();
        let r2 = s2.linear_map(&a).unwrap();
        let x = [0.4, -0.7];
        let ax = [x[0] + 0.5 * x[1], -0.3 * x[0] + 2.0 * x[1]];
        assert!((r2.eval(&x) - s2.eval(&ax)).norm() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_quad() {
        let err = AnalyticState::new(
            Polynomial::one(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            vec![c(0.0); 2],
        );
        assert!(matches!(err, Err(Error::InvalidMatrix(_))));
        let err = AnalyticState::new(
            Polynomial::univariate(&[0.0; 10]).pow(1),
            DMatrix::from_element(1, 1, 1.0),
            vec![c(0.0)],
        );
        assert!(err.is_ok());
        let deg9 = Polynomial::variable(1, 0).pow(9);
        assert!(AnalyticState::new(deg9, DMatrix::from_element(1, 1, 1.0), vec![c(0.0)]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let s = AnalyticState::gaussian_packet(&[0.5], 1.3, &[-0.2]).unwrap();
        let json = serde_json::to_string(&s.to_spec()).unwrap();
        let back: AnalyticStateSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(AnalyticState::from_spec(&back).unwrap(), s);
    }
}
