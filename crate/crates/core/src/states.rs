//! Wavefunctions and the phase-space measure `dμ_φ = |φ(x)|²|φ̂(k)|² dx dk`.
//!
//! The measure is always stored factored as the two marginal densities
//! `fx = |φ|²` and `gk = |φ̂|²`; the full product table is only built for
//! `n = 1` diagnostics. Product-grid tables use the layout `t[ix + len·ik]`.

pub mod functionals;
pub mod laws;
pub mod symplectic;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::analytic::AnalyticState;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Space, MAX_DIM};

pub use functionals::{
    beurling_hormander_box, beurling_hormander_functional, factor_marginals, joint_expectation,
    reflection_obstruction, tempered_moment, BhReport, Marginals,
};
pub use laws::{analytic_measure, check_transform_laws, sl_invariance_residual, PhaseObservable, TransformLawReport};
pub use symplectic::SymplecticMatrix;

/// Tolerance on `‖φ‖² − 1` accepted as normalized.
pub const NORM_TOL: f64 = 1e-10;

/// Grid samples of a state together with its cached transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    psi: GridFunction,
    psi_hat: GridFunction,
    norm: f64,
}

impl Wavefunction {
    /// Wraps position samples as-is, computing the transform.
    pub fn from_position(psi: GridFunction) -> Result<Self> {
        if psi.space() != Space::Position {
            return Err(Error::Dimension("expected position-space samples".into()));
        }
        let psi_hat = psi.grid().forward(&psi)?;
        let norm = psi.norm();
        Ok(Wavefunction { psi, psi_hat, norm })
    }

    pub fn from_fourier(psi_hat: GridFunction) -> Result<Self> {
        if psi_hat.space() != Space::Fourier {
            return Err(Error::Dimension("expected Fourier-space samples".into()));
        }
        let psi = psi_hat.grid().inverse(&psi_hat)?;
        let norm = psi.norm();
        Ok(Wavefunction { psi, psi_hat, norm })
    }

    /// Normalizes position samples to unit L² norm.
    pub fn normalized(psi: GridFunction) -> Result<Self> {
        Self::from_position(psi)?.normalize()
    }

    pub fn from_analytic(state: &AnalyticState, grid: &Grid) -> Result<Self> {
        Self::from_position(state.sample_position(grid)?)
    }

    /// Builds from both sides without recomputing the transform; the caller
    /// guarantees consistency.
    pub(crate) fn from_parts(psi: GridFunction, psi_hat: GridFunction) -> Self {
        let norm = psi.norm();
        Wavefunction { psi, psi_hat, norm }
    }

    pub fn standard_gaussian(grid: &Grid) -> Result<Self> {
        Self::from_analytic(&AnalyticState::standard_gaussian(grid.dim()), grid)
    }

    pub fn grid(&self) -> &Grid {
        self.psi.grid()
    }

    pub fn psi(&self) -> &GridFunction {
        &self.psi
    }

    pub fn psi_hat(&self) -> &GridFunction {
        &self.psi_hat
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm * self.norm - 1.0).abs() <= NORM_TOL
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::Normalization(self.norm * self.norm))
        }
    }

    pub fn normalize(&self) -> Result<Self> {
        if !(self.norm > 0.0 && self.norm.is_finite()) {
            return Err(Error::Normalization(self.norm * self.norm));
        }
        let s = Complex64::new(self.norm.recip(), 0.0);
        let psi = self.psi.scaled(s);
        let psi_hat = self.psi_hat.scaled(s);
        Ok(Self::from_parts(psi, psi_hat))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self::from_parts(self.psi.scaled(factor), self.psi_hat.scaled(factor))
    }

    /// `|φ(x)|²` samples.
    pub fn fx(&self) -> Vec<f64> {
        self.psi.abs_sqr()
    }

    /// `|φ̂(k)|²` samples.
    pub fn gk(&self) -> Vec<f64> {
        self.psi_hat.abs_sqr()
    }

    /// Cyclic translation by whole cells: `x ↦ φ(x − a)`.
    pub fn translated(&self, a: &[f64]) -> Result<Self> {
        let grid = self.grid();
        if a.len() != grid.dim() {
            return Err(Error::Dimension(format!(
                "shift has {} components, grid is {}-d",
                a.len(),
                grid.dim()
            )));
        }
        let dx = grid.dx();
        let mut cells = Vec::with_capacity(a.len());
        for &v in a {
            let c = v / dx;
            if (c - c.round()).abs() > 1e-9 * c.abs().max(1.0) {
                return Err(Error::UnsupportedShift(a.to_vec()));
            }
            cells.push(c.round() as i64);
        }
        Self::from_position(self.psi.shifted_cells(&cells))
    }
}

/// Factored density of `μ[φ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceDensity {
    grid: Grid,
    fx: Vec<f64>,
    gk: Vec<f64>,
}

impl PhaseSpaceDensity {
    pub fn from_marginals(grid: &Grid, fx: Vec<f64>, gk: Vec<f64>) -> Result<Self> {
        if fx.len() != grid.len() || gk.len() != grid.len() {
            return Err(Error::Dimension("marginal length does not match grid".into()));
        }
        Ok(PhaseSpaceDensity {
            grid: grid.clone(),
            fx,
            gk,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fx(&self) -> &[f64] {
        &self.fx
    }

    pub fn gk(&self) -> &[f64] {
        &self.gk
    }

    pub fn mass_x(&self) -> f64 {
        self.fx.iter().sum::<f64>() * self.grid.cell_volume(Space::Position)
    }

    pub fn mass_k(&self) -> f64 {
        self.gk.iter().sum::<f64>() * self.grid.cell_volume(Space::Fourier)
    }

    /// Full `fx ⊗ gk` table (`t[ix + N·ik]`), `n = 1` only.
    pub fn materialize(&self) -> Result<Vec<f64>> {
        if self.grid.dim() != 1 {
            return Err(Error::Unsupported(
                "the full phase-space table is only built for n = 1".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.fx.len() * self.gk.len());
        for g in &self.gk {
            out.extend(self.fx.iter().map(|f| f * g));
        }
        Ok(out)
    }

    /// `μ(f)` for an observable on the product grid.
    pub fn integrate(&self, f: &Observable<'_>) -> Result<f64> {
        let wx = self.grid.cell_volume(Space::Position);
        let wk = self.grid.cell_volume(Space::Fourier);
        let len = self.grid.len();
        let check = |v: f64| {
            if v.is_nan() {
                Err(Error::Evaluation("observable evaluated to NaN".into()))
            } else {
                Ok(v)
            }
        };
        let dot = |a: &[f64], b: &[f64]| -> Result<f64> {
            if a.len() != b.len() {
                return Err(Error::Dimension("observable length does not match grid".into()));
            }
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b) {
                s += check(*x)? * y;
            }
            Ok(s)
        };
        match f {
            Observable::Constant(c) => Ok(check(*c)? * self.mass_x() * self.mass_k()),
            Observable::Sum { x, k } => {
                Ok(dot(x, &self.fx)? * wx * self.mass_k() + dot(k, &self.gk)? * wk * self.mass_x())
            }
            Observable::Product { x, k } => Ok(dot(x, &self.fx)? * wx * dot(k, &self.gk)? * wk),
            Observable::Table(t) => {
                if t.len() != len * len {
                    return Err(Error::Dimension(format!(
                        "product table has {} entries, expected {}",
                        t.len(),
                        len * len
                    )));
                }
                let mut acc = 0.0;
                for (ik, g) in self.gk.iter().enumerate() {
                    if *g == 0.0 {
                        continue;
                    }
                    let row = &t[ik * len..(ik + 1) * len];
                    acc += dot(row, &self.fx)? * g;
                }
                Ok(acc * wx * wk)
            }
            Observable::Joint(func) => {
                product_sum(&self.grid, &self.fx, &self.gk, |x, k| check(func(x, k)))
            }
        }
    }
}

/// `Σ_{x,k} f(x,k)·fx(x)·gk(k)·dxⁿdkⁿ`, skipping zero density entries.
pub(crate) fn product_sum<F>(grid: &Grid, fx: &[f64], gk: &[f64], f: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let dim = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut k = [0.0; MAX_DIM];
    let mut acc = 0.0;
    for (ix, a) in fx.iter().enumerate() {
        if *a == 0.0 {
            continue;
        }
        grid.point(Space::Position, ix, &mut x);
        let mut row = 0.0;
        for (ik, b) in gk.iter().enumerate() {
            if *b == 0.0 {
                continue;
            }
            grid.point(Space::Fourier, ik, &mut k);
            row += f(&x[..dim], &k[..dim])? * b;
        }
        acc += row * a;
    }
    Ok(acc * grid.cell_volume(Space::Position) * grid.cell_volume(Space::Fourier))
}

/// Boxed joint observable `(x, k) ↦ f`.
pub type JointFn<'a> = Box<dyn Fn(&[f64], &[f64]) -> f64 + 'a>;

/// Observable `f(x, k)` sampled on (or evaluated against) the product grid.
pub enum Observable<'a> {
    Constant(f64),
    /// `f(x,k) = x[ix] + k[ik]`.
    Sum { x: Vec<f64>, k: Vec<f64> },
    /// `f(x,k) = x[ix]·k[ik]`.
    Product { x: Vec<f64>, k: Vec<f64> },
    /// Full table `t[ix + len·ik]`.
    Table(Vec<f64>),
    /// Evaluated lazily at every product-grid point.
    Joint(JointFn<'a>),
}

impl<'a> Observable<'a> {
    pub fn joint<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + 'a,
    {
        Observable::Joint(Box::new(f))
    }
}

pub fn density(phi: &Wavefunction) -> Result<PhaseSpaceDensity> {
    phi.require_normalized()?;
    PhaseSpaceDensity::from_marginals(phi.grid(), phi.fx(), phi.gk())
}

/// `μ[φ](f)`.
pub fn measure_integrate(phi: &Wavefunction, f: &Observable<'_>) -> Result<f64> {
    density(phi)?.integrate(f)
}

/// A state either held as grid samples or in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Grid(Wavefunction),
    Analytic(AnalyticState),
}

/// `T_aφ = φ(· − a)`. Grid states need `a` on the lattice `dx·ℤⁿ`.
pub fn apply_translation(state: &State, a: &[f64]) -> Result<State> {
    match state {
        State::Grid(w) => Ok(State::Grid(w.translated(a)?)),
        State::Analytic(s) => {
            if a.len() != s.dim() {
                return Err(Error::Dimension("shift length does not match state".into()));
            }
            Ok(State::Analytic(s.translated(a)))
        }
    }
}

/// `S_λφ = λ^{n/2} φ(λ·)`, normalized.
pub fn apply_dilation(state: &State, lambda: f64) -> Result<State> {
    match state {
        State::Grid(_) if lambda == 1.0 => Ok(state.clone()),
        State::Grid(_) => Err(Error::Unsupported(
            "dilation of grid samples needs resampling; use an AnalyticState".into(),
        )),
        State::Analytic(s) => {
            let n = s.dim() as i32;
            let out = s.dilated(lambda)?;
            Ok(State::Analytic(out.scaled(Complex64::new(lambda.powf(0.5 * n as f64), 0.0))))
        }
    }
}

/// `R_Aφ = |det A|^{1/2} φ(A·)`, normalized.
pub fn apply_rotation(state: &State, a: &DMatrix<f64>) -> Result<State> {
    match state {
        State::Grid(w) => {
            let n = w.grid().dim();
            if a.nrows() == n && a.ncols() == n && (a - DMatrix::identity(n, n)).abs().max() == 0.0 {
                Ok(state.clone())
            } else {
                Err(Error::Unsupported(
                    "linear maps of grid samples need resampling; use an AnalyticState".into(),
                ))
            }
        }
        State::Analytic(s) => {
            let out = s.linear_map(a)?;
            let det = a.determinant().abs();
            Ok(State::Analytic(out.scaled(Complex64::new(det.sqrt(), 0.0))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(1, 256, 30.0).unwrap()
    }

    #[test]
    fn gaussian_density_is_gaussian_on_both_sides() {
        let g = grid();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        let d = density(&w).unwrap();
        for i in 0..g.len() {
            let x = g.x_at(i);
            let k = g.k_at(i);
            assert!((d.fx()[i] - (-x * x).exp() / PI.sqrt()).abs() < 1e-12);
            assert!((d.gk()[i] - (-k * k).exp() / PI.sqrt()).abs() < 1e-10);
        }
        assert!((d.mass_x() * d.mass_k() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn first_hermite_density_factorizes() {
        let g = grid();
        let w = Wavefunction::from_analytic(&AnalyticState::hermite_function(1), &g).unwrap();
        let d = density(&w).unwrap();
        // |φ1|² = 2/√π x² e^{-x²}
        let c = 2.0 / PI.sqrt();
        for i in 0..g.len() {
            let x = g.x_at(i);
            let k = g.k_at(i);
            assert!((d.fx()[i] - c * x * x * (-x * x).exp()).abs() < 1e-12);
            assert!((d.gk()[i] - c * k * k * (-k * k).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let g = grid();
        let w = Wavefunction::standard_gaussian(&g).unwrap().scaled(Complex64::new(2.0, 0.0));
        assert!(matches!(density(&w), Err(Error::Normalization(_))));
        assert!(density(&w.normalize().unwrap()).is_ok());
    }

    #[test]
    fn oscillator_observable_on_gaussian() {
        let g = grid();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        let one = measure_integrate(&w, &Observable::Constant(1.0)).unwrap();
        assert!((one - 1.0).abs() < 1e-10);
        let xs: Vec<f64> = g.axis(Space::Position).iter().map(|x| 0.5 * x * x).collect();
        let ks: Vec<f64> = g.axis(Space::Fourier).iter().map(|k| 0.5 * k * k).collect();
        let sum = measure_integrate(&w, &Observable::Sum { x: xs, k: ks }).unwrap();
        assert!((sum - 0.5).abs() < 1e-10);
        let joint =
            measure_integrate(&w, &Observable::joint(|x, k| 0.5 * (x[0] * x[0] + k[0] * k[0]))).unwrap();
        assert!((joint - 0.5).abs() < 1e-10);
        let table = g.sample_product(|x, k| 0.5 * (x[0] * x[0] + k[0] * k[0])).unwrap();
        let tab = measure_integrate(&w, &Observable::Table(table)).unwrap();
        assert!((tab - joint).abs() < 1e-12);
    }

    #[test]
    fn nan_observable_is_an_evaluation_error() {
        let g = grid();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        let r = measure_integrate(&w, &Observable::joint(|_, _| f64::NAN));
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn translation_moves_fx_and_keeps_gk() {
        let g = grid();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        let a = 16.0 * g.dx();
        let t = apply_translation(&State::Grid(w.clone()), &[a]).unwrap();
        let State::Grid(t) = t else { unreachable!() };
        let (f0, f1) = (w.fx(), t.fx());
        for i in 0..g.len() - 16 {
            assert!((f1[i + 16] - f0[i]).abs() < 1e-15);
        }
        for (a, b) in w.gk().iter().zip(t.gk()) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = apply_translation(&State::Grid(w), &[0.3 * g.dx()]);
        assert!(matches!(bad, Err(Error::UnsupportedShift(_))));
    }

    #[test]
    fn identity_actions() {
        let s = AnalyticState::gaussian_packet(&[0.2], 1.1, &[0.3]).unwrap();
        let st = State::Analytic(s.clone());
        assert_eq!(apply_translation(&st, &[0.0]).unwrap(), st);
        let State::Analytic(d) = apply_dilation(&st, 1.0).unwrap() else { unreachable!() };
        let State::Analytic(r) = apply_rotation(&st, &DMatrix::identity(1, 1)).unwrap() else {
            unreachable!()
        };
        for &x in &[-1.0, 0.5] {
            assert!((d.eval(&[x]) - s.eval(&[x])).norm() < 1e-15);
            assert!((r.eval(&[x]) - s.eval(&[x])).norm() < 1e-15);
        }
    }

    #[test]
    fn normalized_dilation_of_gaussian() {
        let st = State::Analytic(AnalyticState::standard_gaussian(1));
        let State::Analytic(d) = apply_dilation(&st, 2.0).unwrap() else { unreachable!() };
        assert!((d.norm_sqr() - 1.0).abs() < 1e-13);
        // width ½ in x: |φ|² ∝ e^{-4x²}; width 2 in k: |φ̂|² ∝ e^{-k²/4}
        let r = (d.eval(&[0.5]).norm_sqr() / d.eval(&[0.0]).norm_sqr()).ln();
        assert!((r + 1.0).abs() < 1e-12);
        let r = (d.eval_fourier(&[2.0]).norm_sqr() / d.eval_fourier(&[0.0]).norm_sqr()).ln();
        assert!((r + 1.0).abs() < 1e-12);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.7]);
        let st2 = State::Analytic(AnalyticState::standard_gaussian(2));
        let State::Analytic(r2) = apply_rotation(&st2, &a).unwrap() else { unreachable!() };
        assert!((r2.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn materialized_table_matches_factors() {
        let g = Grid::new(1, 16, 6.0).unwrap();
        let w = Wavefunction::standard_gaussian(&g).unwrap().normalize().unwrap();
        let d = density(&w).unwrap();
        let t = d.materialize().unwrap();
        assert_eq!(t[3 + 16 * 5], d.fx()[3] * d.gk()[5]);
        let g2 = Grid::new(2, 8, 6.0).unwrap();
        let d2 = density(&Wavefunction::standard_gaussian(&g2).unwrap().normalize().unwrap()).unwrap();
        assert!(d2.materialize().is_err());
    }
}
