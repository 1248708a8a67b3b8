//! Transformation laws of `μ[φ]` under linear maps, dilations and
//! translations, checked by direct quadrature of both sides.
//!
//! Transformed states here are *not* renormalized: `R_Aφ = φ(A·)`,
//! `S_λφ = φ(λ·)`, `T_aφ = φ(· − a)`. The measure of an unnormalized state
//! is the raw integral `∫ f |φ|²|φ̂|²`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::analytic::AnalyticState;
use crate::error::{Error, Result};
use crate::grid::{Grid, Space, MAX_DIM};

type Scalar = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Joint = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Test observable on phase space. Pullbacks by the maps used here keep
/// product observables in product form, so they stay cheap in any dimension.
#[derive(Clone)]
pub enum PhaseObservable {
    Product(Scalar, Scalar),
    Joint(Joint),
}

impl PhaseObservable {
    pub fn product<F, G>(fx: F, gk: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        PhaseObservable::Product(Arc::new(fx), Arc::new(gk))
    }

    pub fn joint<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        PhaseObservable::Joint(Arc::new(f))
    }

    /// Gaussian bump `exp(−|x−x0|²/(2sx²) − |k−k0|²/(2sk²))`.
    pub fn gaussian(x0: Vec<f64>, sx: f64, k0: Vec<f64>, sk: f64) -> Self {
        let bump = |c: Vec<f64>, s: f64| {
            move |v: &[f64]| {
                let r2: f64 = v.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * r2 / (s * s)).exp()
            }
        };
        Self::product(bump(x0, sx), bump(k0, sk))
    }

    pub fn eval(&self, x: &[f64], k: &[f64]) -> f64 {
        match self {
            PhaseObservable::Product(f, g) => f(x) * g(k),
            PhaseObservable::Joint(f) => f(x, k),
        }
    }

    /// `(x, k) ↦ f(Mx·x + t, Mk·k)`.
    pub fn pulled_back(&self, mx: &DMatrix<f64>, t: &[f64], mk: &DMatrix<f64>) -> Self {
        let ax = affine(mx.clone(), t.to_vec());
        let ak = affine(mk.clone(), vec![0.0; mk.nrows()]);
        match self {
            PhaseObservable::Product(f, g) => {
                let (f, g) = (f.clone(), g.clone());
                PhaseObservable::Product(
                    Arc::new(move |x: &[f64]| f(&ax(x))),
                    Arc::new(move |k: &[f64]| g(&ak(k))),
                )
            }
            PhaseObservable::Joint(f) => {
                let f = f.clone();
                PhaseObservable::Joint(Arc::new(move |x: &[f64], k: &[f64]| f(&ax(x), &ak(k))))
            }
        }
    }
}

fn affine(m: DMatrix<f64>, t: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> + Send + Sync {
    move |v: &[f64]| {
        let y = &m * DVector::from_column_slice(v);
        y.iter().zip(&t).map(|(a, b)| a + b).collect()
    }
}

/// Raw `∫ f |φ|²|φ̂|²` for a closed-form state by quadrature on `grid`, using
/// the exact transform for `φ̂`.
pub fn analytic_measure(state: &AnalyticState, f: &PhaseObservable, grid: &Grid) -> Result<f64> {
    if grid.dim() != state.dim() {
        return Err(Error::Dimension(format!(
            "state is {}-d, grid is {}-d",
            state.dim(),
            grid.dim()
        )));
    }
    let fx = state.sample_position(grid)?.abs_sqr();
    let gk = state.sample_fourier(grid)?.abs_sqr();
    let dim = grid.dim();
    let wx = grid.cell_volume(Space::Position);
    let wk = grid.cell_volume(Space::Fourier);
    let mut p = [0.0; MAX_DIM];
    let out = match f {
        PhaseObservable::Product(a, b) => {
            let mut sx = 0.0;
            for (i, d) in fx.iter().enumerate() {
                grid.point(Space::Position, i, &mut p);
                sx += a(&p[..dim]) * d;
            }
            let mut sk = 0.0;
            for (i, d) in gk.iter().enumerate() {
                grid.point(Space::Fourier, i, &mut p);
                sk += b(&p[..dim]) * d;
            }
            sx * wx * sk * wk
        }
        PhaseObservable::Joint(h) => super::product_sum(grid, &fx, &gk, |x, k| Ok(h(x, k)))?,
    };
    if out.is_nan() {
        return Err(Error::Evaluation("observable evaluated to NaN".into()));
    }
    Ok(out)
}

/// Both sides of one law and their absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LawResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl LawResidual {
    fn new(lhs: f64, rhs: f64) -> Self {
        LawResidual {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformLawReport {
    /// `μ[R_Aφ](f)` vs `|det A|^{−2} μ[φ](f(A⁻¹·, Aᵀ·))`.
    pub rotation: LawResidual,
    /// `μ[S_λφ](f)` vs `λ^{−2n} μ[φ](f(·/λ, λ·))`.
    pub dilation: LawResidual,
    /// `μ[T_aφ](f)` vs `μ[φ](f(· + a, ·))`.
    pub translation: LawResidual,
}

impl TransformLawReport {
    pub fn max_residual(&self) -> f64 {
        self.rotation
            .residual
            .max(self.dilation.residual)
            .max(self.translation.residual)
    }
}

pub fn check_transform_laws(
    state: &AnalyticState,
    a: &DMatrix<f64>,
    lambda: f64,
    shift: &[f64],
    f: &PhaseObservable,
    grid: &Grid,
) -> Result<TransformLawReport> {
    let n = state.dim();
    if shift.len() != n {
        return Err(Error::Dimension("shift length does not match state".into()));
    }
    let det = a.determinant();
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidMatrix(format!("A is singular (det = {det})")))?;
    let zero = vec![0.0; n];
    let ident = DMatrix::<f64>::identity(n, n);

    let lhs = analytic_measure(&state.linear_map(a)?, f, grid)?;
    let pulled = f.pulled_back(&a_inv, &zero, &a.transpose());
    let rhs = det.abs().powi(-2) * analytic_measure(state, &pulled, grid)?;
    let rotation = LawResidual::new(lhs, rhs);

    let lhs = analytic_measure(&state.dilated(lambda)?, f, grid)?;
    let pulled = f.pulled_back(&(&ident / lambda), &zero, &(&ident * lambda));
    let rhs = lambda.powi(-2 * n as i32) * analytic_measure(state, &pulled, grid)?;
    let dilation = LawResidual::new(lhs, rhs);

    let lhs = analytic_measure(&state.translated(shift), f, grid)?;
    let pulled = f.pulled_back(&ident, shift, &ident);
    let rhs = analytic_measure(state, &pulled, grid)?;
    let translation = LawResidual::new(lhs, rhs);

    Ok(TransformLawReport {
        rotation,
        dilation,
        translation,
    })
}

/// `|μ[φ](𝓡_A f) − μ[R_Aφ](f)|` for `det A = 1`, with `𝓡_A f = f(A⁻¹·, Aᵀ·)`.
pub fn sl_invariance_residual(
    state: &AnalyticState,
    a: &DMatrix<f64>,
    f: &PhaseObservable,
    grid: &Grid,
) -> Result<f64> {
    let m = super::SymplecticMatrix::embed(a)?;
    let (ax, _, _, dk) = m.blocks();
    let n = state.dim();
    let lhs = analytic_measure(state, &f.pulled_back(&ax, &vec![0.0; n], &dk), grid)?;
    let rhs = analytic_measure(&state.linear_map(a)?, f, grid)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_parameters_give_zero_residuals() {
        let g = Grid::new(1, 128, 24.0).unwrap();
        let s = AnalyticState::gaussian_packet(&[0.3], 0.9, &[0.5]).unwrap();
        let f = PhaseObservable::gaussian(vec![0.1], 1.0, vec![0.2], 1.5);
        let r = check_transform_laws(&s, &DMatrix::identity(1, 1), 1.0, &[0.0], &f, &g).unwrap();
        assert_eq!(r.max_residual(), 0.0);
    }

    #[test]
    fn doubling_map_in_one_dimension() {
        let g = Grid::new(1, 512, 40.0).unwrap();
        let s = AnalyticState::standard_gaussian(1);
        let f = PhaseObservable::gaussian(vec![0.2], 1.0, vec![-0.3], 1.0);
        let a = DMatrix::from_element(1, 1, 2.0);
        let r = check_transform_laws(&s, &a, 2.0, &[0.7], &f, &g).unwrap();
        assert!(r.max_residual() < 1e-12, "{r:?}");
        // f ≡ 1: each marginal of φ(2·) carries mass ½
        let one = PhaseObservable::product(|_| 1.0, |_| 1.0);
        let r = check_transform_laws(&s, &a, 1.0, &[0.0], &one, &g).unwrap();
        assert!((r.rotation.lhs - 0.25).abs() < 1e-12);
        assert!((r.rotation.rhs - 0.25).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_in_two_dimensions() {
        let g = Grid::new(2, 64, 20.0).unwrap();
        let s = AnalyticState::gaussian_packet(&[0.4, -0.2], 1.0, &[0.3, 0.1]).unwrap();
        let (c, si) = ((PI / 4.0).cos(), (PI / 4.0).sin());
        let a = DMatrix::from_row_slice(2, 2, &[c, -si, si, c]);
        let f = PhaseObservable::gaussian(vec![0.5, 0.0], 1.2, vec![0.0, 0.3], 0.8);
        let r = check_transform_laws(&s, &a, 1.3, &[0.25, -0.5], &f, &g).unwrap();
        assert!(r.max_residual() < 1e-10, "{r:?}");
        assert!(sl_invariance_residual(&s, &a, &f, &g).unwrap() < 1e-10);
    }

    #[test]
    fn joint_observable_agrees_with_product_form() {
        let g = Grid::new(1, 128, 24.0).unwrap();
        let s = AnalyticState::hermite_function(2);
        let p = PhaseObservable::gaussian(vec![0.0], 1.0, vec![0.5], 2.0);
        let q = PhaseObservable::joint(|x, k| (-0.5 * x[0] * x[0] - 0.125 * (k[0] - 0.5).powi(2)).exp());
        let a = analytic_measure(&s, &p, &g).unwrap();
        let b = analytic_measure(&s, &q, &g).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn non_special_matrix_rejected() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let s = AnalyticState::standard_gaussian(1);
        let f = PhaseObservable::gaussian(vec![0.0], 1.0, vec![0.0], 1.0);
        let a = DMatrix::from_element(1, 1, 2.0);
        assert!(matches!(sl_invariance_residual(&s, &a, &f, &g), Err(Error::NotSpecial(_))));
    }
}
