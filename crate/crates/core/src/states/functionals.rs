//! Scalar functionals of a state: reflection obstruction, marginal
//! factorization, tempered moments and the Beurling–Hörmander integral.

use num_complex::Complex64;
use serde::Serialize;

use super::{density, product_sum, Wavefunction};
use crate::analytic::AnalyticState;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Space};

/// Growth ratio above which the two-box test reports divergence.
pub const DIVERGENCE_RATIO: f64 = 1.5;
/// Phase-space quadrature spacing for the closed-form functional.
pub const BH_SPACING: f64 = 0.025;

/// `max ||φ̂(−k)| − |φ̂(k)||` over paired grid modes. The unpaired `−N/2`
/// mode on any axis is skipped.
pub fn reflection_obstruction(phi: &Wavefunction) -> f64 {
    let grid = phi.grid();
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let values = phi.psi_hat().values();
    let mut worst: f64 = 0.0;
    for (flat, v) in values.iter().enumerate() {
        let idx = grid.unravel(flat);
        if idx[..dim].contains(&0) {
            continue;
        }
        let mut mirror = [0usize; 3];
        for a in 0..dim {
            mirror[a] = n - idx[a];
        }
        let m = values[grid.ravel(&mirror[..dim])];
        worst = worst.max((m.norm() - v.norm()).abs());
    }
    worst
}

/// Square-root marginals of a phase-space density (`n = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `ψ(x) = (∫ρ(x,k) dk)^{1/2}` on the position grid.
    pub psi: GridFunction,
    /// `φ(k) = (∫ρ(x,k) dx)^{1/2}` on the Fourier grid.
    pub phi: GridFunction,
}

impl Marginals {
    /// `∫T|φ|² dk + ∫V|ψ|² dx`.
    pub fn separable_energy(&self, t: &[f64], v: &[f64]) -> Result<f64> {
        let dot = |w: &[f64], f: &GridFunction| -> Result<f64> {
            if w.len() != f.values().len() {
                return Err(Error::Dimension("symbol length does not match grid".into()));
            }
            Ok(w.iter().zip(f.values()).map(|(a, b)| a * b.norm_sqr()).sum::<f64>() * f.cell_volume())
        };
        Ok(dot(t, &self.phi)? + dot(v, &self.psi)?)
    }
}

/// Splits a nonnegative table `ρ[ix + N·ik]` into its square-root marginals.
pub fn factor_marginals(grid: &Grid, rho: &[f64]) -> Result<Marginals> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported("marginal factorization is implemented for n = 1".into()));
    }
    let len = grid.len();
    if rho.len() != len * len {
        return Err(Error::Dimension(format!(
            "density table has {} entries, expected {}",
            rho.len(),
            len * len
        )));
    }
    if let Some(i) = rho.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Domain(format!(
            "density is negative or NaN at table index {i} ({})",
            rho[i]
        )));
    }
    let (dx, dk) = (grid.dx(), grid.dk());
    let mut mx = vec![0.0; len];
    let mut mk = vec![0.0; len];
    for ik in 0..len {
        for ix in 0..len {
            let r = rho[ix + len * ik];
            mx[ix] += r;
            mk[ik] += r;
        }
    }
    let total: f64 = mx.iter().sum::<f64>() * dx * dk;
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Normalization(total));
    }
    let root = |m: &[f64], w: f64| -> Vec<Complex64> {
        m.iter().map(|v| Complex64::new((v * w).sqrt(), 0.0)).collect()
    };
    Ok(Marginals {
        psi: GridFunction::new(grid, Space::Position, root(&mx, dk))?,
        phi: GridFunction::new(grid, Space::Fourier, root(&mk, dx))?,
    })
}

/// `∫ ρ·h` over the product grid for tables in the `ix + N·ik` layout.
pub fn joint_expectation(grid: &Grid, rho: &[f64], h: &[f64]) -> Result<f64> {
    if rho.len() != h.len() {
        return Err(Error::Dimension("density and observable tables differ in size".into()));
    }
    let s: f64 = rho.iter().zip(h).map(|(a, b)| a * b).sum();
    Ok(s * grid.cell_volume(Space::Position) * grid.cell_volume(Space::Fourier))
}

/// `∫ dμ_φ / (1 + |x| + |k|)^N`.
pub fn tempered_moment(phi: &Wavefunction, order: u32) -> Result<f64> {
    let d = density(phi)?;
    let p = -(order as i32);
    product_sum(d.grid(), d.fx(), d.gk(), |x, k| {
        let r = 1.0 + norm(x) + norm(k);
        Ok(r.powi(p))
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn bh_term(lf: f64, lg: f64, x: f64, k: f64, order: f64) -> f64 {
    let l = lf + lg + (x * k).abs() - order * (1.0 + x.abs() + k.abs()).ln();
    l.exp()
}

/// `∫∫ |φ(x)||φ̂(k)| e^{|xk|} (1+|x|+|k|)^{−N}` over the square
/// `[−L/2, L/2]²` by the midpoint rule with spacing close to `spacing`.
/// Everything is accumulated in log space so the exponential weight never
/// overflows against underflowing tails.
pub fn beurling_hormander_box(state: &AnalyticState, order: u32, box_length: f64, spacing: f64) -> Result<f64> {
    if state.dim() != 1 {
        return Err(Error::Unsupported("the Beurling–Hörmander integral is implemented for n = 1".into()));
    }
    if !(box_length > 0.0 && spacing > 0.0) {
        return Err(Error::Domain("box length and spacing must be positive".into()));
    }
    let m = (box_length / spacing).round().max(1.0) as usize;
    let h = box_length / m as f64;
    let nodes: Vec<f64> = (0..m).map(|i| -0.5 * box_length + (i as f64 + 0.5) * h).collect();
    let t = state.transform();
    let lf: Vec<f64> = nodes.iter().map(|&x| state.ln_abs(&[x])).collect();
    let lg: Vec<f64> = nodes.iter().map(|&k| t.ln_abs(&[k])).collect();
    let order = order as f64;
    let mut acc = 0.0;
    for (i, &x) in nodes.iter().enumerate() {
        if lf[i] == f64::NEG_INFINITY {
            continue;
        }
        let mut row = 0.0;
        for (j, &k) in nodes.iter().enumerate() {
            row += bh_term(lf[i], lg[j], x, k, order);
        }
        acc += row;
    }
    if acc.is_nan() {
        return Err(Error::Evaluation("integrand evaluated to NaN".into()));
    }
    Ok(acc * h * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BhReport {
    pub order: u32,
    pub box_length: f64,
    pub value: f64,
    pub value_doubled: f64,
    /// `value(2L) / value(L)`; 1 when both vanish.
    pub ratio: f64,
    pub divergent: bool,
}

/// Evaluates on boxes of side `L` and `2L` and flags growth above
/// [`DIVERGENCE_RATIO`].
pub fn beurling_hormander_functional(state: &AnalyticState, order: u32, box_length: f64) -> Result<BhReport> {
    let value = beurling_hormander_box(state, order, box_length, BH_SPACING)?;
    let value_doubled = beurling_hormander_box(state, order, 2.0 * box_length, BH_SPACING)?;
    let ratio = if value == 0.0 && value_doubled == 0.0 {
        1.0
    } else {
        value_doubled / value
    };
    Ok(BhReport {
        order,
        box_length,
        value,
        value_doubled,
        ratio,
        divergent: !(ratio <= DIVERGENCE_RATIO) || !value_doubled.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use nalgebra::DMatrix;

    fn grid() -> Grid {
        Grid::new(1, 256, 30.0).unwrap()
    }

    #[test]
    fn obstruction_vanishes_for_real_and_imaginary_states() {
        let g = grid();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        assert!(reflection_obstruction(&w) <= 1e-12);
        let wi = w.scaled(Complex64::new(0.0, 1.0));
        assert!(reflection_obstruction(&wi) <= 1e-12);
    }

    #[test]
    fn obstruction_for_boosted_gaussian() {
        let g = grid();
        let s = AnalyticState::gaussian_packet(&[0.0], 1.0, &[1.0]).unwrap();
        let w = Wavefunction::from_analytic(&s, &g).unwrap();
        let c = std::f64::consts::PI.powf(-0.25);
        let want = g
            .axis(Space::Fourier)
            .iter()
            .map(|k| c * ((-(k - 1.0).powi(2) / 2.0).exp() - (-(k + 1.0).powi(2) / 2.0).exp()).abs())
            .fold(0.0, f64::max);
        let got = reflection_obstruction(&w);
        assert!(got > 0.5);
        assert!((got - want).abs() < 1e-9);
    }

    fn gauss(x: f64, m: f64, s: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn mixture_marginals_and_energy_identity() {
        let g = Grid::new(1, 128, 20.0).unwrap();
        let xs = g.axis(Space::Position);
        let ks = g.axis(Space::Fourier);
        let len = g.len();
        let mut rho = vec![0.0; len * len];
        for ik in 0..len {
            for ix in 0..len {
                let (x, k) = (xs[ix], ks[ik]);
                rho[ix + len * ik] =
                    0.5 * (gauss(x, -1.0, 0.8) * gauss(k, 0.5, 1.0) + gauss(x, 2.0, 0.6) * gauss(k, -0.3, 0.7));
            }
        }
        let m = factor_marginals(&g, &rho).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let want = 0.5 * (gauss(x, -1.0, 0.8) + gauss(x, 2.0, 0.6));
            assert!((m.psi.values()[i].re.powi(2) - want).abs() < 1e-12);
        }
        assert!((m.psi.norm_sqr() - 1.0).abs() < 1e-8);
        assert!((m.phi.norm_sqr() - 1.0).abs() < 1e-8);
        let t: Vec<f64> = ks.iter().map(|k| 0.5 * k * k).collect();
        let v: Vec<f64> = xs.iter().map(|x| 0.5 * x * x).collect();
        let h = g.sample_product(|x, k| 0.5 * (k[0] * k[0] + x[0] * x[0])).unwrap();
        let joint = joint_expectation(&g, &rho, &h).unwrap();
        assert!((m.separable_energy(&t, &v).unwrap() - joint).abs() < 1e-8);
    }

    #[test]
    fn negative_density_is_a_domain_error() {
        let g = Grid::new(1, 8, 4.0).unwrap();
        let mut rho = vec![1.0 / (4.0 * g.dk() * 8.0 * 8.0 * g.dx()); 64];
        rho[5] = -1e-3;
        assert!(matches!(factor_marginals(&g, &rho), Err(Error::Domain(_))));
    }

    #[test]
    fn tempered_moments_are_monotone() {
        let w = Wavefunction::standard_gaussian(&grid()).unwrap();
        let m0 = tempered_moment(&w, 0).unwrap();
        assert!((m0 - 1.0).abs() < 1e-10);
        let mut prev = m0;
        for n in 1..6 {
            let m = tempered_moment(&w, n).unwrap();
            assert!(m > 0.0 && m < prev);
            prev = m;
        }
    }

    #[test]
    fn zero_state_has_zero_functional() {
        let s = AnalyticState::new(Polynomial::zero(1), DMatrix::from_element(1, 1, 0.5), vec![Complex64::new(0.0, 0.0)])
            .unwrap();
        let r = beurling_hormander_functional(&s, 3, 10.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.divergent);
    }

    #[test]
    fn standard_gaussian_matches_ridge_integral() {
        // |φ||φ̂|e^{|xk|} = π^{-1/2} e^{-(|x|-|k|)²/2}, damped by (1+|x|+|k|)^{-3}
        let s = AnalyticState::standard_gaussian(1);
        let small = beurling_hormander_box(&s, 3, 20.0, 0.02).unwrap();
        let large = beurling_hormander_box(&s, 3, 40.0, 0.02).unwrap();
        assert!(large > small && (large - small) / small < 0.01);
    }

    #[test]
    fn polynomial_growth_beats_weak_decay_order() {
        // x²e^{-x²/2} needs N > 5 for the integral to converge
        let p = Polynomial::univariate(&[0.0, 0.0, 1.0]);
        let s = AnalyticState::new(p, DMatrix::from_element(1, 1, 0.5), vec![Complex64::new(0.0, 0.0)]).unwrap();
        assert!(beurling_hormander_functional(&s, 3, 30.0).unwrap().divergent);
        let r = beurling_hormander_functional(&s, 7, 30.0).unwrap();
        assert!(!r.divergent && r.ratio < 1.05, "{r:?}");
    }
}
