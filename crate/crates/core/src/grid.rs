//! Uniform position/Fourier grid pair and the unitary continuous-convention
//! Fourier transform.
//!
//! A [`Grid`] discretizes the box `[-L/2, L/2)^n` with `N` points per axis:
//!
//! * position samples `x_j = -L/2 + j·dx`, `j = 0..N`, `dx = L/N`
//! * Fourier samples `k_m = m·dk`, `m = -N/2..N/2`, `dk = 2π/L`, stored in
//!   ascending order, so storage index `i` holds mode `m = i - N/2`.
//!
//! Multi-dimensional data is row-major with axis 0 fastest:
//! `flat = i_0 + N·i_1 + N²·i_2`.
//!
//! The transform approximates `f̂(k) = (2π)^{-n/2} ∫ f(x) e^{-i⟨k,x⟩} dx`.
//! Per axis, with `F = DFT(f)` (kernel `e^{-2πi mj/N}`, no scaling):
//!
//! ```text
//! f̂[i] = (dx/√(2π)) · (-1)^m · F[m mod N],        m = i - N/2
//! f[j]  = (dk/√(2π)) · Σ_m (-1)^m f̂_m e^{+2πi mj/N}
//! ```
//!
//! The `(-1)^m` factor is `e^{+i k_m L/2}`, the phase of the `-L/2` offset.
//! With the discrete norms `‖f‖² = dxⁿ Σ|f|²` and `‖f̂‖² = dkⁿ Σ|f̂|²` the pair
//! is exactly unitary.

pub mod io;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Which axis set indexes a [`GridFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Position,
    Fourier,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Position => f.write_str("position"),
            Space::Fourier => f.write_str("fourier"),
        }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
pub struct Grid {
    dim: usize,
    points: usize,
    length: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && self.length.to_bits() == other.length.to_bits()
    }
}

impl Grid {
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dim must be in 1..=3, got {dim}")));
        }
        if points < 2 || !points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a positive even integer, got {points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length must be positive, got {length}")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        };
        Ok(Grid {
            dim,
            points,
            length,
            plans: Arc::new(plans),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Largest |k| on the k-axis (the unpaired `-N/2` mode).
    pub fn k_max(&self) -> f64 {
        self.dk() * (self.points / 2) as f64
    }

    /// Total number of points, `Nⁿ`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, space: Space) -> f64 {
        match space {
            Space::Position => self.dx(),
            Space::Fourier => self.dk(),
        }
    }

    /// Quadrature weight of one grid cell, `dxⁿ` or `dkⁿ`.
    pub fn cell_volume(&self, space: Space) -> f64 {
        self.spacing(space).powi(self.dim as i32)
    }

    pub fn x_at(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.dx()
    }

    pub fn k_at(&self, i: usize) -> f64 {
        (i as f64 - (self.points / 2) as f64) * self.dk()
    }

    pub fn coord_at(&self, space: Space, i: usize) -> f64 {
        match space {
            Space::Position => self.x_at(i),
            Space::Fourier => self.k_at(i),
        }
    }

    pub fn axis(&self, space: Space) -> Vec<f64> {
        (0..self.points).map(|i| self.coord_at(space, i)).collect()
    }

    /// Per-axis indices of a flat index (unused axes are 0).
    pub fn unravel(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for slot in idx.iter_mut().take(self.dim) {
            *slot = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &i| acc * self.points + i)
    }

    /// Writes the coordinates of point `flat` into `out[..dim]`.
    pub fn point(&self, space: Space, flat: usize, out: &mut [f64]) {
        let idx = self.unravel(flat);
        for a in 0..self.dim {
            out[a] = self.coord_at(space, idx[a]);
        }
    }

    /// Index of the grid point nearest to `value` along one axis, if inside.
    pub fn nearest_index(&self, space: Space, value: f64) -> Option<usize> {
        let origin = self.coord_at(space, 0);
        let pos = ((value - origin) / self.spacing(space)).round();
        if pos < 0.0 || pos >= self.points as f64 {
            None
        } else {
            Some(pos as usize)
        }
    }

    fn check(&self, f: &GridFunction, space: Space) -> Result<()> {
        if f.grid != *self {
            return Err(Error::Dimension(format!(
                "function lives on {:?}, transform requested on {:?}",
                f.grid, self
            )));
        }
        if f.space != space {
            return Err(Error::Dimension(format!(
                "expected a {space}-space function, got {}",
                f.space
            )));
        }
        Ok(())
    }

    /// Unitary forward transform, position → Fourier.
    pub fn forward(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f, Space::Position)?;
        let mut values = f.values.clone();
        self.forward_in_place(&mut values);
        Ok(GridFunction {
            grid: self.clone(),
            space: Space::Fourier,
            values,
        })
    }

    /// Unitary inverse transform, Fourier → position.
    pub fn inverse(&self, g: &GridFunction) -> Result<GridFunction> {
        self.check(g, Space::Fourier)?;
        let mut values = g.values.clone();
        self.inverse_in_place(&mut values);
        Ok(GridFunction {
            grid: self.clone(),
            space: Space::Position,
            values,
        })
    }

    /// Forward transform of raw samples in the documented layout.
    pub fn forward_in_place(&self, values: &mut [Complex64]) {
        assert_eq!(values.len(), self.len(), "sample count does not match grid");
        let scale = self.dx() / (2.0 * PI).sqrt();
        self.transform_axes(values, true, scale);
    }

    pub fn inverse_in_place(&self, values: &mut [Complex64]) {
        assert_eq!(values.len(), self.len(), "sample count does not match grid");
        let scale = self.dk() / (2.0 * PI).sqrt();
        self.transform_axes(values, false, scale);
    }

    fn transform_axes(&self, values: &mut [Complex64], forward: bool, scale: f64) {
        let n = self.points;
        let half = n / 2;
        let fft = if forward {
            &self.plans.forward
        } else {
            &self.plans.inverse
        };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut shifted = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // (-1)^m for m = i - N/2
        let sign = |i: usize| if (i + half).is_multiple_of(2) { 1.0 } else { -1.0 };
        let total = values.len();
        for axis in 0..self.dim {
            let stride = n.pow(axis as u32);
            let block = stride * n;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = values[base + j * stride];
                    }
                    if forward {
                        fft.process_with_scratch(&mut line, &mut scratch);
                        for i in 0..n {
                            shifted[i] = line[(i + half) % n] * (scale * sign(i));
                        }
                        for (j, v) in shifted.iter().enumerate() {
                            values[base + j * stride] = *v;
                        }
                    } else {
                        for i in 0..n {
                            shifted[(i + half) % n] = line[i] * sign(i);
                        }
                        fft.process_with_scratch(&mut shifted, &mut scratch);
                        for (j, v) in shifted.iter().enumerate() {
                            values[base + j * stride] = *v * scale;
                        }
                    }
                }
            }
        }
    }

    /// Samples a real expression at every grid point of `space`.
    pub fn sample<F>(&self, space: Space, expr: F) -> Result<GridFunction>
    where
        F: Fn(&[f64]) -> f64,
    {
        self.sample_complex(space, |p| Complex64::new(expr(p), 0.0))
    }

    pub fn sample_complex<F>(&self, space: Space, expr: F) -> Result<GridFunction>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let mut p = [0.0; MAX_DIM];
        let mut values = Vec::with_capacity(self.len());
        for flat in 0..self.len() {
            self.point(space, flat, &mut p);
            let v = expr(&p[..self.dim]);
            if !(v.re.is_finite() && v.im.is_finite()) {
                let bad = if v.re.is_finite() { v.im } else { v.re };
                return Err(Error::Sampling {
                    point: p[..self.dim].to_vec(),
                    value: bad,
                });
            }
            values.push(v);
        }
        Ok(GridFunction {
            grid: self.clone(),
            space,
            values,
        })
    }

    /// Evaluates a real function on the product grid (x-index fastest) and
    /// returns the row-major table `h[ix + len·ik]`.
    pub fn sample_product<F>(&self, expr: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        let len = self.len();
        let mut x = [0.0; MAX_DIM];
        let mut k = [0.0; MAX_DIM];
        let mut out = Vec::with_capacity(len * len);
        for ik in 0..len {
            self.point(Space::Fourier, ik, &mut k);
            for ix in 0..len {
                self.point(Space::Position, ix, &mut x);
                let v = expr(&x[..self.dim], &k[..self.dim]);
                if !v.is_finite() {
                    let mut point = x[..self.dim].to_vec();
                    point.extend_from_slice(&k[..self.dim]);
                    return Err(Error::Sampling { point, value: v });
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}

/// Complex samples on one side of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    space: Space,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: &Grid, space: Space, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(GridFunction {
            grid: grid.clone(),
            space,
            values,
        })
    }

    pub fn from_real(grid: &Grid, space: Space, values: &[f64]) -> Result<Self> {
        Self::new(grid, space, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(grid: &Grid, space: Space) -> Self {
        GridFunction {
            grid: grid.clone(),
            space,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume(self.space)
    }

    /// `cellⁿ · Σ values`.
    pub fn integrate(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.cell_volume()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        self.same_layout(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.cell_volume())
    }

    pub fn same_layout(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid || self.space != other.space {
            return Err(Error::Dimension(format!(
                "layouts differ: {:?}/{} vs {:?}/{}",
                self.grid, self.space, other.grid, other.space
            )));
        }
        Ok(())
    }

    /// Pointwise `|f|²`.
    pub fn abs_sqr(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn scaled(&self, factor: Complex64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            space: self.space,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Pointwise product with a real multiplier table.
    pub fn multiplied(&self, by: &[f64]) -> Result<GridFunction> {
        if by.len() != self.values.len() {
            return Err(Error::Dimension(format!(
                "multiplier has {} values, function has {}",
                by.len(),
                self.values.len()
            )));
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            space: self.space,
            values: self.values.iter().zip(by).map(|(v, m)| v * m).collect(),
        })
    }

    /// Cyclic shift by whole cells per axis: `out(x) = f(x - shift·dx)`.
    pub fn shifted_cells(&self, shift: &[i64]) -> GridFunction {
        let n = self.grid.points as i64;
        let dim = self.grid.dim;
        let mut values = vec![Complex64::new(0.0, 0.0); self.values.len()];
        let mut target = [0usize; MAX_DIM];
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.grid.unravel(flat);
            for a in 0..dim {
                let s = shift.get(a).copied().unwrap_or(0);
                target[a] = (idx[a] as i64 + s).rem_euclid(n) as usize;
            }
            values[self.grid.ravel(&target[..dim])] = *v;
        }
        GridFunction {
            grid: self.grid.clone(),
            space: self.space,
            values,
        }
    }

    /// Relative L² distance `‖self − other‖/‖other‖`.
    pub fn relative_distance(&self, other: &GridFunction) -> Result<f64> {
        self.same_layout(other)?;
        let diff: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let base: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        Ok((diff / base).sqrt())
    }
}
