//! Orthonormal systems and sums `Σ_j μ[φ_j](f)`: cube-indicator systems with
//! their Bessel-type bounds, the discrete Ky-Fan oracle for separable `f`,
//! Jensen chains, state counting and the Weyl comparison.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticState;
use crate::concentration::{Region, RegionSet};
use crate::eigen;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Space, MAX_DIM};
use crate::states::{Observable, PhaseSpaceDensity, Wavefunction};
use crate::variational::{schrodinger_reduce, Hamiltonian, HamiltonianKind};

/// Gram-matrix tolerance for orthonormal systems.
pub const GRAM_TOL: f64 = 1e-10;
/// Largest grid diagonalized densely.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    CubeIndicators { omega: RegionSet, side: f64 },
    Eigenbasis { eigenvalues: Vec<f64> },
    User,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalSystem {
    states: Vec<Wavefunction>,
    kind: SystemKind,
}

/// Where to put the cubes of a cube system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Placement {
    Centers { centers: Vec<Vec<f64>> },
    /// Distinct cells of the side-`L₀` lattice aligned with the grid.
    Random { seed: u64 },
}

fn gram_defect(states: &[Wavefunction]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate().skip(i) {
            let g = a.psi().inner(b.psi())?;
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - want).norm());
        }
    }
    Ok(worst)
}

impl OrthonormalSystem {
    /// Wraps states after checking `⟨φ_i, φ_j⟩ = δ_ij`.
    pub fn from_states(states: Vec<Wavefunction>) -> Result<Self> {
        Self::with_kind(states, SystemKind::User)
    }

    fn with_kind(states: Vec<Wavefunction>, kind: SystemKind) -> Result<Self> {
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.grid() != first.grid()) {
                return Err(Error::Dimension("system states live on different grids".into()));
            }
        }
        let d = gram_defect(&states)?;
        if d > GRAM_TOL {
            return Err(Error::Inconsistent(format!("states are not orthonormal (Gram defect {d:e})")));
        }
        Ok(OrthonormalSystem { states, kind })
    }

    pub fn states(&self) -> &[Wavefunction] {
        &self.states
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn gram(&self) -> Result<DMatrix<Complex64>> {
        let n = self.states.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = self.states[i].psi().inner(self.states[j].psi())?;
            }
        }
        Ok(g)
    }

    /// The `count` lowest eigenvectors of a separable hamiltonian.
    pub fn eigenbasis(ham: &Hamiltonian, count: usize) -> Result<Self> {
        let spec = Spectrum::of(ham)?;
        if count > spec.values.len() {
            return Err(Error::Domain(format!("only {} eigenstates exist on this grid", spec.values.len())));
        }
        let states = (0..count).map(|j| spec.state(j)).collect::<Result<Vec<_>>>()?;
        Self::with_kind(
            states,
            SystemKind::Eigenbasis {
                eigenvalues: spec.values[..count].to_vec(),
            },
        )
    }
}

/// Closed-form transform of the unnormalized cube indicator `χ_{c,L}`.
pub fn cube_transform(center: &[f64], side: f64, k: &[f64]) -> Complex64 {
    let mut amp = 1.0;
    let mut phase = 0.0;
    for (c, kv) in center.iter().zip(k) {
        amp *= if *kv == 0.0 {
            side
        } else {
            2.0 * (kv * side / 2.0).sin() / kv
        } / (2.0 * PI).sqrt();
        phase -= kv * c;
    }
    Complex64::from_polar(amp, phase)
}

/// `((2/(nπ)) Σ 1/k_j²)ⁿ`, infinite when some `k_j = 0`.
pub fn sinc_bound(k: &[f64]) -> f64 {
    let n = k.len() as f64;
    if k.contains(&0.0) {
        return f64::INFINITY;
    }
    (2.0 / (n * PI) * k.iter().map(|v| v.powi(-2)).sum::<f64>()).powf(n)
}

/// Largest `|χ̂_L(k)|² − ((2/(nπ))Σ1/k_j²)ⁿ` over the grid modes, for the
/// closed-form transform of a side-`L` cube.
pub fn sinc_bound_violation(grid: &Grid, side: f64) -> f64 {
    let dim = grid.dim();
    let center = vec![0.0; dim];
    let mut k = [0.0; MAX_DIM];
    let mut worst = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        grid.point(Space::Fourier, i, &mut k);
        let b = sinc_bound(&k[..dim]);
        if b.is_finite() {
            worst = worst.max(cube_transform(&center, side, &k[..dim]).norm_sqr() - b);
        }
    }
    worst
}

/// Grid transform of the sampled cube indicator in closed form: the product
/// of Dirichlet kernels `dx·sin(mk·dx/2)/sin(k·dx/2)` with the centering phase.
pub fn cube_transform_grid(grid: &Grid, center: &[f64], cells: usize, k: &[f64]) -> Complex64 {
    let dx = grid.dx();
    let mut amp = 1.0;
    let mut phase = 0.0;
    for (c, kv) in center.iter().zip(k) {
        let h = kv * dx / 2.0;
        let d = if h.sin().abs() < 1e-300 {
            cells as f64 * dx
        } else {
            dx * (cells as f64 * h).sin() / h.sin()
        };
        amp *= d / (2.0 * PI).sqrt();
        phase -= kv * c;
    }
    Complex64::from_polar(amp, phase)
}

fn cells_per_side(grid: &Grid, side: f64) -> Result<usize> {
    let m = side / grid.dx();
    let r = m.round();
    if !(side > 0.0) || r < 1.0 || (m - r).abs() > 1e-9 * m.max(1.0) {
        return Err(Error::Placement(format!(
            "cube side {side} is not a positive multiple of dx = {}",
            grid.dx()
        )));
    }
    Ok(r as usize)
}

/// `N` disjoint cubes of side `L₀`, each carrying the state `L₀^{−n/2}χ_{Q_j}`.
pub fn build_cube_system(grid: &Grid, count: usize, side: f64, placement: &Placement) -> Result<OrthonormalSystem> {
    let dim = grid.dim();
    let m = cells_per_side(grid, side)?;
    let points = grid.points_per_axis();
    let dx = grid.dx();
    let x0 = grid.x_at(0);
    let centers: Vec<Vec<f64>> = match placement {
        Placement::Centers { centers } => {
            if centers.len() != count {
                return Err(Error::Placement(format!("{} centers given for {count} cubes", centers.len())));
            }
            for c in centers {
                if c.len() != dim {
                    return Err(Error::Dimension("cube center has the wrong dimension".into()));
                }
                for v in c {
                    // left edge must sit on a cell boundary x_j − dx/2
                    let j = (v - side / 2.0 - (x0 - dx / 2.0)) / dx;
                    if (j - j.round()).abs() > 1e-7 {
                        return Err(Error::Placement(format!("cube at {c:?} is not aligned with grid cells")));
                    }
                }
            }
            centers.clone()
        }
        Placement::Random { seed } => {
            let slots = points / m;
            let total = slots.checked_pow(dim as u32).unwrap_or(usize::MAX);
            if count > total {
                return Err(Error::Placement(format!("{count} cubes of side {side} do not fit ({total} slots)")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut picks = index::sample(&mut rng, total, count).into_vec();
            picks.sort_unstable();
            picks
                .into_iter()
                .map(|mut s| {
                    (0..dim)
                        .map(|_| {
                            let j = s % slots;
                            s /= slots;
                            x0 + (j * m) as f64 * dx + (m - 1) as f64 * dx / 2.0
                        })
                        .collect()
                })
                .collect()
        }
    };
    let omega = RegionSet::new(
        dim,
        Space::Position,
        centers
            .iter()
            .map(|c| Region::Box {
                center: c.clone(),
                half_widths: vec![side / 2.0; dim],
            })
            .collect(),
    )
    .map_err(|e| match e {
        Error::Overlap(i, j) => Error::Placement(format!("cubes {i} and {j} overlap")),
        other => other,
    })?;
    omega
        .check_coverage(grid)
        .map_err(|e| Error::Placement(e.to_string()))?;
    let height = side.powf(-(dim as f64) / 2.0);
    let mut states = Vec::with_capacity(count);
    for comp in &omega.components {
        let single = RegionSet {
            dim,
            space: Space::Position,
            components: vec![comp.clone()],
        };
        let mask = single.indicator(grid)?;
        let cells = mask.iter().filter(|v| **v > 0.0).count();
        if cells != m.pow(dim as u32) {
            return Err(Error::Placement(format!(
                "cube at {:?} covers {cells} cells, expected {}",
                comp.center(),
                m.pow(dim as u32)
            )));
        }
        let vals: Vec<f64> = mask.iter().map(|v| v * height).collect();
        states.push(Wavefunction::from_position(GridFunction::from_real(grid, Space::Position, &vals)?)?);
    }
    OrthonormalSystem::with_kind(states, SystemKind::CubeIndicators { omega, side })
}

/// Bessel-type bound `C|Ω|(2π)^{−n}∫_{Ω×k-grid} f` with `Ω` the union of
/// supports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesselBound {
    /// `sup_j ‖φ_j‖∞²`.
    pub c_sup_sqr: f64,
    pub support_measure: f64,
    /// Uses `C = sup‖φ_j‖∞²`, the form the Bessel step proves.
    pub bound: f64,
    /// Uses `C = sup‖φ_j‖∞`.
    pub bound_linear_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumReport {
    pub count: usize,
    pub per_state: Vec<f64>,
    pub sum_value: f64,
    /// `|Ω|/(2πL₀)ⁿ ∫_{Ω×k-grid} f` for cube systems.
    pub cube_upper_bound: Option<f64>,
    /// `(2π)^{−n} ∫_{Ω×k-grid} f` for cube systems.
    pub sharp_cube_bound: Option<f64>,
    /// Mass bound for the k-box truncation, from the sinc tail.
    pub k_tail_estimate: Option<f64>,
    pub bessel: Option<BesselBound>,
    pub bound_holds: Option<bool>,
    /// Discrete-grid infimum for separable f.
    pub kyfan_oracle_value: Option<f64>,
    pub jensen_lhs: Option<f64>,
    pub jensen_rhs: Option<f64>,
}

/// Largest value of `f` over `{mask(x) > 0} × k-grid`.
fn observable_max(grid: &Grid, f: &Observable<'_>, mask: &[f64]) -> f64 {
    let len = grid.len();
    let xs = || (0..len).filter(|i| mask[*i] > 0.0);
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    match f {
        Observable::Constant(c) => *c,
        Observable::Sum { x, k } => max(&mut xs().map(|i| x[i])) + max(&mut k.iter().copied()),
        Observable::Product { x, k } => {
            let (xa, xb) = (min(&mut xs().map(|i| x[i])), max(&mut xs().map(|i| x[i])));
            let (ka, kb) = (min(&mut k.iter().copied()), max(&mut k.iter().copied()));
            [xa * ka, xa * kb, xb * ka, xb * kb].into_iter().fold(f64::NEG_INFINITY, f64::max)
        }
        Observable::Table(t) => max(&mut (0..len).flat_map(|ik| xs().map(move |ix| t[ix + len * ik]))),
        Observable::Joint(func) => {
            let dim = grid.dim();
            let (mut x, mut k) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
            let mut m = f64::NEG_INFINITY;
            for ix in xs() {
                grid.point(Space::Position, ix, &mut x);
                for ik in 0..len {
                    grid.point(Space::Fourier, ik, &mut k);
                    m = m.max(func(&x[..dim], &k[..dim]));
                }
            }
            m
        }
    }
}

/// `Σ_j μ[φ_j](f)` for the given system, with the cube and Bessel bounds.
/// The states need not be normalized individually beyond the Gram check.
pub fn sum_over_system(sys: &OrthonormalSystem, f: &Observable<'_>) -> Result<SumReport> {
    let Some(first) = sys.states.first() else {
        return Err(Error::Domain("empty orthonormal system".into()));
    };
    let grid = first.grid().clone();
    let dim = grid.dim();
    let per_state = sys
        .states
        .iter()
        .map(|s| PhaseSpaceDensity::from_marginals(&grid, s.fx(), s.gk())?.integrate(f))
        .collect::<Result<Vec<_>>>()?;
    let sum_value: f64 = per_state.iter().sum();

    let support: Vec<f64> = (0..grid.len())
        .map(|i| {
            if sys.states.iter().any(|s| s.psi().values()[i].norm_sqr() > 0.0) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let ones = vec![1.0; grid.len()];
    let omega_integral = PhaseSpaceDensity::from_marginals(&grid, support.clone(), ones)?.integrate(f)?;
    let support_measure = support.iter().sum::<f64>() * grid.cell_volume(Space::Position);
    let c_sup_sqr = sys
        .states
        .iter()
        .flat_map(|s| s.psi().values().iter().map(|v| v.norm_sqr()))
        .fold(0.0, f64::max);
    let two_pi_n = (2.0 * PI).powi(dim as i32);
    let bessel = BesselBound {
        c_sup_sqr,
        support_measure,
        bound: c_sup_sqr * support_measure * omega_integral / two_pi_n,
        bound_linear_c: c_sup_sqr.sqrt() * support_measure * omega_integral / two_pi_n,
    };

    let nonneg = observable_min_nonneg(&grid, f, &support);
    let (cube_upper_bound, sharp_cube_bound, k_tail_estimate) = match &sys.kind {
        SystemKind::CubeIndicators { omega, side } => {
            let cube = omega.measure() / (2.0 * PI * side).powi(dim as i32) * omega_integral;
            let sharp = omega_integral / two_pi_n;
            let t = (4.0 / (PI * side * grid.k_max())).min(1.0);
            let tail_mass = 1.0 - (1.0 - t).powi(dim as i32);
            let fmax = observable_max(&grid, f, &support).max(0.0);
            (Some(cube), Some(sharp), Some(sys.len() as f64 * tail_mass * fmax))
        }
        _ => (None, None, None),
    };
    let bound_holds = if nonneg {
        let limit = cube_upper_bound.unwrap_or(bessel.bound);
        Some(sum_value <= limit * (1.0 + 1e-6) && sum_value <= bessel.bound * (1.0 + 1e-6))
    } else {
        None
    };
    Ok(SumReport {
        count: sys.len(),
        per_state,
        sum_value,
        cube_upper_bound,
        sharp_cube_bound,
        k_tail_estimate,
        bessel: Some(bessel),
        bound_holds,
        kyfan_oracle_value: None,
        jensen_lhs: None,
        jensen_rhs: None,
    })
}

fn observable_min_nonneg(grid: &Grid, f: &Observable<'_>, mask: &[f64]) -> bool {
    match f {
        Observable::Constant(c) => *c >= 0.0,
        Observable::Sum { x, k } | Observable::Product { x, k } => {
            x.iter().zip(mask).all(|(v, m)| *m == 0.0 || *v >= 0.0) && k.iter().all(|v| *v >= 0.0)
        }
        Observable::Table(t) => t.iter().all(|v| *v >= 0.0),
        Observable::Joint(func) => {
            let dim = grid.dim();
            let (mut x, mut k) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
            for ix in (0..grid.len()).filter(|i| mask[*i] > 0.0) {
                grid.point(Space::Position, ix, &mut x);
                for ik in 0..grid.len() {
                    grid.point(Space::Fourier, ik, &mut k);
                    if func(&x[..dim], &k[..dim]) < 0.0 {
                        return false;
                    }
                }
            }
            true
        }
    }
}

/// [`sum_over_system`] for a separable symbol, adding the Ky-Fan oracle.
pub fn sum_over_system_separable(sys: &OrthonormalSystem, ham: &Hamiltonian) -> Result<SumReport> {
    let HamiltonianKind::Separable { t, v } = ham.kind() else {
        return Err(Error::Kind("the Ky-Fan oracle needs a separable hamiltonian".into()));
    };
    let f = Observable::Sum { x: v.clone(), k: t.clone() };
    let mut report = sum_over_system(sys, &f)?;
    report.kyfan_oracle_value = Some(kyfan_oracle(ham, sys.len())?.iter().sum());
    Ok(report)
}

/// Full spectrum of the discretized Schrödinger operator `𝓕⁻¹T𝓕 + V`
/// (`n = 1`, separable).
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns are Euclidean-unit eigenvectors.
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn of(ham: &Hamiltonian) -> Result<Self> {
        let grid = ham.grid();
        if grid.dim() != 1 {
            return Err(Error::Unsupported("dense diagonalization is limited to n = 1".into()));
        }
        if grid.len() > DENSE_LIMIT {
            return Err(Error::Unsupported(format!("dense diagonalization is limited to {DENSE_LIMIT} points")));
        }
        let op = schrodinger_reduce(ham)?;
        let (values, vectors) = eigen::dense_symmetric(op.dense_matrix()?)?;
        Ok(Spectrum {
            grid: grid.clone(),
            values,
            vectors,
        })
    }

    /// The `j`-th eigenstate with unit L² norm.
    pub fn state(&self, j: usize) -> Result<Wavefunction> {
        let s = self.grid.dx().sqrt().recip();
        let vals: Vec<f64> = self.vectors.column(j).iter().map(|v| v * s).collect();
        Wavefunction::from_position(GridFunction::from_real(&self.grid, Space::Position, &vals)?)
    }

    /// `‖ν_λ‖²` with `ν_λ = Σ_{λ_j ≤ λ} φ_j`.
    pub fn nu_norm_sqr(&self, lambda: f64) -> f64 {
        let n = self.vectors.nrows();
        let mut nu = vec![0.0; n];
        for (j, _) in self.values.iter().enumerate().filter(|(_, v)| **v <= lambda) {
            for (a, b) in nu.iter_mut().zip(self.vectors.column(j).iter()) {
                *a += b;
            }
        }
        nu.iter().map(|v| v * v).sum()
    }
}

/// The `count` lowest eigenvalues of the discretized operator; their sum is
/// the discrete-grid infimum of `Σ_j μ[φ_j](T + V)`.
pub fn kyfan_oracle(ham: &Hamiltonian, count: usize) -> Result<Vec<f64>> {
    let spec = Spectrum::of(ham)?;
    if count > spec.values.len() {
        return Err(Error::Domain(format!("only {} eigenvalues exist on this grid", spec.values.len())));
    }
    Ok(spec.values[..count].to_vec())
}

/// `#{λ_j ≤ λ}`.
pub fn state_count(eigs: &[f64], lambda: f64) -> usize {
    eigs.iter().filter(|v| **v <= lambda).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylReport {
    pub lambda: f64,
    pub count: usize,
    pub nu_norm_sqr: f64,
    /// `|{𝓗 < Λ}|/(2π)` on the grid.
    pub phase_volume: f64,
    pub ratio: f64,
}

pub fn weyl_compare(ham: &Hamiltonian, lambda: f64) -> Result<WeylReport> {
    weyl_compare_with(&Spectrum::of(ham)?, ham, lambda)
}

/// As [`weyl_compare`], reusing a computed spectrum.
pub fn weyl_compare_with(spec: &Spectrum, ham: &Hamiltonian, lambda: f64) -> Result<WeylReport> {
    let grid = ham.grid();
    let mut cells = 0usize;
    ham.for_each_product(|_, _, h| {
        if h < lambda {
            cells += 1;
        }
        Ok(())
    })?;
    let phase_volume = cells as f64 * grid.cell_volume(Space::Position) * grid.cell_volume(Space::Fourier)
        / (2.0 * PI).powi(grid.dim() as i32);
    let count = state_count(&spec.values, lambda);
    Ok(WeylReport {
        lambda,
        count,
        nu_norm_sqr: spec.nu_norm_sqr(lambda),
        phase_volume,
        ratio: count as f64 / phase_volume,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Convex,
    Concave,
    Linear,
    Neither,
}

/// Midpoint test on a uniform sample of `[lo, hi]`.
pub fn midpoint_shape<F: Fn(f64) -> f64>(big_f: F, lo: f64, hi: f64) -> Shape {
    const SAMPLES: usize = 33;
    if !(hi > lo) {
        return Shape::Linear;
    }
    let pts: Vec<f64> = (0..SAMPLES).map(|i| lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64).collect();
    let (mut convex, mut concave) = (true, true);
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let (fa, fb, fm) = (big_f(*a), big_f(*b), big_f(0.5 * (a + b)));
            let tol = 1e-12 * (fa.abs() + fb.abs()).max(1.0);
            let gap = 0.5 * (fa + fb) - fm;
            convex &= gap >= -tol;
            concave &= gap <= tol;
        }
    }
    match (convex, concave) {
        (true, true) => Shape::Linear,
        (true, false) => Shape::Convex,
        (false, true) => Shape::Concave,
        _ => Shape::Neither,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JensenReport {
    /// `F((1/N)Σ μ_j(f))`.
    pub lhs: f64,
    /// `(1/N)Σ F(μ_j(f))`.
    pub middle: f64,
    /// `(1/N)Σ μ_j(F∘f)`.
    pub rhs: f64,
    pub shape: Shape,
    pub range: (f64, f64),
    /// Chain holds in the direction the shape dictates, within `1e−9`.
    pub holds: bool,
    pub warning: Option<String>,
}

/// Jensen chain `F(mean) ≤ mean F(μ_j(f)) ≤ mean μ_j(F∘f)` over the states of
/// a system (reversed for concave `F`).
pub fn jensen_check<F, G>(states: &[Wavefunction], f: F, big_f: G) -> Result<JensenReport>
where
    F: Fn(&[f64], &[f64]) -> f64,
    G: Fn(f64) -> f64,
{
    if states.is_empty() {
        return Err(Error::Domain("no states given".into()));
    }
    let mut means = Vec::with_capacity(states.len());
    let mut composed = Vec::with_capacity(states.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in states {
        s.require_normalized()?;
        let grid = s.grid();
        let dim = grid.dim();
        let (fx, gk) = (s.fx(), s.gk());
        let (mut x, mut k) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        let (mut a, mut b) = (0.0, 0.0);
        for (ix, px) in fx.iter().enumerate() {
            if *px == 0.0 {
                continue;
            }
            grid.point(Space::Position, ix, &mut x);
            let (mut ra, mut rb) = (0.0, 0.0);
            for (ik, pk) in gk.iter().enumerate() {
                if *pk == 0.0 {
                    continue;
                }
                grid.point(Space::Fourier, ik, &mut k);
                let v = f(&x[..dim], &k[..dim]);
                if v.is_nan() {
                    return Err(Error::Evaluation("observable evaluated to NaN".into()));
                }
                lo = lo.min(v);
                hi = hi.max(v);
                ra += v * pk;
                rb += big_f(v) * pk;
            }
            a += ra * px;
            b += rb * px;
        }
        let w = grid.cell_volume(Space::Position) * grid.cell_volume(Space::Fourier);
        means.push(a * w);
        composed.push(b * w);
    }
    let n = states.len() as f64;
    let lhs = big_f(means.iter().sum::<f64>() / n);
    let middle = means.iter().map(|m| big_f(*m)).sum::<f64>() / n;
    let rhs = composed.iter().sum::<f64>() / n;
    let shape = midpoint_shape(&big_f, lo, hi);
    let tol = 1e-9;
    let holds = match shape {
        Shape::Convex => lhs <= middle + tol && middle <= rhs + tol,
        Shape::Concave => lhs + tol >= middle && middle + tol >= rhs,
        Shape::Linear => (lhs - rhs).abs() <= tol * rhs.abs().max(1.0),
        Shape::Neither => false,
    };
    let warning = (shape == Shape::Neither)
        .then(|| format!("F failed the midpoint convexity test on [{lo}, {hi}]"));
    Ok(JensenReport {
        lhs,
        middle,
        rhs,
        shape,
        range: (lo, hi),
        holds,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HermiteReport {
    pub order: u32,
    /// `max |𝓕φ_m − (−i)^m φ_m|` over the k-grid.
    pub transform_error: f64,
    /// `max |fx·gk − c P_m²(x)P_m²(k)e^{−x²−k²}|` over the product grid.
    pub density_error: f64,
}

/// Checks the Hermite-function closure `𝓕[H_m e^{−x²/2}] = (−i)^m H_m e^{−k²/2}`
/// and the product density on a one-dimensional grid.
pub fn hermite_check(grid: &Grid, m: u32) -> Result<HermiteReport> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported("Hermite closure is checked for n = 1".into()));
    }
    let state = AnalyticState::hermite_function(m);
    let phi = Wavefunction::from_analytic(&state, grid)?;
    let rot = Complex64::new(0.0, -1.0).powu(m);
    let expected = grid.sample_complex(Space::Fourier, |k| rot * state.eval(k))?;
    let transform_error = phi
        .psi_hat()
        .values()
        .iter()
        .zip(expected.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let exact_x: Vec<f64> = grid.axis(Space::Position).iter().map(|x| state.eval(&[*x]).norm_sqr()).collect();
    let exact_k: Vec<f64> = grid.axis(Space::Fourier).iter().map(|k| state.eval(&[*k]).norm_sqr()).collect();
    let density_error = product_max_diff(&phi.fx(), &phi.gk(), &exact_x, &exact_k);
    Ok(HermiteReport {
        order: m,
        transform_error,
        density_error,
    })
}

/// `max_{i,j} |a_i b_j − c_i d_j|`.
pub fn product_max_diff(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(c) {
        for (u, v) in b.iter().zip(d) {
            worst = worst.max((x * u - y * v).abs());
        }
    }
    worst
}

/// Largest density error of the `count` lowest eigenstates of `ham` against
/// the Hermite-function densities (oscillator with `ℏ = m = ω = 1`).
pub fn hermite_eigenbasis_error(ham: &Hamiltonian, count: usize) -> Result<f64> {
    let spec = Spectrum::of(ham)?;
    let grid = ham.grid();
    let mut worst: f64 = 0.0;
    for j in 0..count {
        let phi = spec.state(j)?;
        let state = AnalyticState::hermite_function(j as u32);
        let ex: Vec<f64> = grid.axis(Space::Position).iter().map(|x| state.eval(&[*x]).norm_sqr()).collect();
        let ek: Vec<f64> = grid.axis(Space::Fourier).iter().map(|k| state.eval(&[*k]).norm_sqr()).collect();
        worst = worst.max(product_max_diff(&phi.fx(), &phi.gk(), &ex, &ek));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn osc(n: usize, l: f64) -> Hamiltonian {
        Hamiltonian::oscillator(&Grid::new(1, n, l).unwrap(), 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_cube_is_normalized_and_transforms_to_dirichlet() {
        let g = Grid::new(1, 512, 32.0).unwrap();
        let sys = build_cube_system(&g, 1, 1.0, &Placement::Centers { centers: vec![vec![0.5 * g.dx()]] }).unwrap();
        let s = &sys.states()[0];
        assert!((s.norm() - 1.0).abs() < 1e-14);
        let c = if let SystemKind::CubeIndicators { omega, .. } = sys.kind() {
            omega.components[0].center().to_vec()
        } else {
            unreachable!()
        };
        let m = (1.0 / g.dx()).round() as usize;
        for (i, v) in s.psi_hat().values().iter().enumerate() {
            let k = g.k_at(i);
            let want = cube_transform_grid(&g, &c, m, &[k]);
            assert!((v - want).norm() < 1e-12, "k={k}");
        }
        // the Dirichlet kernel approaches the sinc as dx → 0 at fixed k
        let err = |n: usize| {
            let g = Grid::new(1, n, 32.0).unwrap();
            let m = (1.0 / g.dx()).round() as usize;
            (cube_transform_grid(&g, &[0.0], m, &[3.0]) - cube_transform(&[0.0], 1.0, &[3.0])).norm()
        };
        let (e1, e2) = (err(512), err(1024));
        assert!((e1 / e2 - 4.0).abs() < 0.1, "{e1} {e2}");
    }

    #[test]
    fn sinc_inequality_at_grid_modes() {
        for dim in 1..=2 {
            let g = Grid::new(dim, 64, 40.0).unwrap();
            assert!(sinc_bound_violation(&g, 1.0) <= 1e-15);
            assert!(sinc_bound_violation(&g, 2.5) <= 1e-15);
        }
        assert!((cube_transform(&[0.0], 1.0, &[0.0]).norm_sqr() - 1.0 / (2.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn adjacent_cubes_are_orthonormal() {
        let g = Grid::new(1, 256, 32.0).unwrap();
        let dx = g.dx();
        let c0 = g.x_at(100) + 3.5 * dx;
        let sys = build_cube_system(&g, 2, 1.0, &Placement::Centers { centers: vec![vec![c0], vec![c0 + 1.0]] }).unwrap();
        let gram = sys.gram().unwrap();
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
        let bad = build_cube_system(&g, 2, 1.0, &Placement::Centers { centers: vec![vec![c0], vec![c0 + 0.5]] });
        assert!(matches!(bad, Err(Error::Placement(_))));
        let misaligned = build_cube_system(&g, 1, 1.0, &Placement::Centers { centers: vec![vec![c0 + 0.3 * dx]] });
        assert!(matches!(misaligned, Err(Error::Placement(_))));
        assert!(matches!(build_cube_system(&g, 1, 0.3, &Placement::Random { seed: 0 }), Err(Error::Placement(_))));
    }

    #[test]
    fn constant_observable_gives_count_and_bound() {
        let g = Grid::new(1, 256, 32.0).unwrap();
        let sys = build_cube_system(&g, 3, 1.0, &Placement::Random { seed: 4 }).unwrap();
        let r = sum_over_system(&sys, &Observable::Constant(1.0)).unwrap();
        assert!((r.sum_value - 3.0).abs() < 1e-12);
        let k_volume = g.len() as f64 * g.dk();
        let want = 3.0 * 3.0 * k_volume / (2.0 * PI);
        assert!((r.cube_upper_bound.unwrap() - want).abs() < 1e-9 * want);
        assert_eq!(r.bound_holds, Some(true));
        let p = r.bessel.unwrap();
        assert!((p.bound - r.cube_upper_bound.unwrap()).abs() < 1e-9 * want);
    }

    #[test]
    fn gaussian_k_weight_obeys_both_bounds() {
        let g = Grid::new(1, 512, 64.0).unwrap();
        let sys = build_cube_system(&g, 4, 2.0, &Placement::Random { seed: 11 }).unwrap();
        let f = Observable::joint(|_, k| (-k[0] * k[0]).exp());
        let r = sum_over_system(&sys, &f).unwrap();
        assert!(r.sum_value > 0.0);
        assert!(r.sum_value <= r.sharp_cube_bound.unwrap() * (1.0 + 1e-12));
        assert!(r.sharp_cube_bound.unwrap() <= r.cube_upper_bound.unwrap());
        assert_eq!(r.bound_holds, Some(true));
    }

    #[test]
    fn smooth_bumps_obey_bessel_form() {
        let g = Grid::new(1, 256, 32.0).unwrap();
        let bump = |c: f64| {
            let vals: Vec<f64> = g
                .axis(Space::Position)
                .iter()
                .map(|x| {
                    let t = (x - c) / 1.5;
                    if t.abs() < 1.0 {
                        (-1.0 / (1.0 - t * t)).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            Wavefunction::normalized(GridFunction::from_real(&g, Space::Position, &vals).unwrap()).unwrap()
        };
        let sys = OrthonormalSystem::from_states(vec![bump(-4.0), bump(0.0), bump(4.0)]).unwrap();
        let f = Observable::joint(|x, k| (-k[0] * k[0]).exp() / (1.0 + x[0] * x[0]));
        let r = sum_over_system(&sys, &f).unwrap();
        let p = r.bessel.unwrap();
        assert!(r.sum_value <= p.bound);
        assert_eq!(r.bound_holds, Some(true));
        assert!(r.cube_upper_bound.is_none());
    }

    #[test]
    fn non_orthonormal_states_rejected() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        assert!(matches!(OrthonormalSystem::from_states(vec![w.clone(), w]), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn oscillator_spectrum_and_counts() {
        let h = osc(256, 20.0);
        let eigs = kyfan_oracle(&h, 10).unwrap();
        for (j, e) in eigs.iter().enumerate() {
            assert!((e - (j as f64 + 0.5)).abs() < 1e-9, "{j}: {e}");
        }
        assert!((eigs.iter().sum::<f64>() - 50.0).abs() < 1e-8);
        assert_eq!(state_count(&eigs, 0.4), 0);
        let w = weyl_compare(&h, 10.25).unwrap();
        assert_eq!(w.count, 10);
        assert!((w.nu_norm_sqr - 10.0).abs() < 1e-8);
        assert!((w.phase_volume - 10.25).abs() < 0.2, "{w:?}");
    }

    #[test]
    fn free_particle_eigenvalues_are_sorted_symbols() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let h = Hamiltonian::separable(&g, 1.0, 1.0, |p: &[f64]| 0.5 * p[0] * p[0], |_: &[f64]| 0.0).unwrap();
        let eigs = kyfan_oracle(&h, 64).unwrap();
        let mut want: Vec<f64> = g.axis(Space::Fourier).iter().map(|k| 0.5 * k * k).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in eigs.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn kyfan_below_cube_systems_for_double_well() {
        let g = Grid::new(1, 256, 16.0).unwrap();
        let h = Hamiltonian::separable(
            &g,
            1.0,
            1.0,
            |p: &[f64]| 0.5 * p[0] * p[0],
            |x: &[f64]| (x[0] * x[0] - 1.0).powi(2),
        )
        .unwrap();
        for seed in 0..3 {
            let sys = build_cube_system(&g, 3, 0.5, &Placement::Random { seed }).unwrap();
            let r = sum_over_system_separable(&sys, &h).unwrap();
            assert!(r.kyfan_oracle_value.unwrap() <= r.sum_value + 1e-8);
        }
        let eb = OrthonormalSystem::eigenbasis(&h, 3).unwrap();
        let r = sum_over_system_separable(&eb, &h).unwrap();
        assert!((r.sum_value - r.kyfan_oracle_value.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn kyfan_matches_variational_ground_state() {
        let h = osc(128, 16.0);
        let e0 = kyfan_oracle(&h, 1).unwrap()[0];
        let res = crate::variational::solve_ground_state(&h, &Default::default()).unwrap();
        assert!((res.energy - e0).abs() < 1e-8);
    }

    #[test]
    fn jensen_examples() {
        let g = Grid::new(1, 256, 24.0).unwrap();
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        let h = |x: &[f64], k: &[f64]| 0.5 * (x[0] * x[0] + k[0] * k[0]);
        let r = jensen_check(std::slice::from_ref(&w), h, |t| t * t).unwrap();
        assert_eq!(r.shape, Shape::Convex);
        assert!((r.lhs - 0.25).abs() < 1e-9);
        assert!((r.rhs - 0.5).abs() < 1e-6, "{}", r.rhs);
        assert!(r.holds);
        let lin = jensen_check(std::slice::from_ref(&w), h, |t| 3.0 * t - 1.0).unwrap();
        assert_eq!(lin.shape, Shape::Linear);
        assert!((lin.lhs - lin.rhs).abs() < 1e-10);
        let three = OrthonormalSystem::eigenbasis(&Hamiltonian::oscillator(&g, 1.0, 1.0, 1.0).unwrap(), 3).unwrap();
        let scaled = |x: &[f64], k: &[f64]| 0.1 * h(x, k);
        let e = jensen_check(three.states(), scaled, f64::exp).unwrap();
        assert!(e.holds && e.lhs <= e.middle && e.middle <= e.rhs);
        let c = jensen_check(three.states(), h, f64::sqrt).unwrap();
        assert_eq!(c.shape, Shape::Concave);
        assert!(c.holds && c.lhs >= c.rhs);
        let bad = jensen_check(std::slice::from_ref(&w), h, f64::sin).unwrap();
        assert_eq!(bad.shape, Shape::Neither);
        assert!(bad.warning.is_some());
    }

    #[test]
    fn hermite_closure_and_eigenbasis() {
        let g = Grid::new(1, 256, 30.0).unwrap();
        for m in 0..=4 {
            let r = hermite_check(&g, m).unwrap();
            assert!(r.transform_error < 1e-9, "{r:?}");
            assert!(r.density_error < 1e-8, "{r:?}");
        }
        let h = Hamiltonian::oscillator(&g, 1.0, 1.0, 1.0).unwrap();
        assert!(hermite_eigenbasis_error(&h, 5).unwrap() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn cube_bound_holds_for_random_placements(
            seed in 0u64..1000,
            count in 1usize..5,
            cells in 4usize..24,
            a in 0.1f64..3.0,
            b in 0.05f64..2.0,
        ) {
            let g = Grid::new(1, 128, 24.0).unwrap();
            let side = cells as f64 * g.dx();
            let sys = build_cube_system(&g, count, side, &Placement::Random { seed }).unwrap();
            let f = Observable::joint(move |x, k| (-b * k[0] * k[0]).exp() / (1.0 + a * x[0] * x[0]));
            let r = sum_over_system(&sys, &f).unwrap();
            prop_assert_eq!(r.bound_holds, Some(true));
            prop_assert!(r.sum_value <= r.sharp_cube_bound.unwrap() * (1.0 + 1e-12));
        }
    }
}
