//! The energy functional `𝓔(φ) = ∫ 𝓗(x, ℏk) dμ_φ`, its partial means, the
//! Euler residual and a self-consistent-field ground-state solver.
//!
//! Hamiltonians are always written `𝓗(x, p)` with position first and
//! `p = ℏk`.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::{self, EigenPair, LanczosConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Space, MAX_DIM};
use crate::states::Wavefunction;

/// `𝓗(x, p)`.
pub type Symbol = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Largest `n = 1` grid whose general symbol is tabulated eagerly.
pub const TABLE_LIMIT: usize = 2048;

#[derive(Clone)]
pub enum HamiltonianKind {
    /// `T(ℏk)` on the Fourier grid and `V(x)` on the position grid.
    Separable { t: Vec<f64>, v: Vec<f64> },
    /// `𝓗(x_i, ℏk_j)` at `[ix + len·ik]`.
    Table(Vec<f64>),
    /// Evaluated lazily, streaming over `k` slices.
    Callable(Symbol),
}

#[derive(Clone)]
pub struct Hamiltonian {
    grid: Grid,
    kind: HamiltonianKind,
    hbar: f64,
    mass: f64,
    min_value: f64,
}

impl std::fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            HamiltonianKind::Separable { .. } => "separable",
            HamiltonianKind::Table(_) => "table",
            HamiltonianKind::Callable(_) => "callable",
        };
        f.debug_struct("Hamiltonian")
            .field("grid", &self.grid)
            .field("kind", &kind)
            .field("hbar", &self.hbar)
            .field("mass", &self.mass)
            .field("min_value", &self.min_value)
            .finish()
    }
}

fn check_constants(hbar: f64, mass: f64) -> Result<()> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::config("hbar", format!("must be positive, got {hbar}")));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::config("mass", format!("must be positive, got {mass}")));
    }
    Ok(())
}

fn finite_min(values: &[f64], what: &str) -> Result<f64> {
    let mut m = f64::INFINITY;
    for v in values {
        if v.is_nan() {
            return Err(Error::Evaluation(format!("{what} contains NaN")));
        }
        m = m.min(*v);
    }
    Ok(m)
}

impl Hamiltonian {
    pub fn separable_from_samples(grid: &Grid, t: Vec<f64>, v: Vec<f64>, hbar: f64, mass: f64) -> Result<Self> {
        check_constants(hbar, mass)?;
        if t.len() != grid.len() || v.len() != grid.len() {
            return Err(Error::Dimension("T and V must have one sample per grid point".into()));
        }
        let min_value = finite_min(&t, "T")? + finite_min(&v, "V")?;
        Ok(Hamiltonian {
            grid: grid.clone(),
            kind: HamiltonianKind::Separable { t, v },
            hbar,
            mass,
            min_value,
        })
    }

    /// `𝓗 = T(p) + V(x)`.
    pub fn separable<T, V>(grid: &Grid, hbar: f64, mass: f64, t: T, v: V) -> Result<Self>
    where
        T: Fn(&[f64]) -> f64,
        V: Fn(&[f64]) -> f64,
    {
        let ts = grid.sample(Space::Fourier, |k| {
            let mut p = [0.0; MAX_DIM];
            for (a, kv) in k.iter().enumerate() {
                p[a] = hbar * kv;
            }
            t(&p[..k.len()])
        })?;
        let vs = grid.sample(Space::Position, v)?;
        let re = |f: GridFunction| f.values().iter().map(|c| c.re).collect();
        Self::separable_from_samples(grid, re(ts), re(vs), hbar, mass)
    }

    /// `p²/2m + mω²|x|²/2`.
    pub fn oscillator(grid: &Grid, hbar: f64, mass: f64, omega: f64) -> Result<Self> {
        Self::separable(
            grid,
            hbar,
            mass,
            |p| p.iter().map(|a| a * a).sum::<f64>() / (2.0 * mass),
            |x| 0.5 * mass * omega * omega * x.iter().map(|a| a * a).sum::<f64>(),
        )
    }

    pub fn general<H>(grid: &Grid, hbar: f64, mass: f64, h: H) -> Result<Self>
    where
        H: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        check_constants(hbar, mass)?;
        let symbol: Symbol = Arc::new(h);
        if grid.dim() == 1 && grid.len() <= TABLE_LIMIT {
            let s = symbol.clone();
            let table = grid.sample_product(move |x, k| s(x, &[hbar * k[0]]))?;
            return Self::general_from_table(grid, table, hbar, mass);
        }
        let mut min_value = f64::INFINITY;
        stream(grid, hbar, &symbol, |_, _, h| {
            if h.is_nan() {
                return Err(Error::Evaluation("hamiltonian evaluated to NaN".into()));
            }
            min_value = min_value.min(h);
            Ok(())
        })?;
        Ok(Hamiltonian {
            grid: grid.clone(),
            kind: HamiltonianKind::Callable(symbol),
            hbar,
            mass,
            min_value,
        })
    }

    pub fn general_from_table(grid: &Grid, table: Vec<f64>, hbar: f64, mass: f64) -> Result<Self> {
        check_constants(hbar, mass)?;
        if table.len() != grid.len() * grid.len() {
            return Err(Error::Dimension(format!(
                "hamiltonian table has {} entries, expected {}",
                table.len(),
                grid.len() * grid.len()
            )));
        }
        let min_value = finite_min(&table, "hamiltonian table")?;
        Ok(Hamiltonian {
            grid: grid.clone(),
            kind: HamiltonianKind::Table(table),
            hbar,
            mass,
            min_value,
        })
    }

    /// Same symbol in non-separable form.
    pub fn to_general(&self) -> Result<Self> {
        match &self.kind {
            HamiltonianKind::Separable { t, v } => {
                let len = self.grid.len();
                if self.grid.dim() == 1 && len <= TABLE_LIMIT {
                    let mut table = Vec::with_capacity(len * len);
                    for tk in t {
                        table.extend(v.iter().map(|vx| tk + vx));
                    }
                    return Self::general_from_table(&self.grid, table, self.hbar, self.mass);
                }
                Err(Error::Unsupported(
                    "sampled separable symbols convert to general form only for n = 1".into(),
                ))
            }
            _ => Ok(self.clone()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> &HamiltonianKind {
        &self.kind
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.kind, HamiltonianKind::Separable { .. })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Minimum of the symbol over the product grid.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// Calls `visit(ix, ik, 𝓗(x, ℏk))` at every product-grid point.
    pub fn for_each_product<F>(&self, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, usize, f64) -> Result<()>,
    {
        let len = self.grid.len();
        match &self.kind {
            HamiltonianKind::Separable { t, v } => {
                for (ik, tk) in t.iter().enumerate() {
                    for (ix, vx) in v.iter().enumerate() {
                        visit(ix, ik, tk + vx)?;
                    }
                }
                Ok(())
            }
            HamiltonianKind::Table(h) => {
                for ik in 0..len {
                    for ix in 0..len {
                        visit(ix, ik, h[ix + len * ik])?;
                    }
                }
                Ok(())
            }
            HamiltonianKind::Callable(s) => stream(&self.grid, self.hbar, s, visit),
        }
    }

    /// `𝓗(x_ix, ℏk_ik)` at one product-grid point.
    pub fn value_at(&self, ix: usize, ik: usize) -> f64 {
        match &self.kind {
            HamiltonianKind::Separable { t, v } => t[ik] + v[ix],
            HamiltonianKind::Table(h) => h[ix + self.grid.len() * ik],
            HamiltonianKind::Callable(s) => {
                let dim = self.grid.dim();
                let (mut x, mut p) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
                self.grid.point(Space::Position, ix, &mut x);
                self.grid.point(Space::Fourier, ik, &mut p);
                p.iter_mut().for_each(|v| *v *= self.hbar);
                s(&x[..dim], &p[..dim])
            }
        }
    }

    /// Product-grid table `[ix + len·ik]` (`n = 1`).
    pub fn table(&self) -> Result<Vec<f64>> {
        match self.to_general()?.kind {
            HamiltonianKind::Table(t) => Ok(t),
            HamiltonianKind::Callable(s) => {
                let hbar = self.hbar;
                self.grid.sample_product(move |x, k| {
                    let mut p = [0.0; MAX_DIM];
                    for (a, kv) in k.iter().enumerate() {
                        p[a] = hbar * kv;
                    }
                    s(x, &p[..k.len()])
                })
            }
            HamiltonianKind::Separable { .. } => unreachable!("converted above"),
        }
    }
}

/// Calls `visit(ix, ik, 𝓗(x, ℏk))` over the product grid, `k` outermost.
fn stream<F>(grid: &Grid, hbar: f64, symbol: &Symbol, mut visit: F) -> Result<()>
where
    F: FnMut(usize, usize, f64) -> Result<()>,
{
    let dim = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut p = [0.0; MAX_DIM];
    for ik in 0..grid.len() {
        grid.point(Space::Fourier, ik, &mut p);
        for v in p.iter_mut() {
            *v *= hbar;
        }
        for ix in 0..grid.len() {
            grid.point(Space::Position, ix, &mut x);
            visit(ix, ik, symbol(&x[..dim], &p[..dim]))?;
        }
    }
    Ok(())
}

fn check_grid(phi: &Wavefunction, ham: &Hamiltonian) -> Result<()> {
    if phi.grid() != ham.grid() {
        return Err(Error::Dimension("state and hamiltonian live on different grids".into()));
    }
    Ok(())
}

/// `F_φ(x) = ∫ 𝓗(x, ℏk)|φ̂(k)|² dk` and `G_φ(k) = ∫ 𝓗(x, ℏk)|φ(x)|² dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMeans {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl PartialMeans {
    pub fn to_grid_functions(&self, grid: &Grid) -> Result<(GridFunction, GridFunction)> {
        Ok((
            GridFunction::from_real(grid, Space::Position, &self.f)?,
            GridFunction::from_real(grid, Space::Fourier, &self.g)?,
        ))
    }
}

pub fn partial_means(phi: &Wavefunction, ham: &Hamiltonian) -> Result<PartialMeans> {
    check_grid(phi, ham)?;
    let grid = ham.grid();
    let (fx, gk) = (phi.fx(), phi.gk());
    let wx = grid.cell_volume(Space::Position);
    let wk = grid.cell_volume(Space::Fourier);
    let len = grid.len();
    let out = match &ham.kind {
        HamiltonianKind::Separable { t, v } => {
            let e_kin: f64 = t.iter().zip(&gk).map(|(a, b)| a * b).sum::<f64>() * wk;
            let e_pot: f64 = v.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>() * wx;
            let mass_k = gk.iter().sum::<f64>() * wk;
            let mass_x = fx.iter().sum::<f64>() * wx;
            PartialMeans {
                f: v.iter().map(|a| a * mass_k + e_kin).collect(),
                g: t.iter().map(|a| a * mass_x + e_pot).collect(),
            }
        }
        HamiltonianKind::Table(h) => {
            let mut f = vec![0.0; len];
            let mut g = vec![0.0; len];
            for ik in 0..len {
                let row = &h[ik * len..(ik + 1) * len];
                let mut acc = 0.0;
                for ix in 0..len {
                    f[ix] += row[ix] * gk[ik];
                    acc += row[ix] * fx[ix];
                }
                g[ik] = acc * wx;
            }
            f.iter_mut().for_each(|v| *v *= wk);
            PartialMeans { f, g }
        }
        HamiltonianKind::Callable(s) => {
            let mut f = vec![0.0; len];
            let mut g = vec![0.0; len];
            stream(grid, ham.hbar, s, |ix, ik, h| {
                f[ix] += h * gk[ik];
                g[ik] += h * fx[ix];
                Ok(())
            })?;
            f.iter_mut().for_each(|v| *v *= wk);
            g.iter_mut().for_each(|v| *v *= wx);
            PartialMeans { f, g }
        }
    };
    if out.f.iter().chain(&out.g).any(|v| v.is_nan()) {
        return Err(Error::Evaluation("partial means contain NaN".into()));
    }
    Ok(out)
}

/// `∫ 𝓗 |φ|²|φ̂|²` without a normalization check.
pub fn energy_functional(phi: &Wavefunction, ham: &Hamiltonian) -> Result<f64> {
    check_grid(phi, ham)?;
    let grid = ham.grid();
    let wx = grid.cell_volume(Space::Position);
    let wk = grid.cell_volume(Space::Fourier);
    let (fx, gk) = (phi.fx(), phi.gk());
    let e = match &ham.kind {
        HamiltonianKind::Separable { t, v } => {
            let mass_k = gk.iter().sum::<f64>() * wk;
            let mass_x = fx.iter().sum::<f64>() * wx;
            t.iter().zip(&gk).map(|(a, b)| a * b).sum::<f64>() * wk * mass_x
                + v.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>() * wx * mass_k
        }
        _ => {
            let pm = partial_means(phi, ham)?;
            pm.f.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>() * wx
        }
    };
    if e.is_nan() {
        return Err(Error::Evaluation("energy is NaN".into()));
    }
    Ok(e)
}

/// `𝓔(φ)` for a normalized state. Infinite values are returned as such.
pub fn energy(phi: &Wavefunction, ham: &Hamiltonian) -> Result<f64> {
    phi.require_normalized()?;
    energy_functional(phi, ham)
}

/// `F_φφ + 𝓕⁻¹(G_φφ̂)` from precomputed partial means.
fn euler_operator(phi: &Wavefunction, pm: &PartialMeans) -> Vec<Complex64> {
    let grid = phi.grid();
    let mut hat: Vec<Complex64> = phi
        .psi_hat()
        .values()
        .iter()
        .zip(&pm.g)
        .map(|(v, g)| v * g)
        .collect();
    grid.inverse_in_place(&mut hat);
    for ((h, v), f) in hat.iter_mut().zip(phi.psi().values()).zip(&pm.f) {
        *h += v * f;
    }
    hat
}

/// `F_φφ + 𝓕⁻¹(G_φφ̂)`; half the gradient of `𝓔` at `φ`.
pub fn first_variation(phi: &Wavefunction, ham: &Hamiltonian) -> Result<GridFunction> {
    let pm = partial_means(phi, ham)?;
    GridFunction::new(phi.grid(), Space::Position, euler_operator(phi, &pm))
}

/// `2 Re⟨δ, F_φφ + 𝓕⁻¹(G_φφ̂)⟩`.
pub fn directional_derivative(phi: &Wavefunction, ham: &Hamiltonian, delta: &GridFunction) -> Result<f64> {
    let v = first_variation(phi, ham)?;
    Ok(2.0 * delta.inner(&v)?.re)
}

/// `‖F_φφ + 𝓕⁻¹(G_φφ̂) − 2Eφ‖₂`.
pub fn euler_residual(phi: &Wavefunction, ham: &Hamiltonian, e: f64) -> Result<f64> {
    let pm = partial_means(phi, ham)?;
    Ok(residual_from(phi, &pm, e))
}

fn residual_from(phi: &Wavefunction, pm: &PartialMeans, e: f64) -> f64 {
    let r = euler_operator(phi, pm);
    let s: f64 = r
        .iter()
        .zip(phi.psi().values())
        .map(|(a, v)| (a - v * (2.0 * e)).norm_sqr())
        .sum();
    (s * phi.grid().cell_volume(Space::Position)).sqrt()
}

/// `(⟨φ, F_φφ⟩, ⟨φ̂, G_φφ̂⟩)`.
pub fn doubling_pair(phi: &Wavefunction, pm: &PartialMeans) -> (f64, f64) {
    let grid = phi.grid();
    let a: f64 = phi.fx().iter().zip(&pm.f).map(|(d, f)| d * f).sum::<f64>() * grid.cell_volume(Space::Position);
    let b: f64 = phi.gk().iter().zip(&pm.g).map(|(d, g)| d * g).sum::<f64>() * grid.cell_volume(Space::Fourier);
    (a, b)
}

/// `u ↦ f·u + 𝓕⁻¹(g·𝓕u)` on raw position samples.
#[derive(Debug, Clone)]
pub struct MultiplierOperator {
    grid: Grid,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl MultiplierOperator {
    pub fn new(grid: &Grid, f: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if f.len() != grid.len() || g.len() != grid.len() {
            return Err(Error::Dimension("multiplier length does not match grid".into()));
        }
        Ok(MultiplierOperator {
            grid: grid.clone(),
            f,
            g,
        })
    }

    pub fn apply(&self, u: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(u);
        self.grid.forward_in_place(out);
        for (o, g) in out.iter_mut().zip(&self.g) {
            *o *= g;
        }
        self.grid.inverse_in_place(out);
        for ((o, v), f) in out.iter_mut().zip(u).zip(&self.f) {
            *o += v * f;
        }
    }

    /// The `count` lowest eigenpairs; vectors are rescaled to unit L² norm.
    pub fn lowest(&self, count: usize, start: &[Complex64], cfg: &LanczosConfig) -> Result<Vec<EigenPair>> {
        let mut pairs = eigen::lowest_eigenpairs(|u, o| self.apply(u, o), start, count, cfg)?;
        let s = self.grid.cell_volume(Space::Position).sqrt().recip();
        for p in &mut pairs {
            p.vector.iter_mut().for_each(|v| *v *= s);
        }
        Ok(pairs)
    }

    /// Dense real matrix of the operator (`n = 1`). Requires `g(k) = g(−k)`
    /// at paired modes so the convolution kernel is real.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        if self.grid.dim() != 1 {
            return Err(Error::Unsupported("dense matrices are built for n = 1 only".into()));
        }
        let n = self.grid.len();
        let mut e0 = vec![Complex64::new(0.0, 0.0); n];
        e0[0] = Complex64::new(1.0, 0.0);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        self.apply(&e0, &mut col);
        // multiplier part only touches the diagonal
        col[0] -= self.f[0];
        let scale = col.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        if col.iter().any(|c| c.im.abs() > 1e-10 * scale) {
            return Err(Error::Unsupported("kinetic symbol is not even; the matrix is complex".into()));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let d = (i + n - j) % n;
            let diag = if i == j { self.f[i] } else { 0.0 };
            col[d].re + diag
        }))
    }
}

/// `φ ↦ 𝓕⁻¹(T·𝓕φ) + V·φ` for a separable Hamiltonian.
pub fn schrodinger_reduce(ham: &Hamiltonian) -> Result<MultiplierOperator> {
    match &ham.kind {
        HamiltonianKind::Separable { t, v } => MultiplierOperator::new(ham.grid(), v.clone(), t.clone()),
        _ => Err(Error::Kind("Schrödinger reduction needs a separable hamiltonian".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum InitialState {
    /// Centered Gaussian of unit width, clamped to `[4dx, L/8]`.
    Gaussian,
    /// Position samples in the binary or CSV grid format.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub max_outer_iterations: usize,
    pub residual_tol: f64,
    pub eigensolver_tol: f64,
    pub initial_state: InitialState,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            damping: 0.5,
            max_outer_iterations: 200,
            residual_tol: 1e-8,
            eigensolver_tol: 1e-10,
            initial_state: InitialState::Gaussian,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("solver.damping", "must lie in (0, 1]"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::config("solver.residual_tol", "must be positive"));
        }
        if !(self.eigensolver_tol > 0.0) {
            return Err(Error::config("solver.eigensolver_tol", "must be positive"));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::config("solver.max_outer_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub state: Wavefunction,
    pub energy: f64,
    pub residual_norm: f64,
    pub doubling_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after every accepted step, starting with the initial state.
    pub energy_history: Vec<f64>,
}

pub fn initial_gaussian(grid: &Grid) -> Result<Wavefunction> {
    let width = 1f64.clamp(4.0 * grid.dx(), grid.box_length() / 8.0);
    let s = crate::analytic::AnalyticState::gaussian_packet(&vec![0.0; grid.dim()], width, &vec![0.0; grid.dim()])?;
    Wavefunction::from_analytic(&s, grid)?.normalize()
}

fn load_initial(ham: &Hamiltonian, cfg: &SolverConfig) -> Result<Wavefunction> {
    match &cfg.initial_state {
        InitialState::Gaussian => initial_gaussian(ham.grid()),
        InitialState::File { path } => {
            let file = std::fs::File::open(path)?;
            let psi = match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => crate::grid::io::read_csv(ham.grid(), file)?,
                _ => crate::grid::io::read_binary(file)?,
            };
            if psi.grid() != ham.grid() {
                return Err(Error::config("solver.initial_state.path", "state grid differs from the run grid"));
            }
            Wavefunction::normalized(psi)
        }
    }
}

pub fn solve_ground_state(ham: &Hamiltonian, cfg: &SolverConfig) -> Result<SolveResult> {
    let initial = load_initial(ham, cfg)?;
    solve_ground_state_from(ham, cfg, &initial)
}

/// Damped SCF: freeze `F_φ, G_φ`, take the lowest eigenvector of the frozen
/// operator, mix, and backtrack the mixing weight until the energy does not
/// increase.
pub fn solve_ground_state_from(ham: &Hamiltonian, cfg: &SolverConfig, initial: &Wavefunction) -> Result<SolveResult> {
    cfg.validate()?;
    check_grid(initial, ham)?;
    let grid = ham.grid().clone();
    let lanczos = LanczosConfig {
        tol: cfg.eigensolver_tol,
        ..LanczosConfig::default()
    };
    let check_energy = |e: f64| -> Result<f64> {
        if e < ham.min_value() - 1.0 {
            return Err(Error::Inconsistent(format!(
                "energy {e} lies below the grid minimum {} of the hamiltonian",
                ham.min_value()
            )));
        }
        Ok(e)
    };
    let mut phi = initial.normalize()?;
    let mut e = check_energy(energy(&phi, ham)?)?;
    let mut history = vec![e];
    let mut pm = partial_means(&phi, ham)?;
    let mut residual = residual_from(&phi, &pm, e);
    let mut iterations = 0;
    let to_l2 = grid.cell_volume(Space::Position).sqrt();

    while residual > cfg.residual_tol && iterations < cfg.max_outer_iterations {
        iterations += 1;
        let op = MultiplierOperator::new(&grid, pm.f.clone(), pm.g.clone())?;
        let start: Vec<Complex64> = phi.psi().values().iter().map(|v| v * to_l2).collect();
        let pair = eigen::lowest_eigenpair(|u, o| op.apply(u, o), &start, &[], &lanczos)?;
        let overlap: Complex64 = start.iter().zip(&pair.vector).map(|(a, b)| a.conj() * b).sum();
        let phase = if overlap.norm() > 1e-300 {
            overlap.conj() / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let target: Vec<Complex64> = pair.vector.iter().map(|v| v * phase / to_l2).collect();

        let mut alpha = cfg.damping;
        let mut accepted = None;
        while alpha >= 1e-6 {
            let mixed: Vec<Complex64> = phi
                .psi()
                .values()
                .iter()
                .zip(&target)
                .map(|(a, b)| a * (1.0 - alpha) + b * alpha)
                .collect();
            let cand = Wavefunction::normalized(GridFunction::new(&grid, Space::Position, mixed)?)?;
            let ec = check_energy(energy(&cand, ham)?)?;
            if ec <= e + 1e-13 * e.abs().max(1.0) {
                accepted = Some((cand, ec));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, ec)) = accepted else { break };
        phi = cand;
        e = ec;
        history.push(e);
        pm = partial_means(&phi, ham)?;
        residual = residual_from(&phi, &pm, e);
    }
    let (a, b) = doubling_pair(&phi, &pm);
    Ok(SolveResult {
        energy: e,
        residual_norm: residual,
        doubling_gap: (a - b).abs(),
        iterations,
        converged: residual <= cfg.residual_tol,
        energy_history: history,
        state: phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticState;

    fn osc(n: usize, l: f64) -> (Grid, Hamiltonian) {
        let g = Grid::new(1, n, l).unwrap();
        let h = Hamiltonian::oscillator(&g, 1.0, 1.0, 1.0).unwrap();
        (g, h)
    }

    #[test]
    fn oscillator_energies() {
        let (g, h) = osc(256, 30.0);
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        assert!((energy(&w, &h).unwrap() - 0.5).abs() < 1e-10);
        let free = Hamiltonian::separable(&g, 1.0, 1.0, |p| 0.5 * p[0] * p[0], |_| 0.0).unwrap();
        assert!((energy(&w, &free).unwrap() - 0.25).abs() < 1e-10);
        let general = h.to_general().unwrap();
        assert!((energy(&w, &general).unwrap() - 0.5).abs() < 1e-10);
        let c = Hamiltonian::general(&g, 1.0, 1.0, |_, _| 2.5).unwrap();
        assert!((energy(&w, &c).unwrap() - 2.5).abs() < 1e-10);
    }

    #[test]
    fn partial_means_of_separable_symbol() {
        let (g, h) = osc(256, 30.0);
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        let pm = partial_means(&w, &h).unwrap();
        for i in 0..g.len() {
            let x = g.x_at(i);
            let k = g.k_at(i);
            assert!((pm.f[i] - (0.5 * x * x + 0.25)).abs() < 1e-10);
            assert!((pm.g[i] - (0.5 * k * k + 0.25)).abs() < 1e-10);
        }
        let pg = partial_means(&w, &h.to_general().unwrap()).unwrap();
        for i in 0..g.len() {
            assert!((pm.f[i] - pg.f[i]).abs() < 1e-10);
            assert!((pm.g[i] - pg.g[i]).abs() < 1e-10);
        }
        let (a, b) = doubling_pair(&w, &pm);
        assert!((a - 0.5).abs() < 1e-10 && (b - 0.5).abs() < 1e-10);
    }

    #[test]
    fn callable_streaming_matches_table() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let sym = |x: &[f64], p: &[f64]| (1.0 + (p[0] - x[0].tanh()).powi(2)).sqrt();
        let table = Hamiltonian::general(&g, 1.0, 1.0, sym).unwrap();
        let sym_c: Symbol = Arc::new(sym);
        let callable = Hamiltonian {
            grid: g.clone(),
            kind: HamiltonianKind::Callable(sym_c),
            hbar: 1.0,
            mass: 1.0,
            min_value: table.min_value(),
        };
        let w = Wavefunction::standard_gaussian(&g).unwrap().normalize().unwrap();
        let a = partial_means(&w, &table).unwrap();
        let b = partial_means(&w, &callable).unwrap();
        for i in 0..g.len() {
            assert!((a.f[i] - b.f[i]).abs() < 1e-12 && (a.g[i] - b.g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_residual_of_exact_ground_state() {
        let (g, h) = osc(256, 30.0);
        let w = Wavefunction::standard_gaussian(&g).unwrap();
        assert!(euler_residual(&w, &h, 0.5).unwrap() < 1e-9);
        let packet = AnalyticState::gaussian_packet(&[0.5], 0.7, &[0.2]).unwrap();
        let p = Wavefunction::from_analytic(&packet, &g).unwrap().normalize().unwrap();
        let e = energy(&p, &h).unwrap();
        assert!(euler_residual(&p, &h, e).unwrap() > 0.1);
        let c = Hamiltonian::general(&g, 1.0, 1.0, |_, _| 3.0).unwrap();
        assert!(euler_residual(&p, &c, 3.0).unwrap() < 1e-10);
    }

    #[test]
    fn schrodinger_spectrum() {
        let (g, h) = osc(256, 30.0);
        let op = schrodinger_reduce(&h).unwrap();
        let start = initial_gaussian(&g).unwrap();
        let pairs = op.lowest(2, start.psi().values(), &LanczosConfig::default()).unwrap();
        assert!((pairs[0].value - 0.5).abs() < 1e-9);
        assert!((pairs[1].value - 1.5).abs() < 1e-9);
        let free = Hamiltonian::separable(&g, 1.0, 1.0, |p| 0.5 * p[0] * p[0], |_| 0.0).unwrap();
        let op = schrodinger_reduce(&free).unwrap();
        let p = op.lowest(1, start.psi().values(), &LanczosConfig::default()).unwrap();
        assert!(p[0].value.abs() < 1e-9);
        assert!(matches!(schrodinger_reduce(&h.to_general().unwrap()), Err(Error::Kind(_))));
    }

    #[test]
    fn dense_matrix_matches_operator() {
        let (_, h) = osc(64, 12.0);
        let op = schrodinger_reduce(&h).unwrap();
        let m = op.dense_matrix().unwrap();
        let u: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64 * 0.3).sin(), 0.0)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); 64];
        op.apply(&u, &mut out);
        for i in 0..64 {
            let want: f64 = (0..64).map(|j| m[(i, j)] * u[j].re).sum();
            assert!((out[i].re - want).abs() < 1e-9 && out[i].im.abs() < 1e-9);
        }
    }

    #[test]
    fn scf_on_oscillator() {
        let (g, h) = osc(256, 20.0);
        let r = solve_ground_state(&h, &SolverConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.energy - 0.5).abs() < 1e-9);
        assert!(r.doubling_gap <= 1e-7);
        assert!(r.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-13));
        let exact = Wavefunction::standard_gaussian(&g).unwrap();
        assert!(exact.psi().inner(r.state.psi()).unwrap().norm() > 1.0 - 1e-8);
    }

    #[test]
    fn scf_with_constant_symbol_is_immediately_stationary() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let c = Hamiltonian::general(&g, 1.0, 1.0, |_, _| 1.25).unwrap();
        let r = solve_ground_state(&c, &SolverConfig::default()).unwrap();
        assert!(r.converged && r.iterations == 0);
        assert!((r.energy - 1.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_names_key() {
        let cfg = SolverConfig {
            damping: 0.0,
            ..SolverConfig::default()
        };
        let (_, h) = osc(32, 10.0);
        match solve_ground_state(&h, &cfg) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "solver.damping"),
            other => panic!("{other:?}"),
        }
    }
}
