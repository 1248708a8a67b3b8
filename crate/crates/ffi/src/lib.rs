//! C ABI over `phasespace`.
//!
//! All objects are opaque heap handles created by `ps_*_new`-style functions
//! and released with the matching `ps_*_free`. Every fallible call returns a
//! [`PsStatus`]; on failure a message is available from
//! [`ps_last_error_message`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use num_complex::Complex64;

use phasespace::analytic::AnalyticState;
use phasespace::concentration::{self, Region, RegionSet};
use phasespace::config::RunConfig;
use phasespace::grid::{Grid, Space, MAX_DIM};
use phasespace::states::Wavefunction;
use phasespace::variational::{self, Hamiltonian, SolverConfig};
use phasespace::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotNormalized = 3,
    NotConverged = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

pub struct PsGrid(Grid);
pub struct PsWavefunction(Wavefunction);
pub struct PsHamiltonian(Hamiltonian);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Normalization(_) => PsStatus::NotNormalized,
        Error::Io(_) => PsStatus::Io,
        _ => PsStatus::InvalidArgument,
    }
}

struct Fail(PsStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn null(what: &str) -> Fail {
    set_error(format!("{what} is null"));
    Fail(PsStatus::NullPointer)
}

fn invalid(msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(PsStatus::InvalidArgument)
}

fn guard(f: impl FnOnce() -> Result<PsStatus, Fail>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn as_mut_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<PsStatus, Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(PsStatus::Ok)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated)
/// and returns the full message length in bytes, excluding the terminator.
/// Passing a null `buf` only queries the length.
#[no_mangle]
pub unsafe extern "C" fn ps_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ps_status_string(status: PsStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        PsStatus::Ok => b"ok\0",
        PsStatus::NullPointer => b"null pointer\0",
        PsStatus::InvalidArgument => b"invalid argument\0",
        PsStatus::NotNormalized => b"state not normalized\0",
        PsStatus::NotConverged => b"solver did not converge\0",
        PsStatus::Io => b"i/o error\0",
        PsStatus::BufferTooSmall => b"buffer too small\0",
        PsStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Creates an `n`-dimensional grid with `points` samples per axis on a box of side `length`.
#[no_mangle]
pub unsafe extern "C" fn ps_grid_new(dim: usize, points: usize, length: f64, out: *mut *mut PsGrid) -> PsStatus {
    guard(|| emit(out, PsGrid(Grid::new(dim, points, length)?)))
}

#[no_mangle]
pub unsafe extern "C" fn ps_grid_free(grid: *mut PsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Total number of grid points, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ps_grid_len(grid: *const PsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn ps_grid_dim(grid: *const PsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.dim())
}

/// Writes the sample coordinates of one axis (`points` values) into `out`.
/// `space` is 0 for position, 1 for Fourier.
#[no_mangle]
pub unsafe extern "C" fn ps_grid_axis(grid: *const PsGrid, space: u32, out: *mut f64, len: usize) -> PsStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        let space = space_of(space)?;
        let axis = g.axis(space);
        if len < axis.len() {
            set_error(format!("axis needs {} values", axis.len()));
            return Ok(PsStatus::BufferTooSmall);
        }
        as_mut_slice(out, axis.len(), "out")?.copy_from_slice(&axis);
        Ok(PsStatus::Ok)
    })
}

fn space_of(code: u32) -> Result<Space, Fail> {
    match code {
        0 => Ok(Space::Position),
        1 => Ok(Space::Fourier),
        _ => Err(invalid(format!("space must be 0 or 1, got {code}"))),
    }
}

/// Normalized Gaussian packet of width `width` centred at `center` with mean momentum `momentum`
/// (both of length `dim`; `momentum` may be null for zero).
#[no_mangle]
pub unsafe extern "C" fn ps_wavefunction_gaussian(
    grid: *const PsGrid,
    center: *const f64,
    momentum: *const f64,
    width: f64,
    out: *mut *mut PsWavefunction,
) -> PsStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        let n = g.dim();
        let c = as_slice(center, n, "center")?;
        let zeros = [0.0; MAX_DIM];
        let p = if momentum.is_null() { &zeros[..n] } else { as_slice(momentum, n, "momentum")? };
        let state = AnalyticState::gaussian_packet(c, width, p)?;
        emit(out, PsWavefunction(Wavefunction::from_analytic(&state, g)?.normalize()?))
    })
}

/// State from position samples (`re`, `im` of length `ps_grid_len`; `im` may be null).
/// With `normalize` nonzero the samples are rescaled to unit norm.
#[no_mangle]
pub unsafe extern "C" fn ps_wavefunction_from_samples(
    grid: *const PsGrid,
    re: *const f64,
    im: *const f64,
    len: usize,
    normalize: i32,
    out: *mut *mut PsWavefunction,
) -> PsStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        if len != g.len() {
            return Err(invalid(format!("expected {} samples, got {len}", g.len())));
        }
        let re = as_slice(re, len, "re")?;
        let values = if im.is_null() {
            re.iter().map(|&r| Complex64::new(r, 0.0)).collect()
        } else {
            let im = as_slice(im, len, "im")?;
            re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
        };
        let psi = phasespace::grid::GridFunction::new(g, Space::Position, values)?;
        let wf = if normalize != 0 {
            Wavefunction::normalized(psi)?
        } else {
            Wavefunction::from_position(psi)?
        };
        emit(out, PsWavefunction(wf))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ps_wavefunction_free(wf: *mut PsWavefunction) {
    if !wf.is_null() {
        drop(Box::from_raw(wf));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ps_wavefunction_norm(wf: *const PsWavefunction, out: *mut f64) -> PsStatus {
    guard(|| {
        let v = as_ref(wf, "wavefunction")?.0.norm();
        as_mut_slice(out, 1, "out")?[0] = v;
        Ok(PsStatus::Ok)
    })
}

/// Writes |φ(x)|² into `fx` and |φ̂(k)|² into `gk`, each of length `ps_grid_len`.
#[no_mangle]
pub unsafe extern "C" fn ps_wavefunction_marginals(
    wf: *const PsWavefunction,
    fx: *mut f64,
    gk: *mut f64,
    len: usize,
) -> PsStatus {
    guard(|| {
        let w = &as_ref(wf, "wavefunction")?.0;
        let n = w.grid().len();
        if len < n {
            set_error(format!("marginals need {n} values"));
            return Ok(PsStatus::BufferTooSmall);
        }
        as_mut_slice(fx, n, "fx")?.copy_from_slice(&w.fx());
        as_mut_slice(gk, n, "gk")?.copy_from_slice(&w.gk());
        Ok(PsStatus::Ok)
    })
}

/// 𝓗 = ħ²|k|²/(2m) + m ω² |x|²/2.
#[no_mangle]
pub unsafe extern "C" fn ps_hamiltonian_oscillator(
    grid: *const PsGrid,
    hbar: f64,
    mass: f64,
    omega: f64,
    out: *mut *mut PsHamiltonian,
) -> PsStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        emit(out, PsHamiltonian(Hamiltonian::oscillator(g, hbar, mass, omega)?))
    })
}

/// Separable hamiltonian from tabulated kinetic `t` (Fourier grid) and potential `v` (position grid).
#[no_mangle]
pub unsafe extern "C" fn ps_hamiltonian_separable(
    grid: *const PsGrid,
    t: *const f64,
    v: *const f64,
    len: usize,
    hbar: f64,
    mass: f64,
    out: *mut *mut PsHamiltonian,
) -> PsStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        if len != g.len() {
            return Err(invalid(format!("expected {} samples, got {len}", g.len())));
        }
        let t = as_slice(t, len, "t")?.to_vec();
        let v = as_slice(v, len, "v")?.to_vec();
        emit(out, PsHamiltonian(Hamiltonian::separable_from_samples(g, t, v, hbar, mass)?))
    })
}

/// Builds grid and hamiltonian from a run configuration given as TOML text.
#[no_mangle]
pub unsafe extern "C" fn ps_hamiltonian_from_config(
    toml: *const c_char,
    out_grid: *mut *mut PsGrid,
    out: *mut *mut PsHamiltonian,
) -> PsStatus {
    guard(|| {
        if out_grid.is_null() || out.is_null() {
            return Err(null("output handle"));
        }
        let cfg = RunConfig::from_toml(as_str(toml, "toml")?)?;
        let grid = cfg.build_grid()?;
        let ham = cfg.build_hamiltonian(&grid)?;
        emit(out, PsHamiltonian(ham))?;
        emit(out_grid, PsGrid(grid))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ps_hamiltonian_free(ham: *mut PsHamiltonian) {
    if !ham.is_null() {
        drop(Box::from_raw(ham));
    }
}

/// ∫𝓗 dμ_φ for a normalized state on the hamiltonian's grid.
#[no_mangle]
pub unsafe extern "C" fn ps_energy(wf: *const PsWavefunction, ham: *const PsHamiltonian, out: *mut f64) -> PsStatus {
    guard(|| {
        let e = variational::energy(&as_ref(wf, "wavefunction")?.0, &as_ref(ham, "hamiltonian")?.0)?;
        as_mut_slice(out, 1, "out")?[0] = e;
        Ok(PsStatus::Ok)
    })
}

/// Minimizes the energy. On non-convergence the last iterate is still returned
/// together with [`PsStatus::NotConverged`]. `residual_tol <= 0` and
/// `max_iterations == 0` select the defaults.
#[no_mangle]
pub unsafe extern "C" fn ps_solve_ground_state(
    ham: *const PsHamiltonian,
    max_iterations: usize,
    residual_tol: f64,
    out_state: *mut *mut PsWavefunction,
    out_energy: *mut f64,
) -> PsStatus {
    guard(|| {
        let h = &as_ref(ham, "hamiltonian")?.0;
        let mut cfg = SolverConfig::default();
        if max_iterations > 0 {
            cfg.max_outer_iterations = max_iterations;
        }
        if residual_tol > 0.0 {
            cfg.residual_tol = residual_tol;
        }
        let res = variational::solve_ground_state(h, &cfg)?;
        as_mut_slice(out_energy, 1, "out_energy")?[0] = res.energy;
        emit(out_state, PsWavefunction(res.state))?;
        if res.converged {
            Ok(PsStatus::Ok)
        } else {
            set_error(format!("residual {} after {} iterations", res.residual_norm, res.iterations));
            Ok(PsStatus::NotConverged)
        }
    })
}

unsafe fn box_set(space: Space, n: usize, lo: *const f64, hi: *const f64) -> Result<RegionSet, Fail> {
    let lo = as_slice(lo, n, "lower corner")?;
    let hi = as_slice(hi, n, "upper corner")?;
    if !lo.iter().zip(hi).all(|(a, b)| a < b) {
        return Err(invalid("box corners must satisfy lo < hi"));
    }
    let region = Region::Box {
        center: lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        half_widths: lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect(),
    };
    Ok(RegionSet::new(n, space, vec![region])?)
}

/// Concentrations μ_φ(A × ℝⁿ) and μ_φ(ℝⁿ × B) for boxes A = [a_lo, a_hi] in
/// position and B = [b_lo, b_hi] in frequency; J = pa·pb.
#[no_mangle]
pub unsafe extern "C" fn ps_concentration_boxes(
    wf: *const PsWavefunction,
    a_lo: *const f64,
    a_hi: *const f64,
    b_lo: *const f64,
    b_hi: *const f64,
    out_pa: *mut f64,
    out_pb: *mut f64,
) -> PsStatus {
    guard(|| {
        let w = &as_ref(wf, "wavefunction")?.0;
        let n = w.grid().dim();
        let a = box_set(Space::Position, n, a_lo, a_hi)?;
        let b = box_set(Space::Fourier, n, b_lo, b_hi)?;
        w.require_normalized()?;
        let (pa, pb) = concentration::concentrations(w, &a, &b)?;
        as_mut_slice(out_pa, 1, "out_pa")?[0] = pa;
        as_mut_slice(out_pb, 1, "out_pb")?[0] = pb;
        Ok(PsStatus::Ok)
    })
}
