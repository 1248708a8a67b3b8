//! Batch command-line interface.
//!
//! Every subcommand reads a TOML [`RunConfig`], writes `<command>.json` (and
//! any data files) into the output directory and echoes the JSON to stdout.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation error, 3 solver did not
//! converge, 4 divergence flagged.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::analytic::AnalyticState;
use crate::concentration::{self, RegionSet};
use crate::config::{RunConfig, StateConfig};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{io, Grid, Space, MAX_DIM};
use crate::output;
use crate::states::{
    beurling_hormander_functional, check_transform_laws, sl_invariance_residual, Observable, PhaseObservable,
    SymplecticMatrix, Wavefunction,
};
use crate::sums::{self, Placement};
use crate::variational::{self, Hamiltonian, SolveResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_DIVERGENT: i32 = 4;

/// Phase-space measures |φ(x)|²|φ̂(k)|² on spectral grids.
#[derive(Debug, Parser)]
#[command(name = "phasespace", version, about, long_about = None)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground state of the configured hamiltonian by damped SCF iteration.
    Solve(Common),
    /// Energy functional, Euler residual and doubling pair of the configured state.
    Energy(Common),
    /// Rotation, dilation and translation laws on an analytic state.
    CheckTransforms(Common),
    /// Concentration functional J and its bounds for regions A, B.
    Concentration(Common),
    /// μ[φ]({𝓗 ≤ Λ}) and the optional region sandwich.
    Volume(Common),
    /// Sums over a cube system with bounds, Ky-Fan oracle and Jensen chain.
    Sums(Common),
    /// Eigenvalue counts against phase-space volume.
    Weyl(Common),
    /// Marginals fx, gk (and the full density for n = 1) as CSV.
    DensityExport(Common),
    /// Hermite-function Fourier closure and densities.
    HermiteCheck(Common),
    /// Box-size stability of the tempered Beurling–Hörmander functional.
    BhFunctional(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(short, long, env = "PHASESPACE_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    /// Seed for randomized procedures; overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points per axis; overrides `grid.points`.
    #[arg(long)]
    pub points: Option<usize>,
    /// Box length; overrides `grid.length`.
    #[arg(long)]
    pub length: Option<f64>,
    /// Do not echo the report to stdout.
    #[arg(short, long)]
    pub quiet: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c)
            | Command::Energy(c)
            | Command::CheckTransforms(c)
            | Command::Concentration(c)
            | Command::Volume(c)
            | Command::Sums(c)
            | Command::Weyl(c)
            | Command::DensityExport(c)
            | Command::HermiteCheck(c)
            | Command::BhFunctional(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Energy(_) => "energy",
            Command::CheckTransforms(_) => "check-transforms",
            Command::Concentration(_) => "concentration",
            Command::Volume(_) => "volume",
            Command::Sums(_) => "sums",
            Command::Weyl(_) => "weyl",
            Command::DensityExport(_) => "density-export",
            Command::HermiteCheck(_) => "hermite-check",
            Command::BhFunctional(_) => "bh-functional",
        }
    }
}

/// Report plus the exit code it implies.
struct Outcome {
    report: Value,
    code: i32,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, code: EXIT_OK }
    }
}

struct Run {
    cfg: RunConfig,
    grid: Grid,
    out_dir: PathBuf,
}

impl Run {
    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        output::write_atomic(&self.out_dir.join(name), bytes)
    }

    fn hamiltonian(&self) -> Result<Hamiltonian> {
        self.cfg.build_hamiltonian(&self.grid)
    }

    /// The configured state and, for `ground`, whether the solve converged.
    fn state(&self) -> Result<(Wavefunction, bool)> {
        if self.cfg.state == StateConfig::Ground {
            let res = variational::solve_ground_state(&self.hamiltonian()?, &self.cfg.solver)?;
            return Ok((res.state, res.converged));
        }
        Ok((self.cfg.build_state(&self.grid)?, true))
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => EXIT_IO,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    let common = cmd.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = common.points {
        cfg.grid.points = p;
    }
    if let Some(l) = common.length {
        cfg.grid.length = l;
    }
    cfg.validate()?;
    let out_dir = common
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let grid = cfg.build_grid()?;
    let run = Run { cfg, grid, out_dir };
    let outcome = match cmd {
        Command::Solve(_) => solve(&run)?,
        Command::Energy(_) => energy(&run)?,
        Command::CheckTransforms(_) => check_transforms(&run)?,
        Command::Concentration(_) => concentration_cmd(&run)?,
        Command::Volume(_) => volume(&run)?,
        Command::Sums(_) => sums_cmd(&run)?,
        Command::Weyl(_) => weyl(&run)?,
        Command::DensityExport(_) => density_export(&run)?,
        Command::HermiteCheck(_) => hermite(&run)?,
        Command::BhFunctional(_) => bh(&run)?,
    };
    let text = output::to_json(&outcome.report)?;
    run.write_bytes(&format!("{}.json", cmd.name()), text.as_bytes())?;
    if !common.quiet {
        print!("{text}");
    }
    Ok(outcome.code)
}

fn grid_json(g: &Grid) -> Value {
    json!({"dim": g.dim(), "points": g.points_per_axis(), "length": g.box_length()})
}

fn solve_json(res: &SolveResult) -> Value {
    json!({
        "energy": res.energy,
        "residual_norm": res.residual_norm,
        "doubling_gap": res.doubling_gap,
        "iterations": res.iterations,
        "converged": res.converged,
        "energy_history": res.energy_history,
    })
}

fn solve(run: &Run) -> Result<Outcome> {
    let ham = run.hamiltonian()?;
    let res = variational::solve_ground_state(&ham, &run.cfg.solver)?;
    let mut bin = Vec::new();
    io::write_binary(res.state.psi(), &mut bin)?;
    run.write_bytes("ground_state.bin", &bin)?;
    let mut csv = Vec::new();
    io::write_csv(res.state.psi(), &mut csv)?;
    run.write_bytes("ground_state.csv", &csv)?;
    let mut report = solve_json(&res);
    report["grid"] = grid_json(&run.grid);
    report["state_files"] = json!(["ground_state.bin", "ground_state.csv"]);
    Ok(Outcome {
        report,
        code: if res.converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
    })
}

fn not_converged(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn energy(run: &Run) -> Result<Outcome> {
    let ham = run.hamiltonian()?;
    let (phi, converged) = run.state()?;
    let e = variational::energy(&phi, &ham)?;
    let pm = variational::partial_means(&phi, &ham)?;
    let (fx_side, gk_side) = variational::doubling_pair(&phi, &pm);
    let residual = variational::euler_residual(&phi, &ham, e)?;
    Ok(Outcome {
        report: json!({
            "energy": e,
            "euler_residual": residual,
            "doubling_position": fx_side,
            "doubling_fourier": gk_side,
            "symbol_min": ham.min_value(),
        }),
        code: not_converged(converged),
    })
}

fn check_transforms(run: &Run) -> Result<Outcome> {
    let Some(t) = &run.cfg.transforms else {
        return Err(Error::config("transforms", "this command needs a [transforms] table"));
    };
    let dim = run.grid.dim();
    let state = match &t.state {
        Some(s) => AnalyticState::from_spec(s)?,
        None => AnalyticState::standard_gaussian(dim),
    };
    let a = DMatrix::from_fn(dim, dim, |r, c| t.matrix[r][c]);
    let f = PhaseObservable::joint(run.cfg.observable("transforms.observable", &t.observable)?);
    let laws = check_transform_laws(&state, &a, t.lambda, &t.shift, &f, &run.grid)?;
    let det = a.determinant();
    let special = if (det - 1.0).abs() <= 1e-12 {
        let r = SymplecticMatrix::embed(&a)?;
        let composition = r.compose(&r)?.distance(&SymplecticMatrix::embed(&(&a * &a))?);
        Some(json!({
            "sl_invariance_residual": sl_invariance_residual(&state, &a, &f, &run.grid)?,
            "omega_residual": r.omega_residual(),
            "composition_residual": composition,
        }))
    } else {
        None
    };
    Ok(Outcome::ok(json!({
        "laws": laws,
        "max_residual": laws.max_residual(),
        "determinant": det,
        "special_linear": special,
    })))
}

fn region_pair(run: &Run, key: &str, a: &[crate::concentration::Region], b: &[crate::concentration::Region]) -> Result<(RegionSet, RegionSet)> {
    Ok((
        run.cfg.regions(&format!("{key}.a"), a, Space::Position)?,
        run.cfg.regions(&format!("{key}.b"), b, Space::Fourier)?,
    ))
}

fn concentration_cmd(run: &Run) -> Result<Outcome> {
    let Some(c) = &run.cfg.concentration else {
        return Err(Error::config("concentration", "this command needs a [concentration] table"));
    };
    let (a, b) = region_pair(run, "concentration", &c.a, &c.b)?;
    let (phi, converged) = run.state()?;
    let bounds = concentration::prop14_check(&phi, &a, &b, c.constants, run.cfg.seed)?;
    let (sqrt_j, am_gm_rhs) = concentration::am_gm_sides(&phi, &a, &b)?;
    let witness = concentration::lower_bound_witness(&a, &b)?;
    let hs = if run.grid.dim() == 1 {
        Some(concentration::hs_norm_squared(&run.grid, &a, &b)?)
    } else {
        None
    };
    let unitary = a.measure() * b.measure() / (2.0 * std::f64::consts::PI).powi(run.grid.dim() as i32);
    Ok(Outcome {
        report: json!({
            "bounds": bounds,
            "am_gm": {"sqrt_j": sqrt_j, "rhs": am_gm_rhs, "holds": sqrt_j <= am_gm_rhs + 1e-12},
            "lower_bound_witness": witness,
            "hs_norm_squared": hs,
            "hs_closed_form_unitary": unitary,
        }),
        code: not_converged(converged),
    })
}

fn volume(run: &Run) -> Result<Outcome> {
    let Some(v) = &run.cfg.volume else {
        return Err(Error::config("volume", "this command needs a [volume] table"));
    };
    let ham = run.hamiltonian()?;
    let (phi, converged) = run.state()?;
    let p = concentration::volume_probability(&phi, &ham, v.lambda)?;
    let counted = concentration::volume_probability_counted(&phi, &ham, v.lambda)?;
    let sandwich = match (&v.inner, &v.outer) {
        (Some(i), Some(o)) => {
            let inner = region_pair(run, "volume.inner", &i.a, &i.b)?;
            let outer = region_pair(run, "volume.outer", &o.a, &o.b)?;
            Some(concentration::sandwich(&phi, &ham, v.lambda, (&inner.0, &inner.1), (&outer.0, &outer.1))?)
        }
        _ => None,
    };
    Ok(Outcome {
        report: json!({"lambda": v.lambda, "probability": p, "probability_counted": counted, "sandwich": sandwich}),
        code: not_converged(converged),
    })
}

fn write_eigenvalues(run: &Run, name: &str, values: &[f64]) -> Result<()> {
    let idx: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let mut csv = Vec::new();
    io::write_real_columns(&mut csv, &["index", "eigenvalue"], &[&idx, values])?;
    run.write_bytes(name, &csv)
}

fn sums_cmd(run: &Run) -> Result<Outcome> {
    let Some(s) = &run.cfg.sums else {
        return Err(Error::config("sums", "this command needs a [sums] table"));
    };
    let placement = match &s.placement {
        Placement::Random { seed } => Placement::Random { seed: *seed ^ run.cfg.seed },
        other => other.clone(),
    };
    let sys = sums::build_cube_system(&run.grid, s.cubes, s.side, &placement)
        .map_err(|e| Error::config("sums.placement", e.to_string()))?;
    let (mut report, jensen) = match &s.observable {
        Some(src) => {
            let f = run.cfg.observable("sums.observable", src)?;
            let mut report = sums::sum_over_system(&sys, &Observable::joint(f.clone()))?;
            let jensen = match &s.jensen {
                Some(j) => {
                    let big_f = Expr::parse_scalar(j, &run.cfg.constants())?;
                    let r = sums::jensen_check(sys.states(), f, |t| big_f.eval_scalar(t))?;
                    report.jensen_lhs = Some(r.lhs);
                    report.jensen_rhs = Some(r.rhs);
                    Some(r)
                }
                None => None,
            };
            (report, jensen)
        }
        None => (sums::sum_over_system_separable(&sys, &run.hamiltonian()?)?, None),
    };
    if report.kyfan_oracle_value.is_some() {
        let eigs = sums::kyfan_oracle(&run.hamiltonian()?, s.cubes)?;
        write_eigenvalues(run, "kyfan_eigenvalues.csv", &eigs)?;
    }
    report.per_state.shrink_to_fit();
    let centers: Vec<Vec<f64>> = match sys.kind() {
        sums::SystemKind::CubeIndicators { omega, .. } => omega.components.iter().map(|c| c.center().to_vec()).collect(),
        _ => Vec::new(),
    };
    Ok(Outcome::ok(json!({
        "report": report,
        "cube_centers": centers,
        "jensen": jensen,
        "kyfan_label": "discrete-grid infimum for separable f",
    })))
}

fn weyl(run: &Run) -> Result<Outcome> {
    let Some(w) = &run.cfg.weyl else {
        return Err(Error::config("weyl", "this command needs a [weyl] table"));
    };
    let ham = run.hamiltonian()?;
    let spec = sums::Spectrum::of(&ham)?;
    let count = w.eigen_count.min(spec.values.len());
    write_eigenvalues(run, "eigenvalues.csv", &spec.values[..count])?;
    let reports = w
        .lambdas
        .iter()
        .map(|l| sums::weyl_compare_with(&spec, &ham, *l))
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome::ok(json!({
        "eigenvalues": &spec.values[..count],
        "eigenvalue_sum": spec.values[..count].iter().sum::<f64>(),
        "comparisons": reports,
    })))
}

fn coordinate_columns(grid: &Grid, space: Space) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    let mut cols = vec![Vec::with_capacity(grid.len()); dim];
    let mut p = [0.0; MAX_DIM];
    for i in 0..grid.len() {
        grid.point(space, i, &mut p);
        for (c, v) in cols.iter_mut().zip(&p[..dim]) {
            c.push(*v);
        }
    }
    cols
}

fn write_marginal(run: &Run, name: &str, space: Space, values: &[f64]) -> Result<()> {
    let dim = run.grid.dim();
    let prefix = if space == Space::Position { "x" } else { "k" };
    let names: Vec<String> = (1..=dim)
        .map(|i| if dim == 1 { prefix.to_string() } else { format!("{prefix}{i}") })
        .chain(std::iter::once(name.trim_end_matches(".csv").to_string()))
        .collect();
    let cols = coordinate_columns(&run.grid, space);
    let mut refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    refs.push(values);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut csv = Vec::new();
    io::write_real_columns(&mut csv, &name_refs, &refs)?;
    run.write_bytes(name, &csv)
}

fn density_export(run: &Run) -> Result<Outcome> {
    let (phi, converged) = run.state()?;
    phi.require_normalized()?;
    let (fx, gk) = (phi.fx(), phi.gk());
    write_marginal(run, "fx.csv", Space::Position, &fx)?;
    write_marginal(run, "gk.csv", Space::Fourier, &gk)?;
    let mut files = vec!["fx.csv", "gk.csv"];
    if run.grid.dim() == 1 {
        let (xs, ks) = (run.grid.axis(Space::Position), run.grid.axis(Space::Fourier));
        let mut text = String::from("x,k,density\n");
        for (ik, k) in ks.iter().enumerate() {
            for (ix, x) in xs.iter().enumerate() {
                text.push_str(&format!("{x:.16e},{k:.16e},{:.16e}\n", fx[ix] * gk[ik]));
            }
        }
        run.write_bytes("density.csv", text.as_bytes())?;
        files.push("density.csv");
    }
    let wx = run.grid.cell_volume(Space::Position);
    let wk = run.grid.cell_volume(Space::Fourier);
    Ok(Outcome {
        report: json!({
            "mass_x": fx.iter().sum::<f64>() * wx,
            "mass_k": gk.iter().sum::<f64>() * wk,
            "files": files,
            "grid": grid_json(&run.grid),
        }),
        code: not_converged(converged),
    })
}

fn hermite(run: &Run) -> Result<Outcome> {
    if run.grid.dim() != 1 {
        return Err(Error::config("grid.dim", "hermite-check runs on one-dimensional grids"));
    }
    let max_order = run.cfg.hermite.map_or(4, |h| h.max_order);
    let reports = (0..=max_order)
        .map(|m| sums::hermite_check(&run.grid, m))
        .collect::<Result<Vec<_>>>()?;
    let osc = Hamiltonian::oscillator(&run.grid, 1.0, 1.0, 1.0)?;
    let eigen_err = sums::hermite_eigenbasis_error(&osc, max_order as usize + 1)?;
    let ok = reports.iter().all(|r| r.transform_error <= 1e-9 && r.density_error <= 1e-8);
    Ok(Outcome::ok(json!({
        "orders": reports,
        "eigenbasis_density_error": eigen_err,
        "within_tolerance": ok && eigen_err <= 1e-8,
    })))
}

fn bh(run: &Run) -> Result<Outcome> {
    let cfg = run.cfg.bh.clone().unwrap_or(crate::config::BhConfig {
        order: 3,
        box_length: 30.0,
        state: None,
    });
    let state = match &cfg.state {
        Some(s) => AnalyticState::from_spec(s)?,
        None => AnalyticState::standard_gaussian(run.grid.dim()),
    };
    let report = beurling_hormander_functional(&state, cfg.order, cfg.box_length)?;
    Ok(Outcome {
        report: json!({"report": report}),
        code: if report.divergent { EXIT_DIVERGENT } else { EXIT_OK },
    })
}

/// Reads a report written by a previous run.
pub fn read_report(dir: &Path, command: &str) -> Result<Value> {
    let text = fs::read_to_string(dir.join(format!("{command}.json")))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.toml");
        fs::write(&p, body).unwrap();
        p
    }

    const OSC: &str = r#"
[grid]
dim = 1
points = 128
length = 16.0

[hamiltonian]
kind = "oscillator"

[concentration]
a = [{ type = "box", center = [0.0], half_widths = [0.4] }]
b = [{ type = "box", center = [0.0], half_widths = [0.4] }]

[transforms]
matrix = [[1.0]]
shift = [0.0]
observable = "exp(-x^2 - k^2)"
"#;

    fn run_cmd(cmd: &str, cfg: &Path, out: &Path) -> i32 {
        run(["phasespace", cmd, "-q", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()])
    }

    #[test]
    fn solve_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_cfg(dir.path(), OSC);
        let out = dir.path().join("out");
        assert_eq!(run_cmd("solve", &cfg, &out), EXIT_OK);
        let r = read_report(&out, "solve").unwrap();
        assert!((r["energy"].as_f64().unwrap() - 0.5).abs() < 1e-6);
        assert!(out.join("ground_state.bin").exists());

        assert_eq!(run_cmd("check-transforms", &cfg, &out), EXIT_OK);
        let r = read_report(&out, "check-transforms").unwrap();
        assert_eq!(r["max_residual"].as_f64().unwrap(), 0.0);

        assert_eq!(run_cmd("concentration", &cfg, &out), EXIT_OK);
        let r = read_report(&out, "concentration").unwrap();
        assert!((r["bounds"]["prop14_bound"].as_f64().unwrap() - 0.9604).abs() < 1e-12);
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let bad = write_cfg(dir.path(), &OSC.replace("points = 128", "points = 0"));
        assert_eq!(run_cmd("solve", &bad, &out), EXIT_VALIDATION);
        let missing = dir.path().join("nope.toml");
        assert_eq!(run_cmd("solve", &missing, &out), EXIT_IO);
        let cfg = write_cfg(dir.path(), &format!("{OSC}\n[solver]\nmax_outer_iterations = 1\nresidual_tol = 1e-15\n"));
        assert_eq!(run_cmd("solve", &cfg, &out), EXIT_NOT_CONVERGED);
        let div = OSC.to_string()
            + r#"
[bh]
order = 3
box_length = 30.0

[bh.state]
dim = 1
poly = [{ exponents = [2], re = 1.0, im = 0.0 }]
quad = [[0.5]]
"#;
        let cfg = write_cfg(dir.path(), &div);
        assert_eq!(run_cmd("bh-functional", &cfg, &out), EXIT_DIVERGENT);
        assert_eq!(run(["phasespace", "bogus"]), EXIT_VALIDATION);
    }
}
