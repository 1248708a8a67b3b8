//! TOML run configuration for the command-line tool.
//!
//! ```toml
//! seed = 0
//! hbar = 1.0
//! mass = 1.0
//!
//! [grid]
//! dim = 1
//! points = 512
//! length = 20.0
//!
//! [parameters]
//! omega = 1.0
//!
//! [hamiltonian]
//! kind = "separable"
//! kinetic = "p^2/(2*m)"
//! potential = "omega^2*x^2/2"
//! ```
//!
//! `hbar` and `m` are available in every expression alongside the
//! `[parameters]` table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticState, AnalyticStateSpec};
use crate::concentration::{BoundConstants, Region, RegionSet};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{self, Grid, Space};
use crate::states::Wavefunction;
use crate::sums::Placement;
use crate::variational::{Hamiltonian, SolverConfig};

fn one() -> f64 {
    1.0
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "is_zero")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transforms: Option<TransformsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<VolumeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sums: Option<SumsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weyl: Option<WeylConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hermite: Option<HermiteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bh: Option<BhConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum HamiltonianConfig {
    /// `p²/2m + mω²|x|²/2`.
    Oscillator {
        #[serde(default = "one")]
        omega: f64,
    },
    /// `T(p) + V(x)` from expressions.
    Separable { kinetic: String, potential: String },
    /// `𝓗(x, p)` from one expression.
    General { symbol: String },
    /// `T` and `V` samples in the grid CSV format.
    Tabulated { kinetic_file: PathBuf, potential_file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateConfig {
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        momentum: Option<Vec<f64>>,
    },
    /// Normalized Hermite function of the given order (`n = 1`).
    Hermite { order: u32 },
    Analytic { spec: AnalyticStateSpec },
    File { path: PathBuf },
    /// Ground state of the configured hamiltonian.
    Ground,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig::Gaussian {
            center: None,
            width: 1.0,
            momentum: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformsConfig {
    /// Row-major `A`.
    pub matrix: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub lambda: f64,
    pub shift: Vec<f64>,
    pub observable: String,
    /// Defaults to the standard Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<AnalyticStateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub a: Vec<Region>,
    pub b: Vec<Region>,
    #[serde(default)]
    pub constants: BoundConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<RegionPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<RegionPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionPair {
    pub a: Vec<Region>,
    pub b: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumsConfig {
    pub cubes: usize,
    pub side: f64,
    pub placement: Placement,
    /// `f(x, k)`; the configured separable hamiltonian is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
    /// Scalar `F(t)` for the Jensen chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jensen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylConfig {
    pub lambdas: Vec<f64>,
    #[serde(default = "default_eigen_count")]
    pub eigen_count: usize,
}

fn default_eigen_count() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermiteConfig {
    #[serde(default = "default_hermite")]
    pub max_order: u32,
}

fn default_hermite() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhConfig {
    #[serde(default = "default_bh_order")]
    pub order: u32,
    #[serde(default = "default_bh_box")]
    pub box_length: f64,
    /// Defaults to the standard Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<AnalyticStateSpec>,
}

fn default_bh_order() -> u32 {
    3
}

fn default_bh_box() -> f64 {
    30.0
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn keyed<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(key, other.to_string()),
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("unknown field"))
                .unwrap_or("<document>")
                .to_string();
            Error::config(key, e.to_string().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Makes relative file paths relative to the config's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(HamiltonianConfig::Tabulated {
            kinetic_file,
            potential_file,
        }) = &mut self.hamiltonian
        {
            fix(kinetic_file);
            fix(potential_file);
        }
        if let StateConfig::File { path } = &mut self.state {
            fix(path);
        }
        if let crate::variational::InitialState::File { path } = &mut self.solver.initial_state {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        keyed("grid", Grid::new(self.grid.dim, self.grid.points, self.grid.length).map(|_| ()))?;
        positive("hbar", self.hbar)?;
        positive("mass", self.mass)?;
        for (k, v) in &self.parameters {
            if !v.is_finite() {
                return Err(Error::config(format!("parameters.{k}"), "must be finite"));
            }
        }
        self.solver.validate()?;
        let dim = self.grid.dim;
        if let Some(h) = &self.hamiltonian {
            match h {
                HamiltonianConfig::Oscillator { omega } => positive("hamiltonian.omega", *omega)?,
                HamiltonianConfig::Separable { kinetic, potential } => {
                    let t = self.expr("hamiltonian.kinetic", kinetic)?;
                    if t.uses_position() {
                        return Err(Error::config("hamiltonian.kinetic", "must not depend on x"));
                    }
                    let v = self.expr("hamiltonian.potential", potential)?;
                    if v.uses_momentum() {
                        return Err(Error::config("hamiltonian.potential", "must not depend on k or p"));
                    }
                }
                HamiltonianConfig::General { symbol } => {
                    self.expr("hamiltonian.symbol", symbol)?;
                }
                HamiltonianConfig::Tabulated { .. } => {}
            }
        }
        match &self.state {
            StateConfig::Gaussian { center, width, momentum } => {
                positive("state.width", *width)?;
                for (key, v) in [("state.center", center), ("state.momentum", momentum)] {
                    if v.as_ref().is_some_and(|v| v.len() != dim) {
                        return Err(Error::config(key, format!("must have {dim} components")));
                    }
                }
            }
            StateConfig::Hermite { order } => {
                if dim != 1 {
                    return Err(Error::config("state.order", "Hermite states are one-dimensional"));
                }
                if *order > crate::analytic::MAX_DEGREE {
                    return Err(Error::config("state.order", "order exceeds the supported degree"));
                }
            }
            StateConfig::Analytic { spec } => {
                keyed("state.spec", AnalyticState::from_spec(spec).map(|_| ()))?;
                if spec.dim != dim {
                    return Err(Error::config("state.spec.dim", "differs from grid.dim"));
                }
            }
            StateConfig::Ground => {
                if self.hamiltonian.is_none() {
                    return Err(Error::config("state", "`ground` needs a [hamiltonian] table"));
                }
            }
            StateConfig::File { .. } => {}
        }
        if let Some(t) = &self.transforms {
            if t.matrix.len() != dim || t.matrix.iter().any(|r| r.len() != dim) {
                return Err(Error::config("transforms.matrix", format!("must be {dim}×{dim}")));
            }
            if t.shift.len() != dim {
                return Err(Error::config("transforms.shift", format!("must have {dim} components")));
            }
            positive("transforms.lambda", t.lambda)?;
            self.expr("transforms.observable", &t.observable)?;
            if let Some(s) = &t.state {
                keyed("transforms.state", AnalyticState::from_spec(s).map(|_| ()))?;
            }
        }
        if let Some(c) = &self.concentration {
            self.regions("concentration.a", &c.a, Space::Position)?;
            self.regions("concentration.b", &c.b, Space::Fourier)?;
        }
        if let Some(v) = &self.volume {
            if !v.lambda.is_finite() {
                return Err(Error::config("volume.lambda", "must be finite"));
            }
            for (key, pair) in [("volume.inner", &v.inner), ("volume.outer", &v.outer)] {
                if let Some(p) = pair {
                    self.regions(&format!("{key}.a"), &p.a, Space::Position)?;
                    self.regions(&format!("{key}.b"), &p.b, Space::Fourier)?;
                }
            }
            if v.inner.is_some() != v.outer.is_some() {
                return Err(Error::config("volume", "give both `inner` and `outer` or neither"));
            }
        }
        if let Some(s) = &self.sums {
            if s.cubes == 0 {
                return Err(Error::config("sums.cubes", "must be at least 1"));
            }
            positive("sums.side", s.side)?;
            if let Some(o) = &s.observable {
                self.expr("sums.observable", o)?;
            } else if !matches!(
                self.hamiltonian,
                Some(HamiltonianConfig::Oscillator { .. } | HamiltonianConfig::Separable { .. } | HamiltonianConfig::Tabulated { .. })
            ) {
                return Err(Error::config("sums.observable", "required unless the hamiltonian is separable"));
            }
            if let Some(j) = &s.jensen {
                if s.observable.is_none() {
                    return Err(Error::config("sums.jensen", "needs `sums.observable`"));
                }
                keyed("sums.jensen", Expr::parse_scalar(j, &self.constants()).map(|_| ()))?;
            }
        }
        if let Some(w) = &self.weyl {
            if w.lambdas.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("weyl.lambdas", "must be finite"));
            }
        }
        if let Some(b) = &self.bh {
            positive("bh.box_length", b.box_length)?;
            if let Some(s) = &b.state {
                keyed("bh.state", AnalyticState::from_spec(s).map(|_| ()))?;
            }
        }
        Ok(())
    }

    /// `[parameters]` plus `hbar` and `m`.
    pub fn constants(&self) -> BTreeMap<String, f64> {
        let mut c = BTreeMap::new();
        c.insert("hbar".to_string(), self.hbar);
        c.insert("m".to_string(), self.mass);
        c.extend(self.parameters.iter().map(|(k, v)| (k.clone(), *v)));
        c
    }

    pub fn expr(&self, key: &str, src: &str) -> Result<Expr> {
        let e = keyed(key, Expr::parse_with(src, &self.constants()))?;
        keyed(key, e.check_dim(self.grid.dim))?;
        Ok(e)
    }

    pub fn regions(&self, key: &str, comps: &[Region], space: Space) -> Result<RegionSet> {
        keyed(key, RegionSet::new(self.grid.dim, space, comps.to_vec()))
    }

    pub fn build_grid(&self) -> Result<Grid> {
        keyed("grid", Grid::new(self.grid.dim, self.grid.points, self.grid.length))
    }

    pub fn build_hamiltonian(&self, grid: &Grid) -> Result<Hamiltonian> {
        let Some(h) = &self.hamiltonian else {
            return Err(Error::config("hamiltonian", "this command needs a [hamiltonian] table"));
        };
        let (hbar, mass) = (self.hbar, self.mass);
        match h {
            HamiltonianConfig::Oscillator { omega } => Hamiltonian::oscillator(grid, hbar, mass, *omega),
            HamiltonianConfig::Separable { kinetic, potential } => {
                let t = self.expr("hamiltonian.kinetic", kinetic)?;
                let v = self.expr("hamiltonian.potential", potential)?;
                keyed(
                    "hamiltonian",
                    Hamiltonian::separable(grid, hbar, mass, |p| t.eval(&[], &k_of(p, hbar), p), |x| v.eval(x, &[], &[])),
                )
            }
            HamiltonianConfig::General { symbol } => {
                let s = Arc::new(self.expr("hamiltonian.symbol", symbol)?);
                keyed(
                    "hamiltonian",
                    Hamiltonian::general(grid, hbar, mass, move |x, p| s.eval(x, &k_of(p, hbar), p)),
                )
            }
            HamiltonianConfig::Tabulated {
                kinetic_file,
                potential_file,
            } => {
                let read = |key: &str, path: &Path, space: Space| -> Result<Vec<f64>> {
                    let f = keyed(key, std::fs::File::open(path).map_err(Error::from))?;
                    let g = keyed(key, grid::io::read_csv(grid, f))?;
                    if g.space() != space {
                        return Err(Error::config(key, format!("expected {space} samples")));
                    }
                    Ok(g.values().iter().map(|c| c.re).collect())
                };
                let t = read("hamiltonian.kinetic_file", kinetic_file, Space::Fourier)?;
                let v = read("hamiltonian.potential_file", potential_file, Space::Position)?;
                Hamiltonian::separable_from_samples(grid, t, v, hbar, mass)
            }
        }
    }

    /// `f(x, k)` from an expression in `x`, `k` and `p = ℏk`.
    pub fn observable(&self, key: &str, src: &str) -> Result<impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + Clone> {
        let e = Arc::new(self.expr(key, src)?);
        let hbar = self.hbar;
        Ok(move |x: &[f64], k: &[f64]| {
            let p: Vec<f64> = k.iter().map(|v| v * hbar).collect();
            e.eval(x, k, &p)
        })
    }

    /// The configured state; `Ground` is resolved by the caller.
    pub fn build_state(&self, grid: &Grid) -> Result<Wavefunction> {
        let dim = grid.dim();
        match &self.state {
            StateConfig::Gaussian { center, width, momentum } => {
                let zero = vec![0.0; dim];
                let s = keyed(
                    "state",
                    AnalyticState::gaussian_packet(
                        center.as_deref().unwrap_or(&zero),
                        *width,
                        momentum.as_deref().unwrap_or(&zero),
                    ),
                )?;
                Wavefunction::from_analytic(&s, grid)?.normalize()
            }
            StateConfig::Hermite { order } => {
                Wavefunction::from_analytic(&AnalyticState::hermite_function(*order), grid)?.normalize()
            }
            StateConfig::Analytic { spec } => {
                let s = keyed("state.spec", AnalyticState::from_spec(spec))?;
                Wavefunction::from_analytic(&s, grid)?.normalize()
            }
            StateConfig::File { path } => {
                let f = keyed("state.path", std::fs::File::open(path).map_err(Error::from))?;
                let psi = match path.extension().and_then(|e| e.to_str()) {
                    Some("csv") => keyed("state.path", grid::io::read_csv(grid, f))?,
                    _ => keyed("state.path", grid::io::read_binary(f))?,
                };
                if psi.grid() != grid {
                    return Err(Error::config("state.path", "state grid differs from the run grid"));
                }
                Wavefunction::normalized(psi)
            }
            StateConfig::Ground => Err(Error::config("state", "ground state must be solved first")),
        }
    }
}

fn k_of(p: &[f64], hbar: f64) -> Vec<f64> {
    p.iter().map(|v| v / hbar).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7
hbar = 1.0
mass = 1.0

[grid]
dim = 1
points = 128
length = 16.0

[parameters]
omega = 1.5

[hamiltonian]
kind = "separable"
kinetic = "p^2/(2*m)"
potential = "omega^2*x^2/2"

[solver]
damping = 0.5
residual_tol = 1e-8

[state]
kind = "gaussian"
width = 0.8

[concentration]
a = [{ type = "box", center = [0.0], half_widths = [0.4] }]
b = [{ type = "box", center = [0.0], half_widths = [0.4] }]

[concentration.constants]
c1 = 1.0
c2 = 0.5

[volume]
lambda = 1.0

[sums]
cubes = 3
side = 0.5
placement = { kind = "random", seed = 3 }
observable = "exp(-k^2)/(1+x^2)"
jensen = "t^2"

[weyl]
lambdas = [5.0, 10.0]

[bh]
order = 3
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.constants()["omega"], 1.5);
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_named() {
        let bad = FULL.replace("damping = 0.5", "dampning = 0.5");
        match RunConfig::from_toml(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "dampning"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_keyed() {
        let cases = [
            (FULL.replace("points = 128", "points = 127"), "grid"),
            (FULL.replace("hbar = 1.0", "hbar = -1.0"), "hbar"),
            (FULL.replace("omega^2*x^2/2", "omega^2*x^2/2 + k"), "hamiltonian.potential"),
            (FULL.replace("omega^2*x^2/2", "x^^2"), "hamiltonian.potential"),
            (FULL.replace("damping = 0.5", "damping = 2.0"), "solver.damping"),
            (FULL.replace("width = 0.8", "width = 0.0"), "state.width"),
            (FULL.replace("half_widths = [0.4] }]\n\n[conc", "half_widths = [0.4] }, { type = \"ball\", center = [0.5], radius = 0.3 }]\n\n[conc"), "concentration.b"),
            (FULL.replace("jensen = \"t^2\"", "jensen = \"x^2\""), "sums.jensen"),
        ];
        for (text, want) in cases {
            match RunConfig::from_toml(&text) {
                Err(Error::Config { key, .. }) => assert_eq!(key, want),
                other => panic!("{want}: {other:?}"),
            }
        }
    }

    #[test]
    fn builds_oscillator_from_expressions() {
        let cfg = RunConfig::from_toml(FULL).unwrap();
        let g = cfg.build_grid().unwrap();
        let h = cfg.build_hamiltonian(&g).unwrap();
        let direct = Hamiltonian::oscillator(&g, 1.0, 1.0, 1.5).unwrap();
        let (HamiltonianKindRef(a), HamiltonianKindRef(b)) = (HamiltonianKindRef::of(&h), HamiltonianKindRef::of(&direct));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let w = cfg.build_state(&g).unwrap();
        assert!(w.is_normalized());
    }

    struct HamiltonianKindRef(Vec<f64>);

    impl HamiltonianKindRef {
        fn of(h: &Hamiltonian) -> Self {
            match h.kind() {
                crate::variational::HamiltonianKind::Separable { t, v } => {
                    HamiltonianKindRef(t.iter().chain(v).copied().collect())
                }
                _ => panic!("expected separable"),
            }
        }
    }
}
