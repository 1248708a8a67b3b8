//! Regions in position or Fourier space, spectral projections, the
//! concentration functional `J(φ,A,B) = ‖P_Aφ‖²‖P_Bφ‖²` and the bounds on
//! its supremum.
//!
//! On the grid a sample belongs to a region when the sample point (the cell
//! center) lies in the closed region.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Space, MAX_DIM};
use crate::quadrature;
use crate::states::Wavefunction;
use crate::variational::Hamiltonian;

/// Default Monte-Carlo sample count for the average width.
pub const WIDTH_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Region {
    Box { center: Vec<f64>, half_widths: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { center, .. } | Region::Ball { center, .. } => center.len(),
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Region::Box { center, .. } | Region::Ball { center, .. } => center,
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Region::Box { half_widths, .. } => half_widths.iter().map(|h| 2.0 * h).product(),
            Region::Ball { center, radius } => ball_volume(center.len(), *radius),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Region::Box { center, half_widths } => center
                .iter()
                .zip(half_widths)
                .zip(p)
                .all(|((c, h), x)| (x - c).abs() <= *h),
            Region::Ball { center, radius } => dist2(center, p) <= radius * radius,
        }
    }

    /// `sup |x|²` over the region.
    pub fn sup_norm_sqr(&self) -> f64 {
        match self {
            Region::Box { center, half_widths } => center
                .iter()
                .zip(half_widths)
                .map(|(c, h)| (c.abs() + h).powi(2))
                .sum(),
            Region::Ball { center, radius } => (norm(center) + radius).powi(2),
        }
    }

    /// Projection onto the line spanned by the unit vector `u`.
    fn project(&self, u: &[f64]) -> (f64, f64) {
        match self {
            Region::Box { center, half_widths } => {
                let c: f64 = center.iter().zip(u).map(|(a, b)| a * b).sum();
                let r: f64 = half_widths.iter().zip(u).map(|(h, b)| h * b.abs()).sum();
                (c - r, c + r)
            }
            Region::Ball { center, radius } => {
                let c: f64 = center.iter().zip(u).map(|(a, b)| a * b).sum();
                (c - radius, c + radius)
            }
        }
    }

    /// Exact average width: mean length of the projection on a uniform line.
    fn width(&self) -> f64 {
        match self {
            Region::Box { half_widths, .. } => {
                let n = half_widths.len() as f64;
                let mean_abs = (ln_gamma(n / 2.0) - ln_gamma((n + 1.0) / 2.0)).exp() / PI.sqrt();
                half_widths.iter().map(|h| 2.0 * h).sum::<f64>() * mean_abs
            }
            Region::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Mass of `N(mean, τ²I)`.
    fn gaussian_mass(&self, mean: &[f64], tau: f64) -> f64 {
        match self {
            Region::Box { center, half_widths } => center
                .iter()
                .zip(half_widths)
                .zip(mean)
                .map(|((c, h), m)| {
                    let s = std::f64::consts::SQRT_2 * tau;
                    0.5 * (erf((c + h - m) / s) - erf((c - h - m) / s))
                })
                .product(),
            Region::Ball { center, radius } => ball_gaussian_mass(center, *radius, mean, tau),
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball_volume(n: usize, r: f64) -> f64 {
    match n {
        1 => 2.0 * r,
        2 => PI * r * r,
        _ => 4.0 / 3.0 * PI * r.powi(3),
    }
}

/// Mass of an isotropic Gaussian in a ball, by Gauss–Legendre quadrature in
/// polar (n = 2) or axisymmetric spherical (n = 3) coordinates about the ball
/// center.
fn ball_gaussian_mass(center: &[f64], r: f64, mean: &[f64], tau: f64) -> f64 {
    let n = center.len();
    let d = dist2(center, mean).sqrt();
    let t2 = tau * tau;
    if d == 0.0 || n == 1 {
        if n == 1 {
            let s = std::f64::consts::SQRT_2 * tau;
            return 0.5 * (erf((center[0] + r - mean[0]) / s) - erf((center[0] - r - mean[0]) / s));
        }
        return gamma_lr(n as f64 / 2.0, r * r / (2.0 * t2));
    }
    let radial = |s: f64| -> f64 {
        match n {
            2 => {
                let ang = quadrature::integrate(
                    |th| (-(s * s + d * d - 2.0 * s * d * th.cos()) / (2.0 * t2)).exp(),
                    0.0,
                    2.0 * PI,
                    24,
                    4,
                );
                ang * s / (2.0 * PI * t2)
            }
            _ => {
                let ang = quadrature::integrate(
                    |th| (-(s * s + d * d - 2.0 * s * d * th.cos()) / (2.0 * t2)).exp() * th.sin(),
                    0.0,
                    PI,
                    24,
                    4,
                );
                ang * 2.0 * PI * s * s / (2.0 * PI * t2).powf(1.5)
            }
        }
    };
    quadrature::integrate(radial, 0.0, r, 24, 8)
}

/// Finite union of pairwise disjoint boxes and balls on one side of phase
/// space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSet {
    pub dim: usize,
    pub space: Space,
    pub components: Vec<Region>,
}

/// Average width with its Monte-Carlo standard error (0 when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
}

impl RegionSet {
    pub fn new(dim: usize, space: Space, components: Vec<Region>) -> Result<Self> {
        let set = RegionSet { dim, space, components };
        set.validate()?;
        Ok(set)
    }

    pub fn empty(dim: usize, space: Space) -> Self {
        RegionSet {
            dim,
            space,
            components: Vec::new(),
        }
    }

    /// `[lo, hi]` in one dimension.
    pub fn interval(space: Space, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            1,
            space,
            vec![Region::Box {
                center: vec![0.5 * (lo + hi)],
                half_widths: vec![0.5 * (hi - lo)],
            }],
        )
    }

    pub fn ball(space: Space, center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(center.len(), space, vec![Region::Ball { center, radius }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::Dimension(format!("unsupported dimension {}", self.dim)));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.dim() != self.dim {
                return Err(Error::Dimension(format!("component {i} is {}-d, set is {}-d", c.dim(), self.dim)));
            }
            let ok = match c {
                Region::Box { center, half_widths } => {
                    half_widths.len() == self.dim
                        && half_widths.iter().all(|h| *h > 0.0 && h.is_finite())
                        && center.iter().all(|v| v.is_finite())
                }
                Region::Ball { center, radius } => *radius > 0.0 && radius.is_finite() && center.iter().all(|v| v.is_finite()),
            };
            if !ok {
                return Err(Error::Domain(format!("component {i} has invalid geometry")));
            }
        }
        for i in 0..self.components.len() {
            for j in i + 1..self.components.len() {
                if overlaps(&self.components[i], &self.components[j]) {
                    return Err(Error::Overlap(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn measure(&self) -> f64 {
        self.components.iter().map(Region::measure).sum()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.components.iter().any(|c| c.contains(p))
    }

    pub fn sup_norm_sqr(&self) -> f64 {
        self.components.iter().map(Region::sup_norm_sqr).fold(0.0, f64::max)
    }

    /// Fails unless every component lies inside the grid's cells.
    pub fn check_coverage(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::Dimension("region and grid dimensions differ".into()));
        }
        let h = grid.spacing(self.space);
        let lo = grid.coord_at(self.space, 0) - 0.5 * h;
        let hi = grid.coord_at(self.space, grid.points_per_axis() - 1) + 0.5 * h;
        let slack = 1e-12 * (hi - lo);
        for (i, c) in self.components.iter().enumerate() {
            let ext: Vec<f64> = match c {
                Region::Box { half_widths, .. } => half_widths.clone(),
                Region::Ball { radius, .. } => vec![*radius; self.dim],
            };
            for (a, (&m, e)) in c.center().iter().zip(&ext).enumerate() {
                if m - e < lo - slack || m + e > hi + slack {
                    return Err(Error::Coverage(format!(
                        "component {i} leaves the {} box [{lo}, {hi}] along axis {a}",
                        self.space
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cell-center indicator on the matching side of `grid`.
    pub fn indicator(&self, grid: &Grid) -> Result<Vec<f64>> {
        if grid.dim() != self.dim {
            return Err(Error::Dimension("region and grid dimensions differ".into()));
        }
        let mut p = [0.0; MAX_DIM];
        Ok((0..grid.len())
            .map(|i| {
                grid.point(self.space, i, &mut p);
                if self.contains(&p[..self.dim]) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Average width `w(A)`: exact for a single component and for `n = 1`,
    /// otherwise Monte Carlo over uniform directions with the given seed.
    pub fn average_width(&self, seed: u64, samples: usize) -> WidthEstimate {
        if self.components.is_empty() {
            return WidthEstimate {
                value: 0.0,
                std_error: 0.0,
                exact: true,
            };
        }
        if self.dim == 1 {
            return WidthEstimate {
                value: self.measure(),
                std_error: 0.0,
                exact: true,
            };
        }
        if self.components.len() == 1 {
            return WidthEstimate {
                value: self.components[0].width(),
                std_error: 0.0,
                exact: true,
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = samples.max(2);
        let (mut sum, mut sum2) = (0.0, 0.0);
        let mut u = vec![0.0; self.dim];
        let mut spans = Vec::with_capacity(self.components.len());
        for _ in 0..samples {
            let mut len = 0.0;
            while len < 1e-12 {
                for v in u.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                len = norm(&u);
            }
            u.iter_mut().for_each(|v| *v /= len);
            spans.clear();
            spans.extend(self.components.iter().map(|c| c.project(&u)));
            let w = union_length(&mut spans);
            sum += w;
            sum2 += w * w;
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = (sum2 / n - mean * mean).max(0.0) * n / (n - 1.0);
        WidthEstimate {
            value: mean,
            std_error: (var / n).sqrt(),
            exact: false,
        }
    }
}

fn union_length(spans: &mut [(f64, f64)]) -> f64 {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let (mut lo, mut hi) = spans[0];
    for &(a, b) in spans.iter().skip(1) {
        if a > hi {
            total += hi - lo;
            lo = a;
            hi = b;
        } else {
            hi = hi.max(b);
        }
    }
    total + hi - lo
}

/// Whether two closed components share interior points.
fn overlaps(a: &Region, b: &Region) -> bool {
    match (a, b) {
        (Region::Box { center: c1, half_widths: h1 }, Region::Box { center: c2, half_widths: h2 }) => c1
            .iter()
            .zip(h1)
            .zip(c2.iter().zip(h2))
            .all(|((x1, w1), (x2, w2))| (x1 - x2).abs() < w1 + w2),
        (Region::Ball { center: c1, radius: r1 }, Region::Ball { center: c2, radius: r2 }) => {
            dist2(c1, c2) < (r1 + r2).powi(2)
        }
        (Region::Box { center, half_widths }, Region::Ball { center: bc, radius })
        | (Region::Ball { center: bc, radius }, Region::Box { center, half_widths }) => {
            let d2: f64 = center
                .iter()
                .zip(half_widths)
                .zip(bc)
                .map(|((c, h), p)| ((p - c).abs() - h).max(0.0).powi(2))
                .sum();
            d2 < radius * radius
        }
    }
}

/// `P_Aφ` (position side) or `P_Bφ` (Fourier side), not renormalized.
pub fn project(phi: &Wavefunction, region: &RegionSet) -> Result<Wavefunction> {
    let grid = phi.grid();
    let mask = region.indicator(grid)?;
    match region.space {
        Space::Position => Wavefunction::from_position(phi.psi().multiplied(&mask)?),
        Space::Fourier => Wavefunction::from_fourier(phi.psi_hat().multiplied(&mask)?),
    }
}

fn masked_mass(values: &GridFunction, mask: &[f64]) -> f64 {
    values
        .values()
        .iter()
        .zip(mask)
        .map(|(v, m)| v.norm_sqr() * m)
        .sum::<f64>()
        * values.cell_volume()
}

fn require_sides(a: &RegionSet, b: &RegionSet) -> Result<()> {
    if a.space != Space::Position || b.space != Space::Fourier {
        return Err(Error::Domain("A must be a position-space set and B a Fourier-space set".into()));
    }
    Ok(())
}

/// `(‖P_Aφ‖², ‖P_Bφ‖²)`.
pub fn concentrations(phi: &Wavefunction, a: &RegionSet, b: &RegionSet) -> Result<(f64, f64)> {
    require_sides(a, b)?;
    let grid = phi.grid();
    Ok((
        masked_mass(phi.psi(), &a.indicator(grid)?),
        masked_mass(phi.psi_hat(), &b.indicator(grid)?),
    ))
}

pub fn j_functional(phi: &Wavefunction, a: &RegionSet, b: &RegionSet) -> Result<f64> {
    phi.require_normalized()?;
    let (pa, pb) = concentrations(phi, a, b)?;
    Ok(pa * pb)
}

/// `√J` and the right side `½(2 − ‖P_{A'}φ‖² − ‖P_{B'}φ‖²)` of the AM–GM
/// step, with complements taken on the grid.
pub fn am_gm_sides(phi: &Wavefunction, a: &RegionSet, b: &RegionSet) -> Result<(f64, f64)> {
    phi.require_normalized()?;
    let (pa, pb) = concentrations(phi, a, b)?;
    let total_x = phi.psi().norm_sqr();
    let total_k = phi.psi_hat().norm_sqr();
    let (ca, cb) = (total_x - pa, total_k - pb);
    Ok(((pa * pb).sqrt(), 0.5 * (2.0 - ca - cb)))
}

/// `‖P_AP_B‖²_HS` of the discretized operator (`n = 1`), summed column by
/// column over the orthonormal grid basis.
pub fn hs_norm_squared(grid: &Grid, a: &RegionSet, b: &RegionSet) -> Result<f64> {
    require_sides(a, b)?;
    if grid.dim() != 1 {
        return Err(Error::Unsupported("the HS norm is materialized for n = 1 only".into()));
    }
    a.check_coverage(grid)?;
    b.check_coverage(grid)?;
    let ma = a.indicator(grid)?;
    let mb = b.indicator(grid)?;
    let n = grid.len();
    let basis_scale = grid.dx().sqrt().recip();
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    let mut total = 0.0;
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        col[j] = Complex64::new(basis_scale, 0.0);
        grid.forward_in_place(&mut col);
        col.iter_mut().zip(&mb).for_each(|(v, m)| *v *= m);
        grid.inverse_in_place(&mut col);
        let s: f64 = col.iter().zip(&ma).map(|(v, m)| v.norm_sqr() * m).sum();
        total += s * grid.dx();
    }
    Ok(total)
}

/// `(1 − ½(1 − √p)²)²` for `p < 1`.
pub fn prop14_bound(product: f64) -> Option<f64> {
    if (0.0..1.0).contains(&product) {
        Some((1.0 - 0.5 * (1.0 - product.sqrt()).powi(2)).powi(2))
    } else {
        None
    }
}

/// `min(|A||B|, w(A)|A|^{1/n}, w(B)|B|^{1/n})`.
pub fn eta_exponent(a: &RegionSet, b: &RegionSet, seed: u64) -> Result<f64> {
    Ok(eta_terms(a, b, seed)?.iter().copied().fold(f64::INFINITY, f64::min))
}

fn eta_terms(a: &RegionSet, b: &RegionSet, seed: u64) -> Result<[f64; 3]> {
    if a.dim != b.dim {
        return Err(Error::Dimension("A and B differ in dimension".into()));
    }
    let inv_n = 1.0 / a.dim as f64;
    let (ma, mb) = (a.measure(), b.measure());
    let wa = a.average_width(seed, WIDTH_SAMPLES).value;
    let wb = b.average_width(seed, WIDTH_SAMPLES).value;
    Ok([ma * mb, wa * ma.powf(inv_n), wb * mb.powf(inv_n)])
}

/// `(1 − c₁e^{−c₂η})²`.
pub fn prop15_bound(eta: f64, c1: f64, c2: f64) -> f64 {
    (1.0 - c1 * (-c2 * eta).exp()).powi(2)
}

/// User-supplied constants; absent ones are reported as unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub j_value: f64,
    pub measure_a: f64,
    pub measure_b: f64,
    pub product: f64,
    /// Bound with `|A||B|` as written for the operator-norm estimate.
    pub prop14_bound: Option<f64>,
    /// Bound with the unitary-convention HS norm `|A||B|/(2π)ⁿ`.
    pub prop14_bound_unitary: Option<f64>,
    pub prop14_applicable: bool,
    pub width_a: WidthEstimate,
    pub width_b: WidthEstimate,
    pub eta_exponent: f64,
    pub prop15_bound: Option<f64>,
    /// `(1 − ½C₀e^{−C₀η})²`.
    pub jaming_bound: Option<f64>,
    /// `(1 − e^{−2β|A||B|}/(2α))²`, `n = 1`.
    pub nazarov_bound: Option<f64>,
    pub lower_bound: f64,
    pub constants: BoundConstants,
}

pub fn prop14_check(
    phi: &Wavefunction,
    a: &RegionSet,
    b: &RegionSet,
    constants: BoundConstants,
    seed: u64,
) -> Result<BoundReport> {
    let j_value = j_functional(phi, a, b)?;
    let (measure_a, measure_b) = (a.measure(), b.measure());
    let product = measure_a * measure_b;
    let n = a.dim as i32;
    let width_a = a.average_width(seed, WIDTH_SAMPLES);
    let width_b = b.average_width(seed, WIDTH_SAMPLES);
    let eta = eta_exponent(a, b, seed)?;
    let prop15 = match (constants.c1, constants.c2) {
        (Some(c1), Some(c2)) => Some(prop15_bound(eta, c1, c2)),
        _ => None,
    };
    let jaming = constants
        .c0
        .map(|c0| (1.0 - 0.5 * c0 * (-c0 * eta).exp()).powi(2));
    let nazarov = match (constants.alpha, constants.beta, a.dim) {
        (Some(al), Some(be), 1) => Some((1.0 - (-2.0 * be * product).exp() / (2.0 * al)).powi(2)),
        _ => None,
    };
    Ok(BoundReport {
        j_value,
        measure_a,
        measure_b,
        product,
        prop14_bound: prop14_bound(product),
        prop14_bound_unitary: prop14_bound(product / (2.0 * PI).powi(n)),
        prop14_applicable: product < 1.0,
        width_a,
        width_b,
        eta_exponent: eta,
        prop15_bound: prop15,
        jaming_bound: jaming,
        nazarov_bound: nazarov,
        lower_bound: lower_bound(a, b),
        constants,
    })
}

/// `(2π)^{−2n}|A||B| e^{−sup_A|x|² − sup_B|k|²}`.
pub fn lower_bound(a: &RegionSet, b: &RegionSet) -> f64 {
    let n = a.dim as i32;
    (2.0 * PI).powi(-2 * n) * a.measure() * b.measure() * (-a.sup_norm_sqr() - b.sup_norm_sqr()).exp()
}

/// Exact `J` for the normalized Gaussian
/// `∝ exp(−|x−x₀|²/(2σ²) + i⟨k₀,x⟩)`: `|φ|²` is `N(x₀, σ²/2)` and `|φ̂|²` is
/// `N(k₀, 1/(2σ²))`.
pub fn gaussian_j(a: &RegionSet, b: &RegionSet, sigma: f64, x0: &[f64], k0: &[f64]) -> f64 {
    let ta = sigma / std::f64::consts::SQRT_2;
    let tb = 1.0 / (std::f64::consts::SQRT_2 * sigma);
    let ma: f64 = a.components.iter().map(|c| c.gaussian_mass(x0, ta)).sum();
    let mb: f64 = b.components.iter().map(|c| c.gaussian_mass(k0, tb)).sum();
    ma * mb
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundWitness {
    pub bound: f64,
    pub j_standard_gaussian: f64,
    pub j_best: f64,
    pub best_sigma: f64,
    pub best_x0: Vec<f64>,
    pub best_k0: Vec<f64>,
    pub satisfied: bool,
}

/// Searches Gaussians centered at the origin or at component centers, over a
/// fixed ladder of widths.
pub fn lower_bound_witness(a: &RegionSet, b: &RegionSet) -> Result<LowerBoundWitness> {
    require_sides(a, b)?;
    if a.dim != b.dim {
        return Err(Error::Dimension("A and B differ in dimension".into()));
    }
    let zero = vec![0.0; a.dim];
    let mut xs = vec![zero.clone()];
    xs.extend(a.components.iter().map(|c| c.center().to_vec()));
    let mut ks = vec![zero.clone()];
    ks.extend(b.components.iter().map(|c| c.center().to_vec()));
    let bound = lower_bound(a, b);
    let j0 = gaussian_j(a, b, 1.0, &zero, &zero);
    let mut best = (j0, 1.0, zero.clone(), zero);
    for e in -8..=8 {
        let sigma = 2f64.powf(e as f64 / 2.0);
        for x0 in &xs {
            for k0 in &ks {
                let j = gaussian_j(a, b, sigma, x0, k0);
                if j > best.0 {
                    best = (j, sigma, x0.clone(), k0.clone());
                }
            }
        }
    }
    Ok(LowerBoundWitness {
        bound,
        j_standard_gaussian: j0,
        j_best: best.0,
        best_sigma: best.1,
        best_x0: best.2,
        best_k0: best.3,
        satisfied: best.0 >= bound,
    })
}

fn check_volume_args(phi: &Wavefunction, ham: &Hamiltonian) -> Result<()> {
    phi.require_normalized()?;
    if phi.grid() != ham.grid() {
        return Err(Error::Dimension("state and hamiltonian live on different grids".into()));
    }
    Ok(())
}

/// `μ[φ]({𝓗 ≤ Λ})` with each product cell weighted by the fraction of it
/// below `Λ` under a linear model of `𝓗` (central differences, one-sided at
/// the box edges).
pub fn volume_probability(phi: &Wavefunction, ham: &Hamiltonian, lambda: f64) -> Result<f64> {
    check_volume_args(phi, ham)?;
    let grid = phi.grid();
    let (fx, gk) = (phi.fx(), phi.gk());
    let dim = grid.dim();
    let mut half = Vec::with_capacity(2 * dim);
    let mut acc = 0.0;
    ham.for_each_product(|ix, ik, h| {
        let w = fx[ix] * gk[ik];
        if w == 0.0 {
            return Ok(());
        }
        half.clear();
        for (side, flat) in [ix, ik].into_iter().enumerate() {
            let idx = grid.unravel(flat);
            for axis in 0..dim {
                let step = |delta: isize| -> Option<f64> {
                    let i = idx[axis] as isize + delta;
                    if i < 0 || i >= grid.points_per_axis() as isize {
                        return None;
                    }
                    let mut moved = idx;
                    moved[axis] = i as usize;
                    let f = grid.ravel(&moved);
                    Some(if side == 0 { ham.value_at(f, ik) } else { ham.value_at(ix, f) })
                };
                let slope = match (step(-1), step(1)) {
                    (Some(a), Some(b)) => 0.5 * (b - a),
                    (None, Some(b)) => b - h,
                    (Some(a), None) => h - a,
                    (None, None) => 0.0,
                };
                half.push(0.5 * slope.abs());
            }
        }
        acc += w * uniform_sum_cdf(lambda - h, &mut half);
        Ok(())
    })?;
    Ok(acc * grid.cell_volume(Space::Position) * grid.cell_volume(Space::Fourier))
}

/// `μ[φ]({𝓗 ≤ Λ})` counting each product cell by its sample point.
pub fn volume_probability_counted(phi: &Wavefunction, ham: &Hamiltonian, lambda: f64) -> Result<f64> {
    check_volume_args(phi, ham)?;
    let grid = phi.grid();
    let (fx, gk) = (phi.fx(), phi.gk());
    let mut acc = 0.0;
    ham.for_each_product(|ix, ik, h| {
        if h <= lambda {
            acc += fx[ix] * gk[ik];
        }
        Ok(())
    })?;
    Ok(acc * grid.cell_volume(Space::Position) * grid.cell_volume(Space::Fourier))
}

/// `P(Σ Y_i ≤ t)` for independent `Y_i ~ U(−a_i, a_i)`, by inclusion–exclusion
/// over the `2^m` corners. Widths below `1e−9·max a` are dropped.
fn uniform_sum_cdf(t: f64, half: &mut Vec<f64>) -> f64 {
    let top = half.iter().copied().fold(0.0, f64::max);
    half.retain(|a| *a > 1e-9 * top);
    let total: f64 = half.iter().sum();
    if t >= total {
        return 1.0;
    }
    if t <= -total {
        return 0.0;
    }
    let m = half.len();
    let mut s = 0.0;
    for mask in 0u32..(1 << m) {
        let shift: f64 = half.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, a)| 2.0 * a).sum();
        let u = t + total - shift;
        if u > 0.0 {
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * u.powi(m as i32);
        }
    }
    let denom: f64 = (1..=m).map(|j| j as f64).product::<f64>() * half.iter().map(|a| 2.0 * a).product::<f64>();
    (s / denom).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub lower: f64,
    /// Sample-point count, so the containments bound it exactly.
    pub value: f64,
    pub upper: f64,
    /// `A×B ⊆ {𝓗 ≤ Λ}` on the grid for the inner pair.
    pub inner_contained: bool,
    /// `{𝓗 ≤ Λ} ⊆ A×B` on the grid for the outer pair.
    pub outer_contains: bool,
}

/// `J(φ, inner) ≤ μ[φ]({𝓗 ≤ Λ}) ≤ J(φ, outer)` whenever the containments
/// hold on the grid.
pub fn sandwich(
    phi: &Wavefunction,
    ham: &Hamiltonian,
    lambda: f64,
    inner: (&RegionSet, &RegionSet),
    outer: (&RegionSet, &RegionSet),
) -> Result<Sandwich> {
    let value = volume_probability_counted(phi, ham, lambda)?;
    let lower = j_functional(phi, inner.0, inner.1)?;
    let upper = j_functional(phi, outer.0, outer.1)?;
    let grid = phi.grid();
    let (ia, ib) = (inner.0.indicator(grid)?, inner.1.indicator(grid)?);
    let (oa, ob) = (outer.0.indicator(grid)?, outer.1.indicator(grid)?);
    let (mut inner_contained, mut outer_contains) = (true, true);
    ham.for_each_product(|ix, ik, h| {
        let in_inner = ia[ix] * ib[ik] > 0.0;
        let in_outer = oa[ix] * ob[ik] > 0.0;
        if in_inner && h > lambda {
            inner_contained = false;
        }
        if h <= lambda && !in_outer {
            outer_contains = false;
        }
        Ok(())
    })?;
    Ok(Sandwich {
        lower,
        value,
        upper,
        inner_contained,
        outer_contains,
    })
}
