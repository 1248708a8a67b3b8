//! Lowest eigenpairs of Hermitian operators: restarted Lanczos with full
//! reorthogonalization for matrix-free operators, and a dense symmetric
//! solver for small real matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanczosConfig {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Absolute residual `‖Hx − θx‖` for a unit vector `x`.
    pub tol: f64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig {
            krylov_dim: 80,
            max_restarts: 400,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit vector in the Euclidean inner product.
    pub vector: Vec<Complex64>,
    pub residual: f64,
    pub matvecs: usize,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (u, v) in y.iter_mut().zip(x) {
        *u += a * v;
    }
}

fn project_out(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            axpy(w, -c, b);
        }
    }
}

fn scale(w: &mut [Complex64], s: f64) {
    for v in w.iter_mut() {
        *v *= s;
    }
}

/// Lowest eigenpair of the Hermitian operator `apply` restricted to the
/// orthogonal complement of `deflate` (unit, mutually orthogonal vectors).
///
/// Returns the best Ritz pair even when the residual target is missed, with
/// `converged = false`.
pub fn lowest_eigenpair<F>(
    mut apply: F,
    start: &[Complex64],
    deflate: &[Vec<Complex64>],
    cfg: &LanczosConfig,
) -> Result<EigenPair>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = start.len();
    if n == 0 {
        return Err(Error::Eigensolver("empty start vector".into()));
    }
    if deflate.len() >= n {
        return Err(Error::Eigensolver("deflation space fills the whole space".into()));
    }
    let mut v = start.to_vec();
    project_out(&mut v, deflate);
    if norm(&v) < 1e-12 {
        // deterministic fallback start
        v = (0..n)
            .map(|i| Complex64::new(1.0 + (i as f64 * 0.618_033_988_75).fract(), 0.0))
            .collect();
        project_out(&mut v, deflate);
    }
    let nv = norm(&v);
    scale(&mut v, nv.recip());

    let m = cfg.krylov_dim.clamp(2, n - deflate.len());
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut matvecs = 0;
    let mut best: Option<EigenPair> = None;

    for _ in 0..=cfg.max_restarts {
        let mut basis: Vec<Vec<Complex64>> = vec![v.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        for j in 0..m {
            apply(&basis[j], &mut w);
            matvecs += 1;
            project_out(&mut w, deflate);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            project_out(&mut w, &basis);
            let b = norm(&w);
            if j + 1 == m || b <= 1e-13 * a.abs().max(1.0) {
                break;
            }
            beta.push(b);
            let mut next = w.clone();
            scale(&mut next, b.recip());
            basis.push(next);
        }
        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });
        if !theta.is_finite() {
            return Err(Error::Eigensolver("non-finite Ritz value".into()));
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (i, b) in basis.iter().take(k).enumerate() {
            axpy(&mut x, Complex64::new(eig.eigenvectors[(i, imin)], 0.0), b);
        }
        project_out(&mut x, deflate);
        let nx = norm(&x);
        scale(&mut x, nx.recip());
        apply(&x, &mut w);
        matvecs += 1;
        project_out(&mut w, deflate);
        let rq = dot(&x, &w).re;
        axpy(&mut w, Complex64::new(-rq, 0.0), &x);
        let residual = norm(&w);
        let pair = EigenPair {
            value: rq,
            vector: x.clone(),
            residual,
            matvecs,
            converged: residual <= cfg.tol,
        };
        if pair.converged {
            return Ok(pair);
        }
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(pair);
        }
        v = x;
    }
    Ok(best.expect("at least one restart ran"))
}

/// The `count` lowest eigenpairs by successive deflation.
pub fn lowest_eigenpairs<F>(
    mut apply: F,
    start: &[Complex64],
    count: usize,
    cfg: &LanczosConfig,
) -> Result<Vec<EigenPair>>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let mut locked: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let pair = lowest_eigenpair(&mut apply, start, &locked, cfg)?;
        locked.push(pair.vector.clone());
        out.push(pair);
    }
    Ok(out)
}

/// All eigenvalues (ascending) and eigenvectors (columns) of a real
/// symmetric matrix.
pub fn dense_symmetric(matrix: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::InvalidMatrix("matrix must be square".into()));
    }
    let asym = (&matrix - matrix.transpose()).abs().max();
    if asym > 1e-10 * matrix.abs().max().max(1.0) {
        return Err(Error::InvalidMatrix(format!("matrix is not symmetric (|M−Mᵀ| = {asym})")));
    }
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl FnMut(&[Complex64], &mut [Complex64]) {
        move |x, y| {
            for i in 0..x.len() {
                y[i] = x[i] * d[i];
            }
        }
    }

    /// Discrete Laplacian-type tridiagonal matrix with known spectrum
    /// `2 − 2cos(jπ/(n+1))`.
    fn tridiag(x: &[Complex64], y: &mut [Complex64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = x[i] * 2.0;
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            y[i] = v;
        }
    }

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..200).map(|i| 3.0 + (i as f64).sqrt()).collect();
        let start = vec![Complex64::new(1.0, 0.0); 200];
        let p = lowest_eigenpair(diag_op(d), &start, &[], &LanczosConfig::default()).unwrap();
        assert!(p.converged);
        assert!((p.value - 3.0).abs() < 1e-12);
        assert!((p.vector[0].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tridiagonal_spectrum_with_deflation() {
        let n = 100;
        let start: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, 0.1 * i as f64)).collect();
        let pairs = lowest_eigenpairs(tridiag, &start, 3, &LanczosConfig::default()).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let want = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!(p.converged, "pair {j}: residual {}", p.residual);
            assert!((p.value - want).abs() < 1e-10, "{} vs {want}", p.value);
        }
        assert!(dot(&pairs[0].vector, &pairs[1].vector).norm() < 1e-10);
    }

    #[test]
    fn dense_matches_lanczos() {
        let n = 60;
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let (vals, vecs) = dense_symmetric(m.clone()).unwrap();
        let start = vec![Complex64::new(1.0, 0.0); n];
        let p = lowest_eigenpair(tridiag, &start, &[], &LanczosConfig::default()).unwrap();
        assert!((vals[0] - p.value).abs() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let r = &m * vecs.column(0) - vecs.column(0) * vals[0];
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(dense_symmetric(m).is_err());
    }
}
