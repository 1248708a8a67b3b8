//! Symplectic matrices on `ℝⁿ × ℝⁿ` and the embedding of `SL(n)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance for the `SL(n)` determinant check.
pub const DET_TOL: f64 = 1e-10;
/// Tolerance for the symplectic identities.
pub const OMEGA_TOL: f64 = 1e-12;

/// A `2n × 2n` matrix `M = [[A, B], [C, D]]` acting on `(x, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    n: usize,
    m: DMatrix<f64>,
}

impl SymplecticMatrix {
    /// Assembles the blocks without checking the symplectic conditions.
    pub fn from_blocks(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        for blk in [a, b, c, d] {
            if blk.nrows() != n || blk.ncols() != n {
                return Err(Error::InvalidMatrix("blocks must all be n×n".into()));
            }
        }
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(a);
        m.view_mut((0, n), (n, n)).copy_from(b);
        m.view_mut((n, 0), (n, n)).copy_from(c);
        m.view_mut((n, n), (n, n)).copy_from(d);
        Ok(SymplecticMatrix { n, m })
    }

    /// `𝓡_A = diag(A⁻¹, Aᵀ)` for `det A = 1`.
    pub fn embed(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::InvalidMatrix("A must be square".into()));
        }
        let det = a.determinant();
        if (det - 1.0).abs() > DET_TOL {
            return Err(Error::NotSpecial(det));
        }
        let inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMatrix("A is singular".into()))?;
        let z = DMatrix::zeros(a.nrows(), a.nrows());
        Self::from_blocks(&inv, &z, &z, &a.transpose())
    }

    pub fn identity(n: usize) -> Self {
        SymplecticMatrix {
            n,
            m: DMatrix::identity(2 * n, 2 * n),
        }
    }

    pub fn half_dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `(A, B, C, D)`.
    pub fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        (
            self.m.view((0, 0), (n, n)).into_owned(),
            self.m.view((0, n), (n, n)).into_owned(),
            self.m.view((n, 0), (n, n)).into_owned(),
            self.m.view((n, n), (n, n)).into_owned(),
        )
    }

    /// `Ω = [[0, I], [−I, 0]]`.
    pub fn omega(n: usize) -> DMatrix<f64> {
        let mut o = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            o[(i, n + i)] = 1.0;
            o[(n + i, i)] = -1.0;
        }
        o
    }

    /// `max |MᵀΩM − Ω|`.
    pub fn omega_residual(&self) -> f64 {
        let o = Self::omega(self.n);
        (self.m.transpose() * &o * &self.m - o).abs().max()
    }

    pub fn check_omega(&self) -> bool {
        self.omega_residual() <= OMEGA_TOL
    }

    /// Largest violation of `AᵀD − CᵀB = I`, `AᵀC = CᵀA`, `DᵀB = BᵀD`.
    pub fn block_residual(&self) -> f64 {
        let (a, b, c, d) = self.blocks();
        let id = DMatrix::identity(self.n, self.n);
        let r1 = (a.transpose() * &d - c.transpose() * &b - id).abs().max();
        let r2 = (a.transpose() * &c - c.transpose() * &a).abs().max();
        let r3 = (d.transpose() * &b - b.transpose() * &d).abs().max();
        r1.max(r2).max(r3)
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &SymplecticMatrix) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension("symplectic matrices differ in size".into()));
        }
        Ok(SymplecticMatrix {
            n: self.n,
            m: &self.m * &other.m,
        })
    }

    pub fn distance(&self, other: &SymplecticMatrix) -> f64 {
        (&self.m - &other.m).abs().max()
    }

    /// `M·(x, k)`.
    pub fn apply(&self, x: &[f64], k: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut out = vec![0.0; 2 * n];
        for (r, o) in out.iter_mut().enumerate() {
            for col in 0..n {
                *o += self.m[(r, col)] * x[col] + self.m[(r, n + col)] * k[col];
            }
        }
        let k_out = out.split_off(n);
        (out, k_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_embeds_to_identity() {
        let m = SymplecticMatrix::embed(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m, SymplecticMatrix::identity(2));
        assert!(m.check_omega());
    }

    #[test]
    fn diagonal_squeeze() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let m = SymplecticMatrix::embed(&a).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| m.matrix()[(i, i)]).collect();
        assert_eq!(diag, vec![0.5, 2.0, 2.0, 0.5]);
        assert!(m.check_omega());
        assert!(m.block_residual() < 1e-15);
    }

    #[test]
    fn determinant_must_be_one() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(SymplecticMatrix::embed(&a), Err(Error::NotSpecial(d)) if (d - 2.0).abs() < 1e-15));
    }

    #[test]
    fn reflection_is_not_symplectic() {
        let z = DMatrix::zeros(1, 1);
        let i = DMatrix::identity(1, 1);
        let m = SymplecticMatrix::from_blocks(&i, &z, &z, &(-&i)).unwrap();
        assert!(!m.check_omega());
        let (x, k) = SymplecticMatrix::identity(1).apply(&[1.0], &[2.0]);
        assert_eq!((x, k), (vec![1.0], vec![2.0]));
    }

    fn sl2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        // [[a, b], [c, (1 + bc)/a]]
        DMatrix::from_row_slice(2, 2, &[a, b, c, (1.0 + b * c) / a])
    }

    proptest! {
        #[test]
        fn embedding_reverses_composition(
            a1 in 0.5f64..2.0, b1 in -1.0f64..1.0, c1 in -1.0f64..1.0,
            a2 in 0.5f64..2.0, b2 in -1.0f64..1.0, c2 in -1.0f64..1.0,
        ) {
            let (a, b) = (sl2(a1, b1, c1), sl2(a2, b2, c2));
            let ea = SymplecticMatrix::embed(&a).unwrap();
            let eb = SymplecticMatrix::embed(&b).unwrap();
            let eba = SymplecticMatrix::embed(&(&b * &a)).unwrap();
            prop_assert!(ea.compose(&eb).unwrap().distance(&eba) <= 1e-12);
            prop_assert!(ea.check_omega());
            prop_assert!(ea.block_residual() <= 1e-12);
        }
    }
}
