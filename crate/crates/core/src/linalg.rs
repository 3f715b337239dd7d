//! Small symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor used for every inversion of a symmetric positive-definite matrix.
pub const EIGEN_FLOOR: f64 = 1e-12;

fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(m.clone())
}

fn rebuild(e: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &e.eigenvectors;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    let mut out = q * d * q.transpose();
    symmetrize(&mut out);
    out
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    eigen(m).eigenvalues.min()
}

fn checked_eigen(m: &DMatrix<f64>, t: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = eigen(m);
    let smallest = e.eigenvalues.min();
    if !(smallest >= EIGEN_FLOOR) {
        return Err(Error::Degeneracy {
            t,
            eigenvalue: smallest,
            floor: EIGEN_FLOOR,
        });
    }
    Ok(e)
}

/// Symmetric inverse square root `m^{-1/2}`; `t` only labels the error.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    Ok(rebuild(&checked_eigen(m, t)?, |l| 1.0 / l.sqrt()))
}

/// Inverse of a symmetric positive-definite matrix through its eigendecomposition.
pub fn inverse_spd(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    Ok(rebuild(&checked_eigen(m, t)?, |l| 1.0 / l))
}

/// Symmetric square root of a nonnegative-definite matrix. Tiny negative
/// eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.clone();
    }
    rebuild(&eigen(m), |l| l.max(0.0).sqrt())
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= tol * max_abs(m).max(1.0)
}

/// `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replace `m` with `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Entry-wise max norm.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Operator (spectral) norm: the largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

pub fn is_nonnegative_definite(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol * max_abs(m).max(1.0)
}
