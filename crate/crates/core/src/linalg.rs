//! Symmetric matrix functions through the symmetric eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies `f` to the eigenvalues of the symmetric part of `m`.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut scaled = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let v = f(*lambda);
        scaled.column_mut(j).scale_mut(v);
    }
    let out = scaled * eig.eigenvectors.transpose();
    symmetrize(&out)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |l| l.max(0.0).sqrt())
}

pub fn inv_sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |l| 1.0 / l.sqrt())
}

pub fn logm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, f64::ln)
}

pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, f64::exp)
}

pub fn inv_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |l| 1.0 / l)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
