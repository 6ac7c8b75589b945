//! Dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{JcasError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Diagonal matrix view of a vector.
pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// `a * diag(d) * b` without forming the diagonal matrix.
pub fn mul_diag_mul(a: &CMat, d: &CVec, b: &CMat) -> CMat {
    let mut scaled = b.clone();
    for (mut row, di) in scaled.row_iter_mut().zip(d.iter()) {
        row *= *di;
    }
    a * scaled
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn fro_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Symmetrize a numerically Hermitian matrix.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted in descending order.
pub fn eigh_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &CMat) -> f64 {
    hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn inv_hpd(m: &CMat, what: &'static str) -> Result<CMat> {
    hermitian_part(m)
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or(JcasError::Singular(what))
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd(m: &CMat, what: &'static str) -> Result<f64> {
    let ch = hermitian_part(m)
        .cholesky()
        .ok_or(JcasError::Singular(what))?;
    Ok(2.0 * ch.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>())
}

/// General square inverse.
pub fn inv(m: &CMat, what: &'static str) -> Result<CMat> {
    m.clone().try_inverse().ok_or(JcasError::Singular(what))
}

/// Unit-modulus vector `exp(i * phases)`.
pub fn unit_phasors(phases: &[f64]) -> CVec {
    CVec::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p)))
}
