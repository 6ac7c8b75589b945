//! Cramér-Rao bound on the target AoA and the CRB threshold constraint.

use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::linalg::{inv_hpd, trace_re, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub crb_value: f64,
    pub fisher_trace: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

/// `Tr(Vᴴ Āᴴ Σ⁻¹ Ā V)`.
pub fn fisher_trace(v: &CMat, a_bar: &CMat, sigma: &CMat) -> Result<f64> {
    if a_bar.ncols() != v.nrows() || sigma.nrows() != a_bar.nrows() {
        return Err(JcasError::DimensionMismatch(format!(
            "Ā is {}x{}, V is {}x{}, Σ is {}x{}",
            a_bar.nrows(),
            a_bar.ncols(),
            v.nrows(),
            v.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let sigma_inv = inv_hpd(sigma, "radar noise covariance")?;
    let av = a_bar * v;
    Ok(trace_re(&(av.adjoint() * sigma_inv * av)))
}

/// Single-snapshot CRB `½ [Tr(Vᴴ Āᴴ Σ⁻¹ Ā V)]⁻¹`.
pub fn crb_theta(v: &CMat, a_bar: &CMat, sigma: &CMat) -> Result<f64> {
    crb_from_trace(fisher_trace(v, a_bar, sigma)?)
}

/// CRB over `snapshots` independent snapshots.
pub fn crb_theta_snapshots(v: &CMat, a_bar: &CMat, sigma: &CMat, snapshots: usize) -> Result<f64> {
    if snapshots == 0 {
        return Err(JcasError::InvalidArgument("snapshot count must be >= 1".into()));
    }
    Ok(crb_theta(v, a_bar, sigma)? / snapshots as f64)
}

pub(crate) fn crb_from_trace(trace: f64) -> Result<f64> {
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(JcasError::Unobservable);
    }
    Ok(0.5 / trace)
}

/// `1/ζ ≤ 1/CRB`, boundary inclusive.
pub fn crb_constraint_ok(crb: f64, zeta: f64) -> bool {
    crb <= zeta
}

pub fn crb_report(v: &CMat, a_bar: &CMat, sigma: &CMat, zeta: f64) -> Result<CrbReport> {
    let fisher = fisher_trace(v, a_bar, sigma)?;
    let crb = crb_from_trace(fisher)?;
    Ok(CrbReport {
        crb_value: crb,
        fisher_trace: fisher,
        threshold: zeta,
        satisfied: crb_constraint_ok(crb, zeta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use num_complex::Complex64;

    fn small() -> (CMat, CMat, CMat) {
        let v = CMat::from_row_slice(2, 1, &[c(0.3, 0.1), c(-0.2, 0.7)]);
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.1, -0.3), c(-0.4, 0.2), c(0.9, 0.0)]);
        let s = CMat::identity(2, 2) * c(0.5, 0.0);
        (v, a, s)
    }

    #[test]
    fn scalar_loop_oracle() {
        let (v, a, s) = small();
        let sinv = 1.0 / 0.5;
        let mut tr = 0.0;
        for col in 0..v.ncols() {
            for r in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    acc += a[(r, k)] * v[(k, col)];
                }
                tr += acc.norm_sqr() * sinv;
            }
        }
        let crb = crb_theta(&v, &a, &s).unwrap();
        assert!((crb - 0.5 / tr).abs() / crb < 1e-12);
    }

    #[test]
    fn homogeneity_and_noise_scaling() {
        let (v, a, s) = small();
        let base = crb_theta(&v, &a, &s).unwrap();
        let scaled = crb_theta(&(&v * c(3.0, 0.0)), &a, &s).unwrap();
        assert!((scaled - base / 9.0).abs() / base < 1e-12);
        let noisy = crb_theta(&v, &a, &(&s * c(2.0, 0.0))).unwrap();
        assert!((noisy - 2.0 * base).abs() / base < 1e-12);
        let l = crb_theta_snapshots(&v, &a, &s, 64).unwrap();
        assert!((l - base / 64.0).abs() / base < 1e-14);
    }

    #[test]
    fn zero_fisher_is_unobservable() {
        let (_, a, s) = small();
        let v = CMat::zeros(2, 1);
        assert!(matches!(crb_theta(&v, &a, &s), Err(JcasError::Unobservable)));
    }

    #[test]
    fn constraint_boundary() {
        assert!(crb_constraint_ok(0.005, 0.01));
        assert!(crb_constraint_ok(0.01, 0.01));
        assert!(!crb_constraint_ok(0.02, 0.01));
        let (v, a, s) = small();
        let r = crb_report(&v, &a, &s, 1e9).unwrap();
        assert!(r.satisfied && r.crb_value > 0.0 && r.fisher_trace > 0.0);
    }
}
