//! Closed-form WMMSE pieces: combiner, MSE matrix, weights, SI covariance and rate.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::channels::ChannelSet;
use crate::error::{JcasError, Result};
use crate::linalg::{identity, inv_hpd, ln_det_hpd, mul_diag_mul, trace_re, CMat};
use crate::optimizer::RisPhase;

/// `H_jb + H_ji Φ H_ib`.
pub fn effective_user_channel(channels: &ChannelSet, phi: &RisPhase) -> CMat {
    &channels.h_jb + mul_diag_mul(&channels.h_ji, phi.as_vector(), &channels.h_ib)
}

/// `H_bb^l + H_bi Φ H_ib`.
pub fn effective_si_channel(channels: &ChannelSet, phi: &RisPhase) -> CMat {
    &channels.h_bb_los + mul_diag_mul(&channels.h_bi, phi.as_vector(), &channels.h_ib)
}

/// MMSE combiner `Vᴴ Hᴴ (H V Vᴴ Hᴴ + σ² I)⁻¹`.
pub fn mmse_combiner(h_eff: &CMat, v: &CMat, sigma2: f64) -> Result<CMat> {
    if !(sigma2 > 0.0) {
        return Err(JcasError::InvalidArgument("noise variance must be positive".into()));
    }
    let hv = h_eff * v;
    let cov = &hv * hv.adjoint() + identity(h_eff.nrows()) * Complex64::new(sigma2, 0.0);
    Ok(hv.adjoint() * inv_hpd(&cov, "user receive covariance")?)
}

/// MSE matrix under the MMSE combiner, `(I + Vᴴ Hᴴ H V / σ²)⁻¹`.
pub fn mse_matrix(h_eff: &CMat, v: &CMat, sigma2: f64) -> Result<CMat> {
    if !(sigma2 > 0.0) {
        return Err(JcasError::InvalidArgument("noise variance must be positive".into()));
    }
    let hv = h_eff * v;
    let m = identity(v.ncols()) + hv.adjoint() * hv * Complex64::new(1.0 / sigma2, 0.0);
    inv_hpd(&m, "MSE information matrix")
}

/// MSE matrix for an arbitrary combiner `F`:
/// `(I − F H V)(I − F H V)ᴴ + σ² F Fᴴ`.
pub fn mse_matrix_with_combiner(h_eff: &CMat, v: &CMat, f: &CMat, sigma2: f64) -> CMat {
    let err = identity(v.ncols()) - f * h_eff * v;
    &err * err.adjoint() + f * f.adjoint() * Complex64::new(sigma2, 0.0)
}

/// WMMSE weight `(w/ln 2) E⁻¹`.
pub fn weight_matrix(e: &CMat, user_weight: f64) -> Result<CMat> {
    if !(user_weight > 0.0) {
        return Err(JcasError::InvalidArgument("user priority must be positive".into()));
    }
    Ok(inv_hpd(e, "MSE matrix")? * Complex64::new(user_weight / LN_2, 0.0))
}

/// Effective SI covariance, the four-term expansion of
/// `(H_bb^l + H_bi Φ H_ib) V Vᴴ (H_bb^l + H_bi Φ H_ib)ᴴ`.
pub fn si_matrix(v: &CMat, phi: &RisPhase, channels: &ChannelSet) -> CMat {
    let los = &channels.h_bb_los * v;
    let ris = mul_diag_mul(&channels.h_bi, phi.as_vector(), &channels.h_ib) * v;
    let los_h = los.adjoint();
    let ris_h = ris.adjoint();
    &los * &los_h + &los * &ris_h + &ris * &los_h + &ris * &ris_h
}

/// Achievable DL rate `log₂ det(I + H V Vᴴ Hᴴ / σ²)` in bit/s/Hz.
pub fn dl_rate(h_eff: &CMat, v: &CMat, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(JcasError::InvalidArgument("noise variance must be positive".into()));
    }
    let hv = h_eff * v;
    let m = identity(h_eff.nrows()) + &hv * hv.adjoint() * Complex64::new(1.0 / sigma2, 0.0);
    Ok(ln_det_hpd(&m, "user signal-plus-noise covariance")? / LN_2)
}

/// WMMSE cost `Tr(W E) − (w/ln 2) ln det W` evaluated at the optimal
/// combiner and weight, i.e. `(w/ln 2)(d (1 − ln(w/ln 2)) + ln det E)`.
pub fn wmmse_user_cost(h_eff: &CMat, v: &CMat, sigma2: f64, user_weight: f64) -> Result<f64> {
    let e = mse_matrix(h_eff, v, sigma2)?;
    let d = v.ncols() as f64;
    let scale = user_weight / LN_2;
    Ok(scale * (d * (1.0 - scale.ln()) + ln_det_hpd(&e, "MSE matrix")?))
}

/// `Tr(E_SI)` computed as `‖(H_bb^l + H_bi Φ H_ib) V‖_F²`.
pub fn si_power(h_si: &CMat, v: &CMat) -> f64 {
    (h_si * v).norm_squared()
}

/// `Tr(W E)` for a given combiner.
pub fn weighted_mse(w: &CMat, e: &CMat) -> f64 {
    trace_re(&(w * e))
}
