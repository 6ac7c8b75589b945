//! Array responses, their AoA derivatives and the radar path matrices.
//!
//! Every RIS-side vector is the UPA response `a_i(·)` of length `RC`, every
//! BS-side vector is a ULA response of length `M_b` (transmit) or `N_b`
//! (receive). The radar matrix is
//!
//! ```text
//! A = ψ a_r(θ) a_t(θ)ᵀ
//!   + ξ1 a_r(ω0) [a_i(ω0)ᵀ Φ a_i(θ)] [a_i(θ)ᵀ Φ a_i(ω0)] a_t(ω0)ᵀ
//!   + ξ2 a_r(θ) [a_i(θ)ᵀ Φ a_i(ω0)] a_t(ω0)ᵀ
//!   + ψ_bi ξ3 a_r(ω0) [a_i(ω0)ᵀ Φ a_i(θ)] a_t(θ)ᵀ
//! ```
//!
//! and `Ā = ∂A/∂θ` expands into eight product-rule terms.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{seeded_rng, stream};
use crate::error::{JcasError, Result};
use crate::geometry::{dw_dtheta_all, ris_angles_of_bs, ris_angles_of_target, ris_path_terms, RisAngles, Scene};
use crate::linalg::{CMat, CVec, I};

/// ULA response `exp(i 2π/λ d n sin θ)/√N`, `n = 0..N-1`.
pub fn ula_steering(theta: f64, n: usize, d: f64, lambda: f64) -> CVec {
    let k = 2.0 * PI / lambda * d * theta.sin();
    let norm = 1.0 / (n as f64).sqrt();
    CVec::from_iterator(n, (0..n).map(|i| Complex64::from_polar(norm, k * i as f64)))
}

/// `∂/∂θ` of [`ula_steering`].
pub fn ula_steering_derivative(theta: f64, n: usize, d: f64, lambda: f64) -> CVec {
    let k = 2.0 * PI / lambda * d;
    let norm = 1.0 / (n as f64).sqrt();
    CVec::from_iterator(
        n,
        (0..n).map(|i| {
            let m = i as f64;
            I * (k * m * theta.cos()) * Complex64::from_polar(norm, k * m * theta.sin())
        }),
    )
}

/// RIS response `exp(i 2π/λ ϖ_i)/√(RC)`.
pub fn upa_steering(angles: RisAngles, scene: &Scene) -> CVec {
    let k = 2.0 * PI / scene.wavelength;
    let terms = ris_path_terms(scene, angles);
    let norm = 1.0 / (terms.len() as f64).sqrt();
    CVec::from_iterator(terms.len(), terms.iter().map(|w| Complex64::from_polar(norm, k * w)))
}

/// `∂a_i(θ_k)/∂θ_k` through the RIS angle mapping of the target.
pub fn upa_steering_derivative(scene: &Scene) -> Result<CVec> {
    let k = 2.0 * PI / scene.wavelength;
    let angles = ris_angles_of_target(scene)?;
    let terms = ris_path_terms(scene, angles);
    let dw = dw_dtheta_all(scene)?;
    let norm = 1.0 / (terms.len() as f64).sqrt();
    Ok(CVec::from_iterator(
        terms.len(),
        terms
            .iter()
            .zip(&dw)
            .map(|(w, dw)| I * (k * dw) * Complex64::from_polar(norm, k * w)),
    ))
}

/// Complex reflection coefficients of the four radar paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathCoefficients {
    /// BS → target → BS.
    pub psi: Complex64,
    /// BS → RIS → target → RIS → BS.
    pub xi1: Complex64,
    /// BS → RIS → target → BS.
    pub xi2: Complex64,
    /// BS → target → RIS → BS.
    pub xi3: Complex64,
    /// Extra scalar on the fourth path; only the product with `xi3` matters.
    pub psi_bi: Complex64,
}

impl PathCoefficients {
    /// Fixed magnitudes with phases uniform on `[0, 2π)` drawn from `seed`.
    pub fn random(seed: u64, psi_mag: f64, xi_mag: f64) -> Self {
        let mut rng = seeded_rng(seed, stream::PATH_COEFFS);
        let mut draw = |mag: f64| Complex64::from_polar(mag, rng.random_range(0.0..2.0 * PI));
        Self {
            psi: draw(psi_mag),
            xi1: draw(xi_mag),
            xi2: draw(xi_mag),
            xi3: draw(xi_mag),
            psi_bi: Complex64::new(1.0, 0.0),
        }
    }

    pub fn direct_only(psi: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            psi,
            xi1: zero,
            xi2: zero,
            xi3: zero,
            psi_bi: Complex64::new(1.0, 0.0),
        }
    }

    /// Same direct path, RIS-assisted paths removed.
    pub fn without_ris(&self) -> Self {
        Self::direct_only(self.psi)
    }
}

/// Steering vectors and derivatives at the scene's `θ_k` and `ω0`, plus the
/// radar noise covariance `Σ = σ_r² I`.
#[derive(Clone, Debug)]
pub struct SensingContext {
    pub a_t_theta: CVec,
    pub a_r_theta: CVec,
    pub a_t_omega: CVec,
    pub a_r_omega: CVec,
    pub a_i_theta: CVec,
    pub a_i_omega: CVec,
    pub da_t_theta: CVec,
    pub da_r_theta: CVec,
    pub da_i_theta: CVec,
    pub sigma: CMat,
    pub sigma_inv: CMat,
}

impl SensingContext {
    pub fn new(scene: &Scene, sigma_r2: f64) -> Result<Self> {
        if !(sigma_r2 > 0.0) {
            return Err(JcasError::InvalidArgument("radar noise variance must be positive".into()));
        }
        let (d, lambda) = (scene.element_spacing, scene.wavelength);
        let (mb, nb) = (scene.m_tx(), scene.n_rx());
        let theta = scene.target_angle;
        let omega = scene.bs_angle_of(&scene.ris_element_positions[0]);
        Ok(Self {
            a_t_theta: ula_steering(theta, mb, d, lambda),
            a_r_theta: ula_steering(theta, nb, d, lambda),
            a_t_omega: ula_steering(omega, mb, d, lambda),
            a_r_omega: ula_steering(omega, nb, d, lambda),
            a_i_theta: upa_steering(ris_angles_of_target(scene)?, scene),
            a_i_omega: upa_steering(ris_angles_of_bs(scene)?, scene),
            da_t_theta: ula_steering_derivative(theta, mb, d, lambda),
            da_r_theta: ula_steering_derivative(theta, nb, d, lambda),
            da_i_theta: upa_steering_derivative(scene)?,
            sigma: CMat::identity(nb, nb) * Complex64::new(sigma_r2, 0.0),
            sigma_inv: CMat::identity(nb, nb) * Complex64::new(1.0 / sigma_r2, 0.0),
        })
    }

    fn check_phase(&self, phi: &CVec) -> Result<()> {
        if phi.len() != self.a_i_theta.len() {
            return Err(JcasError::DimensionMismatch(format!(
                "RIS phase vector has {} entries, RIS has {}",
                phi.len(),
                self.a_i_theta.len()
            )));
        }
        Ok(())
    }

    /// `xᵀ Φ y` for diagonal `Φ`.
    fn bilinear(x: &CVec, phi: &CVec, y: &CVec) -> Complex64 {
        x.iter().zip(phi.iter()).zip(y.iter()).map(|((a, p), b)| a * p * b).sum()
    }

    /// Radar path matrix `A` (`N_b × M_b`).
    pub fn assemble_a(&self, phi: &CVec, coeffs: &PathCoefficients) -> Result<CMat> {
        self.check_phase(phi)?;
        let beta = Self::bilinear(&self.a_i_omega, phi, &self.a_i_theta);
        let at_t = self.a_t_theta.transpose();
        let at_w = self.a_t_omega.transpose();
        let mut a = &self.a_r_theta * &at_t * coeffs.psi;
        a += &self.a_r_omega * &at_w * (coeffs.xi1 * beta * beta);
        a += &self.a_r_theta * &at_w * (coeffs.xi2 * beta);
        a += &self.a_r_omega * &at_t * (coeffs.psi_bi * coeffs.xi3 * beta);
        Ok(a)
    }

    /// `Ā = ∂A/∂θ_k`.
    pub fn assemble_a_bar(&self, phi: &CVec, coeffs: &PathCoefficients) -> Result<CMat> {
        self.check_phase(phi)?;
        let beta = Self::bilinear(&self.a_i_omega, phi, &self.a_i_theta);
        let dbeta = Self::bilinear(&self.a_i_omega, phi, &self.da_i_theta);
        let at_t = self.a_t_theta.transpose();
        let dat_t = self.da_t_theta.transpose();
        let at_w = self.a_t_omega.transpose();
        let g4 = coeffs.psi_bi * coeffs.xi3;

        let mut a = &self.da_r_theta * &at_t * coeffs.psi;
        a += &self.a_r_theta * &dat_t * coeffs.psi;
        // the two a_i(θ) factors of the double-bounce path
        a += &self.a_r_omega * &at_w * (coeffs.xi1 * dbeta * beta);
        a += &self.a_r_omega * &at_w * (coeffs.xi1 * beta * dbeta);
        a += &self.da_r_theta * &at_w * (coeffs.xi2 * beta);
        a += &self.a_r_theta * &at_w * (coeffs.xi2 * dbeta);
        a += &self.a_r_omega * &at_t * (g4 * dbeta);
        a += &self.a_r_omega * &dat_t * (g4 * beta);
        Ok(a)
    }

    /// Fisher kernel `J = Āᴴ Σ⁻¹ Ā` (`M_b × M_b`).
    pub fn fisher_kernel(&self, a_bar: &CMat) -> CMat {
        a_bar.adjoint() * &self.sigma_inv * a_bar
    }
}
