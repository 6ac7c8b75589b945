//! Alternating design of the precoder and the RIS phases.
//!
//! Each outer iteration refreshes the MMSE combiner and the WMMSE weight,
//! solves the power- and CRB-constrained precoder problem, refreshes the
//! sensing derivative and finally runs majorization-minimization on the RIS
//! phases.

mod alternating;
mod precoder;
mod ris;
mod wmmse;

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{seeded_rng, stream};
use crate::error::{JcasError, Result};
use crate::linalg::{CMat, CVec};

pub use alternating::{init_precoder, jcas_optimize, outer_objective, JcasSolution};
pub use precoder::{precoder_update, total_power, BisectionSettings, PrecoderProblem, PrecoderSolution};
pub use ris::{mm_step, ris_objective, ris_optimize, ris_optimize_offset, ris_quadratics, RisOptimization};
pub use wmmse::{
    dl_rate, effective_si_channel, effective_user_channel, mmse_combiner, mse_matrix, mse_matrix_with_combiner,
    si_matrix, si_power, weight_matrix, weighted_mse, wmmse_user_cost,
};

const UNIT_MODULUS_TOL: f64 = 1e-12;

/// Diagonal of the RIS reflection matrix `Φ`, every entry of unit modulus.
#[derive(Clone, Debug, PartialEq)]
pub struct RisPhase(CVec);

impl RisPhase {
    /// Fails unless every entry has modulus 1 within `1e-12`.
    pub fn new(phi: CVec) -> Result<Self> {
        if let Some(i) = phi.iter().position(|z| (z.norm() - 1.0).abs() > UNIT_MODULUS_TOL) {
            return Err(JcasError::InvalidArgument(format!(
                "RIS element {i} has modulus {}, expected 1",
                phi[i].norm()
            )));
        }
        Ok(Self(phi))
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        Self(crate::linalg::unit_phasors(phases))
    }

    /// Phases uniform on `[0, 2π)`.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, stream::RIS_INIT);
        let phases: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self::from_phases(&phases)
    }

    /// All elements at phase zero.
    pub fn identity(len: usize) -> Self {
        Self(CVec::from_element(len, Complex64::new(1.0, 0.0)))
    }

    /// Renormalizes entries produced by `exp(i∠q)` to remove rounding drift.
    pub(crate) fn from_unit_vector(phi: CVec) -> Self {
        Self(phi.map(|z| z / z.norm()))
    }

    pub fn as_vector(&self) -> &CVec {
        &self.0
    }

    pub fn phases(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.arg()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Φ = diag(φ)`.
    pub fn diag(&self) -> CMat {
        crate::linalg::diag(&self.0)
    }
}

/// Settings of [`jcas_optimize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Transmit power budget `p_o`.
    pub power: f64,
    /// Number of data streams `d_j`.
    pub streams: usize,
    pub user_weight: f64,
    /// CRB threshold `ζ_k`; `None` drops the sensing constraint.
    pub crb_threshold: Option<f64>,
    /// Penalize the effective SI power in the objective.
    pub include_si: bool,
    /// Run the RIS phase update; otherwise `Φ` stays at its initial value.
    pub optimize_ris: bool,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub ris_tol: f64,
    pub ris_max_iter: usize,
    pub bisection: BisectionSettings,
    /// Keep the RIS step from leaving the CRB-feasible set of the current
    /// precoder, and keep the previous precoder when the new one is worse.
    pub monotone_guard: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            power: 1.0,
            streams: 2,
            user_weight: 1.0,
            crb_threshold: Some(0.01),
            include_si: true,
            optimize_ris: true,
            outer_tol: 1e-4,
            max_outer: 100,
            ris_tol: 1e-5,
            ris_max_iter: 500,
            bisection: BisectionSettings::default(),
            monotone_guard: true,
        }
    }
}

impl OptimizerConfig {
    /// Joint design with sensing at SNR `p_o/σ_j²` in dB.
    pub fn with_snr_db(mut self, snr_db: f64, sigma_j2: f64) -> Self {
        self.power = 10f64.powf(snr_db / 10.0) * sigma_j2;
        self
    }

    /// Rate-only design: no SI penalty and no CRB constraint.
    pub fn communications_only(mut self) -> Self {
        self.include_si = false;
        self.crb_threshold = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(JcasError::InvalidArgument(m.to_string()));
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad("transmit power must be positive and finite");
        }
        if self.streams == 0 {
            return bad("stream count must be >= 1");
        }
        if !(self.user_weight > 0.0) {
            return bad("user weight must be positive");
        }
        if let Some(z) = self.crb_threshold {
            if !(z > 0.0) {
                return bad("CRB threshold must be positive");
            }
        }
        if !(self.outer_tol > 0.0) || !(self.ris_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be >= 1");
        }
        Ok(())
    }
}

/// State after one outer iteration; iteration 0 is the initialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub rate_bps_hz: f64,
    pub si_power: f64,
    /// Single-snapshot CRB, `NaN` when the angle is unobservable.
    pub crb: f64,
    pub lambda0: f64,
    pub mu_k: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn first(&self) -> Option<&IterationRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// CSV with columns `iter, objective, rate_bps_hz, si_power, crb, lambda0, mu_k`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "objective", "rate_bps_hz", "si_power", "crb", "lambda0", "mu_k"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.objective.to_string(),
                r.rate_bps_hz.to_string(),
                r.si_power.to_string(),
                r.crb.to_string(),
                r.lambda0.to_string(),
                r.mu_k.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
