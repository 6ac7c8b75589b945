//! The outer alternating loop.

use num_complex::Complex64;

use crate::channels::ChannelSet;
use crate::error::{JcasError, Result};
use crate::geometry::Scene;
use crate::linalg::{eigh_desc, trace_re, CMat, CVec};
use crate::sensing_crb::crb_from_trace;
use crate::steering::{PathCoefficients, SensingContext};

use super::precoder::{precoder_update, total_power, PrecoderProblem};
use super::ris::{ris_objective, ris_optimize_offset, ris_quadratics};
use super::wmmse::{
    dl_rate, effective_si_channel, effective_user_channel, mmse_combiner, mse_matrix, mse_matrix_with_combiner,
    si_power, weight_matrix, wmmse_user_cost,
};
use super::{IterationRecord, IterationTrace, OptimizerConfig, RisPhase};

/// Slack used when re-checking constraints of an already accepted point.
const FEASIBILITY_SLACK: f64 = 1e-9;

/// Output of [`jcas_optimize`].
#[derive(Clone, Debug)]
pub struct JcasSolution {
    pub v: CMat,
    pub combiner: CMat,
    pub weight: CMat,
    pub phase: RisPhase,
    pub lambda0: f64,
    pub mu: f64,
    /// Single-snapshot CRB at the final point, `None` if unobservable.
    pub crb: Option<f64>,
    pub rate_bps_hz: f64,
    pub si_power: f64,
    pub objective: f64,
    pub converged: bool,
    pub trace: IterationTrace,
}

impl JcasSolution {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Dominant `streams` right singular directions of `h_eff`, scaled to full power.
pub fn init_precoder(h_eff: &CMat, streams: usize, power: f64) -> Result<CMat> {
    if streams == 0 || streams > h_eff.ncols() {
        return Err(JcasError::InvalidArgument(format!(
            "{streams} streams requested from {} transmit antennas",
            h_eff.ncols()
        )));
    }
    let (_, vecs) = eigh_desc(&(h_eff.adjoint() * h_eff));
    let scale = (power / streams as f64).sqrt();
    Ok(vecs.columns(0, streams).into_owned() * Complex64::new(scale, 0.0))
}

/// Objective at the optimal combiner and weight: `Tr(E_SI)` (when enabled)
/// plus the WMMSE user cost.
pub fn outer_objective(channels: &ChannelSet, phi: &RisPhase, v: &CMat, config: &OptimizerConfig) -> Result<f64> {
    let h_eff = effective_user_channel(channels, phi);
    let mut o = wmmse_user_cost(&h_eff, v, channels.sigma_j2, config.user_weight)?;
    if config.include_si {
        o += si_power(&effective_si_channel(channels, phi), v);
    }
    Ok(o)
}

fn crb_at(ctx: &SensingContext, coeffs: &PathCoefficients, phi: &CVec, v: &CMat) -> Result<Option<f64>> {
    let a_bar = ctx.assemble_a_bar(phi, coeffs)?;
    let av = a_bar * v;
    let fisher = trace_re(&(av.adjoint() * &ctx.sigma_inv * av));
    Ok(crb_from_trace(fisher).ok())
}

fn crb_feasible(crb: Option<f64>, zeta: Option<f64>) -> bool {
    match zeta {
        None => true,
        Some(z) => crb.is_some_and(|c| c <= z * (1.0 + FEASIBILITY_SLACK)),
    }
}

/// `Tr(E_SI) + Tr(W E)` for a fixed combiner and weight.
fn block_cost(h_eff: &CMat, h_si: Option<&CMat>, f: &CMat, w: &CMat, v: &CMat, sigma2: f64) -> f64 {
    let e = mse_matrix_with_combiner(h_eff, v, f, sigma2);
    trace_re(&(w * e)) + h_si.map_or(0.0, |h| si_power(h, v))
}

fn record(
    iter: usize,
    channels: &ChannelSet,
    phi: &RisPhase,
    v: &CMat,
    crb: Option<f64>,
    multipliers: (f64, f64),
    config: &OptimizerConfig,
) -> Result<IterationRecord> {
    let h_eff = effective_user_channel(channels, phi);
    Ok(IterationRecord {
        iter,
        objective: outer_objective(channels, phi, v, config)?,
        rate_bps_hz: dl_rate(&h_eff, v, channels.sigma_j2)?,
        si_power: si_power(&effective_si_channel(channels, phi), v),
        crb: crb.unwrap_or(f64::NAN),
        lambda0: multipliers.0,
        mu_k: multipliers.1,
    })
}

/// Alternates combiner/weight, precoder and RIS updates until the relative
/// objective change `|Δo| / max(|o|, 1)` drops to `outer_tol` or
/// `max_outer` iterations have run.
///
/// The precoder starts from the dominant eigenvectors of the effective user
/// channel Gram at `phi0`.
pub fn jcas_optimize(
    scene: &Scene,
    channels: &ChannelSet,
    coeffs: &PathCoefficients,
    phi0: &RisPhase,
    config: &OptimizerConfig,
) -> Result<JcasSolution> {
    config.validate()?;
    if channels.ris_len() != phi0.len() || scene.ris_len() != phi0.len() {
        return Err(JcasError::DimensionMismatch(format!(
            "RIS phase has {} entries, channels expect {}, scene has {}",
            phi0.len(),
            channels.ris_len(),
            scene.ris_len()
        )));
    }
    if channels.m_tx() != scene.m_tx() || channels.n_rx() != scene.n_rx() {
        return Err(JcasError::DimensionMismatch("channels do not match the scene antennas".into()));
    }
    let ctx = SensingContext::new(scene, channels.sigma_r2)?;
    let zeta = config.crb_threshold;
    let sigma2 = channels.sigma_j2;

    let mut phi = phi0.clone();
    let mut v = init_precoder(&effective_user_channel(channels, &phi), config.streams, config.power)?;
    let mut crb = crb_at(&ctx, coeffs, phi.as_vector(), &v)?;
    let mut multipliers = (0.0, 0.0);
    let mut trace = IterationTrace::default();
    trace.records.push(record(0, channels, &phi, &v, crb, multipliers, config)?);

    let mut converged = false;
    let mut last = (CMat::zeros(0, 0), CMat::zeros(0, 0));
    for iter in 1..=config.max_outer {
        let at = |e: JcasError| JcasError::AtIteration { iteration: iter, source: Box::new(e) };
        let h_eff = effective_user_channel(channels, &phi);
        let h_si = effective_si_channel(channels, &phi);
        let h_si_term = config.include_si.then_some(&h_si);

        let f = mmse_combiner(&h_eff, &v, sigma2).map_err(at)?;
        let w = weight_matrix(&mse_matrix(&h_eff, &v, sigma2).map_err(at)?, config.user_weight).map_err(at)?;

        let a_bar = ctx.assemble_a_bar(phi.as_vector(), coeffs).map_err(at)?;
        let kernel = ctx.fisher_kernel(&a_bar);
        let problem = PrecoderProblem {
            h_eff: &h_eff,
            h_si: h_si_term,
            combiner: &f,
            weight: &w,
            fisher_kernel: Some(&kernel),
            power: config.power,
            crb_threshold: zeta,
        };
        let old_feasible = config.monotone_guard
            && total_power(&v) <= config.power * (1.0 + 1e-6)
            && crb_feasible(crb, zeta);
        match precoder_update(&problem, &config.bisection) {
            Ok(sol) => {
                let keep_old = old_feasible
                    && block_cost(&h_eff, h_si_term, &f, &w, &sol.v, sigma2)
                        > block_cost(&h_eff, h_si_term, &f, &w, &v, sigma2);
                if !keep_old {
                    v = sol.v;
                    multipliers = (sol.lambda0, sol.mu);
                }
            }
            Err(e) if old_feasible && e.is_crb_infeasible() => {}
            Err(e) => return Err(at(e)),
        }
        crb = crb_at(&ctx, coeffs, phi.as_vector(), &v).map_err(at)?;

        if config.optimize_ris {
            let guard = config.monotone_guard && zeta.is_some() && crb_feasible(crb, zeta);
            let (lambda, d) = ris_quadratics(&v, &f, &w, channels, config.include_si);
            let offset = block_cost(&h_eff, h_si_term, &f, &w, &v, sigma2) - ris_objective(phi.as_vector(), &lambda, &d);
            let run = ris_optimize_offset(&phi, &lambda, &d, offset, config.ris_tol, config.ris_max_iter, guard);
            phi = if guard {
                let mut chosen = None;
                for cand in run.iterates.iter().rev() {
                    let c = crb_at(&ctx, coeffs, cand, &v).map_err(at)?;
                    if crb_feasible(c, zeta) {
                        chosen = Some(RisPhase::from_unit_vector(cand.clone()));
                        break;
                    }
                }
                chosen.unwrap_or(run.phase)
            } else {
                run.phase
            };
            crb = crb_at(&ctx, coeffs, phi.as_vector(), &v).map_err(at)?;
        }

        let prev = trace.last().map(|r| r.objective).unwrap_or(f64::NAN);
        let rec = record(iter, channels, &phi, &v, crb, multipliers, config).map_err(at)?;
        trace.records.push(rec);
        last = (f, w);
        if (prev - rec.objective).abs() / rec.objective.abs().max(1.0) <= config.outer_tol {
            converged = true;
            break;
        }
    }

    let fin = *trace.last().expect("trace holds the initial record");
    Ok(JcasSolution {
        v,
        combiner: last.0,
        weight: last.1,
        phase: phi,
        lambda0: multipliers.0,
        mu: multipliers.1,
        crb,
        rate_bps_hz: fin.rate_bps_hz,
        si_power: fin.si_power,
        objective: fin.objective,
        converged,
        trace,
    })
}
