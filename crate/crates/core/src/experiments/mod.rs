//! Benchmark sweeps: every scheme × SNR × seed cell is an independent design
//! run, aggregated per SNR point into rate, SI, CRB and MUSIC MSE figures.

mod config;
mod output;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{CoefficientConfig, ExperimentConfig, Overrides, RunConfig, Scheme, CONFIG_ENV};
pub use output::{
    emit_outputs, read_long_csv, read_mse_csv, read_scheme_csv, write_long_csv, write_mse_csv, write_scheme_csv,
    LongRow, COMBINED_FILE, METRICS,
};

use crate::channels::build_channel_set;
use crate::error::Result;
use crate::estimation::design_errors;
use crate::geometry::Scene;
use crate::optimizer::{jcas_optimize, RisPhase};
use crate::steering::PathCoefficients;

/// Seeds of the MUSIC trials of cell seed `s` start at `s << TRIAL_SEED_SHIFT`,
/// keeping trial streams of different cells apart.
pub const TRIAL_SEED_SHIFT: u32 = 20;

/// Per-SNR aggregate of one scheme. Means run over the feasible seeds; a
/// metric is `None` when no seed produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeRow {
    pub snr_db: f64,
    pub seeds: usize,
    /// Seeds whose CRB threshold was unreachable.
    pub infeasible: usize,
    /// Feasible seeds whose outer loop met its tolerance.
    pub converged: usize,
    pub rate_bps_hz: Option<f64>,
    /// Mean `Tr(E_SI)` in dB.
    pub si_power_db: Option<f64>,
    /// Mean single-snapshot CRB of the final design.
    pub crb_rad2: Option<f64>,
    pub mse_rad2: Option<f64>,
    /// Mean CRB over the estimator's snapshot count, comparable to `mse_rad2`.
    pub crb_snapshots_rad2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeTable {
    pub scheme: Scheme,
    pub rows: Vec<SchemeRow>,
}

/// Result of one scheme × SNR × seed cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellOutcome {
    Infeasible,
    Done {
        rate_bps_hz: f64,
        si_power: f64,
        crb: Option<f64>,
        mse: Option<f64>,
        crb_snapshots: Option<f64>,
        converged: bool,
    },
}

/// Runs one cell. No-RIS schemes zero every link through the RIS and every
/// RIS radar path and keep the phases fixed; comm-only schemes drop the SI
/// term and the CRB constraint and skip the MUSIC evaluation.
pub fn run_cell(cfg: &ExperimentConfig, scene: &Scene, scheme: Scheme, snr_db: f64, seed: u64) -> Result<CellOutcome> {
    let mut channels = build_channel_set(scene, &cfg.channels, seed)?;
    let mut coeffs = PathCoefficients::random(seed, cfg.coefficients.psi_mag, cfg.coefficients.xi_mag);
    let phi0 = RisPhase::random(scene.ris_len(), seed);
    let mut opt = cfg.optimizer.clone().with_snr_db(snr_db, channels.sigma_j2);
    if !scheme.uses_ris() {
        channels = channels.without_ris();
        coeffs = coeffs.without_ris();
        opt.optimize_ris = false;
    }
    if !scheme.senses() {
        opt = opt.communications_only();
    }
    let sol = match jcas_optimize(scene, &channels, &coeffs, &phi0, &opt) {
        Ok(sol) => sol,
        Err(e) if e.is_crb_infeasible() => return Ok(CellOutcome::Infeasible),
        Err(e) => return Err(e),
    };
    let (mse, crb_snapshots) = if scheme.senses() && cfg.run.estimate_mse {
        let errs = design_errors(
            scene,
            &channels,
            &sol.v,
            &sol.phase,
            &coeffs,
            &cfg.estimation,
            cfg.run.trials,
            seed << TRIAL_SEED_SHIFT,
        )?;
        (Some(errs.mse()), Some(errs.crb_rad2))
    } else {
        (None, None)
    };
    Ok(CellOutcome::Done {
        rate_bps_hz: sol.rate_bps_hz,
        si_power: sol.si_power,
        crb: sol.crb,
        mse,
        crb_snapshots,
        converged: sol.converged,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn aggregate(snr_db: f64, cells: &[&CellOutcome]) -> SchemeRow {
    let (mut rate, mut si, mut crb, mut mse, mut crb_l) = (vec![], vec![], vec![], vec![], vec![]);
    let mut converged = 0;
    for cell in cells {
        if let CellOutcome::Done {
            rate_bps_hz,
            si_power,
            crb: c,
            mse: m,
            crb_snapshots,
            converged: ok,
        } = cell
        {
            rate.push(*rate_bps_hz);
            si.push(*si_power);
            crb.extend(*c);
            mse.extend(*m);
            crb_l.extend(*crb_snapshots);
            converged += usize::from(*ok);
        }
    }
    SchemeRow {
        snr_db,
        seeds: cells.len(),
        infeasible: cells.iter().filter(|c| matches!(c, CellOutcome::Infeasible)).count(),
        converged,
        rate_bps_hz: mean(&rate),
        si_power_db: mean(&si).map(|p| 10.0 * p.log10()),
        crb_rad2: mean(&crb),
        mse_rad2: mean(&mse),
        crb_snapshots_rad2: mean(&crb_l),
    }
}

/// Runs every configured scheme over the SNR grid and seed range. Cells run
/// in parallel and are reassembled by key, so the output does not depend on
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SchemeTable>> {
    cfg.validate()?;
    let scene = cfg.build_scene()?;
    let run = &cfg.run;
    let mut keys = Vec::new();
    for k in 0..run.schemes.len() {
        for s in 0..run.snr_db.len() {
            keys.extend((0..run.seeds as u64).map(|i| (k, s, run.first_seed + i)));
        }
    }

    let outcomes: BTreeMap<(usize, usize, u64), CellOutcome> = keys
        .par_iter()
        .map(|&(k, s, seed)| run_cell(cfg, &scene, run.schemes[k], run.snr_db[s], seed).map(|o| ((k, s, seed), o)))
        .collect::<Result<_>>()?;

    Ok(run
        .schemes
        .iter()
        .enumerate()
        .map(|(k, &scheme)| SchemeTable {
            scheme,
            rows: run
                .snr_db
                .iter()
                .enumerate()
                .map(|(s, &snr)| {
                    let cells: Vec<&CellOutcome> = outcomes.range((k, s, 0)..=(k, s, u64::MAX)).map(|(_, o)| o).collect();
                    aggregate(snr, &cells)
                })
                .collect(),
        })
        .collect())
}

/// [`run_experiment`] restricted to one scheme.
pub fn run_scheme(cfg: &ExperimentConfig, scheme: Scheme) -> Result<SchemeTable> {
    let mut one = cfg.clone();
    one.run.schemes = vec![scheme];
    Ok(run_experiment(&one)?.remove(0))
}
