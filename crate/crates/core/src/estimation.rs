//! Radar snapshots, MUSIC angle estimation and the Monte-Carlo MSE study.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{build_channel_set, cn_sample, seeded_rng, stream, ChannelParams, ChannelSet};
use crate::error::{JcasError, Result};
use crate::geometry::Scene;
use crate::linalg::{eigh_desc, mul_diag_mul, CMat};
use crate::optimizer::{jcas_optimize, OptimizerConfig, RisPhase};
use crate::sensing_crb::crb_theta;
use crate::steering::{ula_steering, PathCoefficients, SensingContext};

/// How much of the self-interference reaches the sensing receiver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SiMode {
    /// SI removed entirely.
    None,
    /// LoS, non-LoS and RIS-reflected SI all present.
    Full,
    /// SI left after cancellation, amplitude scaled by `residual`.
    PostCancellation { residual: f64 },
}

impl Default for SiMode {
    fn default() -> Self {
        SiMode::PostCancellation { residual: 1e-3 }
    }
}

impl SiMode {
    fn amplitude(self) -> f64 {
        match self {
            SiMode::None => 0.0,
            SiMode::Full => 1.0,
            SiMode::PostCancellation { residual } => residual,
        }
    }
}

/// Received radar samples, one column per snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotBatch {
    pub y: CMat,
    pub snapshots: usize,
    pub true_theta: f64,
    pub si_mode: SiMode,
    /// Carried along so the estimator can build matching steering vectors.
    pub element_spacing: f64,
    pub wavelength: f64,
}

/// Draws `snapshots` columns of `(A + SI) V s + n` with `s ~ CN(0, I)` and
/// `n ~ CN(0, σ_r² I)`. The SI is `H_bb^l + H_bb^r + H_bi Φ H_ib`, scaled
/// according to `si_mode`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_snapshots(
    scene: &Scene,
    channels: &ChannelSet,
    v: &CMat,
    phi: &RisPhase,
    coeffs: &PathCoefficients,
    snapshots: usize,
    seed: u64,
    si_mode: SiMode,
) -> Result<SnapshotBatch> {
    if snapshots == 0 {
        return Err(JcasError::InvalidArgument("snapshot count must be >= 1".into()));
    }
    if v.nrows() != channels.m_tx() {
        return Err(JcasError::DimensionMismatch(format!(
            "precoder has {} rows, BS has {} transmit antennas",
            v.nrows(),
            channels.m_tx()
        )));
    }
    // σ_r² = 0 is allowed here for noiseless checks, so build the context with a placeholder
    let ctx = SensingContext::new(scene, 1.0)?;
    let a = ctx.assemble_a(phi.as_vector(), coeffs)?;
    let si = &channels.h_bb_los + &channels.h_bb_nlos + mul_diag_mul(&channels.h_bi, phi.as_vector(), &channels.h_ib);
    let tx = (a + si * Complex64::new(si_mode.amplitude(), 0.0)) * v;

    let mut rng = seeded_rng(seed, stream::SNAPSHOTS);
    let streams = v.ncols();
    let s = CMat::from_fn(streams, snapshots, |_, _| cn_sample(&mut rng, 1.0));
    let noise_var = channels.sigma_r2;
    let n = CMat::from_fn(tx.nrows(), snapshots, |_, _| {
        if noise_var > 0.0 {
            cn_sample(&mut rng, noise_var)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(SnapshotBatch {
        y: tx * s + n,
        snapshots,
        true_theta: scene.target_angle,
        si_mode,
        element_spacing: scene.element_spacing,
        wavelength: scene.wavelength,
    })
}

/// Estimator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MusicSettings {
    pub subspace_dim: usize,
    pub grid_resolution: f64,
    /// Angles whose neighbourhood is skipped when picking the peak, such as
    /// the known direction of the RIS.
    pub exclude: Vec<f64>,
    pub exclude_half_width: f64,
}

impl Default for MusicSettings {
    fn default() -> Self {
        Self {
            subspace_dim: 2,
            grid_resolution: 1e-3,
            exclude: Vec::new(),
            exclude_half_width: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MusicResult {
    pub theta_hat: f64,
    pub pseudo_spectrum: Vec<f64>,
    pub grid: Vec<f64>,
}

/// Grid `−π/2, −π/2 + r, …` up to `π/2`.
pub fn angle_grid(resolution: f64) -> Vec<f64> {
    let n = (std::f64::consts::PI / resolution).floor() as usize;
    (0..=n).map(|i| -FRAC_PI_2 + i as f64 * resolution).collect()
}

/// MUSIC with no excluded sectors.
pub fn music_estimate(batch: &SnapshotBatch, subspace_dim: usize, grid_resolution: f64) -> Result<MusicResult> {
    music_estimate_with(
        batch,
        &MusicSettings {
            subspace_dim,
            grid_resolution,
            ..MusicSettings::default()
        },
    )
}

/// Sample covariance, noise subspace from its `N_b − subspace_dim` smallest
/// eigenvectors, pseudo-spectrum `1/‖E_nᴴ a_r(θ)‖²` and the largest peak
/// outside the excluded sectors.
pub fn music_estimate_with(batch: &SnapshotBatch, settings: &MusicSettings) -> Result<MusicResult> {
    let nb = batch.y.nrows();
    if settings.subspace_dim == 0 || settings.subspace_dim >= nb {
        return Err(JcasError::InvalidArgument(format!(
            "signal subspace dimension {} must lie in 1..{nb}",
            settings.subspace_dim
        )));
    }
    if !(settings.grid_resolution > 0.0) {
        return Err(JcasError::InvalidArgument("grid resolution must be positive".into()));
    }
    if batch.snapshots < nb {
        return Err(JcasError::RankDeficient {
            snapshots: batch.snapshots,
            antennas: nb,
        });
    }
    let cov = &batch.y * batch.y.adjoint() * Complex64::new(1.0 / batch.snapshots as f64, 0.0);
    let (_, vecs) = eigh_desc(&cov);
    let en = vecs.columns(settings.subspace_dim, nb - settings.subspace_dim).into_owned();
    let en_h = en.adjoint();

    let grid = angle_grid(settings.grid_resolution);
    let pseudo_spectrum: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let a = ula_steering(t, nb, batch.element_spacing, batch.wavelength);
            1.0 / (&en_h * a).norm_squared().max(f64::MIN_POSITIVE)
        })
        .collect();
    let allowed = |t: f64| settings.exclude.iter().all(|&c| (t - c).abs() > settings.exclude_half_width);
    let best = grid
        .iter()
        .zip(&pseudo_spectrum)
        .filter(|(t, _)| allowed(**t))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(t, _)| *t)
        .ok_or_else(|| JcasError::InvalidArgument("every grid point is excluded".into()))?;
    Ok(MusicResult {
        theta_hat: best,
        pseudo_spectrum,
        grid,
    })
}

/// Snapshot and estimator settings shared by the MSE study and the scheme runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSetup {
    pub snapshots: usize,
    pub si_mode: SiMode,
    pub music: MusicSettings,
    /// Skip the RIS direction when picking the MUSIC peak.
    pub exclude_ris_direction: bool,
}

impl Default for EstimationSetup {
    fn default() -> Self {
        Self {
            snapshots: 64,
            si_mode: SiMode::default(),
            music: MusicSettings::default(),
            exclude_ris_direction: true,
        }
    }
}

impl EstimationSetup {
    fn music_for(&self, scene: &Scene) -> MusicSettings {
        let mut settings = self.music.clone();
        if self.exclude_ris_direction {
            settings.exclude.push(scene.bs_angle_of(&scene.ris_element_positions[0]));
        }
        settings
    }
}

/// Squared MUSIC errors and the matching CRB at a fixed design.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignErrors {
    pub squared_errors: Vec<f64>,
    /// CRB of one snapshot divided by the snapshot count.
    pub crb_rad2: f64,
}

impl DesignErrors {
    pub fn mse(&self) -> f64 {
        self.squared_errors.iter().sum::<f64>() / self.squared_errors.len() as f64
    }
}

/// Runs `trials` MUSIC estimates at the design `(v, phi)`; trial `t` draws its
/// snapshots from seed `base_seed + t`.
#[allow(clippy::too_many_arguments)]
pub fn design_errors(
    scene: &Scene,
    channels: &ChannelSet,
    v: &CMat,
    phi: &RisPhase,
    coeffs: &PathCoefficients,
    setup: &EstimationSetup,
    trials: usize,
    base_seed: u64,
) -> Result<DesignErrors> {
    if trials == 0 {
        return Err(JcasError::InvalidArgument("trial count must be >= 1".into()));
    }
    let ctx = SensingContext::new(scene, channels.sigma_r2)?;
    let a_bar = ctx.assemble_a_bar(phi.as_vector(), coeffs)?;
    let crb_rad2 = crb_theta(v, &a_bar, &ctx.sigma)? / setup.snapshots as f64;
    let settings = setup.music_for(scene);
    let squared_errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let batch = simulate_snapshots(
                scene,
                channels,
                v,
                phi,
                coeffs,
                setup.snapshots,
                base_seed.wrapping_add(t as u64),
                setup.si_mode,
            )?;
            let est = music_estimate_with(&batch, &settings)?;
            Ok((est.theta_hat - batch.true_theta).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok(DesignErrors { squared_errors, crb_rad2 })
}

/// Everything needed to rerun the sensing study.
#[derive(Clone, Debug, PartialEq)]
pub struct MseStudy {
    pub scene: Scene,
    pub channel_params: ChannelParams,
    pub psi_mag: f64,
    pub xi_mag: f64,
    pub optimizer: OptimizerConfig,
    pub estimation: EstimationSetup,
    pub root_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub snr_db: f64,
    pub mse_rad2: f64,
    /// CRB over the batch's snapshots at the optimized design.
    pub crb_rad2: f64,
    pub trials: usize,
    /// The CRB threshold could not be met at this SNR; no estimate was run.
    pub infeasible: bool,
}

/// One design per SNR (channels, path coefficients and initial phases
/// drawn from `root_seed`), then `trials` independent snapshot batches
/// with seeds `root_seed + t`.
pub fn monte_carlo_mse(study: &MseStudy, snr_grid: &[f64], trials: usize) -> Result<Vec<MseRow>> {
    if trials == 0 {
        return Err(JcasError::InvalidArgument("trial count must be >= 1".into()));
    }
    let seed = study.root_seed;
    let channels = build_channel_set(&study.scene, &study.channel_params, seed)?;
    let coeffs = PathCoefficients::random(seed, study.psi_mag, study.xi_mag);
    let phi0 = RisPhase::random(study.scene.ris_len(), seed);

    snr_grid
        .iter()
        .map(|&snr_db| {
            let cfg = study.optimizer.clone().with_snr_db(snr_db, channels.sigma_j2);
            let sol = match jcas_optimize(&study.scene, &channels, &coeffs, &phi0, &cfg) {
                Ok(sol) => sol,
                Err(e) if e.is_crb_infeasible() => {
                    return Ok(MseRow {
                        snr_db,
                        mse_rad2: f64::NAN,
                        crb_rad2: f64::NAN,
                        trials,
                        infeasible: true,
                    })
                }
                Err(e) => return Err(e),
            };
            let errs = design_errors(
                &study.scene,
                &channels,
                &sol.v,
                &sol.phase,
                &coeffs,
                &study.estimation,
                trials,
                seed,
            )?;
            Ok(MseRow {
                snr_db,
                mse_rad2: errs.mse(),
                crb_rad2: errs.crb_rad2,
                trials,
                infeasible: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SceneConfig;

    fn scene() -> Scene {
        Scene::from_config(&SceneConfig::default()).unwrap()
    }

    fn setup(theta: f64, sigma_r2: f64) -> (Scene, ChannelSet, CMat, RisPhase) {
        let s = scene().with_target_angle(theta);
        let params = ChannelParams { sigma_r2, ..ChannelParams::default() };
        let ch = build_channel_set(&s, &params, 1).unwrap();
        let mut rng = seeded_rng(5, 77);
        let v = CMat::from_fn(s.m_tx(), 2, |_, _| cn_sample(&mut rng, 1.0));
        let phi = RisPhase::random(s.ris_len(), 1);
        (s, ch, v, phi)
    }

    #[test]
    fn noiseless_direct_path_lies_in_steering_span() {
        let (s, ch, v, phi) = setup(0.3, 0.0);
        let coeffs = PathCoefficients::direct_only(Complex64::new(1.0, 0.0));
        let b = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, 20, 3, SiMode::None).unwrap();
        let a = ula_steering(0.3, s.n_rx(), s.element_spacing, s.wavelength);
        let proj = &a * (a.adjoint() * &b.y);
        assert!((&b.y - proj).norm() / b.y.norm() < 1e-12);
    }

    #[test]
    fn same_seed_same_batch() {
        let (s, ch, v, phi) = setup(0.3, 1.0);
        let coeffs = PathCoefficients::random(1, 1.0, 0.5);
        let a = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, 16, 9, SiMode::Full).unwrap();
        let b = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, 16, 9, SiMode::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_on_grid_target_is_exact() {
        let res = 1e-3;
        let theta = angle_grid(res)[1800];
        let (s, ch, v, phi) = setup(theta, 0.0);
        let coeffs = PathCoefficients::direct_only(Complex64::new(1.0, 0.0));
        let b = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, 32, 4, SiMode::None).unwrap();
        let r = music_estimate(&b, 1, res).unwrap();
        assert_eq!(r.theta_hat, theta);
        assert!(r.pseudo_spectrum.iter().all(|&p| p >= 0.0));
        assert_eq!(r.grid.len(), r.pseudo_spectrum.len());
    }

    #[test]
    fn too_few_snapshots_is_rank_deficient() {
        let (s, ch, v, phi) = setup(0.3, 1.0);
        let coeffs = PathCoefficients::random(1, 1.0, 0.5);
        let b = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, 5, 1, SiMode::None).unwrap();
        assert!(matches!(music_estimate(&b, 2, 1e-3), Err(JcasError::RankDeficient { .. })));
    }

    #[test]
    fn exclusion_window_skips_sector() {
        let res = 1e-3;
        let theta = angle_grid(res)[1800];
        let (s, ch, v, phi) = setup(theta, 0.0);
        let coeffs = PathCoefficients::direct_only(Complex64::new(1.0, 0.0));
        let b = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, 32, 4, SiMode::None).unwrap();
        let settings = MusicSettings {
            subspace_dim: 1,
            grid_resolution: res,
            exclude: vec![theta],
            exclude_half_width: 0.05,
        };
        let r = music_estimate_with(&b, &settings).unwrap();
        assert!((r.theta_hat - theta).abs() > 0.05);
    }

    #[test]
    fn sample_covariance_matches_model() {
        let (s, ch, v, phi) = setup(0.3, 1.0);
        let coeffs = PathCoefficients::random(2, 1.0, 0.5);
        let mode = SiMode::PostCancellation { residual: 0.1 };
        let l = 100_000;
        let b = simulate_snapshots(&s, &ch, &v, &phi, &coeffs, l, 8, mode).unwrap();
        let sample = &b.y * b.y.adjoint() * Complex64::new(1.0 / l as f64, 0.0);

        let ctx = SensingContext::new(&s, 1.0).unwrap();
        let a = ctx.assemble_a(phi.as_vector(), &coeffs).unwrap();
        let si = &ch.h_bb_los + &ch.h_bb_nlos + mul_diag_mul(&ch.h_bi, phi.as_vector(), &ch.h_ib);
        let t = (a + si * Complex64::new(0.1, 0.0)) * &v;
        let model = &t * t.adjoint() + CMat::identity(s.n_rx(), s.n_rx()) * Complex64::new(1.0, 0.0);
        assert!((&sample - &model).norm() / model.norm() < 0.02);
    }
}
