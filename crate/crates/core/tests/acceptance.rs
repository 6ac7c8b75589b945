//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line; run with `--nocapture` to see them.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fdjcas::estimation::monte_carlo_mse;
use fdjcas::experiments::{run_experiment, ExperimentConfig, Scheme, SchemeTable};
use fdjcas::geometry::ris_angles_of_target;
use fdjcas::linalg::{max_eigenvalue, CMat, CVec};
use fdjcas::optimizer::{
    dl_rate, effective_si_channel, effective_user_channel, init_precoder, mm_step, mmse_combiner, mse_matrix,
    mse_matrix_with_combiner, precoder_update, ris_objective, ris_optimize, ris_quadratics, si_power, total_power,
    weight_matrix, weighted_mse, BisectionSettings, PrecoderProblem,
};
use fdjcas::sensing_crb::crb_theta;
use fdjcas::steering::{ula_steering, ula_steering_derivative, upa_steering, upa_steering_derivative};
use fdjcas::{
    build_channel_set, jcas_optimize, ChannelParams, JcasError, OptimizerConfig, PathCoefficients, RisPhase, Scene,
    SceneConfig, SensingContext,
};

fn report(id: u32, pass: bool, detail: String) {
    println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| cn(rng))
}

fn default_scene() -> Scene {
    Scene::from_config(&SceneConfig::default()).unwrap()
}

fn rel_err(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

fn vec_rel_err(a: &CVec, b: &CVec) -> f64 {
    (a - b).norm() / b.norm()
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn criterion_01_derivative_fidelity() {
    let start = Instant::now();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_a, mut worst_steer) = (0.0f64, 0.0f64);
    for case in 0..50u64 {
        let cfg = SceneConfig {
            target_angle_deg: rng.random_range(-70.0..70.0),
            target_range: rng.random_range(10.0..100.0),
            ..SceneConfig::default()
        };
        let scene = Scene::from_config(&cfg).unwrap();
        let theta = scene.target_angle;
        let (plus, minus) = (scene.with_target_angle(theta + h), scene.with_target_angle(theta - h));
        let coeffs = PathCoefficients::random(case, 1.0, 0.5);
        let phi = RisPhase::random(scene.ris_len(), case);

        let a_bar = SensingContext::new(&scene, 1.0).unwrap().assemble_a_bar(phi.as_vector(), &coeffs).unwrap();
        let a_at = |s: &Scene| SensingContext::new(s, 1.0).unwrap().assemble_a(phi.as_vector(), &coeffs).unwrap();
        let fd = (a_at(&plus) - a_at(&minus)) / Complex64::new(2.0 * h, 0.0);
        worst_a = worst_a.max(rel_err(&a_bar, &fd));

        let (d, lambda) = (scene.element_spacing, scene.wavelength);
        for n in [scene.m_tx(), scene.n_rx()] {
            let fd = (ula_steering(theta + h, n, d, lambda) - ula_steering(theta - h, n, d, lambda))
                / Complex64::new(2.0 * h, 0.0);
            worst_steer = worst_steer.max(vec_rel_err(&ula_steering_derivative(theta, n, d, lambda), &fd));
        }
        let upa = |s: &Scene| upa_steering(ris_angles_of_target(s).unwrap(), s);
        let fd = (upa(&plus) - upa(&minus)) / Complex64::new(2.0 * h, 0.0);
        worst_steer = worst_steer.max(vec_rel_err(&upa_steering_derivative(&scene).unwrap(), &fd));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst_a < 1e-3 && worst_steer < 1e-4 && secs < 10.0,
        format!("max rel err A-bar {worst_a:.2e}, steering {worst_steer:.2e}, {secs:.1}s"),
    );
}

#[test]
fn criterion_02_mm_descent_and_fixed_point() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_rise, mut worst_fixed) = (f64::NEG_INFINITY, 0.0f64);
    let mut steps = 0usize;
    for run in 0..200u64 {
        let n = rng.random_range(4..=64);
        let rank = rng.random_range(1..=n);
        let b = random_mat(&mut rng, rank, n);
        let lambda = b.adjoint() * &b / Complex64::new(n as f64, 0.0);
        let d = CVec::from_fn(n, |_, _| cn(&mut rng));
        let phi0 = RisPhase::random(n, run);
        let out = ris_optimize(&phi0, &lambda, &d, 1e-15, 20_000);
        steps += out.iterations();
        for w in out.objective.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        let phi = out.phase.as_vector();
        let next = mm_step(phi, &lambda, &d, max_eigenvalue(&lambda));
        let dist = next.iter().zip(phi.iter()).map(|(a, b)| (a * b.conj()).arg().abs()).fold(0.0, f64::max);
        worst_fixed = worst_fixed.max(dist);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        worst_rise <= 1e-9 && worst_fixed < 1e-6 && secs < 30.0,
        format!("max step rise {worst_rise:.2e}, max fixed-point phase distance {worst_fixed:.2e}, {steps} steps, {secs:.1}s"),
    );
}

#[test]
fn criterion_03_quadratic_form_equivalence() {
    let scene = default_scene();
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let channels = build_channel_set(&scene, &ChannelParams::default(), inst).unwrap();
        let phi_ref = RisPhase::random(scene.ris_len(), inst);
        let h_ref = effective_user_channel(&channels, &phi_ref);
        let v = init_precoder(&h_ref, 2, 1.0).unwrap();
        let f = mmse_combiner(&h_ref, &v, channels.sigma_j2).unwrap();
        let w = weight_matrix(&mse_matrix(&h_ref, &v, channels.sigma_j2).unwrap(), 1.0).unwrap();
        let (lambda, d) = ris_quadratics(&v, &f, &w, &channels, true);

        // The cost with F, W and V held fixed, evaluated from scratch.
        let true_cost = |phi: &RisPhase| {
            let e = mse_matrix_with_combiner(&effective_user_channel(&channels, phi), &v, &f, channels.sigma_j2);
            weighted_mse(&w, &e) + si_power(&effective_si_channel(&channels, phi), &v)
        };
        let gaps: Vec<f64> = (0..100u64)
            .map(|k| {
                let phi = RisPhase::random(scene.ris_len(), 1000 * inst + k);
                true_cost(&phi) - ris_objective(phi.as_vector(), &lambda, &d)
            })
            .collect();
        let spread = gaps.iter().map(|g| (g - gaps[0]).abs()).fold(0.0, f64::max);
        worst = worst.max(spread);
    }
    report(3, worst < 1e-8, format!("max deviation from a constant {worst:.2e} over 20 x 100 phases"));
}

#[test]
fn criterion_04_precoder_constraints() {
    let scene = default_scene();
    let ctx_for = |ch: &fdjcas::ChannelSet| SensingContext::new(&scene, ch.sigma_r2).unwrap();
    let (mut worst_power, mut worst_crb) = (0.0f64, 0.0f64);
    let (mut active_power, mut infeasible, mut slack_violations, mut cases) = (0, 0, 0, 0);
    for seed in 0..20u64 {
        let channels = build_channel_set(&scene, &ChannelParams::default(), seed).unwrap();
        let coeffs = PathCoefficients::random(seed, 1.0, 0.5);
        let phi = RisPhase::random(scene.ris_len(), seed);
        let ctx = ctx_for(&channels);
        let a_bar = ctx.assemble_a_bar(phi.as_vector(), &coeffs).unwrap();
        let kernel = ctx.fisher_kernel(&a_bar);
        let h_eff = effective_user_channel(&channels, &phi);
        let h_si = effective_si_channel(&channels, &phi);
        for snr in [0.0, 10.0, 20.0, 30.0] {
            cases += 1;
            let power = 10f64.powf(snr / 10.0) * channels.sigma_j2;
            let v0 = init_precoder(&h_eff, 2, power).unwrap();
            let f = mmse_combiner(&h_eff, &v0, channels.sigma_j2).unwrap();
            let w = weight_matrix(&mse_matrix(&h_eff, &v0, channels.sigma_j2).unwrap(), 1.0).unwrap();
            let problem = PrecoderProblem {
                h_eff: &h_eff,
                h_si: Some(&h_si),
                combiner: &f,
                weight: &w,
                fisher_kernel: Some(&kernel),
                power,
                crb_threshold: Some(0.01),
            };
            let sol = match precoder_update(&problem, &BisectionSettings::default()) {
                Ok(sol) => sol,
                Err(JcasError::CrbInfeasible { .. }) => {
                    infeasible += 1;
                    continue;
                }
                Err(e) => panic!("precoder update failed: {e}"),
            };
            let p = total_power(&sol.v);
            let crb = crb_theta(&sol.v, &a_bar, &ctx.sigma).unwrap();
            if sol.lambda0 > 0.0 {
                active_power += 1;
                worst_power = worst_power.max((p - power).abs() / power);
            } else if p > power {
                slack_violations += 1;
            }
            worst_crb = worst_crb.max(crb / 0.01);
            if crb < 0.01 * (1.0 - 1e-3) && sol.mu != 0.0 {
                slack_violations += 1;
            }
            if p < power * (1.0 - 1e-6) && sol.lambda0 != 0.0 {
                slack_violations += 1;
            }
        }
    }
    report(
        4,
        worst_power < 1e-6 && worst_crb <= 1.0 + 1e-3 && slack_violations == 0,
        format!(
            "{cases} cases ({active_power} power-active, {infeasible} CRB-infeasible): max power rel err {worst_power:.2e}, max CRB/zeta {worst_crb:.6}, slackness violations {slack_violations}"
        ),
    );
}

/// SNR of the convergence and SI runs: the top of the benchmark grid.
const CONVERGENCE_SNR_DB: f64 = 30.0;

/// The 20 runs shared by the convergence and SI criteria.
fn default_runs() -> Vec<(f64, fdjcas::optimizer::JcasSolution)> {
    let scene = default_scene();
    (0..20u64)
        .map(|seed| {
            let channels = build_channel_set(&scene, &ChannelParams::default(), seed).unwrap();
            let coeffs = PathCoefficients::random(seed, 1.0, 0.5);
            let phi0 = RisPhase::random(scene.ris_len(), seed);
            let cfg = OptimizerConfig::default().with_snr_db(CONVERGENCE_SNR_DB, channels.sigma_j2);
            let start = Instant::now();
            let sol = jcas_optimize(&scene, &channels, &coeffs, &phi0, &cfg).unwrap();
            (start.elapsed().as_secs_f64(), sol)
        })
        .collect()
}

#[test]
fn criterion_05_monotone_convergence() {
    let runs = default_runs();
    let mut worst_rise = f64::NEG_INFINITY;
    let (mut converged, mut max_iter, mut max_secs) = (0, 0, 0.0f64);
    for (secs, sol) in &runs {
        for w in sol.trace.objectives().windows(2) {
            worst_rise = worst_rise.max((w[1] - w[0]) / w[0].abs());
        }
        if sol.converged && sol.iterations() <= 100 {
            converged += 1;
        }
        max_iter = max_iter.max(sol.iterations());
        max_secs = max_secs.max(*secs);
    }

    // Convergence over the rest of the SNR grid, logged for reference.
    let mut cfg = ExperimentConfig::default();
    cfg.run.schemes = vec![Scheme::RisWithSensing];
    cfg.run.seeds = 20;
    cfg.run.estimate_mse = false;
    let grid = run_experiment(&cfg).unwrap();
    let per_snr: Vec<String> = grid[0].rows.iter().map(|r| format!("{}dB {}/{}", r.snr_db, r.converged, r.seeds)).collect();
    println!("convergence over the SNR grid (ris_with_sensing, 20 seeds): {}", per_snr.join(", "));

    report(
        5,
        worst_rise <= 1e-6 && converged == runs.len() && max_secs < 60.0,
        format!(
            "{converged}/{} converged within 100 iterations at {CONVERGENCE_SNR_DB} dB (max {max_iter}), max relative rise {worst_rise:.2e}, slowest run {max_secs:.2}s",
            runs.len()
        ),
    );
}

#[test]
fn criterion_06_si_suppression() {
    let runs = default_runs();
    let mut reductions: Vec<f64> = runs
        .iter()
        .map(|(_, sol)| 10.0 * (sol.trace.first().unwrap().si_power / sol.si_power).log10())
        .collect();
    let all_lower = runs.iter().all(|(_, sol)| sol.si_power < sol.trace.first().unwrap().si_power);
    reductions.sort_by(f64::total_cmp);
    let median = 0.5 * (reductions[9] + reductions[10]);
    report(
        6,
        all_lower,
        format!(
            "Tr(E_SI) lower than at initialization on every seed; median reduction {median:.2} dB (min {:.2}, max {:.2})",
            reductions[0], reductions[19]
        ),
    );
}

#[test]
fn criterion_07_wmmse_rate_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (nj, mb, d) = (rng.random_range(1..=6), rng.random_range(2..=16), rng.random_range(1..=4));
        let h = random_mat(&mut rng, nj, mb) * Complex64::new(rng.random_range(0.1..3.0), 0.0);
        let v = random_mat(&mut rng, mb, d);
        let sigma2 = rng.random_range(0.05..5.0);
        let rate = dl_rate(&h, &v, sigma2).unwrap();
        let e = mse_matrix(&h, &v, sigma2).unwrap();
        let det_e: Complex64 = DMatrix::from(e).determinant();
        worst = worst.max((rate + det_e.re.log2()).abs());
    }
    report(7, worst < 1e-10, format!("max |rate + log2 det E| {worst:.2e} over 100 instances"));
}

fn count_rises(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] > w[0]).count()
}

#[test]
fn criterion_08_sensing_trend() {
    let start = Instant::now();
    let cfg = ExperimentConfig::load(&repo_path("configs/sensing_trend.toml")).unwrap();
    let study = cfg.mse_study(0).unwrap();
    let rows = monte_carlo_mse(&study, &cfg.run.snr_db, 200).unwrap();
    let secs = start.elapsed().as_secs_f64();
    for r in &rows {
        println!(
            "  snr {:>4} dB  mse {:.4e}  crb {:.4e}  ratio {:.3}  infeasible {}",
            r.snr_db,
            r.mse_rad2,
            r.crb_rad2,
            r.mse_rad2 / r.crb_rad2,
            r.infeasible
        );
    }
    let feasible = rows.iter().all(|r| !r.infeasible);
    let mse: Vec<f64> = rows.iter().map(|r| r.mse_rad2).collect();
    let ratio: Vec<f64> = rows.iter().map(|r| r.mse_rad2 / r.crb_rad2).collect();
    let floor = 1.0 - 3.0 / 200f64.sqrt();
    let above = rows.iter().all(|r| r.mse_rad2 >= r.crb_rad2 * floor);
    let (mse_rises, ratio_rises) = (count_rises(&mse), count_rises(&ratio));
    report(
        8,
        feasible && mse_rises <= 1 && ratio_rises <= 1 && above && secs < 1200.0,
        format!(
            "MSE inversions {mse_rises}, MSE/CRB inversions {ratio_rises}, MSE >= CRB*(1-3/sqrt(200)) {above}, ratio {:.1} -> {:.1}, {secs:.0}s",
            ratio[0],
            ratio[ratio.len() - 1]
        ),
    );
}

fn rates(tables: &[SchemeTable], scheme: Scheme) -> Vec<f64> {
    let t = tables.iter().find(|t| t.scheme == scheme).unwrap();
    t.rows.iter().map(|r| r.rate_bps_hz.unwrap_or(f64::NAN)).collect()
}

#[test]
fn criterion_09_rate_ordering() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.run.seeds = 50;
    cfg.run.estimate_mse = false;
    let tables = run_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ris_fd = rates(&tables, Scheme::RisWithSensing);
    let no_ris_fd = rates(&tables, Scheme::NoRisWithSensing);
    let ris_hd = rates(&tables, Scheme::RisCommOnly);
    let no_ris_hd = rates(&tables, Scheme::NoRisCommOnly);
    for (i, snr) in cfg.run.snr_db.iter().enumerate() {
        println!(
            "  snr {snr:>4} dB  ris_comm_only {:.4}  no_ris_comm_only {:.4}  ris_with_sensing {:.4}  no_ris_with_sensing {:.4}",
            ris_hd[i], no_ris_hd[i], ris_fd[i], no_ris_fd[i]
        );
    }
    let ge = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x >= y);
    let hd_over_fd = ge(&ris_hd, &ris_fd);
    let ris_over_none = ge(&ris_hd, &no_ris_hd) && ge(&ris_fd, &no_ris_fd);
    report(
        9,
        hd_over_fd && ris_over_none && secs < 600.0,
        format!("comm-only >= FD JCAS with RIS: {hd_over_fd}, RIS >= no RIS: {ris_over_none}, {secs:.0}s"),
    );
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fdjcas"))
        .args(args)
        .env_remove(fdjcas::experiments::CONFIG_ENV)
        .output()
        .unwrap()
}

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(
        &config,
        "[run]\nsnr_db = [0.0, 10.0, 20.0]\nseeds = 3\ntrials = 20\n[estimation.music]\ngrid_resolution = 0.002\n",
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let run_dir = tmp.path().join(format!("run{k}"));
        let sweep_dir = tmp.path().join(format!("sweep{k}"));
        let a = cli(&["--config", config, "run", "--out", run_dir.to_str().unwrap()]);
        let b = cli(&["--config", config, "estimate", "--sweep", "--out", sweep_dir.to_str().unwrap()]);
        assert!(a.status.success() && b.status.success(), "{a:?} {b:?}");
        outputs.push((read_dir_sorted(&run_dir), read_dir_sorted(&sweep_dir)));
    }
    let files = outputs[0].0.len() + outputs[0].1.len();
    let identical = outputs[0] == outputs[1];
    report(10, identical && files == 6, format!("{files} CSV files byte-identical across two runs: {identical}"));
}
