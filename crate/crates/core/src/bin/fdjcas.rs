//! Command-line front end: benchmark sweeps, CRB of a scene and MUSIC runs.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fdjcas::estimation::{monte_carlo_mse, music_estimate_with, simulate_snapshots};
use fdjcas::experiments::{emit_outputs, run_experiment, write_mse_csv, ExperimentConfig, Overrides, Scheme};
use fdjcas::optimizer::{effective_user_channel, init_precoder};
use fdjcas::sensing_crb::crb_theta;
use fdjcas::{build_channel_set, jcas_optimize, JcasError, PathCoefficients, RisPhase, Scene, SensingContext};

#[derive(Parser)]
#[command(name = "fdjcas", version, about = "Full-duplex RIS-assisted JCAS simulator")]
struct Cli {
    /// TOML config; falls back to $FDJCAS_CONFIG, then to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep schemes over SNR and seeds; write per-scheme and combined CSVs.
    Run {
        /// Scheme to run; repeat for several (default: from config).
        #[arg(long = "scheme")]
        schemes: Vec<Scheme>,
        /// Comma-separated SNR grid in dB.
        #[arg(long, value_delimiter = ',')]
        snr: Vec<f64>,
        /// Number of seeds per SNR point.
        #[arg(long)]
        seeds: Option<usize>,
        /// MUSIC trials per SNR point.
        #[arg(long)]
        trials: Option<usize>,
        /// Skip the MUSIC evaluation.
        #[arg(long)]
        no_mse: bool,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the single-snapshot CRB of the scene's target angle.
    Crb {
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report the CRB after the joint design instead of at the initial precoder.
        #[arg(long)]
        optimized: bool,
    },
    /// One MUSIC estimate at an optimized design, or an MSE sweep with --sweep.
    Estimate {
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run the Monte-Carlo MSE study over the config's SNR grid.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory for the sweep's mse.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<JcasError> for Failure {
    fn from(e: JcasError) -> Self {
        match e {
            JcasError::Config(_) | JcasError::Parse(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::resolve(path).map_err(|e| Failure::Config(e.to_string()))?;
    cfg.apply(overrides).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli.config.as_deref();
    match cli.command {
        Command::Run {
            schemes,
            snr,
            seeds,
            trials,
            no_mse,
            out,
        } => {
            let mut cfg = load(
                path,
                &Overrides {
                    schemes: (!schemes.is_empty()).then_some(schemes),
                    snr_db: (!snr.is_empty()).then_some(snr),
                    seeds,
                    trials,
                    out_dir: out,
                    ..Overrides::default()
                },
            )?;
            if no_mse {
                cfg.run.estimate_mse = false;
            }
            let tables = run_experiment(&cfg)?;
            for p in emit_outputs(&cfg.run.out_dir, &tables)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Crb { snr, seed, optimized } => {
            let cfg = load(path, &Overrides::default())?;
            let scene = cfg.build_scene()?;
            let channels = build_channel_set(&scene, &cfg.channels, seed)?;
            let coeffs = PathCoefficients::random(seed, cfg.coefficients.psi_mag, cfg.coefficients.xi_mag);
            let phi = RisPhase::random(scene.ris_len(), seed);
            let opt = cfg.optimizer.clone().with_snr_db(snr, channels.sigma_j2);
            let crb = if optimized {
                let sol = jcas_optimize(&scene, &channels, &coeffs, &phi, &opt)?;
                sol.crb.ok_or(JcasError::Unobservable)?
            } else {
                let v = init_precoder(&effective_user_channel(&channels, &phi), opt.streams, opt.power)?;
                let ctx = SensingContext::new(&scene, channels.sigma_r2)?;
                crb_theta(&v, &ctx.assemble_a_bar(phi.as_vector(), &coeffs)?, &ctx.sigma)?
            };
            println!("theta_rad,snr_db,seed,crb_rad2,threshold");
            let threshold = opt.crb_threshold.map(|z| z.to_string()).unwrap_or_default();
            println!("{},{snr},{seed},{crb},{threshold}", scene.target_angle);
        }
        Command::Estimate {
            snr,
            seed,
            sweep,
            trials,
            out,
        } => {
            let cfg = load(
                path,
                &Overrides {
                    trials,
                    out_dir: out,
                    ..Overrides::default()
                },
            )?;
            let scene = cfg.build_scene()?;
            if sweep {
                let study = cfg.mse_study(seed)?;
                let rows = monte_carlo_mse(&study, &cfg.run.snr_db, cfg.run.trials)?;
                std::fs::create_dir_all(&cfg.run.out_dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                let file = cfg.run.out_dir.join("mse.csv");
                let f = std::fs::File::create(&file).map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
                write_mse_csv(f, &rows)?;
                println!("wrote {}", file.display());
            } else {
                single_estimate(&cfg, &scene, snr, seed)?;
            }
        }
    }
    Ok(())
}

fn single_estimate(cfg: &ExperimentConfig, scene: &Scene, snr: f64, seed: u64) -> Result<(), Failure> {
    let channels = build_channel_set(scene, &cfg.channels, seed)?;
    let coeffs = PathCoefficients::random(seed, cfg.coefficients.psi_mag, cfg.coefficients.xi_mag);
    let phi0 = RisPhase::random(scene.ris_len(), seed);
    let opt = cfg.optimizer.clone().with_snr_db(snr, channels.sigma_j2);
    let sol = jcas_optimize(scene, &channels, &coeffs, &phi0, &opt)?;
    let setup = &cfg.estimation;
    let batch = simulate_snapshots(scene, &channels, &sol.v, &sol.phase, &coeffs, setup.snapshots, seed, setup.si_mode)?;
    let mut music = setup.music.clone();
    if setup.exclude_ris_direction {
        music.exclude.push(scene.bs_angle_of(&scene.ris_element_positions[0]));
    }
    let est = music_estimate_with(&batch, &music)?;
    println!("theta_rad,theta_hat_rad,error_rad,snapshots");
    println!(
        "{},{},{},{}",
        batch.true_theta,
        est.theta_hat,
        est.theta_hat - batch.true_theta,
        batch.snapshots
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
