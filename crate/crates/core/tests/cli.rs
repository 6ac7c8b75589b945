//! Command-line behavior: config resolution, outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use fdjcas::experiments::{read_long_csv, read_scheme_csv, ExperimentConfig, CONFIG_ENV, METRICS};

const SMALL: &str = "\
[scene]
bs_tx_antennas = 6
bs_rx_antennas = 5
user_antennas = 3
ris_rows = 3
ris_cols = 3
[estimation]
snapshots = 16
[run]
snr_db = [10.0, 20.0]
seeds = 2
trials = 4
";

fn fdjcas(args: &[&str], env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fdjcas"));
    cmd.args(args).env_remove(CONFIG_ENV);
    if let Some(p) = env {
        cmd.env(CONFIG_ENV, p);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_per_scheme_and_combined_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = fdjcas(
        &["--config", cfg.to_str().unwrap(), "run", "--scheme", "ris_with_sensing", "--scheme", "no_ris_comm_only", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_scheme_csv(std::fs::File::open(out.join("ris_with_sensing.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.snr_db).collect::<Vec<_>>(), vec![10.0, 20.0]);
    assert!(out.join("no_ris_comm_only.csv").exists());
    assert!(!out.join("ris_comm_only.csv").exists());
    let long = read_long_csv(std::fs::File::open(out.join("combined.csv")).unwrap()).unwrap();
    assert_eq!(long.len(), 2 * 2 * METRICS.len());
}

#[test]
fn config_comes_from_the_environment_when_not_given() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "env.toml", "[scene]\ntarget_angle_deg = -20.0\n");
    let o = fdjcas(&["crb"], Some(&cfg));
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let theta: f64 = text.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((theta + 20f64.to_radians()).abs() < 1e-12);

    // An explicit path wins over the environment.
    let other = write_config(tmp.path(), "flag.toml", "[scene]\ntarget_angle_deg = 10.0\n");
    let o = fdjcas(&["--config", other.to_str().unwrap(), "crb"], Some(&cfg));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(&10f64.to_radians().to_string()));
}

#[test]
fn defaults_round_trip_through_the_shipped_config() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
}

#[test]
fn exit_codes_separate_config_from_runtime_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(fdjcas(&["--help"], None).status.code(), Some(0));
    assert_eq!(fdjcas(&["--config", "/nonexistent/x.toml", "crb"], None).status.code(), Some(1));
    assert_eq!(fdjcas(&["run", "--scheme", "bogus"], None).status.code(), Some(1));
    assert_eq!(fdjcas(&["run", "--snr", "10,0"], None).status.code(), Some(1));
    let bad = write_config(tmp.path(), "bad.toml", "[run]\nseeds = 0\n");
    assert_eq!(fdjcas(&["crb"], Some(&bad)).status.code(), Some(1));

    // A CRB target no design can reach fails at run time.
    let tight = write_config(tmp.path(), "tight.toml", &format!("{SMALL}[optimizer]\ncrb_threshold = 1e-14\n"));
    let o = fdjcas(&["--config", tight.to_str().unwrap(), "crb", "--optimized"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
