//! Experiment configuration: a TOML file with one table per concern, plus
//! command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelParams;
use crate::error::{JcasError, Result};
use crate::estimation::{EstimationSetup, MseStudy};
use crate::geometry::{Scene, SceneConfig};
use crate::optimizer::OptimizerConfig;

/// Environment variable naming the config file used when none is given.
pub const CONFIG_ENV: &str = "FDJCAS_CONFIG";

/// The four benchmark designs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Full-duplex joint design with the RIS.
    RisWithSensing,
    /// Full-duplex joint design, RIS links removed.
    NoRisWithSensing,
    /// Rate-only design with the RIS (half duplex: no SI, no CRB).
    RisCommOnly,
    /// Rate-only design without the RIS.
    NoRisCommOnly,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::RisWithSensing,
        Scheme::NoRisWithSensing,
        Scheme::RisCommOnly,
        Scheme::NoRisCommOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RisWithSensing => "ris_with_sensing",
            Scheme::NoRisWithSensing => "no_ris_with_sensing",
            Scheme::RisCommOnly => "ris_comm_only",
            Scheme::NoRisCommOnly => "no_ris_comm_only",
        }
    }

    pub fn uses_ris(self) -> bool {
        matches!(self, Scheme::RisWithSensing | Scheme::RisCommOnly)
    }

    pub fn senses(self) -> bool {
        matches!(self, Scheme::RisWithSensing | Scheme::NoRisWithSensing)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = JcasError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| JcasError::Config(format!("unknown scheme '{s}'")))
    }
}

/// Magnitudes of the radar path coefficients; phases are drawn per seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientConfig {
    pub psi_mag: f64,
    pub xi_mag: f64,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            psi_mag: 1.0,
            xi_mag: 0.5,
        }
    }
}

/// What to run and where to write it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schemes: Vec<Scheme>,
    /// SNR `p_o/σ_j²` grid in dB, strictly increasing.
    pub snr_db: Vec<f64>,
    /// Number of seeds per SNR point; seeds are `first_seed, first_seed + 1, …`.
    pub seeds: usize,
    pub first_seed: u64,
    /// MUSIC trials per SNR point of the sensing schemes.
    pub trials: usize,
    /// Run the MUSIC evaluation for the sensing schemes.
    pub estimate_mse: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            seeds: 50,
            first_seed: 0,
            trials: 200,
            estimate_mse: true,
            out_dir: PathBuf::from("results"),
        }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub channels: ChannelParams,
    pub coefficients: CoefficientConfig,
    pub optimizer: OptimizerConfig,
    pub estimation: EstimationSetup,
    pub run: RunConfig,
}

/// Command-line values that replace the file's.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub schemes: Option<Vec<Scheme>>,
    pub snr_db: Option<Vec<f64>>,
    pub seeds: Option<usize>,
    pub first_seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| JcasError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JcasError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| JcasError::Config(format!("{}: {e}", path.display())))
    }

    /// Loads `path` if given, else the file named by [`CONFIG_ENV`], else the defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| JcasError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = &o.schemes {
            self.run.schemes = s.clone();
        }
        if let Some(s) = &o.snr_db {
            self.run.snr_db = s.clone();
        }
        if let Some(n) = o.seeds {
            self.run.seeds = n;
        }
        if let Some(n) = o.first_seed {
            self.run.first_seed = n;
        }
        if let Some(n) = o.trials {
            self.run.trials = n;
        }
        if let Some(p) = &o.out_dir {
            self.run.out_dir = p.clone();
        }
        self.validate()
    }

    pub fn build_scene(&self) -> Result<Scene> {
        Scene::from_config(&self.scene).map_err(|e| JcasError::Config(format!("scene: {e}")))
    }

    /// The sensing study described by this config, with all draws from `seed`.
    pub fn mse_study(&self, seed: u64) -> Result<MseStudy> {
        Ok(MseStudy {
            scene: self.build_scene()?,
            channel_params: self.channels,
            psi_mag: self.coefficients.psi_mag,
            xi_mag: self.coefficients.xi_mag,
            optimizer: self.optimizer.clone(),
            estimation: self.estimation.clone(),
            root_seed: seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JcasError::Config(m));
        self.build_scene()?;
        self.optimizer
            .validate()
            .map_err(|e| JcasError::Config(format!("optimizer: {e}")))?;
        let r = &self.run;
        if r.schemes.is_empty() {
            return bad("run.schemes is empty".into());
        }
        if r.schemes.iter().collect::<BTreeSet<_>>().len() != r.schemes.len() {
            return bad("run.schemes lists a scheme twice".into());
        }
        if r.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("run.snr_db must be finite".into());
        }
        if r.snr_db.windows(2).any(|w| w[0] >= w[1]) {
            return bad("run.snr_db must be strictly increasing".into());
        }
        if r.seeds == 0 || r.trials == 0 {
            return bad("run.seeds and run.trials must be >= 1".into());
        }
        if self.estimation.snapshots == 0 {
            return bad("estimation.snapshots must be >= 1".into());
        }
        if !(self.coefficients.psi_mag >= 0.0 && self.coefficients.xi_mag >= 0.0) {
            return bad("path coefficient magnitudes must be >= 0".into());
        }
        if !(self.channels.sigma_j2 > 0.0 && self.channels.sigma_r2 > 0.0) {
            return bad("noise variances must be positive".into());
        }
        Ok(())
    }
}
