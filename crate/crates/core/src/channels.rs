//! Propagation matrices: near-field spherical-wavefront LoS links between the
//! base station and the RIS (and the LoS self-interference), far-field rank-1
//! LoS links towards the user, and a Gaussian non-LoS SI residual.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::geometry::{pairwise_distances, ris_angles_of_point, Point3, Scene};
use crate::linalg::{CMat, CVec};
use crate::steering::{ula_steering, upa_steering};

/// RNG stream identifiers; each random quantity draws from its own stream so
/// that changing one dimension never shifts another draw.
pub(crate) mod stream {
    pub const NLOS_SI: u64 = 1;
    pub const PATH_COEFFS: u64 = 2;
    pub const RIS_INIT: u64 = 3;
    pub const SNAPSHOTS: u64 = 4;
}

pub(crate) fn seeded_rng(seed: u64, stream_id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// One circular complex Gaussian sample with variance `var`.
pub(crate) fn cn_sample(rng: &mut ChaCha20Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Every channel matrix of the scene plus the two noise variances.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// BS → user, `N_j × M_b`.
    pub h_jb: CMat,
    /// RIS → user, `N_j × RC`.
    pub h_ji: CMat,
    /// BS → RIS, `RC × M_b`.
    pub h_ib: CMat,
    /// RIS → BS receiver, `N_b × RC`.
    pub h_bi: CMat,
    /// LoS self-interference, `N_b × M_b`.
    pub h_bb_los: CMat,
    /// Non-LoS self-interference, `N_b × M_b`.
    pub h_bb_nlos: CMat,
    pub sigma_j2: f64,
    pub sigma_r2: f64,
}

/// Knobs of the channel synthesis that the geometry does not fix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Non-LoS SI power relative to the LoS part.
    pub nlos_si_power: f64,
    /// Far-field LoS gain of the BS → user link.
    pub bs_user_gain: f64,
    /// Far-field LoS gain of the RIS → user link. The BS → RIS link is
    /// normalized like every near-field channel, so the phase-aligned
    /// reflected path carries a coherent array gain of order `RC`; the
    /// default attenuates it to account for the double path loss.
    pub ris_user_gain: f64,
    pub sigma_j2: f64,
    pub sigma_r2: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            nlos_si_power: 0.01,
            bs_user_gain: 1.0,
            ris_user_gain: 0.3,
            sigma_j2: 1.0,
            sigma_r2: 1.0,
        }
    }
}

/// Spherical-wavefront LoS channel: `(ρ/d) exp(-i 2π d/λ)` with `ρ` chosen so
/// that `‖H‖_F² = #tx · #rx`.
pub fn nearfield_los(tx: &[Point3], rx: &[Point3], wavelength: f64) -> Result<CMat> {
    let dist = pairwise_distances(tx, rx)?;
    let inv_sq: f64 = dist.iter().map(|d| 1.0 / (d * d)).sum();
    let rho = ((tx.len() * rx.len()) as f64 / inv_sq).sqrt();
    Ok(CMat::from_fn(rx.len(), tx.len(), |m, n| {
        let d = dist[(m, n)];
        Complex64::from_polar(rho / d, -2.0 * PI * d / wavelength)
    }))
}

/// Rank-1 far-field LoS channel `gain · a_rx a_txᵀ`.
pub fn farfield_los(steering_rx: &CVec, steering_tx: &CVec, gain: Complex64) -> CMat {
    steering_rx * steering_tx.transpose() * gain
}

/// Builds all channels of `scene`. The non-LoS SI is i.i.d. `CN(0, κ)` per
/// entry, so `E‖H_bb_nlos‖_F² = κ M_b N_b`.
pub fn build_channel_set(scene: &Scene, params: &ChannelParams, seed: u64) -> Result<ChannelSet> {
    if params.nlos_si_power < 0.0 {
        return Err(JcasError::InvalidArgument("non-LoS SI power must be >= 0".into()));
    }
    let lambda = scene.wavelength;
    let d = scene.element_spacing;
    let user = scene.user_positions[0];
    let ris0 = scene.ris_element_positions[0];

    let h_bb_los = nearfield_los(&scene.bs_tx_positions, &scene.bs_rx_positions, lambda)?;
    let h_bi = nearfield_los(&scene.ris_element_positions, &scene.bs_rx_positions, lambda)?;
    let h_ib = nearfield_los(&scene.bs_tx_positions, &scene.ris_element_positions, lambda)?;

    let a_user_from_bs = ula_steering(scene.user_angle_of(&scene.bs_tx_positions[0]), scene.n_user(), d, lambda);
    let a_bs_to_user = ula_steering(scene.bs_angle_of(&user), scene.m_tx(), d, lambda);
    let h_jb = farfield_los(&a_user_from_bs, &a_bs_to_user, Complex64::new(params.bs_user_gain, 0.0));

    let a_user_from_ris = ula_steering(scene.user_angle_of(&ris0), scene.n_user(), d, lambda);
    let a_ris_to_user = upa_steering(ris_angles_of_point(scene, &user)?, scene);
    let h_ji = farfield_los(&a_user_from_ris, &a_ris_to_user, Complex64::new(params.ris_user_gain, 0.0));

    let (nb, mb) = (scene.n_rx(), scene.m_tx());
    let h_bb_nlos = if params.nlos_si_power == 0.0 {
        CMat::zeros(nb, mb)
    } else {
        let mut rng = seeded_rng(seed, stream::NLOS_SI);
        CMat::from_fn(nb, mb, |_, _| cn_sample(&mut rng, params.nlos_si_power))
    };

    Ok(ChannelSet {
        h_jb,
        h_ji,
        h_ib,
        h_bi,
        h_bb_los,
        h_bb_nlos,
        sigma_j2: params.sigma_j2,
        sigma_r2: params.sigma_r2,
    })
}

impl ChannelSet {
    pub fn m_tx(&self) -> usize {
        self.h_jb.ncols()
    }

    pub fn n_rx(&self) -> usize {
        self.h_bb_los.nrows()
    }

    pub fn ris_len(&self) -> usize {
        self.h_ib.nrows()
    }

    /// The same channels with every link through the RIS removed.
    pub fn without_ris(&self) -> ChannelSet {
        ChannelSet {
            h_ji: CMat::zeros(self.h_ji.nrows(), self.h_ji.ncols()),
            h_ib: CMat::zeros(self.h_ib.nrows(), self.h_ib.ncols()),
            h_bi: CMat::zeros(self.h_bi.nrows(), self.h_bi.ncols()),
            ..self.clone()
        }
    }

    fn named(&self) -> [(&'static str, &CMat); 6] {
        [
            ("H_jb", &self.h_jb),
            ("H_ji", &self.h_ji),
            ("H_ib", &self.h_ib),
            ("H_bi", &self.h_bi),
            ("H_bb_los", &self.h_bb_los),
            ("H_bb_nlos", &self.h_bb_nlos),
        ]
    }

    /// Text dump: one JSON header line naming every matrix and its shape,
    /// then each matrix row-major, one row per line, real and imaginary parts interleaved.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let header = DumpHeader {
            format: DUMP_FORMAT.to_string(),
            sigma_j2: self.sigma_j2,
            sigma_r2: self.sigma_r2,
            matrices: self
                .named()
                .iter()
                .map(|(name, m)| MatrixShape {
                    name: name.to_string(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                })
                .collect(),
        };
        let line = serde_json::to_string(&header).map_err(|e| JcasError::Parse(e.to_string()))?;
        writeln!(out, "{line}")?;
        for (_, m) in self.named() {
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .flat_map(|c| [m[(r, c)].re.to_string(), m[(r, c)].im.to_string()])
                    .collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<ChannelSet> {
        let mut lines = input.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| JcasError::Parse("empty channel dump".into()))??;
        let header: DumpHeader =
            serde_json::from_str(&header_line).map_err(|e| JcasError::Parse(e.to_string()))?;
        if header.format != DUMP_FORMAT {
            return Err(JcasError::Parse(format!("unknown dump format {}", header.format)));
        }
        let mut mats = std::collections::HashMap::new();
        for shape in &header.matrices {
            let mut m = CMat::zeros(shape.rows, shape.cols);
            for r in 0..shape.rows {
                let line = lines
                    .next()
                    .ok_or_else(|| JcasError::Parse(format!("{}: missing row {r}", shape.name)))??;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| JcasError::Parse(e.to_string())))
                    .collect::<Result<_>>()?;
                if vals.len() != 2 * shape.cols {
                    return Err(JcasError::Parse(format!(
                        "{}: row {r} has {} values, expected {}",
                        shape.name,
                        vals.len(),
                        2 * shape.cols
                    )));
                }
                for c in 0..shape.cols {
                    m[(r, c)] = Complex64::new(vals[2 * c], vals[2 * c + 1]);
                }
            }
            mats.insert(shape.name.clone(), m);
        }
        let mut take = |name: &str| {
            mats.remove(name)
                .ok_or_else(|| JcasError::Parse(format!("dump is missing {name}")))
        };
        Ok(ChannelSet {
            h_jb: take("H_jb")?,
            h_ji: take("H_ji")?,
            h_ib: take("H_ib")?,
            h_bi: take("H_bi")?,
            h_bb_los: take("H_bb_los")?,
            h_bb_nlos: take("H_bb_nlos")?,
            sigma_j2: header.sigma_j2,
            sigma_r2: header.sigma_r2,
        })
    }
}

const DUMP_FORMAT: &str = "fdjcas-channels-v1";

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    sigma_j2: f64,
    sigma_r2: f64,
    matrices: Vec<MatrixShape>,
}

#[derive(Serialize, Deserialize)]
struct MatrixShape {
    name: String,
    rows: usize,
    cols: usize,
}
