//! Scene layout: base-station arrays, RIS, user and target, plus the
//! RIS-relative angle mapping of the target and its derivative in the AoA.
//!
//! Frame conventions: the base station sits at the origin with both ULAs
//! along the z-axis, so a point at angle `θ` in the x–z half plane
//! `x > 0` is seen at `sin θ = ẑ·u`. The RIS is a planar array spanned by two
//! in-plane axes `u` (the "x" axis of the element offsets) and `v` (the "z"
//! axis); its first element sits at distance `r1` and angle `ω0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};

pub type Point3 = nalgebra::Vector3<f64>;

const ACOS_SLACK: f64 = 1e-9;

/// Orientation of the RIS plane in the global frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RisPlane {
    #[default]
    Xz,
    Xy,
    Yz,
}

impl RisPlane {
    /// In-plane axes `(u, v)`.
    pub fn axes(self) -> (Point3, Point3) {
        match self {
            RisPlane::Xz => (Point3::x(), Point3::z()),
            RisPlane::Xy => (Point3::x(), Point3::y()),
            RisPlane::Yz => (Point3::y(), Point3::z()),
        }
    }
}

/// Serializable scene parameters; the `[scene]` table of the experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Inter-element spacing in meters; `λ/2` when absent.
    pub spacing: Option<f64>,
    /// Offset between the transmit and receive ULAs (along y); `2λ` when absent.
    pub tx_rx_gap: Option<f64>,
    pub bs_tx_antennas: usize,
    pub bs_rx_antennas: usize,
    pub user_antennas: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub ris_plane: RisPlane,
    pub bs_ris_angle_deg: f64,
    pub bs_ris_distance: f64,
    pub user_distance: f64,
    pub user_angle_deg: f64,
    pub target_range: f64,
    pub target_angle_deg: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            wavelength: 0.01,
            spacing: None,
            tx_rx_gap: None,
            bs_tx_antennas: 15,
            bs_rx_antennas: 10,
            user_antennas: 5,
            ris_rows: 10,
            ris_cols: 10,
            ris_plane: RisPlane::Xz,
            bs_ris_angle_deg: 30.0,
            bs_ris_distance: 5.0,
            user_distance: 80.0,
            user_angle_deg: 0.0,
            target_range: 50.0,
            target_angle_deg: 20.0,
        }
    }
}

/// Elevation/azimuth of a point as seen from the RIS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RisAngles {
    pub elevation: f64,
    pub azimuth: f64,
}

/// Fully resolved 3D scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bs_tx_positions: Vec<Point3>,
    pub bs_rx_positions: Vec<Point3>,
    /// Row-major `ris_rows × ris_cols` element positions.
    pub ris_element_positions: Vec<Point3>,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// In-plane RIS axes `(u, v)`; element offsets are measured along them.
    pub ris_axes: (Point3, Point3),
    /// User ULA element positions (first element is the user reference point).
    pub user_positions: Vec<Point3>,
    pub target_range: f64,
    pub target_angle: f64,
    pub bs_ris_angle: f64,
    pub bs_ris_distance: f64,
    pub wavelength: f64,
    pub element_spacing: f64,
}

fn ula_along_z(origin: Point3, count: usize, spacing: f64) -> Vec<Point3> {
    (0..count)
        .map(|n| origin + Point3::z() * (n as f64 * spacing))
        .collect()
}

/// Direction `(cos a, 0, sin a)` in the x–z plane.
fn xz_direction(angle: f64) -> Point3 {
    Point3::new(angle.cos(), 0.0, angle.sin())
}

impl Scene {
    pub fn from_config(cfg: &SceneConfig) -> Result<Self> {
        let lambda = cfg.wavelength;
        if !(lambda > 0.0) {
            return Err(JcasError::Config("wavelength must be positive".into()));
        }
        let d = cfg.spacing.unwrap_or(lambda / 2.0);
        let gap = cfg.tx_rx_gap.unwrap_or(2.0 * lambda);
        let omega0 = cfg.bs_ris_angle_deg.to_radians();
        let (u, v) = cfg.ris_plane.axes();
        let ris_origin = xz_direction(omega0) * cfg.bs_ris_distance;
        let mut ris = Vec::with_capacity(cfg.ris_rows * cfg.ris_cols);
        for r in 0..cfg.ris_rows {
            for col in 0..cfg.ris_cols {
                ris.push(ris_origin + u * (col as f64 * d) + v * (r as f64 * d));
            }
        }
        let user_origin = xz_direction(cfg.user_angle_deg.to_radians()) * cfg.user_distance;
        let scene = Scene {
            bs_tx_positions: ula_along_z(Point3::zeros(), cfg.bs_tx_antennas, d),
            bs_rx_positions: ula_along_z(Point3::new(0.0, gap, 0.0), cfg.bs_rx_antennas, d),
            ris_element_positions: ris,
            ris_rows: cfg.ris_rows,
            ris_cols: cfg.ris_cols,
            ris_axes: (u, v),
            user_positions: ula_along_z(user_origin, cfg.user_antennas, d),
            target_range: cfg.target_range,
            target_angle: cfg.target_angle_deg.to_radians(),
            bs_ris_angle: omega0,
            bs_ris_distance: cfg.bs_ris_distance,
            wavelength: lambda,
            element_spacing: d,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(JcasError::InfeasibleGeometry(msg.to_string()));
        if self.bs_tx_positions.is_empty() || self.bs_rx_positions.is_empty() {
            return bad("base station arrays must be nonempty");
        }
        if self.user_positions.is_empty() {
            return bad("user array must be nonempty");
        }
        if self.ris_rows * self.ris_cols != self.ris_element_positions.len() || self.ris_rows == 0 {
            return bad("RIS element count does not match rows x cols");
        }
        if !(self.bs_ris_distance > 0.0) || !(self.target_range > 0.0) {
            return bad("BS-RIS distance and target range must be positive");
        }
        if !(self.wavelength > 0.0) || !(self.element_spacing > 0.0) {
            return bad("wavelength and spacing must be positive");
        }
        if !(self.target_angle.abs() <= std::f64::consts::FRAC_PI_2) {
            return bad("target angle must lie in [-pi/2, pi/2]");
        }
        let normal = self.ris_normal();
        let p0 = self.ris_element_positions[0];
        let span = self.ris_rows.max(self.ris_cols) as f64 * self.element_spacing;
        if self
            .ris_element_positions
            .iter()
            .any(|p| (p - p0).dot(&normal).abs() > 1e-9 * span.max(1.0))
        {
            return bad("RIS elements are not coplanar");
        }
        Ok(())
    }

    pub fn m_tx(&self) -> usize {
        self.bs_tx_positions.len()
    }

    pub fn n_rx(&self) -> usize {
        self.bs_rx_positions.len()
    }

    pub fn n_user(&self) -> usize {
        self.user_positions.len()
    }

    pub fn ris_len(&self) -> usize {
        self.ris_element_positions.len()
    }

    pub fn ris_normal(&self) -> Point3 {
        self.ris_axes.0.cross(&self.ris_axes.1)
    }

    /// Same scene with the target moved to angle `theta`.
    pub fn with_target_angle(&self, theta: f64) -> Scene {
        Scene {
            target_angle: theta,
            ..self.clone()
        }
    }

    /// Target position on the circle of radius `target_range` at angle `theta`.
    pub fn target_position_at(&self, theta: f64) -> Point3 {
        xz_direction(theta) * self.target_range
    }

    pub fn target_position(&self) -> Point3 {
        self.target_position_at(self.target_angle)
    }

    /// Per-element offsets `(d_x, d_z)` from the first RIS element along the in-plane axes.
    pub fn ris_offsets(&self) -> Vec<(f64, f64)> {
        let p0 = self.ris_element_positions[0];
        let (u, v) = self.ris_axes;
        self.ris_element_positions
            .iter()
            .map(|p| ((p - p0).dot(&u), (p - p0).dot(&v)))
            .collect()
    }

    /// Angle at which the BS arrays see `point` (`sin θ` is the z-direction cosine).
    pub fn bs_angle_of(&self, point: &Point3) -> f64 {
        let dir = point - self.bs_tx_positions[0];
        (dir.z / dir.norm()).clamp(-1.0, 1.0).asin()
    }

    /// Angle at which the user ULA sees `point`.
    pub fn user_angle_of(&self, point: &Point3) -> f64 {
        let dir = point - self.user_positions[0];
        (dir.z / dir.norm()).clamp(-1.0, 1.0).asin()
    }
}

/// `rows = rx`, `cols = tx` matrix of Euclidean distances.
pub fn pairwise_distances(tx: &[Point3], rx: &[Point3]) -> Result<DMatrix<f64>> {
    if tx.is_empty() {
        return Err(JcasError::EmptyPoints("transmit positions"));
    }
    if rx.is_empty() {
        return Err(JcasError::EmptyPoints("receive positions"));
    }
    let mut out = DMatrix::zeros(rx.len(), tx.len());
    for (m, prx) in rx.iter().enumerate() {
        for (n, ptx) in tx.iter().enumerate() {
            let dist = (prx - ptx).norm();
            if dist <= 0.0 {
                return Err(JcasError::ZeroDistance { rx: m, tx: n });
            }
            out[(m, n)] = dist;
        }
    }
    Ok(out)
}

fn checked_acos(arg: f64, what: &str) -> Result<f64> {
    if !arg.is_finite() || arg.abs() > 1.0 + ACOS_SLACK {
        return Err(JcasError::InfeasibleGeometry(format!(
            "{what}: arccos argument {arg} outside [-1, 1]"
        )));
    }
    Ok(arg.clamp(-1.0, 1.0).acos())
}

/// Components of the RIS-to-point vector in the RIS frame `(along u, along v, along normal)`.
fn ris_frame_components(scene: &Scene, point: &Point3) -> (f64, f64, f64) {
    let delta = point - scene.ris_element_positions[0];
    let (u, v) = scene.ris_axes;
    (delta.dot(&u), delta.dot(&v), delta.dot(&scene.ris_normal()))
}

/// Elevation and azimuth of `point` seen from the RIS:
/// `elevation = acos(Δu / r2)` with `r2` the 3D distance and
/// `azimuth = acos(Δu / r_r)` with `r_r` the in-plane projected distance.
pub fn ris_angles_of_point(scene: &Scene, point: &Point3) -> Result<RisAngles> {
    let (du, dv, dn) = ris_frame_components(scene, point);
    let r2 = (du * du + dv * dv + dn * dn).sqrt();
    let rr = (du * du + dv * dv).sqrt();
    if r2 <= 0.0 || rr <= 0.0 {
        return Err(JcasError::InfeasibleGeometry(
            "point lies on the RIS normal through its first element".into(),
        ));
    }
    Ok(RisAngles {
        elevation: checked_acos(du / r2, "elevation")?,
        azimuth: checked_acos(du / rr, "azimuth")?,
    })
}

/// RIS angles of the target at the scene's AoA; with the canonical layout the
/// elevation argument is `(l_k cos θ_k − r1 cos ω0) / r2`.
pub fn ris_angles_of_target(scene: &Scene) -> Result<RisAngles> {
    ris_angles_of_point(scene, &scene.target_position())
}

/// RIS angles of the base station (first transmit element).
pub fn ris_angles_of_bs(scene: &Scene) -> Result<RisAngles> {
    ris_angles_of_point(scene, &scene.bs_tx_positions[0])
}

/// Path-length term `ϖ_i = d_x sin(el) cos(az) + d_z sin(az)` for every RIS element.
pub fn ris_path_terms(scene: &Scene, angles: RisAngles) -> Vec<f64> {
    let (se, ce) = (angles.elevation.sin(), angles.azimuth.cos());
    let sa = angles.azimuth.sin();
    scene
        .ris_offsets()
        .into_iter()
        .map(|(dx, dz)| dx * se * ce + dz * sa)
        .collect()
}

/// Derivatives of the RIS angles of the target with respect to `θ_k`.
pub fn ris_angle_derivatives(scene: &Scene) -> Result<(RisAngles, RisAngles)> {
    let theta = scene.target_angle;
    let angles = ris_angles_of_target(scene)?;
    let (du, dv, dn) = ris_frame_components(scene, &scene.target_position());
    // dT/dθ = l (-sin θ, 0, cos θ)
    let dt = Point3::new(-theta.sin(), 0.0, theta.cos()) * scene.target_range;
    let (u, v) = scene.ris_axes;
    let (ddu, ddv, ddn) = (dt.dot(&u), dt.dot(&v), dt.dot(&scene.ris_normal()));

    let r2 = (du * du + dv * dv + dn * dn).sqrt();
    let rr = (du * du + dv * dv).sqrt();
    let dr2 = (du * ddu + dv * ddv + dn * ddn) / r2;
    let drr = (du * ddu + dv * ddv) / rr;

    // sqrt(1 - cos²) from the orthogonal components, avoiding cancellation.
    let sin_el = (dv * dv + dn * dn).sqrt() / r2;
    let sin_az = dv.abs() / rr;
    if sin_el < 1e-12 || sin_az < 1e-12 {
        return Err(JcasError::InfeasibleGeometry(
            "RIS angle derivative is singular (target aligned with the RIS u-axis)".into(),
        ));
    }
    let d_cos_el = (ddu * r2 - du * dr2) / (r2 * r2);
    let d_cos_az = (ddu * rr - du * drr) / (rr * rr);
    Ok((
        angles,
        RisAngles {
            elevation: -d_cos_el / sin_el,
            azimuth: -d_cos_az / sin_az,
        },
    ))
}

/// `∂ϖ_i/∂θ_k` for every RIS element.
pub fn dw_dtheta_all(scene: &Scene) -> Result<Vec<f64>> {
    let (a, da) = ris_angle_derivatives(scene)?;
    let (se, ce) = a.elevation.sin_cos();
    let (sa, ca) = a.azimuth.sin_cos();
    Ok(scene
        .ris_offsets()
        .into_iter()
        .map(|(dx, dz)| {
            dx * (ce * ca * da.elevation - se * sa * da.azimuth) + dz * ca * da.azimuth
        })
        .collect())
}

/// `∂ϖ_i/∂θ_k` for one RIS element.
pub fn dw_dtheta(scene: &Scene, element_index: usize) -> Result<f64> {
    if element_index >= scene.ris_len() {
        return Err(JcasError::InvalidArgument(format!(
            "RIS element {element_index} out of range ({} elements)",
            scene.ris_len()
        )));
    }
    Ok(dw_dtheta_all(scene)?[element_index])
}
