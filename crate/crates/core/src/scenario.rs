//! Scenario configuration, deployment geometry and the IOS element gain model.
//!
//! Coordinates are in meters. The IOS lies in the plane through
//! `ios_center` spanned by the x and z axes; its normal points along +y, into
//! the reflection half-space. Reflect-side users therefore have y above the
//! plane and refract-side users below it.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the surface a user is served from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Reflect,
    Refract,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Reflect => Side::Refract,
            Side::Refract => Side::Reflect,
        }
    }
}

/// Element radiation model: amplitude `sqrt(G S F(in) F(out))`, with
/// `F(theta) = cos^q(theta)` in front of the element and zero behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElementGainModel {
    pub power_gain: f64,
    pub area: f64,
    pub pattern_exponent: f64,
}

impl Default for ElementGainModel {
    fn default() -> Self {
        Self {
            power_gain: 1.0,
            area: 1.0,
            pattern_exponent: 0.0,
        }
    }
}

impl ElementGainModel {
    pub fn isotropic() -> Self {
        Self::default()
    }

    /// Normalized radiation intensity for a direction whose cosine to the
    /// radiating normal is `cos_theta`.
    pub fn intensity(&self, cos_theta: f64) -> f64 {
        if self.pattern_exponent == 0.0 {
            return 1.0;
        }
        if cos_theta <= 0.0 {
            return 0.0;
        }
        cos_theta.min(1.0).powf(self.pattern_exponent)
    }
}

/// Large-scale path gain `C0 * d^(-alpha)` per link class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLoss {
    /// Gain at the 1 m reference distance, dB.
    pub c0_db: f64,
    pub alpha_bi: f64,
    pub alpha_iu: f64,
    pub alpha_bu: f64,
    /// Extra attenuation of the direct BS-user link (obstruction), dB.
    pub bu_blockage_db: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            c0_db: -30.0,
            alpha_bi: 2.0,
            alpha_iu: 2.0,
            alpha_bu: 3.5,
            bu_blockage_db: 40.0,
        }
    }
}

impl PathLoss {
    pub fn gain(&self, distance: f64, alpha: f64) -> f64 {
        10f64.powf(self.c0_db / 10.0) * distance.max(1.0).powf(-alpha)
    }

    /// Gain of the direct BS-user link including the blockage loss.
    pub fn direct_gain(&self, distance: f64) -> f64 {
        self.gain(distance, self.alpha_bu) * 10f64.powf(-self.bu_blockage_db / 10.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserLayout {
    /// Users of each side evenly spaced on a half circle; the two sides
    /// mirror each other through the IOS plane.
    Symmetric,
    /// Users at uniformly random angles on the half circle, drawn from the
    /// scenario seed.
    Random,
}

/// Layout parameters from which [`Geometry`] is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs_position: [f64; 3],
    pub ios_center: [f64; 3],
    pub element_spacing: f64,
    /// x coordinate of the user circle centers.
    pub user_center_x: f64,
    /// Distance of the user circle centers from the IOS plane.
    pub user_center_offset: f64,
    pub user_height: f64,
    pub user_radius: f64,
    pub layout: UserLayout,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            bs_position: [0.0, 0.0, 5.0],
            ios_center: [30.0, 0.0, 5.0],
            element_spacing: 0.5,
            user_center_x: 35.0,
            user_center_offset: 5.0,
            user_height: 1.5,
            user_radius: 5.0,
            layout: UserLayout::Symmetric,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Reflection and refraction phases are chosen separately.
    Independent,
    /// One phase per element shared by both modes.
    Coupled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerDomainConfig {
    pub epsilon: f64,
    pub phase_mode: PhaseMode,
}

impl Default for PowerDomainConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            phase_mode: PhaseMode::Independent,
        }
    }
}

/// All scalars describing one simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Dual-polarized BS antennas; the precoder has `2 n_t` ports.
    pub n_t: usize,
    /// IOS elements; the coefficient matrix has dimension `2 m_elems`.
    pub m_elems: usize,
    pub k_r: usize,
    pub k_t: usize,
    pub beta_bi: f64,
    pub beta_iu: f64,
    pub beta_bu: f64,
    /// Transmit power budget, W.
    pub p_bs: f64,
    /// Noise power, W.
    pub sigma2: f64,
    pub n_bits: u32,
    pub gain_model: ElementGainModel,
    pub geometry: GeometryConfig,
    pub path_loss: PathLoss,
    pub power_domain: PowerDomainConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_t: 4,
            m_elems: 4,
            k_r: 2,
            k_t: 2,
            beta_bi: 0.1,
            beta_iu: 0.1,
            beta_bu: 0.1,
            p_bs: 1.0,
            sigma2: 1e-11,
            n_bits: 2,
            gain_model: ElementGainModel::default(),
            geometry: GeometryConfig::default(),
            path_loss: PathLoss::default(),
            power_domain: PowerDomainConfig::default(),
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn n_users(&self) -> usize {
        self.k_r + self.k_t
    }

    pub fn n_ports(&self) -> usize {
        2 * self.n_t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_t == 0 || self.m_elems == 0 {
            return bad("n_t and m_elems must be positive".into());
        }
        let users = self.n_users();
        if users < 2 || users % 2 != 0 {
            return bad(format!("k_r + k_t must be even and at least 2, got {users}"));
        }
        for (name, beta) in [
            ("beta_bi", self.beta_bi),
            ("beta_iu", self.beta_iu),
            ("beta_bu", self.beta_bu),
        ] {
            if !(0.0..=1.0).contains(&beta) {
                return bad(format!("{name} = {beta} outside [0, 1]"));
            }
        }
        if !(self.p_bs > 0.0 && self.p_bs.is_finite()) {
            return bad(format!("p_bs must be positive, got {}", self.p_bs));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.n_bits == 0 || self.n_bits > 16 {
            return bad(format!("n_bits must lie in 1..=16, got {}", self.n_bits));
        }
        let pl = &self.path_loss;
        if [pl.c0_db, pl.alpha_bi, pl.alpha_iu, pl.alpha_bu, pl.bu_blockage_db]
            .iter()
            .any(|x| !x.is_finite())
            || pl.alpha_bi < 0.0
            || pl.alpha_iu < 0.0
            || pl.alpha_bu < 0.0
        {
            return bad("path-loss parameters must be finite with non-negative exponents".into());
        }
        let g = &self.gain_model;
        if g.power_gain < 0.0 || g.area < 0.0 || g.pattern_exponent < 0.0 {
            return bad("gain model parameters must be non-negative".into());
        }
        if !(self.power_domain.epsilon > 0.0) {
            return bad(format!(
                "power_domain.epsilon must be positive, got {}",
                self.power_domain.epsilon
            ));
        }
        let geo = &self.geometry;
        if geo.user_center_offset <= 0.0 || geo.user_radius < 0.0 || geo.element_spacing <= 0.0
        {
            return bad("geometry offsets and spacing must be positive".into());
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Copy with the user split changed, keeping `2K` fixed.
    pub fn with_user_split(&self, k_r: usize, k_t: usize) -> Self {
        Self {
            k_r,
            k_t,
            ..self.clone()
        }
    }
}

/// Positions of every node plus the side label of each user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_position: Point3<f64>,
    pub ios_center: Point3<f64>,
    /// Unit normal of the IOS plane pointing into the reflection half-space.
    pub ios_normal: Vector3<f64>,
    pub element_positions: Vec<Point3<f64>>,
    pub user_positions: Vec<Point3<f64>>,
    pub side_labels: Vec<Side>,
}

impl Geometry {
    /// Signed distance of `p` from the IOS plane, positive on the reflect side.
    pub fn plane_offset(&self, p: &Point3<f64>) -> f64 {
        (p - self.ios_center).dot(&self.ios_normal)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (k, (p, side)) in self.user_positions.iter().zip(&self.side_labels).enumerate() {
            let d = self.plane_offset(p);
            let ok = match side {
                Side::Reflect => d > 0.0,
                Side::Refract => d < 0.0,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "user {k} ({side:?}) lies in the wrong half-space (offset {d})"
                )));
            }
        }
        for (m, p) in self.element_positions.iter().enumerate() {
            if self.plane_offset(p).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("element {m} is off the IOS plane")));
            }
        }
        Ok(())
    }

    pub fn users_on(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.side_labels
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == side)
            .map(|(k, _)| k)
    }

    /// Centroid of the users on `side`, if any.
    pub fn side_centroid(&self, side: Side) -> Option<Point3<f64>> {
        let idx: Vec<usize> = self.users_on(side).collect();
        if idx.is_empty() {
            return None;
        }
        let sum = idx
            .iter()
            .fold(Vector3::zeros(), |acc, &k| acc + self.user_positions[k].coords);
        Some(Point3::from(sum / idx.len() as f64))
    }
}

/// Builds the deterministic deployment for `config`.
///
/// Reflect-side users are listed first, followed by refract-side users.
pub fn build_geometry(config: &ScenarioConfig) -> Result<Geometry> {
    if config.n_t == 0 || config.m_elems == 0 {
        return Err(Error::InvalidConfig("counts must be positive".into()));
    }
    let users = config.n_users();
    if users == 0 || users % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "k_r + k_t must be even and positive, got {users}"
        )));
    }
    let geo = &config.geometry;
    let bs = Point3::from(geo.bs_position);
    let center = Point3::from(geo.ios_center);
    let normal = Vector3::new(0.0, 1.0, 0.0);

    // Elements on a near-square grid in the x-z plane, centered on the IOS.
    let m = config.m_elems;
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let element_positions = (0..m)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let dx = (c as f64 - (cols as f64 - 1.0) / 2.0) * geo.element_spacing;
            let dz = (r as f64 - (rows as f64 - 1.0) / 2.0) * geo.element_spacing;
            center + Vector3::new(dx, 0.0, dz)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut user_positions = Vec::with_capacity(users);
    let mut side_labels = Vec::with_capacity(users);
    for (side, count) in [(Side::Reflect, config.k_r), (Side::Refract, config.k_t)] {
        let sign = if side == Side::Reflect { 1.0 } else { -1.0 };
        for i in 0..count {
            let phi = match geo.layout {
                UserLayout::Symmetric => PI * (i as f64 + 0.5) / count as f64,
                UserLayout::Random => rng.random_range(0.05..0.95) * PI,
            };
            let x = geo.user_center_x + geo.user_radius * phi.cos();
            let y = center.y + sign * (geo.user_center_offset + geo.user_radius * phi.sin());
            user_positions.push(Point3::new(x, y, geo.user_height));
            side_labels.push(side);
        }
    }

    let geometry = Geometry {
        bs_position: bs,
        ios_center: center,
        ios_normal: normal,
        element_positions,
        user_positions,
        side_labels,
    };
    geometry.check_invariants()?;
    Ok(geometry)
}

/// Amplitude of element `m` for a wave from `tx_point` leaving towards
/// `rx_point` in the given surface mode; the phase is applied elsewhere.
///
/// Incidence is measured against the reflect-side normal. Departure is
/// measured against the same normal for reflection and against its opposite
/// for refraction. The result is clamped to `[0, 1]`.
pub fn element_amplitude(
    geometry: &Geometry,
    gain: &ElementGainModel,
    m: usize,
    tx_point: &Point3<f64>,
    rx_point: &Point3<f64>,
    mode: Side,
) -> f64 {
    let p = geometry.element_positions[m];
    let n = geometry.ios_normal;
    let cos_to = |target: &Point3<f64>, normal: Vector3<f64>| {
        let d = target - p;
        let len = d.norm();
        if len == 0.0 {
            1.0
        } else {
            d.dot(&normal) / len
        }
    };
    let f_in = gain.intensity(cos_to(tx_point, n));
    let out_normal = match mode {
        Side::Reflect => n,
        Side::Refract => -n,
    };
    let f_out = gain.intensity(cos_to(rx_point, out_normal));
    let power = gain.power_gain * gain.area * f_in * f_out;
    power.max(0.0).sqrt().min(1.0)
}

/// Per-element amplitudes of the vertical (reflection) and horizontal
/// (refraction) responses.
///
/// Each block is evaluated from the BS towards the centroid of the users it
/// serves; a side without users is evaluated at boresight.
pub fn surface_amplitudes(
    config: &ScenarioConfig,
    geometry: &Geometry,
) -> (Vec<f64>, Vec<f64>) {
    let per_side = |side: Side| -> Vec<f64> {
        (0..geometry.element_positions.len())
            .map(|m| {
                let p = geometry.element_positions[m];
                let target = geometry.side_centroid(side).unwrap_or_else(|| match side {
                    Side::Reflect => p + geometry.ios_normal,
                    Side::Refract => p - geometry.ios_normal,
                });
                element_amplitude(
                    geometry,
                    &config.gain_model,
                    m,
                    &geometry.bs_position,
                    &target,
                    side,
                )
            })
            .collect()
    };
    (per_side(Side::Reflect), per_side(Side::Refract))
}
