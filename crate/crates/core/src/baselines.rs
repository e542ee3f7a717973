//! Comparator schemes and the power-split analysis of a power-domain IOS.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::ios::PhaseCodebook;
use crate::scalar::Real;
use crate::scenario::{surface_amplitudes, Geometry, ScenarioConfig, Side};
use crate::wmmse::{run, Solution, SurfaceState, WmmseOptions};

/// Dual-polarized IOS: vertical block reflects, horizontal block refracts.
pub fn optimize_dualpol_ios<T: Real>(
    config: &ScenarioConfig,
    geometry: &Geometry,
    channels: &ChannelSet<T>,
    options: &WmmseOptions,
) -> Result<Solution<T>> {
    let (amp_vv, amp_hh) = surface_amplitudes(config, geometry);
    let init = SurfaceState::dual_pol(PhaseCodebook::new(config.n_bits)?, amp_vv, amp_hh)?;
    run(config, channels, init, options)
}

/// Power-domain IOS with a fixed reflect:refract power ratio `epsilon`.
pub fn optimize_power_domain<T: Real>(
    config: &ScenarioConfig,
    geometry: &Geometry,
    channels: &ChannelSet<T>,
    epsilon: f64,
    options: &WmmseOptions,
) -> Result<Solution<T>> {
    let (amp_vv, amp_hh) = surface_amplitudes(config, geometry);
    let init = SurfaceState::power_domain(
        PhaseCodebook::new(config.n_bits)?,
        epsilon,
        config.power_domain.phase_mode,
        &amp_vv,
        &amp_hh,
    )?;
    run(config, channels, init, options)
}

/// Reflect-only dual-polarized surface: both polarization blocks reflect,
/// and refract-side users keep only their direct links.
pub fn optimize_dualpol_ris<T: Real>(
    config: &ScenarioConfig,
    geometry: &Geometry,
    channels: &ChannelSet<T>,
    options: &WmmseOptions,
) -> Result<Solution<T>> {
    let (amp_vv, _) = surface_amplitudes(config, geometry);
    let init = SurfaceState::dual_pol(PhaseCodebook::new(config.n_bits)?, amp_vv.clone(), amp_vv)?;
    run(config, &channels.without_refraction(), init, options)
}

/// Direct links only.
pub fn optimize_cellular<T: Real>(
    config: &ScenarioConfig,
    channels: &ChannelSet<T>,
    options: &WmmseOptions,
) -> Result<Solution<T>> {
    run(config, channels, SurfaceState::Off, options)
}

/// Per-user SINRs of the direct link (`tau`) and of the surface path at full
/// power (`chi`), with the power split `epsilon` between the two sides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSplitModel {
    pub tau: Vec<f64>,
    pub chi: Vec<f64>,
    pub sides: Vec<Side>,
    pub epsilon: f64,
}

impl PowerSplitModel {
    pub fn new(tau: Vec<f64>, chi: Vec<f64>, sides: Vec<Side>, epsilon: f64) -> Result<Self> {
        if tau.len() != chi.len() || tau.len() != sides.len() {
            return Err(Error::Dimension("tau, chi and sides differ in length".into()));
        }
        if let Some(&x) = tau.iter().chain(&chi).find(|x| !(**x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig(format!("SINR values must be finite and non-negative, got {x}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        Ok(Self { tau, chi, sides, epsilon })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// Mirror image: every user changes side.
    pub fn swap_sides(&self) -> Self {
        Self {
            sides: self.sides.iter().map(|s| s.opposite()).collect(),
            ..self.clone()
        }
    }

    /// Fraction of the surface power sent to `side`.
    fn share(&self, side: Side) -> f64 {
        match side {
            Side::Reflect => self.epsilon / (1.0 + self.epsilon),
            Side::Refract => 1.0 / (1.0 + self.epsilon),
        }
    }
}

/// `sum_r log2(1 + tau + eps/(1+eps) chi) + sum_t log2(1 + tau + chi/(1+eps))`.
pub fn power_domain_rate(model: &PowerSplitModel) -> f64 {
    model
        .sides
        .iter()
        .zip(model.tau.iter().zip(&model.chi))
        .map(|(&side, (&tau, &chi))| (1.0 + tau + model.share(side) * chi).log2())
        .sum()
}

/// Derivative of [`power_domain_rate`] with respect to `epsilon`.
pub fn power_split_derivative(model: &PowerSplitModel) -> f64 {
    let d_share = 1.0 / (1.0 + model.epsilon).powi(2);
    let total: f64 = model
        .sides
        .iter()
        .zip(model.tau.iter().zip(&model.chi))
        .map(|(&side, (&tau, &chi))| {
            let term = chi * d_share / (1.0 + tau + model.share(side) * chi);
            match side {
                Side::Reflect => term,
                Side::Refract => -term,
            }
        })
        .sum();
    total / std::f64::consts::LN_2
}

pub const EPSILON_RANGE: (f64, f64) = (1e-3, 1e3);

/// Rate-maximizing split ratio by golden-section search over `ln epsilon`.
///
/// The rate is concave in `eps/(1+eps)`, which is monotone in `ln epsilon`,
/// so the search is over a unimodal function. Returns 1 when no user has a
/// surface path.
pub fn optimal_epsilon(model: &PowerSplitModel) -> f64 {
    if model.chi.iter().all(|&c| c == 0.0) {
        return 1.0;
    }
    let rate = |x: f64| power_domain_rate(&model.with_epsilon(x.exp()));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (EPSILON_RANGE.0.ln(), EPSILON_RANGE.1.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (rate(c), rate(d));
    while b - a > 1e-6 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rate(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = rate(d);
        }
    }
    ((a + b) / 2.0).exp()
}
