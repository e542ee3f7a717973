//! Dual-polarized Rayleigh channels with cross-polarization leakage.
//!
//! Port ordering throughout the crate: BS ports `0..n_t` are vertically
//! polarized and `n_t..2n_t` horizontally; IOS diagonal entries `0..m` are the
//! vertical (reflection) responses and `m..2m` the horizontal (refraction)
//! responses. A reflect-side user receives the vertical polarization, a
//! refract-side user the horizontal one.

use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::{Complex, DMatrix, RowDVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, CMatrix, CRow, Real};
use crate::scenario::{Geometry, ScenarioConfig, Side};

/// XPD factors (leakage fractions) of the three link classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XpdFactors {
    pub bi: f64,
    pub iu: f64,
    pub bu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkClass {
    BsIos,
    IosUser,
    BsUser,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet<T: Real> {
    /// BS to IOS, `2m x 2n_t`, blocks `[vv vh; hv hh]`.
    pub h_bi: CMatrix<T>,
    /// IOS to user `k`, `1 x 2m`.
    pub h_iu: Vec<CRow<T>>,
    /// BS to user `k`, `1 x 2n_t`.
    pub h_bu: Vec<CRow<T>>,
    pub side_labels: Vec<Side>,
    pub xpd: XpdFactors,
}

impl<T: Real> ChannelSet<T> {
    pub fn n_t(&self) -> usize {
        self.h_bi.ncols() / 2
    }

    pub fn m_elems(&self) -> usize {
        self.h_bi.nrows() / 2
    }

    pub fn n_users(&self) -> usize {
        self.side_labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.h_bi.shape();
        if rows % 2 != 0 || cols % 2 != 0 {
            return Err(Error::Dimension(format!("h_bi has odd shape {rows}x{cols}")));
        }
        let k = self.n_users();
        if self.h_iu.len() != k || self.h_bu.len() != k {
            return Err(Error::Dimension(format!(
                "{k} users but {} IOS and {} direct channels",
                self.h_iu.len(),
                self.h_bu.len()
            )));
        }
        if self.h_iu.iter().any(|h| h.ncols() != rows) {
            return Err(Error::Dimension("h_iu length differs from 2m".into()));
        }
        if self.h_bu.iter().any(|h| h.ncols() != cols) {
            return Err(Error::Dimension("h_bu length differs from 2n_t".into()));
        }
        let finite = |z: &Complex<T>| z.re.is_finite() && z.im.is_finite();
        if !self.h_bi.iter().all(finite)
            || !self.h_iu.iter().all(|h| h.iter().all(finite))
            || !self.h_bu.iter().all(|h| h.iter().all(finite))
        {
            return Err(Error::NonFinite("channel set"));
        }
        Ok(())
    }

    /// Hash of the exact bit patterns of every entry.
    pub fn checksum(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        let mut feed = |z: &Complex<T>| {
            to_f64(z.re).to_bits().hash(&mut hasher);
            to_f64(z.im).to_bits().hash(&mut hasher);
        };
        self.h_bi.iter().for_each(&mut feed);
        self.h_iu.iter().flat_map(|h| h.iter()).for_each(&mut feed);
        self.h_bu.iter().flat_map(|h| h.iter()).for_each(&mut feed);
        self.side_labels.hash(&mut hasher);
        hasher.finish()
    }

    /// Copy in which refract-side users receive nothing through the surface.
    pub fn without_refraction(&self) -> Self {
        let mut out = self.clone();
        for (h, side) in out.h_iu.iter_mut().zip(&self.side_labels) {
            if *side == Side::Refract {
                h.fill(Complex::new(T::zero(), T::zero()));
            }
        }
        out
    }

    /// Co-polar and cross-polar energy of one link class.
    pub fn polar_energies(&self, link: LinkClass) -> (f64, f64) {
        let (n_t, m) = (self.n_t(), self.m_elems());
        let mut co = 0.0;
        let mut cross = 0.0;
        let mut add = |is_co: bool, z: &Complex<T>| {
            let e = to_f64(z.norm_sqr());
            if is_co {
                co += e;
            } else {
                cross += e;
            }
        };
        match link {
            LinkClass::BsIos => {
                for c in 0..2 * n_t {
                    for r in 0..2 * m {
                        add((r < m) == (c < n_t), &self.h_bi[(r, c)]);
                    }
                }
            }
            LinkClass::IosUser => {
                for (h, side) in self.h_iu.iter().zip(&self.side_labels) {
                    for (i, z) in h.iter().enumerate() {
                        add(co_polar(i, m, *side), z);
                    }
                }
            }
            LinkClass::BsUser => {
                for (h, side) in self.h_bu.iter().zip(&self.side_labels) {
                    for (j, z) in h.iter().enumerate() {
                        add(co_polar(j, n_t, *side), z);
                    }
                }
            }
        }
        (co, cross)
    }
}

/// Whether index `i` of a `2 half` long user channel matches the user's
/// receive polarization.
fn co_polar(i: usize, half: usize, side: Side) -> bool {
    (i < half) == (side == Side::Reflect)
}

fn cn<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

fn entry<T: Real>(amplitude: f64, g: (f64, f64)) -> Complex<T> {
    Complex::new(lit(amplitude * g.0), lit(amplitude * g.1))
}

/// Draws one realization of all channels.
///
/// Each co-polar entry is `sqrt(PL) sqrt(1-beta) g` and each cross-polar entry
/// `sqrt(PL) sqrt(beta) g` with `g ~ CN(0, 1)` i.i.d., so the expected co/cross
/// energy ratio of every link class is `(1-beta)/beta`.
pub fn synthesize_channels<T: Real, R: Rng + ?Sized>(
    config: &ScenarioConfig,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<ChannelSet<T>> {
    config.validate()?;
    let (n_t, m) = (config.n_t, config.m_elems);
    if geometry.element_positions.len() != m || geometry.user_positions.len() != config.n_users()
    {
        return Err(Error::Dimension("geometry does not match configuration".into()));
    }
    let pl = &config.path_loss;
    let split = |beta: f64, co: bool| if co { (1.0 - beta).sqrt() } else { beta.sqrt() };

    let bs = geometry.bs_position;
    let mut h_bi = DMatrix::zeros(2 * m, 2 * n_t);
    for r in 0..2 * m {
        let d = (geometry.element_positions[r % m] - bs).norm();
        let gain = pl.gain(d, pl.alpha_bi).sqrt();
        for c in 0..2 * n_t {
            let scale = gain * split(config.beta_bi, (r < m) == (c < n_t));
            h_bi[(r, c)] = entry(scale, cn(rng));
        }
    }

    let mut h_iu = Vec::with_capacity(config.n_users());
    let mut h_bu = Vec::with_capacity(config.n_users());
    for (user, side) in geometry.user_positions.iter().zip(&geometry.side_labels) {
        let iu = RowDVector::from_fn(2 * m, |_, i| {
            let d = (user - geometry.element_positions[i % m]).norm();
            let scale = pl.gain(d, pl.alpha_iu).sqrt() * split(config.beta_iu, co_polar(i, m, *side));
            entry(scale, cn(rng))
        });
        let d = (user - bs).norm();
        let direct = pl.direct_gain(d).sqrt();
        let bu = RowDVector::from_fn(2 * n_t, |_, j| {
            entry(direct * split(config.beta_bu, co_polar(j, n_t, *side)), cn(rng))
        });
        h_iu.push(iu);
        h_bu.push(bu);
    }

    let set = ChannelSet {
        h_bi,
        h_iu,
        h_bu,
        side_labels: geometry.side_labels.clone(),
        xpd: XpdFactors {
            bi: config.beta_bi,
            iu: config.beta_iu,
            bu: config.beta_bu,
        },
    };
    set.validate()?;
    Ok(set)
}

/// Sample-mean estimate of `E{|co|^2} / E{|cross|^2}` for one link class.
///
/// Returns `+inf` when the cross-polar energy vanishes and the configured
/// leakage is zero.
pub fn empirical_xpd<T: Real>(samples: &[ChannelSet<T>], link: LinkClass) -> Result<f64> {
    let first = samples.first().ok_or(Error::EmptySamples)?;
    let beta = match link {
        LinkClass::BsIos => first.xpd.bi,
        LinkClass::IosUser => first.xpd.iu,
        LinkClass::BsUser => first.xpd.bu,
    };
    let (co, cross) = samples
        .iter()
        .map(|s| s.polar_energies(link))
        .fold((0.0, 0.0), |acc, e| (acc.0 + e.0, acc.1 + e.1));
    if cross == 0.0 {
        return if beta == 0.0 {
            Ok(f64::INFINITY)
        } else {
            Err(Error::ZeroCrossPolar { beta })
        };
    }
    Ok(co / cross)
}
