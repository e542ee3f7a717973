//! Surface phase/amplitude states and the coefficient matrices they produce.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, lit, to_f64, CMatrix, CVector, Real};
use crate::scenario::{PhaseMode, Side};

/// Uniform `n_bits` phase codebook `{2 pi l / 2^N}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCodebook {
    n_bits: u32,
}

impl PhaseCodebook {
    pub fn new(n_bits: u32) -> Result<Self> {
        if n_bits == 0 || n_bits > 16 {
            return Err(Error::InvalidConfig(format!(
                "codebook needs 1..=16 bits, got {n_bits}"
            )));
        }
        Ok(Self { n_bits })
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn len(&self) -> usize {
        1 << self.n_bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        TAU / self.len() as f64
    }

    pub fn phase(&self, index: usize) -> f64 {
        self.step() * index as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|l| self.phase(l)).collect()
    }

    pub fn phasors<T: Real>(&self) -> Vec<nalgebra::Complex<T>> {
        (0..self.len()).map(|l| cis(lit::<T>(self.phase(l)))).collect()
    }

    /// Index of the nearest codebook phase under circular distance. An exact
    /// midpoint resolves to the smaller of the two indices.
    pub fn quantize_index(&self, psi: f64) -> usize {
        let len = self.len();
        let x = psi.rem_euclid(TAU) / self.step();
        let lower = x.floor();
        let frac = x - lower;
        let lower = (lower as usize) % len;
        let upper = (lower + 1) % len;
        if frac < 0.5 {
            lower
        } else if frac > 0.5 {
            upper
        } else {
            lower.min(upper)
        }
    }

    pub fn quantize_phase(&self, psi: f64) -> f64 {
        self.phase(self.quantize_index(psi))
    }
}

/// Convenience constructor mirroring the codebook definition.
pub fn codebook(n_bits: u32) -> Result<PhaseCodebook> {
    PhaseCodebook::new(n_bits)
}

fn check_state(codebook: &PhaseCodebook, indices: &[usize], amps: &[f64]) -> Result<()> {
    if let Some(&index) = indices.iter().find(|&&i| i >= codebook.len()) {
        return Err(Error::PhaseIndex {
            index,
            size: codebook.len(),
        });
    }
    if let Some(&a) = amps.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Amplitude(a));
    }
    Ok(())
}

/// Dual-polarized IOS: independent vertical (reflection) and horizontal
/// (refraction) responses per element. Phases are stored as codebook indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPolIosState {
    pub codebook: PhaseCodebook,
    pub idx_vv: Vec<usize>,
    pub idx_hh: Vec<usize>,
    pub amp_vv: Vec<f64>,
    pub amp_hh: Vec<f64>,
}

impl DualPolIosState {
    pub fn new(
        codebook: PhaseCodebook,
        idx_vv: Vec<usize>,
        idx_hh: Vec<usize>,
        amp_vv: Vec<f64>,
        amp_hh: Vec<f64>,
    ) -> Result<Self> {
        let m = idx_vv.len();
        if idx_hh.len() != m || amp_vv.len() != m || amp_hh.len() != m {
            return Err(Error::Dimension("dual-polarized state blocks differ in length".into()));
        }
        check_state(&codebook, &idx_vv, &amp_vv)?;
        check_state(&codebook, &idx_hh, &amp_hh)?;
        Ok(Self {
            codebook,
            idx_vv,
            idx_hh,
            amp_vv,
            amp_hh,
        })
    }

    /// All phases zero.
    pub fn zero_phase(codebook: PhaseCodebook, amp_vv: Vec<f64>, amp_hh: Vec<f64>) -> Result<Self> {
        let m = amp_vv.len();
        Self::new(codebook, vec![0; m], vec![0; m], amp_vv, amp_hh)
    }

    pub fn m_elems(&self) -> usize {
        self.idx_vv.len()
    }

    pub fn psi_vv(&self) -> Vec<f64> {
        self.idx_vv.iter().map(|&l| self.codebook.phase(l)).collect()
    }

    pub fn psi_hh(&self) -> Vec<f64> {
        self.idx_hh.iter().map(|&l| self.codebook.phase(l)).collect()
    }

    /// Stacked indices `[vv; hh]`.
    pub fn indices(&self) -> Vec<usize> {
        self.idx_vv.iter().chain(&self.idx_hh).copied().collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.amp_vv.iter().chain(&self.amp_hh).copied().collect()
    }

    pub fn with_indices(&self, indices: &[usize]) -> Result<Self> {
        let m = self.m_elems();
        if indices.len() != 2 * m {
            return Err(Error::Dimension(format!("expected {} phases", 2 * m)));
        }
        Self::new(
            self.codebook,
            indices[..m].to_vec(),
            indices[m..].to_vec(),
            self.amp_vv.clone(),
            self.amp_hh.clone(),
        )
    }

    /// Diagonal `diag{g^vv_1..g^vv_M, g^hh_1..g^hh_M}`.
    pub fn diagonal<T: Real>(&self) -> CVector<T> {
        let amps = self.amplitudes();
        DVector::from_iterator(
            amps.len(),
            self.indices()
                .iter()
                .zip(&amps)
                .map(|(&l, &a)| cis(lit::<T>(self.codebook.phase(l))) * lit::<T>(a)),
        )
    }

    pub fn coefficient_matrix<T: Real>(&self) -> CMatrix<T> {
        DMatrix::from_diagonal(&self.diagonal())
    }
}

/// Power-domain IOS: each element splits power between reflection and
/// refraction with one fixed ratio `epsilon` (reflect : refract).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerDomainIosState {
    pub epsilon: f64,
    pub phase_mode: PhaseMode,
    pub codebook: PhaseCodebook,
    pub idx_r: Vec<usize>,
    pub idx_t: Vec<usize>,
    pub amp: Vec<f64>,
}

impl PowerDomainIosState {
    pub fn new(
        epsilon: f64,
        phase_mode: PhaseMode,
        codebook: PhaseCodebook,
        idx_r: Vec<usize>,
        idx_t: Vec<usize>,
        amp: Vec<f64>,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        let m = amp.len();
        if idx_r.len() != m || idx_t.len() != m {
            return Err(Error::Dimension("power-domain state blocks differ in length".into()));
        }
        if phase_mode == PhaseMode::Coupled && idx_r != idx_t {
            return Err(Error::InvalidConfig(
                "coupled phase mode needs identical reflect and refract phases".into(),
            ));
        }
        check_state(&codebook, &idx_r, &amp)?;
        check_state(&codebook, &idx_t, &amp)?;
        Ok(Self {
            epsilon,
            phase_mode,
            codebook,
            idx_r,
            idx_t,
            amp,
        })
    }

    pub fn m_elems(&self) -> usize {
        self.amp.len()
    }

    pub fn reflect_scale(&self) -> f64 {
        (self.epsilon / (1.0 + self.epsilon)).sqrt()
    }

    pub fn refract_scale(&self) -> f64 {
        (1.0 / (1.0 + self.epsilon)).sqrt()
    }

    /// `(reflect, refract)` diagonals, each of length `m`.
    pub fn power_domain_matrices<T: Real>(&self) -> (CVector<T>, CVector<T>) {
        let build = |idx: &[usize], scale: f64| {
            DVector::from_iterator(
                self.amp.len(),
                idx.iter()
                    .zip(&self.amp)
                    .map(|(&l, &a)| cis(lit::<T>(self.codebook.phase(l))) * lit::<T>(a * scale)),
            )
        };
        (
            build(&self.idx_r, self.reflect_scale()),
            build(&self.idx_t, self.refract_scale()),
        )
    }
}

/// Coefficients seen by each user: the surface diagonal of length `2m` that
/// multiplies the user's IOS channel.
#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceResponse<T: Real> {
    /// No surface (cellular).
    Off,
    /// One diagonal for every user.
    Shared(CVector<T>),
    /// Separate diagonals for reflect-side and refract-side users.
    PerSide {
        reflect: CVector<T>,
        refract: CVector<T>,
    },
}

impl<T: Real> SurfaceResponse<T> {
    pub fn diagonal_for(&self, side: Side) -> Option<&CVector<T>> {
        match self {
            SurfaceResponse::Off => None,
            SurfaceResponse::Shared(g) => Some(g),
            SurfaceResponse::PerSide { reflect, refract } => Some(match side {
                Side::Reflect => reflect,
                Side::Refract => refract,
            }),
        }
    }
}

impl DualPolIosState {
    pub fn response<T: Real>(&self) -> SurfaceResponse<T> {
        SurfaceResponse::Shared(self.diagonal())
    }
}

impl PowerDomainIosState {
    /// A power-domain element treats both polarizations alike, so each side's
    /// `2m` diagonal repeats its `m` coefficients for the two blocks.
    pub fn response<T: Real>(&self) -> SurfaceResponse<T> {
        let (r, t) = self.power_domain_matrices::<T>();
        let twice = |v: CVector<T>| {
            let m = v.len();
            DVector::from_fn(2 * m, |i, _| v[i % m])
        };
        SurfaceResponse::PerSide {
            reflect: twice(r),
            refract: twice(t),
        }
    }
}

/// Magnitudes of a diagonal, for diagnostics.
pub fn magnitudes<T: Real>(diag: &CVector<T>) -> Vec<f64> {
    diag.iter().map(|z| to_f64(crate::scalar::cabs(*z))).collect()
}
