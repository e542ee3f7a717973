//! Effective channels, SINR, rates, MSEs and the WMMSE surrogate.
//!
//! Rate and MSE routines take the per-user effective channels
//! `h_k = h_BU,k + h_IU,k G H_BI`; build them once with
//! [`effective_channels`] and reuse them for every metric.

use nalgebra::{Complex, DMatrix};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::ios::SurfaceResponse;
use crate::scalar::{czero, lit, CMatrix, CRow, CVector, Real};
use crate::scenario::Side;

/// Stacked precoder `[W_r, W_t]` over the `2 n_t` BS ports.
///
/// Column `k` is the beam of user `k`; [`Beamformer::split`] regroups the
/// columns into the reflect-side and refract-side blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer<T: Real> {
    pub w: CMatrix<T>,
}

impl<T: Real> Beamformer<T> {
    pub fn zeros(n_ports: usize, n_users: usize) -> Self {
        Self {
            w: DMatrix::zeros(n_ports, n_users),
        }
    }

    pub fn n_ports(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.w.ncols()
    }

    pub fn power(&self) -> T {
        self.w.norm_squared()
    }

    /// `(W_r, W_t)`.
    pub fn split(&self, sides: &[Side]) -> (CMatrix<T>, CMatrix<T>) {
        let pick = |side: Side| {
            let cols: Vec<usize> = (0..sides.len()).filter(|&k| sides[k] == side).collect();
            self.w.select_columns(&cols)
        };
        (pick(Side::Reflect), pick(Side::Refract))
    }

    /// Reassembles user-ordered columns from `W_r` and `W_t`.
    pub fn from_parts(w_r: &CMatrix<T>, w_t: &CMatrix<T>, sides: &[Side]) -> Result<Self> {
        let n_r = sides.iter().filter(|s| **s == Side::Reflect).count();
        if w_r.ncols() != n_r || w_t.ncols() != sides.len() - n_r || w_r.nrows() != w_t.nrows() {
            return Err(Error::Dimension("W_r / W_t do not match the side labels".into()));
        }
        let (mut r, mut t) = (0, 0);
        let mut w = DMatrix::zeros(w_r.nrows(), sides.len());
        for (k, side) in sides.iter().enumerate() {
            let col = match side {
                Side::Reflect => {
                    r += 1;
                    w_r.column(r - 1)
                }
                Side::Refract => {
                    t += 1;
                    w_t.column(t - 1)
                }
            };
            w.set_column(k, &col);
        }
        Ok(Self { w })
    }
}

/// Receiver scalars `u` and MSE weights `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxWeights<T: Real> {
    pub u: Vec<Complex<T>>,
    pub f: Vec<T>,
}

/// `h_k = h_BU,k + h_IU,k G H_BI` for the diagonal `g` of `G`.
pub fn effective_channel<T: Real>(channels: &ChannelSet<T>, g: &CVector<T>, k: usize) -> Result<CRow<T>> {
    if k >= channels.n_users() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    let h_iu = &channels.h_iu[k];
    if g.len() != h_iu.ncols() || channels.h_bi.nrows() != g.len() {
        return Err(Error::Dimension(format!(
            "surface diagonal has {} entries, channels expect {}",
            g.len(),
            h_iu.ncols()
        )));
    }
    let weighted = h_iu.component_mul(&g.transpose());
    Ok(&channels.h_bu[k] + weighted * &channels.h_bi)
}

pub fn effective_channels<T: Real>(
    channels: &ChannelSet<T>,
    surface: &SurfaceResponse<T>,
) -> Result<Vec<CRow<T>>> {
    (0..channels.n_users())
        .map(|k| match surface.diagonal_for(channels.side_labels[k]) {
            Some(g) => effective_channel(channels, g, k),
            None => Ok(channels.h_bu[k].clone()),
        })
        .collect()
}

fn check_dims<T: Real>(h: &[CRow<T>], w: &Beamformer<T>) -> Result<()> {
    if h.len() != w.n_users() {
        return Err(Error::Dimension(format!(
            "{} channels but {} beams",
            h.len(),
            w.n_users()
        )));
    }
    if h.iter().any(|row| row.ncols() != w.n_ports()) {
        return Err(Error::Dimension("channel length differs from port count".into()));
    }
    Ok(())
}

/// Received amplitudes `h_k W` for every beam.
fn responses<T: Real>(h_k: &CRow<T>, w: &Beamformer<T>) -> CRow<T> {
    h_k * &w.w
}

/// Signal-to-interference-plus-noise ratio of user `k`.
pub fn sinr<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, sigma2: T, k: usize) -> Result<T> {
    check_dims(h, w)?;
    let y = responses(&h[k], w);
    let signal = y[k].norm_sqr();
    let interference = y
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .fold(T::zero(), |acc, (_, z)| acc + z.norm_sqr());
    Ok(signal / (interference + sigma2))
}

/// `sum_k log2(1 + sinr_k)`, bit/s/Hz.
pub fn sum_rate<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, sigma2: T) -> Result<T> {
    (0..h.len()).try_fold(T::zero(), |acc, k| {
        Ok(acc + (T::one() + sinr(h, w, sigma2, k)?).log2())
    })
}

/// MSE of user `k` for receiver scalar `u_k`.
pub fn mse<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, u_k: Complex<T>, sigma2: T, k: usize) -> Result<T> {
    check_dims(h, w)?;
    let y = responses(&h[k], w);
    let u_conj = u_k.conj();
    let total = y.iter().fold(T::zero(), |acc, z| acc + (u_conj * z).norm_sqr());
    let two: T = lit(2.0);
    Ok(total - two * (u_conj * y[k]).re + u_k.norm_sqr() * sigma2 + T::one())
}

pub fn mses<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, u: &[Complex<T>], sigma2: T) -> Result<Vec<T>> {
    (0..h.len()).map(|k| mse(h, w, u[k], sigma2, k)).collect()
}

fn check_weights<T: Real>(aux: &AuxWeights<T>, mses: &[T]) -> Result<()> {
    if aux.f.len() != mses.len() {
        return Err(Error::Dimension("weights and MSEs differ in length".into()));
    }
    if let Some((user, f)) = aux.f.iter().enumerate().find(|(_, f)| !(**f > T::zero())) {
        return Err(Error::NonPositiveWeight {
            user,
            value: crate::scalar::to_f64(*f),
        });
    }
    Ok(())
}

/// WMMSE surrogate `sum_k (log2 f_k - f_k e_k)`.
pub fn surrogate<T: Real>(aux: &AuxWeights<T>, mses: &[T]) -> Result<T> {
    check_weights(aux, mses)?;
    Ok(aux
        .f
        .iter()
        .zip(mses)
        .fold(T::zero(), |acc, (&f, &e)| acc + f.log2() - f * e))
}

/// Natural-log surrogate `sum_k (ln f_k - f_k e_k)`. The closed-form weight
/// `f = 1/e` maximizes this form exactly, so it never decreases across any
/// block update of the alternating solver.
pub fn surrogate_nats<T: Real>(aux: &AuxWeights<T>, mses: &[T]) -> Result<T> {
    check_weights(aux, mses)?;
    Ok(aux
        .f
        .iter()
        .zip(mses)
        .fold(T::zero(), |acc, (&f, &e)| acc + f.ln() - f * e))
}

/// Power on the vertical ports (rows `0..n_t`) and the horizontal ports.
pub fn polarization_power<T: Real>(w: &Beamformer<T>, n_t: usize) -> (T, T) {
    let p_v = w.w.rows(0, n_t).norm_squared();
    let p_h = w.w.rows(n_t, w.n_ports() - n_t).norm_squared();
    (p_v, p_h)
}

/// Matched-filter beams `h_k^H`, scaled so the total power equals `p_bs`.
pub fn mrt_beamformer<T: Real>(h: &[CRow<T>], p_bs: T) -> Beamformer<T> {
    let n_ports = h.first().map_or(0, |r| r.ncols());
    let mut w = DMatrix::from_element(n_ports, h.len(), czero());
    for (k, row) in h.iter().enumerate() {
        w.set_column(k, &row.adjoint());
    }
    let power = w.norm_squared();
    if power > T::zero() {
        w *= Complex::new((p_bs / power).sqrt(), T::zero());
    }
    Beamformer { w }
}
