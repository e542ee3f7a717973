//! Closed-form receiver and weight updates.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::metrics::{AuxWeights, Beamformer};
use crate::scalar::{czero, to_f64, CRow, Real};

fn is_silent<T: Real>(h: &CRow<T>) -> bool {
    h.iter().all(|z| z.norm_sqr() == T::zero())
}

/// MMSE receivers `u_k = h_k W^(k) / (||h_k W||^2 + sigma^2)`.
///
/// A user whose effective channel is identically zero gets `u_k = 0`.
pub fn update_receivers<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, sigma2: T) -> Vec<Complex<T>> {
    h.iter()
        .enumerate()
        .map(|(k, h_k)| {
            if is_silent(h_k) {
                return czero();
            }
            let y = h_k * &w.w;
            let received = y.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
            y[k] / (received + sigma2)
        })
        .collect()
}

/// MSE weights `f_k = 1 / (1 - u_k (W^(k))^H h_k^H)`.
///
/// Users with a zero channel get weight 1. A non-positive denominator means
/// `u` is not the MMSE receiver for this `W`.
pub fn update_weights<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, u: &[Complex<T>]) -> Result<Vec<T>> {
    h.iter()
        .enumerate()
        .map(|(k, h_k)| {
            if is_silent(h_k) {
                return Ok(T::one());
            }
            let signal = (h_k * w.w.column(k))[0];
            let denominator = T::one() - (u[k] * signal.conj()).re;
            if denominator > T::zero() && denominator.is_finite() {
                Ok(T::one() / denominator)
            } else {
                Err(Error::InconsistentReceiver {
                    user: k,
                    denominator: to_f64(denominator),
                })
            }
        })
        .collect()
}

/// Both updates in sequence.
pub fn update_aux<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, sigma2: T) -> Result<AuxWeights<T>> {
    let u = update_receivers(h, w, sigma2);
    let f = update_weights(h, w, &u)?;
    Ok(AuxWeights { u, f })
}
