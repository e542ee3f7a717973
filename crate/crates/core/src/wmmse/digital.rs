//! Digital (BS) beamformer step: minimize `sum_k f_k e_k` subject to
//! `||W||_F^2 <= P`.
//!
//! With `M = sum_k f_k |u_k|^2 h_k^H h_k` the minimizer is
//! `W_k = u_k f_k (M + lambda I)^{-1} h_k^H`. One eigendecomposition of `M`
//! makes every evaluation of the transmit power `F(lambda)` cheap, so the
//! multiplier is found by bisection.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::metrics::{mses, AuxWeights, Beamformer};
use crate::scalar::{creal, lit, to_f64, CMatrix, CRow, Real};

const MAX_HALVINGS: usize = 200;

/// Eigendecomposition of `M` together with the projected right-hand sides.
#[derive(Clone, Debug)]
pub struct DigitalSolveWorkspace<T: Real> {
    q: CMatrix<T>,
    eigenvalues: Vec<T>,
    /// `Q^H [u_1 f_1 h_1^H, ..., u_K f_K h_K^H]`.
    projected: CMatrix<T>,
    /// Row energies of `projected`.
    num: Vec<T>,
}

impl<T: Real> DigitalSolveWorkspace<T> {
    pub fn new(h: &[CRow<T>], aux: &AuxWeights<T>) -> Result<Self> {
        let n = h.first().map_or(0, |r| r.ncols());
        if h.len() != aux.u.len() || h.len() != aux.f.len() {
            return Err(Error::Dimension("channels and weights differ in length".into()));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DMatrix::zeros(n, h.len());
        for (k, h_k) in h.iter().enumerate() {
            let scale = aux.f[k] * aux.u[k].norm_sqr();
            if scale > T::zero() {
                let hh = h_k.adjoint();
                m += (&hh * h_k) * creal(scale);
                rhs.set_column(k, &(hh * (aux.u[k] * creal(aux.f[k]))));
            }
        }
        if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("digital system matrix"));
        }
        // Enforce exact Hermitian symmetry before the eigensolver.
        let m = (&m + m.adjoint()) * creal(lit::<T>(0.5));
        let eig = SymmetricEigen::new(m);
        let q = eig.eigenvectors;
        let projected = q.adjoint() * rhs;
        let num = projected
            .row_iter()
            .map(|row| row.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()))
            .collect();
        Ok(Self {
            q,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            projected,
            num,
        })
    }

    /// Diagonal of `(Lambda + lambda I)^+`, dropping numerically null modes.
    fn inverse_diagonal(&self, lambda: T) -> Vec<T> {
        let top = self
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, &e| acc.max(e))
            + lambda;
        let floor = lit::<T>(1e-12) * top;
        self.eigenvalues
            .iter()
            .map(|&e| {
                let d = e.max(T::zero()) + lambda;
                if d > floor && d > T::zero() {
                    T::one() / d
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// Transmit power `F(lambda) = ||W(lambda)||_F^2`.
    pub fn power(&self, lambda: T) -> T {
        self.inverse_diagonal(lambda)
            .iter()
            .zip(&self.num)
            .fold(T::zero(), |acc, (&inv, &num)| acc + num * inv * inv)
    }

    /// A multiplier at which `F` is guaranteed not to exceed `p_bs`.
    pub fn lambda_upper_bound(&self, p_bs: T) -> T {
        let total = self.num.iter().fold(T::zero(), |acc, &x| acc + x);
        (total / p_bs).sqrt()
    }

    pub fn beamformer(&self, lambda: T) -> Beamformer<T> {
        let inv = self.inverse_diagonal(lambda);
        let mut scaled = self.projected.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= creal(inv[i]);
        }
        Beamformer { w: &self.q * scaled }
    }

    /// Smallest `lambda >= 0` with `F(lambda) <= p_bs`, to within the
    /// bisection tolerance. The returned multiplier is always feasible.
    pub fn multiplier(&self, p_bs: T) -> Result<T> {
        if self.power(T::zero()) <= p_bs {
            return Ok(T::zero());
        }
        let tol = lit::<T>(1e-12).max(lit::<T>(8.0) * T::default_epsilon()) * p_bs;
        let (mut lo, mut hi) = (T::zero(), self.lambda_upper_bound(p_bs));
        let two: T = lit(2.0);
        // Floating-point rounding can leave F(ub) a hair above P.
        while self.power(hi) > p_bs {
            hi *= two;
            if !hi.is_finite() {
                return Err(Error::NonFinite("power multiplier upper bound"));
            }
        }
        for _ in 0..MAX_HALVINGS {
            if p_bs - self.power(hi) <= tol || hi - lo <= T::default_epsilon() * hi {
                return Ok(hi);
            }
            let mid = (lo + hi) / two;
            if mid <= lo || mid >= hi {
                return Ok(hi);
            }
            if self.power(mid) <= p_bs {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::BisectionNotConverged {
            iterations: MAX_HALVINGS,
            residual: to_f64((p_bs - self.power(hi)) / p_bs),
        })
    }
}

/// Solves the digital subproblem; returns the beamformer and its multiplier.
pub fn solve_digital<T: Real>(h: &[CRow<T>], aux: &AuxWeights<T>, p_bs: T) -> Result<(Beamformer<T>, T)> {
    let ws = DigitalSolveWorkspace::new(h, aux)?;
    let lambda = ws.multiplier(p_bs)?;
    Ok((ws.beamformer(lambda), lambda))
}

/// `sum_k f_k e_k(W)`, the quantity the digital step minimizes.
pub fn digital_objective<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, aux: &AuxWeights<T>, sigma2: T) -> Result<T> {
    let e = mses(h, w, &aux.u, sigma2)?;
    Ok(aux.f.iter().zip(&e).fold(T::zero(), |acc, (&f, &e)| acc + f * e))
}

/// `lambda |P - ||W||^2|`.
pub fn complementary_slackness<T: Real>(lambda: T, w: &Beamformer<T>, p_bs: T) -> T {
    lambda * (p_bs - w.power()).abs()
}
