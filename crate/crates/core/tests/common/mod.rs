//! Instance generators and independent reference solvers shared by the
//! integration tests. Nothing here calls into the solver paths under test.

#![allow(dead_code)]

use iosim_core::channel::{ChannelSet, XpdFactors};
use iosim_core::metrics::{AuxWeights, Beamformer};
use iosim_core::scenario::Side;
use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rc(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<RowDVector<C64>> {
    (0..k).map(|_| RowDVector::from_fn(n, |_, _| rc(rng))).collect()
}

pub fn random_aux(rng: &mut ChaCha8Rng, k: usize) -> AuxWeights<f64> {
    AuxWeights {
        u: (0..k).map(|_| rc(rng)).collect(),
        f: (0..k).map(|_| rng.random_range(0.5..3.0)).collect(),
    }
}

/// Unit-variance-scale random channels with `direct` scaling the BS-user links.
pub fn random_channels(seed: u64, n_t: usize, m: usize, sides: &[Side], direct: f64) -> ChannelSet<f64> {
    let mut r = rng(seed);
    ChannelSet {
        h_bi: DMatrix::from_fn(2 * m, 2 * n_t, |_, _| rc(&mut r)),
        h_iu: sides.iter().map(|_| RowDVector::from_fn(2 * m, |_, _| rc(&mut r))).collect(),
        h_bu: sides
            .iter()
            .map(|_| RowDVector::from_fn(2 * n_t, |_, _| rc(&mut r) * direct))
            .collect(),
        side_labels: sides.to_vec(),
        xpd: XpdFactors { bi: 0.1, iu: 0.1, bu: 0.1 },
    }
}

/// `h_k = h_bu + sum_i h_iu[i] g[i] H_bi[i, :]`, written out entry by entry.
pub fn cascade(ch: &ChannelSet<f64>, g: &[C64], k: usize) -> RowDVector<C64> {
    let n = ch.h_bi.ncols();
    RowDVector::from_fn(n, |_, j| {
        let mut acc = ch.h_bu[k][j];
        for (i, gi) in g.iter().enumerate() {
            acc += ch.h_iu[k][i] * gi * ch.h_bi[(i, j)];
        }
        acc
    })
}

/// `sum_k f_k e_k` with `e_k = sum_i |conj(u_k) h_k w_i|^2 - 2 Re(conj(u_k) h_k w_k) + |u_k|^2 s2 + 1`.
pub fn weighted_mse(h: &[RowDVector<C64>], w: &DMatrix<C64>, aux: &AuxWeights<f64>, sigma2: f64) -> f64 {
    let mut total = 0.0;
    for (k, h_k) in h.iter().enumerate() {
        let u = aux.u[k].conj();
        let mut e = aux.u[k].norm_sqr() * sigma2 + 1.0;
        for i in 0..w.ncols() {
            let mut y = C64::new(0.0, 0.0);
            for j in 0..w.nrows() {
                y += h_k[j] * w[(j, i)];
            }
            e += (u * y).norm_sqr();
            if i == k {
                e -= 2.0 * (u * y).re;
            }
        }
        total += aux.f[k] * e;
    }
    total
}

pub fn rate(h: &[RowDVector<C64>], w: &DMatrix<C64>, sigma2: f64) -> f64 {
    (0..h.len())
        .map(|k| {
            let y: Vec<C64> = (0..w.ncols())
                .map(|i| (0..w.nrows()).map(|j| h[k][j] * w[(j, i)]).sum())
                .collect();
            let signal = y[k].norm_sqr();
            let rest: f64 = y.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, z)| z.norm_sqr()).sum();
            (1.0 + signal / (rest + sigma2)).log2()
        })
        .sum()
}

fn quadratic_parts(h: &[RowDVector<C64>], aux: &AuxWeights<f64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = h[0].ncols();
    let mut m = DMatrix::zeros(n, n);
    let mut r = DMatrix::zeros(n, h.len());
    for (k, h_k) in h.iter().enumerate() {
        m += h_k.adjoint() * h_k * C64::new(aux.f[k] * aux.u[k].norm_sqr(), 0.0);
        r.set_column(k, &(h_k.adjoint() * (aux.u[k] * aux.f[k])));
    }
    (m, r)
}

fn largest_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let mut v = DVector::from_element(m.nrows(), C64::new(1.0, 0.3));
    let mut lambda = 0.0;
    for _ in 0..500 {
        let next = m * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.norm();
        v = next / C64::new(norm, 0.0);
    }
    lambda
}

/// FISTA on `min sum_k f_k e_k(W)` over the ball `||W||_F^2 <= p`.
pub fn projected_gradient(h: &[RowDVector<C64>], aux: &AuxWeights<f64>, p: f64, iterations: usize) -> DMatrix<C64> {
    let (m, r) = quadratic_parts(h, aux);
    let step = 1.0 / (largest_eigenvalue(&m) * 1.01);
    let project = |w: DMatrix<C64>| {
        let norm2 = w.norm_squared();
        if norm2 > p {
            w * C64::new((p / norm2).sqrt(), 0.0)
        } else {
            w
        }
    };
    let mut w = DMatrix::zeros(m.nrows(), h.len());
    let mut y = w.clone();
    let mut t: f64 = 1.0;
    for _ in 0..iterations {
        let grad = &m * &y - &r;
        let next = project(&y - grad * C64::new(step, 0.0));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &w) * C64::new((t - 1.0) / t_next, 0.0);
        w = next;
        t = t_next;
    }
    w
}

/// Textbook WMMSE with the multiplier found by bisection over direct linear
/// solves. Stops on the same relative surrogate rule as the optimizer.
pub fn reference_wmmse(h: &[RowDVector<C64>], p: f64, sigma2: f64, tol: f64, max_iter: usize) -> (DMatrix<C64>, f64) {
    let n = h[0].ncols();
    let k = h.len();
    let mut w = DMatrix::from_fn(n, k, |j, i| h[i][j].conj());
    let scale = (p / w.norm_squared()).sqrt();
    w *= C64::new(scale, 0.0);
    let mut previous: Option<f64> = None;
    for _ in 0..max_iter {
        let mut u = Vec::with_capacity(k);
        let mut f = Vec::with_capacity(k);
        for (i, h_i) in h.iter().enumerate() {
            let y = h_i * &w;
            let total: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() + sigma2;
            let u_i = y[i] / total;
            let e = 1.0 - y[i].norm_sqr() / total;
            u.push(u_i);
            f.push(1.0 / e);
        }
        let surrogate = rate(h, &w, sigma2) - k as f64;
        if let Some(prev) = previous {
            if (surrogate - prev).abs() <= tol * prev.abs().max(1.0) {
                break;
            }
        }
        previous = Some(surrogate);
        let aux = AuxWeights { u, f };
        let (m, r) = quadratic_parts(h, &aux);
        let solve = |lambda: f64| -> DMatrix<C64> {
            let a = &m + DMatrix::identity(n, n) * C64::new(lambda, 0.0);
            a.lu().solve(&r).expect("regularized system is invertible")
        };
        let unconstrained = (&m).clone().lu().solve(&r);
        w = match unconstrained {
            Some(sol) if sol.norm_squared() <= p && sol.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => sol,
            _ => {
                let (mut lo, mut hi) = (0.0, 1.0);
                while solve(hi).norm_squared() > p {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if solve(mid).norm_squared() > p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                solve(hi)
            }
        };
    }
    let r = rate(h, &w, sigma2);
    (w, r)
}

pub fn beamformer(w: DMatrix<C64>) -> Beamformer<f64> {
    Beamformer { w }
}

/// Mean and standard error of `b - a` over paired samples.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
