//! Analog (IOS) step.
//!
//! For fixed `W`, `u`, `f` the weighted MSE restated in the surface diagonal
//! `g` is the quadratic `g^H (B o C^T) g + 2 Re{diag(V)^T g} + const`. Each
//! surface layout maps `g` linearly onto unit-modulus phase variables `z`,
//! giving a [`PhaseQuadratic`] that the continuous and discrete solvers share.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::ios::{DualPolIosState, PhaseCodebook};
use crate::metrics::{AuxWeights, Beamformer};
use crate::scalar::{arg, cabs, cis, creal, czero, lit, to_f64, CMatrix, CVector, Real};

/// `B`, `C`, `V` of the analog subproblem plus the `g`-independent remainder
/// of the weighted MSE, so that [`AnalogQuadratic::objective`] equals
/// `sum_k f_k e_k` exactly.
#[derive(Clone, Debug)]
pub struct AnalogQuadratic<T: Real> {
    pub b: CMatrix<T>,
    pub c: CMatrix<T>,
    pub v: CMatrix<T>,
    pub constant: T,
}

impl<T: Real> AnalogQuadratic<T> {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `B o C^T`.
    pub fn quadratic_matrix(&self) -> CMatrix<T> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.b[(i, j)] * self.c[(j, i)])
    }

    pub fn linear(&self) -> CVector<T> {
        self.v.diagonal()
    }

    /// `Tr(G^H B G C) + 2 Re Tr(G V) + const`.
    pub fn objective(&self, g: &CVector<T>) -> T {
        let gm = DMatrix::from_diagonal(g);
        let quad = (gm.adjoint() * &self.b * &gm * &self.c).trace().re;
        let lin = (&gm * &self.v).trace().re;
        quad + lit::<T>(2.0) * lin + self.constant
    }
}

/// Builds the analog quadratic over the users in `users`.
///
/// Users outside the subset contribute nothing, which lets per-side layouts
/// assemble separate problems for reflect and refract users.
pub fn build_analog_quadratic<T: Real>(
    channels: &ChannelSet<T>,
    w: &Beamformer<T>,
    aux: &AuxWeights<T>,
    sigma2: T,
    users: &[usize],
) -> Result<AnalogQuadratic<T>> {
    let n = channels.h_bi.nrows();
    if w.n_ports() != channels.h_bi.ncols() || w.n_users() != channels.n_users() {
        return Err(Error::Dimension("beamformer does not match the channel set".into()));
    }
    let hw = &channels.h_bi * &w.w;
    let c = &hw * hw.adjoint();
    let mut b = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    let mut constant = T::zero();
    let two: T = lit(2.0);
    for &k in users {
        let (u, f) = (aux.u[k], aux.f[k]);
        let h_iu = &channels.h_iu[k];
        let h_bu = &channels.h_bu[k];
        b += (h_iu.adjoint() * h_iu) * creal(f * u.norm_sqr());
        let direct = h_bu * &w.w;
        let cross = &hw * direct.adjoint();
        let signal = hw.column(k);
        v += (cross * u - signal) * h_iu * (u.conj() * f);
        let received = direct.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        constant += f
            * (u.norm_sqr() * (received + sigma2) - two * (u.conj() * direct[k]).re + T::one());
    }
    Ok(AnalogQuadratic { b, c, v, constant })
}

/// How each of the `2M` surface coefficients depends on the phase variables:
/// `g_i = scale_i z_{var_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableMap {
    pub var: Vec<usize>,
    pub scale: Vec<f64>,
    pub n_vars: usize,
}

impl VariableMap {
    /// One variable per coefficient (dual-polarized surface).
    pub fn identity(amplitudes: &[f64]) -> Self {
        Self {
            var: (0..amplitudes.len()).collect(),
            scale: amplitudes.to_vec(),
            n_vars: amplitudes.len(),
        }
    }

    /// Both polarization blocks driven by the same `M` variables, as on a
    /// power-domain element: `g = scale [amp o z; amp o z]`.
    pub fn folded(amplitudes: &[f64], scale: f64) -> Self {
        let m = amplitudes.len();
        Self {
            var: (0..2 * m).map(|i| i % m).collect(),
            scale: (0..2 * m).map(|i| scale * amplitudes[i % m]).collect(),
            n_vars: m,
        }
    }

    pub fn expand<T: Real>(&self, z: &CVector<T>) -> CVector<T> {
        DVector::from_iterator(
            self.var.len(),
            self.var.iter().zip(&self.scale).map(|(&p, &s)| z[p] * lit::<T>(s)),
        )
    }
}

/// `z^H A z + 2 Re{b^T z} + constant` over unit-modulus `z`.
#[derive(Clone, Debug)]
pub struct PhaseQuadratic<T: Real> {
    pub a: CMatrix<T>,
    pub b: CVector<T>,
    pub constant: T,
}

impl<T: Real> PhaseQuadratic<T> {
    /// Sums the analog quadratics of several user groups, each seen through
    /// its own variable map. All maps must share the variable count.
    pub fn assemble(parts: &[(&AnalogQuadratic<T>, &VariableMap)]) -> Result<Self> {
        let n = parts
            .first()
            .map(|(_, m)| m.n_vars)
            .ok_or_else(|| Error::Dimension("no analog quadratic to assemble".into()))?;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut constant = T::zero();
        for (quad, map) in parts {
            if map.n_vars != n || map.var.len() != quad.dim() {
                return Err(Error::Dimension("variable map does not fit the quadratic".into()));
            }
            let qm = quad.quadratic_matrix();
            let lin = quad.linear();
            for i in 0..quad.dim() {
                let si = lit::<T>(map.scale[i]);
                b[map.var[i]] += lin[i] * si;
                for j in 0..quad.dim() {
                    let sj = lit::<T>(map.scale[j]);
                    a[(map.var[i], map.var[j])] += qm[(i, j)] * (si * sj);
                }
            }
            constant += quad.constant;
        }
        let a = (&a + a.adjoint()) * creal(lit::<T>(0.5));
        Ok(Self { a, b, constant })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Evaluation in a fixed summation order; every solver compares
    /// candidates with this function so that ties resolve identically.
    pub fn objective(&self, z: &[Complex<T>]) -> T {
        let n = self.dim();
        let mut total = T::zero();
        for i in 0..n {
            let mut row = czero::<T>();
            for j in 0..n {
                row += self.a[(i, j)] * z[j];
            }
            total += (z[i].conj() * row).re + lit::<T>(2.0) * (self.b[i] * z[i]).re;
        }
        total + self.constant
    }

    pub fn objective_at_phases(&self, phases: &[T]) -> T {
        let z: Vec<_> = phases.iter().map(|&p| cis(p)).collect();
        self.objective(&z)
    }

    pub fn objective_at_indices(&self, codebook: &PhaseCodebook, indices: &[usize]) -> T {
        let table = codebook.phasors::<T>();
        let z: Vec<_> = indices.iter().map(|&l| table[l]).collect();
        self.objective(&z)
    }

    /// Coefficient of `z_m` with every other variable fixed:
    /// `conj(sum_{j != m} A_mj z_j) + b_m`.
    fn coupling(&self, z: &[Complex<T>], m: usize) -> Complex<T> {
        let mut s = czero::<T>();
        for (j, zj) in z.iter().enumerate() {
            if j != m {
                s += self.a[(m, j)] * zj;
            }
        }
        s.conj() + self.b[m]
    }

    /// A magnitude against which objective differences are judged.
    fn scale(&self) -> T {
        let a = self.a.iter().fold(T::zero(), |acc, z| acc + cabs(*z));
        let b = self.b.iter().fold(T::zero(), |acc, z| acc + cabs(*z));
        a + lit::<T>(2.0) * b + self.constant.abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSolution<T: Real> {
    pub phases: Vec<T>,
    pub objective: T,
    pub sweeps: usize,
}

pub const MAX_SWEEPS: usize = 200;

/// Cyclic coordinate descent on the relaxed phases. Each update sets
/// `psi_m = pi - arg(c_m)`, the exact minimizer of the only `z_m`-dependent
/// term `2 Re{z_m c_m}`; a variable with `c_m = 0` keeps its phase.
pub fn solve_continuous<T: Real>(q: &PhaseQuadratic<T>, init: &[T]) -> Result<ContinuousSolution<T>> {
    if init.len() != q.dim() {
        return Err(Error::Dimension("initial phases do not match the quadratic".into()));
    }
    let mut phases = init.to_vec();
    let mut z: Vec<_> = phases.iter().map(|&p| cis(p)).collect();
    let mut objective = q.objective(&z);
    let tol = lit::<T>(1e-8);
    for sweep in 1..=MAX_SWEEPS {
        for m in 0..q.dim() {
            let c = q.coupling(&z, m);
            if c.norm_sqr() > T::zero() {
                let candidate = T::pi() - arg(c);
                let zc = cis(candidate);
                // Accept only strict improvements of the local term so the
                // objective can never rise through rounding.
                if (zc * c).re < (z[m] * c).re {
                    phases[m] = candidate;
                    z[m] = zc;
                }
            }
        }
        let next = q.objective(&z);
        let decrease = objective - next;
        objective = next.min(objective);
        if decrease < tol * objective.abs().max(T::one()) {
            return Ok(ContinuousSolution {
                phases,
                objective,
                sweeps: sweep,
            });
        }
    }
    Ok(ContinuousSolution {
        phases,
        objective,
        sweeps: MAX_SWEEPS,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteMethod {
    /// Exhaustive enumeration when `n * n_bits <= 8`, branch and bound above.
    #[default]
    Auto,
    Exhaustive,
    BranchAndBound,
    /// Quantizes the continuous solution; diagnostic only, not optimal.
    NaiveRounding,
}

pub const EXHAUSTIVE_MAX_BITS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSolution<T: Real> {
    pub indices: Vec<usize>,
    pub objective: T,
    /// Leaves enumerated or nodes expanded.
    pub nodes: usize,
}

/// Minimizes the phase quadratic over the codebook.
///
/// `warm` is returned unchanged when no candidate is strictly better.
/// `relaxed` (continuous phases) seeds the incumbent of branch and bound and
/// is what naive rounding quantizes.
pub fn solve_discrete<T: Real>(
    q: &PhaseQuadratic<T>,
    codebook: &PhaseCodebook,
    warm: &[usize],
    relaxed: Option<&[T]>,
    method: DiscreteMethod,
) -> Result<DiscreteSolution<T>> {
    let n = q.dim();
    if warm.len() != n || relaxed.is_some_and(|r| r.len() != n) {
        return Err(Error::Dimension("warm start does not match the quadratic".into()));
    }
    if let Some(&index) = warm.iter().find(|&&l| l >= codebook.len()) {
        return Err(Error::PhaseIndex {
            index,
            size: codebook.len(),
        });
    }
    let method = match method {
        DiscreteMethod::Auto if n * codebook.n_bits() as usize <= EXHAUSTIVE_MAX_BITS => DiscreteMethod::Exhaustive,
        DiscreteMethod::Auto => DiscreteMethod::BranchAndBound,
        other => other,
    };
    let quantized = relaxed.map(|r| {
        r.iter()
            .map(|&p| codebook.quantize_index(to_f64(p)))
            .collect::<Vec<_>>()
    });
    let found = match method {
        DiscreteMethod::Exhaustive => exhaustive(q, codebook),
        DiscreteMethod::BranchAndBound => branch_and_bound(q, codebook, warm, quantized.as_deref()),
        DiscreteMethod::NaiveRounding => {
            let indices = quantized.unwrap_or_else(|| warm.to_vec());
            let objective = q.objective_at_indices(codebook, &indices);
            DiscreteSolution {
                indices,
                objective,
                nodes: 1,
            }
        }
        DiscreteMethod::Auto => unreachable!(),
    };
    let warm_objective = q.objective_at_indices(codebook, warm);
    if method != DiscreteMethod::NaiveRounding && warm_objective <= found.objective {
        return Ok(DiscreteSolution {
            indices: warm.to_vec(),
            objective: warm_objective,
            nodes: found.nodes,
        });
    }
    Ok(found)
}

/// Full enumeration in odometer order, tracking `y = A z` incrementally.
/// Near-minimal candidates are re-scored with the canonical objective.
pub fn exhaustive<T: Real>(q: &PhaseQuadratic<T>, codebook: &PhaseCodebook) -> DiscreteSolution<T> {
    let n = q.dim();
    let table = codebook.phasors::<T>();
    let size = codebook.len();
    let two: T = lit(2.0);
    let tol = lit::<T>(1e-9) * q.scale().max(lit::<T>(1e-30));

    let mut idx = vec![0usize; n];
    let mut z = vec![table[0]; n];
    let exact = |z: &[Complex<T>]| {
        let y = &q.a * DVector::from_column_slice(z);
        let value = z
            .iter()
            .zip(y.iter())
            .enumerate()
            .fold(T::zero(), |acc, (i, (zi, yi))| acc + (zi.conj() * yi).re + two * (q.b[i] * zi).re);
        (y, value)
    };
    let (mut y, mut value) = exact(&z);
    let mut best_seen = value;
    let mut best_idx = idx.clone();
    let mut best = q.objective(&z);
    let mut count = 1usize;

    loop {
        // Advance the odometer; each changed digit updates y and the value.
        let mut pos = 0;
        loop {
            if pos == n {
                return DiscreteSolution {
                    indices: best_idx,
                    objective: best,
                    nodes: count,
                };
            }
            let next = (idx[pos] + 1) % size;
            let delta = table[next] - z[pos];
            value += two * (delta.conj() * y[pos]).re
                + q.a[(pos, pos)].re * delta.norm_sqr()
                + two * (q.b[pos] * delta).re;
            for i in 0..n {
                y[i] += q.a[(i, pos)] * delta;
            }
            idx[pos] = next;
            z[pos] = table[next];
            if next != 0 {
                break;
            }
            pos += 1;
        }
        count += 1;
        if count % 4096 == 0 {
            (y, value) = exact(&z);
        }
        if value <= best_seen + tol {
            best_seen = best_seen.min(value);
            let canonical = q.objective(&z);
            if canonical < best {
                best = canonical;
                best_idx.copy_from_slice(&idx);
            }
        }
    }
}

/// Greedy per-variable codebook search until no single change improves.
fn discrete_descent<T: Real>(q: &PhaseQuadratic<T>, table: &[Complex<T>], start: &[usize]) -> Vec<usize> {
    let mut idx = start.to_vec();
    let mut z: Vec<_> = idx.iter().map(|&l| table[l]).collect();
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for m in 0..q.dim() {
            let c = q.coupling(&z, m);
            let mut best = idx[m];
            let mut best_value = (table[best] * c).re;
            for (l, w) in table.iter().enumerate() {
                let v = (*w * c).re;
                if v < best_value {
                    best = l;
                    best_value = v;
                }
            }
            if best != idx[m] {
                idx[m] = best;
                z[m] = table[best];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    idx
}

struct Node<T: Real> {
    bound: f64,
    seq: usize,
    prefix: Vec<usize>,
    /// `A[:, D] z_D`.
    y: CVector<T>,
    /// Objective of the fixed prefix without the constant.
    fixed: T,
}

impl<T: Real> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Node<T> {}

impl<T: Real> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Node<T> {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Lower bound on `z_U^H A_UU z_U` for the trailing block starting at `d`:
/// the better of the eigenvalue bound and a Gershgorin-type bound.
fn suffix_bounds<T: Real>(a: &CMatrix<T>) -> Vec<T> {
    let n = a.nrows();
    let mut out = vec![T::zero(); n + 1];
    for d in 0..n {
        let size = n - d;
        let sub = a.view((d, d), (size, size)).into_owned();
        let eig = SymmetricEigen::new(sub.clone());
        let lmin = eig.eigenvalues.iter().fold(T::max_value().unwrap(), |acc, &e| acc.min(e));
        let mut gersh = T::zero();
        for i in 0..size {
            gersh += sub[(i, i)].re;
            for j in 0..size {
                if i != j {
                    gersh -= cabs(sub[(i, j)]);
                }
            }
        }
        out[d] = (lmin * lit::<T>(size as f64)).max(gersh);
    }
    out
}

/// Best-first branch and bound over the variables in index order.
///
/// A node fixes `z_0..z_{d-1}`. Its bound adds, for every free variable,
/// the smallest codebook value of its linear coupling to the fixed part, and
/// a lower bound on the free block's own quadratic form.
pub fn branch_and_bound<T: Real>(
    q: &PhaseQuadratic<T>,
    codebook: &PhaseCodebook,
    warm: &[usize],
    quantized: Option<&[usize]>,
) -> DiscreteSolution<T> {
    let n = q.dim();
    let table = codebook.phasors::<T>();
    let two: T = lit(2.0);
    let slack = lit::<T>(1e-9) * q.scale().max(lit::<T>(1e-30));
    let tail = suffix_bounds(&q.a);

    let mut best_idx = discrete_descent(q, &table, warm);
    let mut best = q.objective_at_indices(codebook, &best_idx);
    if let Some(start) = quantized {
        let cand = discrete_descent(q, &table, start);
        let value = q.objective_at_indices(codebook, &cand);
        if value < best {
            best = value;
            best_idx = cand;
        }
    }

    let bound_of = |depth: usize, y: &CVector<T>, fixed: T| {
        let mut lb = fixed + tail[depth] + q.constant;
        for u in depth..n {
            let c = y[u].conj() + q.b[u];
            let min = table
                .iter()
                .fold(T::max_value().unwrap(), |acc, w| acc.min(two * (*w * c).re));
            lb += min;
        }
        lb
    };

    let mut heap = BinaryHeap::new();
    let root_y = DVector::zeros(n);
    heap.push(Node {
        bound: to_f64(bound_of(0, &root_y, T::zero())),
        seq: 0,
        prefix: Vec::new(),
        y: root_y,
        fixed: T::zero(),
    });
    let mut seq = 1usize;
    let mut nodes = 0usize;
    while let Some(node) = heap.pop() {
        if node.bound > to_f64(best + slack) {
            break;
        }
        nodes += 1;
        let d = node.prefix.len();
        if d == n {
            let value = q.objective_at_indices(codebook, &node.prefix);
            if value < best {
                best = value;
                best_idx = node.prefix;
            }
            continue;
        }
        for (l, w) in table.iter().enumerate() {
            let fixed = node.fixed
                + two * (w.conj() * node.y[d]).re
                + q.a[(d, d)].re
                + two * (q.b[d] * w).re;
            let mut y = node.y.clone();
            for i in 0..n {
                y[i] += q.a[(i, d)] * w;
            }
            let bound = bound_of(d + 1, &y, fixed);
            if bound <= best + slack {
                let mut prefix = node.prefix.clone();
                prefix.push(l);
                heap.push(Node {
                    bound: to_f64(bound),
                    seq,
                    prefix,
                    y,
                    fixed,
                });
                seq += 1;
            }
        }
    }
    DiscreteSolution {
        indices: best_idx,
        objective: best,
        nodes,
    }
}

/// Continuous step on a dual-polarized surface: `2M` phases, one per
/// diagonal entry, with fixed amplitudes.
pub fn solve_analog_continuous<T: Real>(
    quad: &AnalogQuadratic<T>,
    amplitudes: &[f64],
    init: &[T],
) -> Result<ContinuousSolution<T>> {
    let map = VariableMap::identity(amplitudes);
    let q = PhaseQuadratic::assemble(&[(quad, &map)])?;
    solve_continuous(&q, init)
}

/// Discrete step on a dual-polarized surface, returning the new state.
pub fn solve_analog_discrete<T: Real>(
    quad: &AnalogQuadratic<T>,
    warm: &DualPolIosState,
    relaxed: Option<&[T]>,
    method: DiscreteMethod,
) -> Result<(DualPolIosState, T)> {
    let map = VariableMap::identity(&warm.amplitudes());
    let q = PhaseQuadratic::assemble(&[(quad, &map)])?;
    let sol = solve_discrete(&q, &warm.codebook, &warm.indices(), relaxed, method)?;
    Ok((warm.with_indices(&sol.indices)?, sol.objective))
}
