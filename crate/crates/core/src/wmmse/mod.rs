//! Alternating WMMSE optimizer for joint digital (BS) and analog (IOS)
//! beamforming.
//!
//! Every outer iteration updates the receivers and weights in closed form,
//! then the surface phases (continuous coordinate descent followed by an
//! exact discrete solve) and finally the digital precoder.

pub mod analog;
pub mod digital;
pub mod receivers;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::ios::{DualPolIosState, PhaseCodebook, PowerDomainIosState, SurfaceResponse};
use crate::metrics::{
    effective_channels, mrt_beamformer, mses, polarization_power, sum_rate, surrogate, surrogate_nats,
    AuxWeights, Beamformer,
};
use crate::scalar::{lit, to_f64, CRow, Real};
use crate::scenario::{PhaseMode, ScenarioConfig, Side};

pub use analog::{
    branch_and_bound, build_analog_quadratic, exhaustive, solve_analog_continuous, solve_analog_discrete, solve_continuous, solve_discrete,
    AnalogQuadratic, ContinuousSolution, DiscreteMethod, DiscreteSolution, PhaseQuadratic, VariableMap,
};
pub use digital::{complementary_slackness, digital_objective, solve_digital, DigitalSolveWorkspace};
pub use receivers::{update_aux, update_receivers, update_weights};

use analog::DiscreteSolution as Discrete;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WmmseOptions {
    pub max_iterations: usize,
    /// Relative change of the surrogate that ends the loop.
    pub tolerance: f64,
    pub discrete: DiscreteMethod,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-4,
            discrete: DiscreteMethod::Auto,
        }
    }
}

/// Surface configuration carried through the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceState {
    Off,
    DualPol(DualPolIosState),
    PowerDomain(PowerDomainIosState),
}

impl SurfaceState {
    pub fn response<T: Real>(&self) -> SurfaceResponse<T> {
        match self {
            SurfaceState::Off => SurfaceResponse::Off,
            SurfaceState::DualPol(s) => s.response(),
            SurfaceState::PowerDomain(s) => s.response(),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            SurfaceState::PowerDomain(s) => Some(s.epsilon),
            _ => None,
        }
    }

    /// Zero-phase dual-polarized surface with the given amplitudes.
    pub fn dual_pol(codebook: PhaseCodebook, amp_vv: Vec<f64>, amp_hh: Vec<f64>) -> Result<Self> {
        Ok(SurfaceState::DualPol(DualPolIosState::zero_phase(codebook, amp_vv, amp_hh)?))
    }

    /// Zero-phase power-domain surface. Each element's amplitude is the RMS
    /// of its two polarization amplitudes.
    pub fn power_domain(
        codebook: PhaseCodebook,
        epsilon: f64,
        mode: PhaseMode,
        amp_vv: &[f64],
        amp_hh: &[f64],
    ) -> Result<Self> {
        let amp: Vec<f64> = amp_vv
            .iter()
            .zip(amp_hh)
            .map(|(a, b)| ((a * a + b * b) / 2.0).sqrt())
            .collect();
        let m = amp.len();
        Ok(SurfaceState::PowerDomain(PowerDomainIosState::new(
            epsilon,
            mode,
            codebook,
            vec![0; m],
            vec![0; m],
            amp,
        )?))
    }
}

/// One outer iteration, evaluated at the iterate entering it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    /// `sum_k (log2 f_k - f_k e_k)` after the receiver/weight update.
    pub surrogate: f64,
    pub sum_rate: f64,
    pub transmit_power: f64,
    /// Multiplier of the digital solve that produced this iterate.
    pub lambda: f64,
    /// Weighted MSE after the analog step of this iteration.
    pub analog_objective: Option<f64>,
    /// Natural-log surrogate after the weight update, the analog step and
    /// the digital step.
    pub step_surrogates: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl IterTrace {
    /// Writes one JSON object per iteration.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|source| Error::Io {
                path: "<trace>".into(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn surrogates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.surrogate).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Solution<T: Real> {
    pub beamformer: Beamformer<T>,
    pub surface: SurfaceState,
    pub sum_rate: T,
    pub lambda: T,
    pub trace: IterTrace,
}

impl<T: Real> Solution<T> {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn iterations(&self) -> usize {
        self.trace.iterations
    }

    /// `(p_v, p_h)` of the final precoder.
    pub fn polarization_power(&self) -> (f64, f64) {
        let (v, h) = polarization_power(&self.beamformer, self.beamformer.n_ports() / 2);
        (to_f64(v), to_f64(h))
    }
}

fn users_on(channels: &ChannelSet<impl Real>, side: Side) -> Vec<usize> {
    (0..channels.n_users())
        .filter(|&k| channels.side_labels[k] == side)
        .collect()
}

/// Solves one phase problem: coordinate descent from the current phases,
/// then the discrete search warm-started at the current indices.
fn phase_step<T: Real>(
    q: &PhaseQuadratic<T>,
    codebook: &PhaseCodebook,
    current: &[usize],
    method: DiscreteMethod,
) -> Result<Discrete<T>> {
    let init: Vec<T> = current.iter().map(|&l| lit::<T>(codebook.phase(l))).collect();
    let relaxed = solve_continuous(q, &init)?;
    solve_discrete(q, codebook, current, Some(&relaxed.phases), method)
}

/// Analog step for the current surface; returns the new state and the
/// weighted MSE it attains.
fn analog_step<T: Real>(
    state: &SurfaceState,
    channels: &ChannelSet<T>,
    w: &Beamformer<T>,
    aux: &AuxWeights<T>,
    sigma2: T,
    method: DiscreteMethod,
) -> Result<(SurfaceState, Option<T>)> {
    match state {
        SurfaceState::Off => Ok((SurfaceState::Off, None)),
        SurfaceState::DualPol(s) => {
            let all: Vec<usize> = (0..channels.n_users()).collect();
            let quad = build_analog_quadratic(channels, w, aux, sigma2, &all)?;
            let map = VariableMap::identity(&s.amplitudes());
            let q = PhaseQuadratic::assemble(&[(&quad, &map)])?;
            let sol = phase_step(&q, &s.codebook, &s.indices(), method)?;
            Ok((SurfaceState::DualPol(s.with_indices(&sol.indices)?), Some(sol.objective)))
        }
        SurfaceState::PowerDomain(s) => {
            let quad_r = build_analog_quadratic(channels, w, aux, sigma2, &users_on(channels, Side::Reflect))?;
            let quad_t = build_analog_quadratic(channels, w, aux, sigma2, &users_on(channels, Side::Refract))?;
            let map_r = VariableMap::folded(&s.amp, s.reflect_scale());
            let map_t = VariableMap::folded(&s.amp, s.refract_scale());
            let (idx_r, idx_t, objective) = match s.phase_mode {
                PhaseMode::Independent => {
                    let q_r = PhaseQuadratic::assemble(&[(&quad_r, &map_r)])?;
                    let q_t = PhaseQuadratic::assemble(&[(&quad_t, &map_t)])?;
                    let r = phase_step(&q_r, &s.codebook, &s.idx_r, method)?;
                    let t = phase_step(&q_t, &s.codebook, &s.idx_t, method)?;
                    (r.indices, t.indices, r.objective + t.objective)
                }
                PhaseMode::Coupled => {
                    let q = PhaseQuadratic::assemble(&[(&quad_r, &map_r), (&quad_t, &map_t)])?;
                    let sol = phase_step(&q, &s.codebook, &s.idx_r, method)?;
                    (sol.indices.clone(), sol.indices, sol.objective)
                }
            };
            let next = PowerDomainIosState::new(s.epsilon, s.phase_mode, s.codebook, idx_r, idx_t, s.amp.clone())?;
            Ok((SurfaceState::PowerDomain(next), Some(objective)))
        }
    }
}

fn ln_surrogate<T: Real>(h: &[CRow<T>], w: &Beamformer<T>, aux: &AuxWeights<T>, sigma2: T) -> Result<f64> {
    Ok(to_f64(surrogate_nats(aux, &mses(h, w, &aux.u, sigma2)?)?))
}

/// Runs the alternating optimization from `initial` with MRT beams.
///
/// Returns the final iterate when the surrogate settles; otherwise the
/// iterate with the highest sum rate and `converged = false`.
pub fn run<T: Real>(
    config: &ScenarioConfig,
    channels: &ChannelSet<T>,
    initial: SurfaceState,
    options: &WmmseOptions,
) -> Result<Solution<T>> {
    channels.validate()?;
    let sigma2: T = lit(config.sigma2);
    let p_bs: T = lit(config.p_bs);
    let tol = options.tolerance;

    let mut state = initial;
    let mut h = effective_channels(channels, &state.response())?;
    let mut w = mrt_beamformer(&h, p_bs);
    let mut lambda = T::zero();
    let mut trace = IterTrace::default();
    let mut previous: Option<f64> = None;
    let mut best: Option<(T, Beamformer<T>, SurfaceState, T)> = None;

    for iteration in 1..=options.max_iterations {
        let aux = update_aux(&h, &w, sigma2)?;
        let s = to_f64(surrogate(&aux, &mses(&h, &w, &aux.u, sigma2)?)?);
        let rate = sum_rate(&h, &w, sigma2)?;
        if !rate.is_finite() || !s.is_finite() {
            return Err(Error::NonFinite("sum rate"));
        }
        if best.as_ref().is_none_or(|b| rate > b.0) {
            best = Some((rate, w.clone(), state.clone(), lambda));
        }
        let mut record = IterRecord {
            iteration,
            surrogate: s,
            sum_rate: to_f64(rate),
            transmit_power: to_f64(w.power()),
            lambda: to_f64(lambda),
            analog_objective: None,
            step_surrogates: None,
        };
        if let Some(prev) = previous {
            if (s - prev).abs() <= tol * prev.abs().max(1.0) {
                trace.records.push(record);
                trace.converged = true;
                trace.iterations = iteration;
                return Ok(Solution {
                    beamformer: w,
                    surface: state,
                    sum_rate: rate,
                    lambda,
                    trace,
                });
            }
        }
        previous = Some(s);

        let after_aux = ln_surrogate(&h, &w, &aux, sigma2)?;
        let (next_state, analog_objective) = analog_step(&state, channels, &w, &aux, sigma2, options.discrete)?;
        state = next_state;
        h = effective_channels(channels, &state.response())?;
        let after_analog = ln_surrogate(&h, &w, &aux, sigma2)?;

        let (candidate, candidate_lambda) = solve_digital(&h, &aux, p_bs)?;
        // The previous precoder is feasible, so the solve can only lose to it
        // through rounding; keep whichever has the lower weighted MSE.
        if digital_objective(&h, &candidate, &aux, sigma2)? <= digital_objective(&h, &w, &aux, sigma2)? {
            w = candidate;
            lambda = candidate_lambda;
        }
        let after_digital = ln_surrogate(&h, &w, &aux, sigma2)?;

        record.analog_objective = analog_objective.map(to_f64);
        record.step_surrogates = Some([after_aux, after_analog, after_digital]);
        trace.records.push(record);
    }

    // Out of iterations: score the last iterate too, then return the best.
    let rate = sum_rate(&h, &w, sigma2)?;
    if best.as_ref().is_none_or(|b| rate > b.0) {
        best = Some((rate, w, state, lambda));
    }
    trace.iterations = options.max_iterations;
    trace.converged = false;
    let (sum_rate, beamformer, surface, lambda) = best.ok_or(Error::InvalidConfig("max_iterations must be positive".into()))?;
    Ok(Solution {
        beamformer,
        surface,
        sum_rate,
        lambda,
        trace,
    })
}

/// Pure WMMSE on given channels with the surface switched off.
pub fn run_cellular<T: Real>(config: &ScenarioConfig, channels: &ChannelSet<T>, options: &WmmseOptions) -> Result<Solution<T>> {
    run(config, channels, SurfaceState::Off, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::XpdFactors;
    use crate::ios::codebook;
    use nalgebra::{Complex, DMatrix, RowDVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rc(rng: &mut ChaCha8Rng) -> Complex<f64> {
        Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_channels(seed: u64, n_t: usize, m: usize, sides: &[Side]) -> ChannelSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ChannelSet {
            h_bi: DMatrix::from_fn(2 * m, 2 * n_t, |_, _| rc(&mut rng)),
            h_iu: sides.iter().map(|_| RowDVector::from_fn(2 * m, |_, _| rc(&mut rng))).collect(),
            h_bu: sides.iter().map(|_| RowDVector::from_fn(2 * n_t, |_, _| rc(&mut rng) * 0.3)).collect(),
            side_labels: sides.to_vec(),
            xpd: XpdFactors { bi: 0.1, iu: 0.1, bu: 0.1 },
        }
    }

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            n_t: 2,
            m_elems: 2,
            sigma2: 0.1,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn trace_is_monotone_and_power_feasible() {
        let sides = [Side::Reflect, Side::Reflect, Side::Refract, Side::Refract];
        let config = small_config();
        for seed in 0..5 {
            let ch = random_channels(seed, 2, 2, &sides);
            let init = SurfaceState::dual_pol(codebook(2).unwrap(), vec![1.0; 2], vec![1.0; 2]).unwrap();
            let sol = run(&config, &ch, init, &WmmseOptions::default()).unwrap();
            let s = sol.trace.surrogates();
            for pair in s.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-10 * pair[0].abs().max(1.0));
            }
            assert!(sol.beamformer.power() <= config.p_bs * (1.0 + 1e-9));
            for r in &sol.trace.records {
                assert!((r.surrogate - (r.sum_rate - 4.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn power_domain_layouts_run() {
        let sides = [Side::Reflect, Side::Refract];
        let config = small_config();
        let ch = random_channels(9, 2, 2, &sides);
        for mode in [PhaseMode::Independent, PhaseMode::Coupled] {
            let init = SurfaceState::power_domain(codebook(2).unwrap(), 1.0, mode, &[1.0; 2], &[1.0; 2]).unwrap();
            let sol = run(&config, &ch, init, &WmmseOptions::default()).unwrap();
            assert!(sol.sum_rate > 0.0);
            if let SurfaceState::PowerDomain(s) = &sol.surface {
                if mode == PhaseMode::Coupled {
                    assert_eq!(s.idx_r, s.idx_t);
                }
            } else {
                panic!("layout changed");
            }
        }
    }

    #[test]
    fn trace_serializes_as_json_lines() {
        let sides = [Side::Reflect, Side::Refract];
        let ch = random_channels(3, 2, 2, &sides);
        let sol = run_cellular(&small_config(), &ch, &WmmseOptions::default()).unwrap();
        let mut buf = Vec::new();
        sol.trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), sol.trace.records.len());
        for line in text.lines() {
            let r: IterRecord = serde_json::from_str(line).unwrap();
            assert!(r.sum_rate >= 0.0);
        }
    }
}
