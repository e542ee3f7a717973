//! Exit criteria. Runs every criterion in order, prints one line per
//! criterion and exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use iosim_core::baselines::{optimal_epsilon, power_domain_rate, power_split_derivative, PowerSplitModel};
use iosim_core::channel::{empirical_xpd, synthesize_channels, ChannelSet, LinkClass};
use iosim_core::experiments::{
    aggregate, run_sweep, write_results_csv, ResultRow, Scheme, SeedPolicy, SweepParam, SweepSpec,
};
use iosim_core::ios::{codebook, DualPolIosState};
use iosim_core::metrics::{effective_channels, mses, sum_rate, surrogate, Beamformer};
use iosim_core::scenario::{build_geometry, ScenarioConfig, Side};
use iosim_core::wmmse::{
    branch_and_bound, build_analog_quadratic, complementary_slackness, exhaustive, solve_digital, update_aux,
    DiscreteMethod, PhaseQuadratic, VariableMap, WmmseOptions,
};
use iosim_core::{optimize_dualpol_ios, Solution};
use nalgebra::{Complex, DMatrix};
use rand::Rng;

/// Outcome of one criterion: pass flag plus a one-line account of the
/// measured quantities.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn draw(config: &ScenarioConfig, seed: u64) -> ChannelSet<f64> {
    let geometry = build_geometry(config).unwrap();
    synthesize_channels(config, &geometry, &mut rng(seed)).unwrap()
}

fn surrogate_identity() -> Verdict {
    let start = Instant::now();
    let config = ScenarioConfig::default();
    let cb = codebook(config.n_bits).unwrap();
    let m = config.m_elems;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let ch = draw(&config, seed);
        let mut r = rng(10_000 + seed);
        let idx: Vec<usize> = (0..2 * m).map(|_| r.random_range(0..cb.len())).collect();
        let state = DualPolIosState::new(cb, idx[..m].to_vec(), idx[m..].to_vec(), vec![1.0; m], vec![1.0; m]).unwrap();
        let h = effective_channels(&ch, &state.response()).unwrap();
        let mut w = DMatrix::from_fn(config.n_ports(), config.n_users(), |_, _| rc(&mut r));
        w *= Complex::new((config.p_bs / w.norm_squared()).sqrt(), 0.0);
        let w = Beamformer { w };
        let aux = update_aux(&h, &w, config.sigma2).unwrap();
        let s = surrogate(&aux, &mses(&h, &w, &aux.u, config.sigma2).unwrap()).unwrap();
        let rate = sum_rate(&h, &w, config.sigma2).unwrap();
        worst = worst.max((s - (rate - config.n_users() as f64)).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-9 && within(elapsed, 5.0),
        format!("max |surrogate - (rate - 2K)| = {worst:.2e} over 100 instances, {elapsed:.2?} (< 5 s)"),
    )
}

fn monotone_convergence() -> Verdict {
    let start = Instant::now();
    let config = ScenarioConfig {
        n_t: 2,
        m_elems: 2,
        k_r: 2,
        k_t: 2,
        n_bits: 2,
        ..ScenarioConfig::default()
    };
    let geometry = build_geometry(&config).unwrap();
    let options = WmmseOptions {
        discrete: DiscreteMethod::Exhaustive,
        ..WmmseOptions::default()
    };
    let mut converged = 0;
    let mut violations = 0;
    let mut worst_drop: f64 = 0.0;
    for seed in 0..50 {
        let ch = draw(&config, 20_000 + seed);
        let sol = optimize_dualpol_ios(&config, &geometry, &ch, &options).unwrap();
        if sol.converged() && sol.iterations() <= 100 {
            converged += 1;
        }
        let (bad, drop) = monotonicity_violations(&sol);
        violations += bad;
        worst_drop = worst_drop.max(drop);
    }
    let elapsed = start.elapsed();
    verdict(
        violations == 0 && converged >= 48 && within(elapsed, 120.0),
        format!(
            "{violations} surrogate decreases (largest {worst_drop:.1e}), {converged}/50 converged, {elapsed:.2?} (< 120 s)"
        ),
    )
}

/// Counts decreases of the per-iteration surrogate and of the per-step
/// natural-log surrogate beyond floating-point rounding.
fn monotonicity_violations(sol: &Solution<f64>) -> (usize, f64) {
    let rounding = |x: f64| 1e-10 * x.abs().max(1.0);
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    let mut check = |prev: f64, next: f64| {
        if next < prev - rounding(prev) {
            bad += 1;
        }
        worst = worst.max(prev - next);
    };
    for pair in sol.trace.surrogates().windows(2) {
        check(pair[0], pair[1]);
    }
    for r in &sol.trace.records {
        if let Some([a, b, c]) = r.step_surrogates {
            check(a, b);
            check(b, c);
        }
    }
    (bad, worst)
}

fn digital_optimality() -> Verdict {
    let mut worst_gap: f64 = 0.0;
    let mut worst_slack: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..20 {
        let mut r = rng(30_000 + seed);
        let n = r.random_range(2..9);
        let k = r.random_range(1..5);
        let h = random_rows(&mut r, n, k);
        let aux = random_aux(&mut r, k);
        let p = r.random_range(0.05..2.0);
        let sigma2 = 0.1;
        let (w, lambda) = solve_digital(&h, &aux, p).unwrap();
        let oracle = projected_gradient(&h, &aux, p, 50_000);
        let ours = weighted_mse(&h, &w.w, &aux, sigma2);
        let theirs = weighted_mse(&h, &oracle, &aux, sigma2);
        worst_gap = worst_gap.max((ours - theirs).abs() / theirs.abs());
        worst_slack = worst_slack.max(complementary_slackness(lambda, &w, p) / p);
        worst_excess = worst_excess.max(w.power() - p);
    }
    verdict(
        worst_gap <= 1e-4 && worst_slack <= 1e-6 && worst_excess <= 1e-9,
        format!(
            "max relative gap to projected gradient {worst_gap:.2e}, max slackness/P {worst_slack:.2e}, max power excess {worst_excess:.2e}"
        ),
    )
}

fn discrete_exactness() -> Verdict {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut nodes = 0;
    for seed in 0..100u64 {
        let sides = [Side::Reflect, Side::Reflect, Side::Refract, Side::Refract];
        let ch = random_channels(40_000 + seed, 2, 2, &sides, 0.5);
        let mut r = rng(41_000 + seed);
        let w = Beamformer {
            w: DMatrix::from_fn(4, 4, |_, _| rc(&mut r) * 0.5),
        };
        let aux = random_aux(&mut r, 4);
        let quad = build_analog_quadratic(&ch, &w, &aux, 0.1, &[0, 1, 2, 3]).unwrap();
        let q = PhaseQuadratic::assemble(&[(&quad, &VariableMap::identity(&[1.0; 4]))]).unwrap();
        let cb = codebook(1 + (seed % 2) as u32).unwrap();
        let warm: Vec<usize> = (0..4).map(|_| r.random_range(0..cb.len())).collect();
        let full = exhaustive(&q, &cb);
        let bnb = branch_and_bound(&q, &cb, &warm, None);
        nodes += bnb.nodes;
        if bnb.objective != full.objective {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && within(elapsed, 30.0),
        format!("{mismatches}/100 objective mismatches, {nodes} nodes expanded, {elapsed:.2?} (< 30 s)"),
    )
}

fn zero_leakage_blocks() -> Verdict {
    let config = ScenarioConfig {
        beta_bi: 0.0,
        beta_iu: 0.0,
        beta_bu: 0.0,
        ..ScenarioConfig::default()
    };
    let geometry = build_geometry(&config).unwrap();
    let n_t = config.n_t;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let ch = draw(&config, 50_000 + seed);
        let sol = optimize_dualpol_ios(&config, &geometry, &ch, &WmmseOptions::default()).unwrap();
        for (k, side) in ch.side_labels.iter().enumerate() {
            let column = sol.beamformer.w.column(k);
            let opposite = match side {
                Side::Reflect => column.rows(n_t, n_t),
                Side::Refract => column.rows(0, n_t),
            };
            worst = worst.max(opposite.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    verdict(
        worst < 1e-10,
        format!("max |W| on the opposite-polarization block = {worst:.2e} over 20 seeds"),
    )
}

fn paired_sweep(param: SweepParam, values: &[f64], trials: usize, schemes: &[Scheme], base: ScenarioConfig) -> Vec<ResultRow> {
    let spec = SweepSpec {
        trials,
        schemes: schemes.to_vec(),
        seed_policy: SeedPolicy::Paired,
        ..SweepSpec::new(param, values.to_vec(), base)
    };
    run_sweep(&spec).unwrap()
}

fn rates(rows: &[ResultRow], scheme: Scheme, value: f64) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.scheme == scheme && r.value == value)
        .map(|r| r.outcome.as_ref().expect("trial failed").sum_rate)
        .collect()
}

/// `(mean of b - a, paired standard error, z)`.
fn gap(rows: &[ResultRow], scheme: Scheme, a: f64, b: f64) -> (f64, f64, f64) {
    let (d, se) = paired_difference(&rates(rows, scheme, a), &rates(rows, scheme, b));
    (d, se, d / se)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

const XPD_TRIALS: usize = 400;

fn xpd_dip() -> Verdict {
    let rows = paired_sweep(SweepParam::XpdBi, &[0.0, 0.5, 1.0], XPD_TRIALS, &[Scheme::DualpolIos], ScenarioConfig::default());
    let s = Scheme::DualpolIos;
    let (left, left_se, left_z) = gap(&rows, s, 0.5, 0.0);
    let (right, right_se, right_z) = gap(&rows, s, 0.5, 1.0);
    verdict(
        left_z >= 3.0 && right_z >= 3.0,
        format!(
            "rate(0) - rate(0.5) = {left:.4} (SE {left_se:.4}, z {left_z:.2}); rate(1) - rate(0.5) = {right:.4} (SE {right_se:.4}, z {right_z:.2}); {XPD_TRIALS} paired trials"
        ),
    )
}

fn power_and_leakage_ordering() -> Verdict {
    let s = Scheme::DualpolIos;
    let rows = paired_sweep(SweepParam::XpdBi, &[0.1, 0.2, 0.8], XPD_TRIALS, &[s], ScenarioConfig::default());
    let (d12, se12, z12) = gap(&rows, s, 0.2, 0.1);
    let (d81, se81, z81) = gap(&rows, s, 0.1, 0.8);

    let powers = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut monotone = true;
    let mut notes = Vec::new();
    for beta in [0.1, 0.2, 0.8] {
        let base = ScenarioConfig {
            beta_bi: beta,
            ..ScenarioConfig::default()
        };
        let rows = paired_sweep(SweepParam::Power, &powers, 200, &Scheme::ALL, base);
        for scheme in Scheme::ALL {
            let means: Vec<f64> = powers.iter().map(|&p| mean(&rates(&rows, scheme, p))).collect();
            if !means.windows(2).all(|m| m[1] > m[0]) {
                monotone = false;
                notes.push(format!("{scheme} at beta {beta}: {means:?}"));
            }
        }
    }
    let power_note = if monotone {
        "mean rate strictly increasing over P = 0.25..4 W for all schemes at beta 0.1/0.2/0.8".to_string()
    } else {
        format!("not increasing: {}", notes.join("; "))
    };
    verdict(
        z12 >= 3.0 && z81 >= 3.0 && monotone,
        format!(
            "rate(0.1) - rate(0.2) = {d12:.4} (SE {se12:.4}, z {z12:.2}); rate(0.8) - rate(0.1) = {d81:.4} (SE {se81:.4}, z {z81:.2}); {power_note}"
        ),
    )
}

fn user_ratio_shape() -> Verdict {
    let ratios = [0.2, 0.35, 0.5, 0.65, 0.8];
    let rows = paired_sweep(
        SweepParam::UserRatio,
        &ratios,
        200,
        &[Scheme::DualpolIos, Scheme::PowerDomainIos],
        ScenarioConfig::default(),
    );
    let summary = aggregate(&rows).unwrap();
    let means = |scheme: Scheme| -> Vec<f64> {
        ratios
            .iter()
            .map(|&v| summary.iter().find(|s| s.scheme == scheme && s.value == v).unwrap().mean)
            .collect()
    };
    let dual = means(Scheme::DualpolIos);
    let spread = dual.iter().cloned().fold(f64::MIN, f64::max) - dual.iter().cloned().fold(f64::MAX, f64::min);
    let flat = spread <= 0.1 * mean(&dual);
    let pd = means(Scheme::PowerDomainIos);
    let pd_gap = pd[2] - pd[0];
    verdict(
        flat && pd_gap >= 0.5,
        format!(
            "dual-pol spread {spread:.4} vs 10% of mean {:.4}; power-domain rate(0.5) - rate(0.2) = {pd_gap:.4} (needs >= 0.5)",
            0.1 * mean(&dual)
        ),
    )
}

fn power_split_analysis() -> Verdict {
    let mut r = rng(60_000);
    let mut worst_opt: f64 = 0.0;
    for _ in 0..20 {
        let tau = r.random_range(0.0..5.0);
        let chi = r.random_range(0.1..50.0);
        let pairs = r.random_range(1..4);
        let mut t = Vec::new();
        let mut c = Vec::new();
        let mut sides = Vec::new();
        for _ in 0..pairs {
            for side in [Side::Reflect, Side::Refract] {
                t.push(tau);
                c.push(chi);
                sides.push(side);
            }
        }
        let model = PowerSplitModel::new(t, c, sides, 1.0).unwrap();
        worst_opt = worst_opt.max((optimal_epsilon(&model) - 1.0).abs());
    }
    let mut worst_fd: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(1..7);
        let tau: Vec<f64> = (0..k).map(|_| r.random_range(0.0..10.0)).collect();
        let chi: Vec<f64> = (0..k).map(|_| r.random_range(0.0..50.0)).collect();
        let sides: Vec<Side> = (0..k)
            .map(|_| if r.random_bool(0.5) { Side::Reflect } else { Side::Refract })
            .collect();
        let eps = 10f64.powf(r.random_range(-2.0..2.0));
        let model = PowerSplitModel::new(tau, chi, sides, eps).unwrap();
        let h = 1e-5 * eps;
        let fd = (power_domain_rate(&model.with_epsilon(eps + h)) - power_domain_rate(&model.with_epsilon(eps - h)))
            / (2.0 * h);
        let d = power_split_derivative(&model);
        let scale = d.abs().max(fd.abs());
        if scale > 0.0 {
            worst_fd = worst_fd.max((d - fd).abs() / scale);
        }
    }
    verdict(
        worst_opt <= 1e-3 && worst_fd <= 1e-6,
        format!("symmetric models: max |eps_opt - 1| = {worst_opt:.2e}; derivative vs central differences: max relative error {worst_fd:.2e}"),
    )
}

fn xpd_statistic() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for beta in [0.1, 0.3, 0.5, 0.9] {
        let config = ScenarioConfig {
            beta_bi: beta,
            beta_iu: beta,
            beta_bu: beta,
            ..ScenarioConfig::default()
        };
        let geometry = build_geometry(&config).unwrap();
        let mut r = rng(70_000 + (beta * 10.0) as u64);
        let samples: Vec<ChannelSet<f64>> = (0..10_000)
            .map(|_| synthesize_channels(&config, &geometry, &mut r).unwrap())
            .collect();
        let target = (1.0 - beta) / beta;
        for link in [LinkClass::BsIos, LinkClass::IosUser, LinkClass::BsUser] {
            let rel = (empirical_xpd(&samples, link).unwrap() - target).abs() / target;
            worst = worst.max(rel);
            pass &= rel <= 0.05;
        }
    }
    verdict(
        pass,
        format!("max relative deviation from (1 - beta)/beta = {worst:.4} over 3 link classes x 4 factors, 10^4 draws each"),
    )
}

fn determinism() -> Verdict {
    let spec = SweepSpec {
        trials: 5,
        ..SweepSpec::new(SweepParam::UserRatio, vec![0.2, 0.5, 0.8], ScenarioConfig::default())
    };
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let path = dir.path().join(format!("results_{i}.csv"));
            write_results_csv(&path, &run_sweep(&spec).unwrap()).unwrap();
            std::fs::read(&path).unwrap()
        })
        .collect();
    let same = files[0] == files[1];
    verdict(
        same && !files[0].is_empty(),
        format!("two runs produced {} and {} bytes, identical: {same}", files[0].len(), files[1].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("surrogate identity", surrogate_identity),
        ("monotone convergence", monotone_convergence),
        ("digital-solve optimality", digital_optimality),
        ("discrete analog exactness", discrete_exactness),
        ("zero opposite-polarization blocks", zero_leakage_blocks),
        ("XPD dip", xpd_dip),
        ("leakage and power ordering", power_and_leakage_ordering),
        ("user-ratio shape", user_ratio_shape),
        ("power-split analysis", power_split_analysis),
        ("XPD statistic", xpd_statistic),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                ),
            ),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {label}: {} ({took:.1?}) {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
