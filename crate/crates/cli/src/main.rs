use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use iosim_core::channel::synthesize_channels;
use iosim_core::experiments::{
    aggregate, emit, run_sweep, write_results_json, Scheme, SeedPolicy, SummaryRow, SweepParam, SweepSpec,
    DEFAULT_TRIALS,
};
use iosim_core::scenario::{build_geometry, ScenarioConfig};
use iosim_core::wmmse::{DiscreteMethod, WmmseOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "iosim", version, about = "Monte-Carlo sum-rate experiments for dual-polarized IOS beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Discrete phase search: auto, exhaustive, branch_and_bound or naive_rounding.
    #[arg(long, default_value = "auto", value_parser = parse_method)]
    discrete: DiscreteMethod,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Relative surrogate change that counts as converged.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

impl SolverArgs {
    fn options(&self) -> WmmseOptions {
        WmmseOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            discrete: self.discrete,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Every scheme on the configured scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Sweeps one parameter and averages each point over trials.
    Sweep {
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        /// Reuse the same channel draws at every sweep value.
        #[arg(long)]
        paired: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Writes the per-iteration trace of one optimization as JSON lines.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "dualpol_ios")]
        scheme: Scheme,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn parse_method(s: &str) -> Result<DiscreteMethod, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown discrete method `{s}` (expected auto, exhaustive, branch_and_bound or naive_rounding)")
    })
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut config =
        ScenarioConfig::from_json_file(path).context("loading config")?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn print_summary(summary: &[SummaryRow]) {
    println!("{:<18} {:>10} {:>10} {:>9} {:>5}", "scheme", "value", "mean", "stderr", "n");
    for s in summary {
        println!(
            "{:<18} {:>10} {:>10.4} {:>9.4} {:>5}",
            s.scheme.id(),
            s.value,
            s.mean,
            s.stderr,
            s.n
        );
    }
}

fn sweep(spec: &SweepSpec, out: &Path) -> Result<()> {
    let rows = run_sweep(spec)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} trials failed; see results.csv", rows.len());
    }
    let summary = aggregate(&rows)?;
    let files = emit(&rows, &summary, spec.param, out)?;
    write_results_json(&out.join("results.json"), &rows)?;
    print_summary(&summary);
    eprintln!(
        "wrote {}, {}, {} and results.json",
        files.results.display(),
        files.summary.display(),
        files.plot.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            out,
            schemes,
            solver,
        } => {
            let base = load_config(&config, seed)?;
            let spec = SweepSpec {
                trials,
                schemes: schemes.unwrap_or_else(|| Scheme::ALL.to_vec()),
                options: solver.options(),
                ..SweepSpec::new(SweepParam::Base, vec![0.0], base)
            };
            sweep(&spec, &out)
        }
        Command::Sweep {
            param,
            values,
            schemes,
            config,
            out,
            seed,
            trials,
            paired,
            solver,
        } => {
            if param == SweepParam::Base {
                bail!("`base` is not a sweep parameter; use `iosim run`");
            }
            let base = load_config(&config, seed)?;
            let spec = SweepSpec {
                trials,
                schemes: schemes.unwrap_or_else(|| Scheme::ALL.to_vec()),
                seed_policy: if paired { SeedPolicy::Paired } else { SeedPolicy::PerPoint },
                options: solver.options(),
                ..SweepSpec::new(param, values, base)
            };
            sweep(&spec, &out)
        }
        Command::Trace {
            config,
            out,
            scheme,
            seed,
            solver,
        } => {
            let config = load_config(&config, seed)?;
            let geometry = build_geometry(&config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let channels = synthesize_channels::<f64, _>(&config, &geometry, &mut rng)?;
            let sol = scheme.optimize(&config, &geometry, &channels, &solver.options())?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut writer = BufWriter::new(file);
            sol.trace.write_jsonl(&mut writer)?;
            writer.flush().with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{scheme}: sum rate {:.4} bit/s/Hz after {} iterations (converged: {})",
                sol.sum_rate,
                sol.iterations(),
                sol.converged()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
