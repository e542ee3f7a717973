//! Simulation of downlink MU-MIMO aided by a dual-polarized intelligent
//! omni-surface (IOS): channel synthesis, surface models, joint digital and
//! analog beamforming by alternating WMMSE, comparator schemes and
//! Monte-Carlo sweeps.
//!
//! Numeric routines are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common double-precision types.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod ios;
pub mod metrics;
pub mod scalar;
pub mod scenario;
pub mod wmmse;

pub use baselines::{
    optimal_epsilon, optimize_cellular, optimize_dualpol_ios, optimize_dualpol_ris, optimize_power_domain,
    power_domain_rate, power_split_derivative, PowerSplitModel,
};
pub use channel::{empirical_xpd, synthesize_channels, ChannelSet, LinkClass, XpdFactors};
pub use error::{Error, Result};
pub use experiments::{aggregate, emit, run_sweep, ResultRow, Scheme, SeedPolicy, SummaryRow, SweepParam, SweepSpec};
pub use ios::{codebook, DualPolIosState, PhaseCodebook, PowerDomainIosState, SurfaceResponse};
pub use metrics::{AuxWeights, Beamformer};
pub use scalar::Real;
pub use scenario::{build_geometry, surface_amplitudes, Geometry, PhaseMode, ScenarioConfig, Side};
pub use wmmse::{run, IterRecord, IterTrace, Solution, SurfaceState, WmmseOptions};

pub type ChannelSet64 = ChannelSet<f64>;
pub type ChannelSet32 = ChannelSet<f32>;
pub type Beamformer64 = Beamformer<f64>;
pub type Beamformer32 = Beamformer<f32>;
pub type Solution64 = Solution<f64>;
pub type Solution32 = Solution<f32>;
