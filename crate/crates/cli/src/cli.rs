// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pinnctl_core::grape::ClipRule;
use pinnctl_core::spin_system::NoiseKind;

#[derive(Debug, Parser)]
#[command(name = "pinnctl", version, about = "Neural-network pulse synthesis for small spin systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network pulse and write the run record, trace and parameters.
    Synthesize(SynthesizeArgs),
    /// Sample trained parameters on a segment grid.
    Sample(SampleArgs),
    /// Discretization, noise and amplitude-error sweeps.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Spectrum and 99% energy bandwidth of a pulse CSV.
    Fft(FftArgs),
    /// Basis populations along the pulse.
    Trajectory(TrajectoryArgs),
    /// Piecewise-constant GRAPE baseline.
    Grape(GrapeArgs),
}

/// Where the system and objective come from.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Run configuration file (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_parser = ["defm-cnot", "tcp-lls"])]
    pub preset: Option<String>,
    /// Override the objective target, e.g. `cnot:0,1` or `lls`.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Noise coefficient(s): `0.02`, `0,0.02,0.04` or `0..0.07:0.01`.
    #[arg(long, requires = "noise")]
    pub gamma: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Local,
    Global,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Local => NoiseKind::Local,
            NoiseArg::Global => NoiseKind::Global,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Number of seeds to train; the best final fidelity wins.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Continue from a run record for this many extra iterations.
    #[arg(long, requires = "extra_iters")]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub extra_iters: Option<usize>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PulseFormat {
    Csv,
    Shaped,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Network parameter file.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub segments: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: PulseFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    /// Infidelity against the number of segments.
    Discretization(DiscretizationArgs),
    /// Fidelity against the noise coefficient.
    Noise(NoiseSweepArgs),
    /// Fidelity against a relative amplitude error.
    Amperr(AmperrArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SweepCommon {
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Prefix of the output files; defaults to the configuration's run id.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct DiscretizationArgs {
    #[command(flatten)]
    pub common: SweepCommon,
    /// Segment counts: `1,2,4` or `a..b`.
    #[arg(long, default_value = "1..32768")]
    pub segments: String,
    /// Step a range by doubling instead of by one.
    #[arg(long)]
    pub log2: bool,
}

#[derive(Debug, Args)]
pub struct NoiseSweepArgs {
    #[command(flatten)]
    pub common: SweepCommon,
    #[arg(long, value_enum)]
    pub noise: NoiseArg,
    #[arg(long, default_value = "0..0.07:0.01")]
    pub gamma: String,
    /// Evaluate the given pulse at every γ instead of retraining.
    #[arg(long)]
    pub fixed: bool,
    /// Retraining budget per γ.
    #[arg(long, default_value_t = 1500)]
    pub iters: usize,
    #[arg(long)]
    pub n_fine: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AmperrArgs {
    #[command(flatten)]
    pub common: SweepCommon,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Δu/u values: list or `a..b:step`.
    #[arg(long, default_value = "-0.3..0.3:0.01", allow_hyphen_values = true)]
    pub deviations: String,
    #[arg(long)]
    pub n_fine: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FftArgs {
    /// Pulse CSV as written by `sample`.
    #[arg(long)]
    pub pulse: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    SingletTriplet,
    Computational,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub common: SweepCommon,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, value_enum, default_value = "singlet-triplet")]
    pub basis: BasisArg,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// Apply the singlet-order readout (delay 1/(4Δ), π/2 about x) to each state.
    #[arg(long)]
    pub readout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClipArg {
    Clip,
    Penalty,
}

impl From<ClipArg> for ClipRule {
    fn from(c: ClipArg) -> Self {
        match c {
            ClipArg::Clip => ClipRule::Clip,
            ClipArg::Penalty => ClipRule::Penalty,
        }
    }
}

#[derive(Debug, Args)]
pub struct GrapeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub segments: usize,
    /// Amplitude limit in Hz; defaults to the network amp_scale of the configuration.
    #[arg(long)]
    pub amp_limit_hz: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "clip")]
    pub clip: ClipArg,
    #[arg(long, short)]
    pub quiet: bool,
}
