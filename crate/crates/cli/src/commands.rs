// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations. Each returns whether the run converged so the
//! binary can map it to the 0/2 exit codes; errors map to 1.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pinnctl_core::analysis::{
    amplitude_error_sweep, density_trajectory, discretization_sweep, expectation_table, fixed_pulse, noise_sweep,
    pulse_spectrum, readout_transform, retrain_per_gamma, robust_interval, singlet_triplet_columns,
};
use pinnctl_core::grape::{grape_train_observed, GrapeConfig};
use pinnctl_core::linalg::C64;
use pinnctl_core::network::{load_params, save_params};
use pinnctl_core::optimizer::{
    multi_start, resume_observed, train_observed, IterationRow, OptimizerConfig, RunRecord,
};
use pinnctl_core::spin_system::{noise_operators, NoiseKind, SpinSystem};
use pinnctl_core::targets::thermal_deviation;
use pinnctl_core::{Error, NetworkParams, Result, SamplingRule};
use serde_json::json;

use crate::cli::{
    AmperrArgs, BasisArg, Command, DiscretizationArgs, FftArgs, GrapeArgs, NoiseArgs, NoiseSweepArgs, PulseFormat,
    SampleArgs, SourceArgs, SweepCommand, SweepCommon, SynthesizeArgs, TrajectoryArgs,
};
use crate::config::{NoiseConfig, RunConfig};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::NotConverged => 2,
        }
    }

    fn from_converged(converged: bool) -> Self {
        if converged {
            Outcome::Done
        } else {
            Outcome::NotConverged
        }
    }
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Synthesize(a) => synthesize(a),
        Command::Sample(a) => sample(a),
        Command::Sweep(SweepCommand::Discretization(a)) => sweep_discretization(a),
        Command::Sweep(SweepCommand::Noise(a)) => sweep_noise(a),
        Command::Sweep(SweepCommand::Amperr(a)) => sweep_amperr(a),
        Command::Fft(a) => fft(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Grape(a) => grape(a),
    }
}

fn load_config(source: &SourceArgs) -> Result<RunConfig> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(Error::config("--config", "pass --config <file> or --preset <name>")),
    };
    if let Some(target) = &source.target {
        cfg.objective.target = target.clone();
    }
    Ok(cfg)
}

/// `0.1`, `0,0.5,1` or `a..b:step` (inclusive, rounded to 12 decimals).
pub fn parse_values(spec: &str, flag: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::config(flag, msg);
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
    if let Some((range, step)) = spec.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(|| bad(format!("expected a..b:step, got `{spec}`")))?;
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(bad(format!("empty or invalid range `{spec}`")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect());
    }
    let values = spec.split(',').map(num).collect::<Result<Vec<_>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite".into()));
    }
    Ok(values)
}

/// `1,2,4` or `a..b`, stepping by one or, with `log2`, by doubling.
pub fn parse_segments(spec: &str, log2: bool) -> Result<Vec<usize>> {
    let bad = |msg: String| Error::config("--segments", msg);
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("bad segment count `{s}`")));
    let counts = if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a == 0 || b < a {
            return Err(bad(format!("invalid range `{spec}`")));
        }
        if log2 {
            std::iter::successors(Some(a), |&n| n.checked_mul(2)).take_while(|&n| n <= b).collect()
        } else {
            (a..=b).collect()
        }
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if counts.contains(&0) {
        return Err(bad("segment counts must be at least 1".into()));
    }
    Ok(counts)
}

fn single_gamma(noise: &NoiseArgs) -> Result<Option<NoiseConfig>> {
    let Some(kind) = noise.noise else {
        return Ok(None);
    };
    let gamma = match &noise.gamma {
        None => return Err(Error::config("--gamma", "required with --noise")),
        Some(spec) => match parse_values(spec, "--gamma")?.as_slice() {
            [g] => *g,
            _ => return Err(Error::config("--gamma", "expected a single value")),
        },
    };
    Ok(Some(NoiseConfig {
        kind: kind.into(),
        gamma,
    }))
}

fn progress(log_every: usize, quiet: bool) -> impl Fn(&IterationRow) + Sync {
    move |row: &IterationRow| {
        if !quiet && log_every > 0 && row.iter % log_every == 0 {
            eprintln!("iter {:>6}  F {:.6}  |g| {:.3e}  {:.1}s", row.iter, row.fidelity, row.grad_norm, row.wall_time_s);
        }
    }
}

fn write_run_outputs<P: serde::Serialize + Clone + serde::de::DeserializeOwned>(
    dir: &Path,
    run_id: &str,
    trace_name: &str,
    record: &RunRecord<P>,
    extra: serde_json::Value,
) -> Result<()> {
    let wall: Vec<f64> = record.iterations.iter().map(|r| r.wall_time_s).collect();
    io::write_table(
        dir,
        run_id,
        trace_name,
        &io::trace_csv(&record.iterations),
        &json!({
            "converged": record.converged,
            "stop_reason": record.stop_reason,
            "final_fidelity": record.final_fidelity(),
            "best_fidelity": record.best_fidelity,
            "best_iter": record.best_iter,
            "seed": record.config.seed,
            "total_wall_time_s": wall.last().copied().unwrap_or(0.0),
            "wall_time_s": wall,
            "extra": extra,
        }),
    )?;
    Ok(())
}

fn synthesize(args: SynthesizeArgs) -> Result<Outcome> {
    let mut cfg = load_config(&args.source)?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.optimizer.seed = seed;
    }
    if let Some(n) = args.max_iters {
        cfg.optimizer.max_iters = n;
    }
    if let Some(n) = args.starts {
        cfg.multi_start = n;
    }
    if let Some(noise) = single_gamma(&args.noise)? {
        cfg.noise = Some(noise);
    }
    let resolved = cfg.resolve()?;
    let observer = progress(cfg.optimizer.log_every, args.quiet);
    let started = Instant::now();
    let record = if let Some(path) = &args.resume {
        let record = RunRecord::<NetworkParams>::from_json(&std::fs::read_to_string(path)?)?;
        resume_observed(record, args.extra_iters.unwrap_or(0), Some(&observer))?
    } else if cfg.multi_start > 1 {
        multi_start(
            cfg.multi_start,
            &cfg.optimizer,
            |seed| cfg.init_network(seed),
            &resolved.system,
            &resolved.objective,
        )?
    } else {
        let p0 = cfg.init_network(cfg.optimizer.seed)?;
        train_observed(p0, &resolved.system, &resolved.objective, &cfg.optimizer, Some(&observer))?
    };
    let dir = &cfg.output_dir;
    io::write_text(&io::artifact_path(dir, &cfg.run_id, "record", "json"), &record.to_json()?)?;
    save_params(&record.final_params, io::artifact_path(dir, &cfg.run_id, "params", "json"))?;
    io::write_json(&io::artifact_path(dir, &cfg.run_id, "config", "json"), &cfg)?;
    write_run_outputs(
        dir,
        &cfg.run_id,
        "trace",
        &record,
        json!({ "elapsed_s": started.elapsed().as_secs_f64(), "multi_start": cfg.multi_start }),
    )?;
    println!(
        "{}: F = {:.6} after {} iterations (seed {}, {})",
        cfg.run_id,
        record.final_fidelity(),
        record.n_iterations(),
        record.config.seed,
        if record.converged { "converged" } else { "max iterations reached" }
    );
    Ok(Outcome::from_converged(record.converged))
}

fn sample(args: SampleArgs) -> Result<Outcome> {
    let params = load_params(&args.params)?;
    let table = params.sample(args.segments, SamplingRule::Midpoint)?;
    let text = match args.format {
        PulseFormat::Csv => io::pulse_csv(&table),
        PulseFormat::Shaped => {
            let title = args
                .params
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "pinnctl".into());
            io::shaped_pulse(&table, params.amp_scale(), &title)?
        }
    };
    match args.out {
        Some(path) => io::write_text(&path, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(Outcome::Done)
}

struct SweepContext {
    cfg: RunConfig,
    system: SpinSystem,
    objective: pinnctl_core::ObjectiveSpec,
    params: NetworkParams,
    run_id: String,
    out: PathBuf,
}

fn sweep_context(common: &SweepCommon) -> Result<SweepContext> {
    let cfg = load_config(&common.source)?;
    let resolved = cfg.resolve()?;
    let params = load_params(&common.params)?;
    params.check_channels(resolved.system.n_channels())?;
    Ok(SweepContext {
        run_id: common.run_id.clone().unwrap_or_else(|| cfg.run_id.clone()),
        out: common.out.clone(),
        system: resolved.system,
        objective: resolved.objective,
        params,
        cfg,
    })
}

fn sweep_discretization(args: DiscretizationArgs) -> Result<Outcome> {
    let ctx = sweep_context(&args.common)?;
    let counts = parse_segments(&args.segments, args.log2)?;
    let sweep = discretization_sweep(&ctx.params, &ctx.system, &ctx.objective, &counts)?;
    let path = io::write_table(
        &ctx.out,
        &ctx.run_id,
        "discretization",
        &io::sweep_csv(&sweep),
        &json!({ "params": args.common.params, "sweep": sweep.metadata }),
    )?;
    println!("wrote {} ({} points)", path.display(), sweep.len());
    Ok(Outcome::Done)
}

fn sweep_noise(args: NoiseSweepArgs) -> Result<Outcome> {
    let ctx = sweep_context(&args.common)?;
    let kind: NoiseKind = args.noise.into();
    let gammas = parse_values(&args.gamma, "--gamma")?;
    let n_fine = args.n_fine.unwrap_or(ctx.cfg.optimizer.n_fine);
    let mut retrain_meta = Vec::new();
    let pulses = if args.fixed {
        fixed_pulse(&ctx.params, &gammas)
    } else {
        let config = OptimizerConfig {
            max_iters: args.iters,
            n_fine,
            ..ctx.cfg.optimizer.clone()
        };
        let runs = retrain_per_gamma(&ctx.params, &ctx.system, &ctx.objective, &gammas, kind, &config)?;
        let mut pulses = Vec::with_capacity(runs.len());
        for (gamma, record) in runs {
            let name = format!("noise-{kind}-params-g{gamma}");
            save_params(&record.final_params, io::artifact_path(&ctx.out, &ctx.run_id, &name, "json"))?;
            retrain_meta.push(json!({
                "gamma": gamma,
                "iterations": record.n_iterations(),
                "converged": record.converged,
                "final_fidelity": record.final_fidelity(),
            }));
            pulses.push((gamma, record.final_params));
        }
        pulses
    };
    let sweep = noise_sweep(&pulses, &ctx.system, &ctx.objective, &gammas, kind, n_fine)?;
    let path = io::write_table(
        &ctx.out,
        &ctx.run_id,
        &format!("noise-{kind}"),
        &io::sweep_csv(&sweep),
        &json!({
            "mode": if args.fixed { "fixed-pulse" } else { "retrain-per-gamma" },
            "params": args.common.params,
            "retrain": retrain_meta,
            "sweep": sweep.metadata,
        }),
    )?;
    println!("wrote {} ({} points)", path.display(), sweep.len());
    Ok(Outcome::Done)
}

fn sweep_amperr(args: AmperrArgs) -> Result<Outcome> {
    let ctx = sweep_context(&args.common)?;
    let deviations = parse_values(&args.deviations, "--deviations")?;
    let n_fine = args.n_fine.unwrap_or(ctx.cfg.optimizer.n_fine);
    let noise = single_gamma(&args.noise)?;
    let objective = match noise {
        Some(n) => ctx.objective.clone().with_noise(Some(noise_operators(&ctx.system, n.kind, n.gamma)?)),
        None => ctx.objective.clone(),
    };
    let sweep = amplitude_error_sweep(&ctx.params, &ctx.system, &objective, &deviations, n_fine)?;
    let interval = robust_interval(&sweep, 0.95).ok();
    let name = match noise {
        Some(n) => format!("amperr-{}-g{}", n.kind, n.gamma),
        None => "amperr".into(),
    };
    let path = io::write_table(
        &ctx.out,
        &ctx.run_id,
        &name,
        &io::sweep_csv(&sweep),
        &json!({
            "params": args.common.params,
            "robust_interval_95": interval,
            "robust_width_95": interval.map(|r| r.width()),
            "sweep": sweep.metadata,
        }),
    )?;
    println!("wrote {} ({} points)", path.display(), sweep.len());
    Ok(Outcome::Done)
}

fn fft(args: FftArgs) -> Result<Outcome> {
    let table = io::read_pulse_csv(&args.pulse)?;
    let spectrum = pulse_spectrum(&table)?;
    let run_id = args.run_id.unwrap_or_else(|| {
        args.pulse
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pulse".into())
    });
    let path = io::write_table(
        &args.out,
        &run_id,
        "spectrum",
        &io::spectrum_csv(&spectrum),
        &json!({
            "pulse": args.pulse,
            "df_hz": spectrum.df,
            "energy_bandwidth_99_hz": spectrum.energy_bandwidth_99,
            "signal_energy": spectrum.signal_energy,
            "parseval_residual": spectrum.parseval_residual(),
        }),
    )?;
    println!(
        "wrote {}; 99% bandwidth per channel (Hz): {:?}",
        path.display(),
        spectrum.energy_bandwidth_99
    );
    Ok(Outcome::Done)
}

fn computational_columns(n_spins: usize) -> (Vec<Vec<C64>>, Vec<String>) {
    let dim = 1usize << n_spins;
    let basis = (0..dim)
        .map(|k| (0..dim).map(|i| C64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let labels = (0..dim).map(|k| format!("{k:0width$b}", width = n_spins)).collect();
    (basis, labels)
}

fn trajectory(args: TrajectoryArgs) -> Result<Outcome> {
    let ctx = sweep_context(&args.common)?;
    let rho0 = match &ctx.objective.initial {
        Some(rho) => rho.clone(),
        None => thermal_deviation(ctx.system.n_spins())?,
    };
    let (basis, labels) = match args.basis {
        BasisArg::SingletTriplet if ctx.system.n_spins() != 2 => {
            return Err(Error::config("--basis", "the singlet-triplet basis needs a 2-spin system"))
        }
        BasisArg::SingletTriplet => singlet_triplet_columns(),
        BasisArg::Computational => computational_columns(ctx.system.n_spins()),
    };
    let noise = match single_gamma(&args.noise)? {
        Some(n) => Some(noise_operators(&ctx.system, n.kind, n.gamma)?),
        None => None,
    };
    let mut states = density_trajectory(&ctx.params, &ctx.system, &rho0, args.samples, noise.as_ref())?;
    let mut name = String::from("trajectory");
    if args.readout {
        let offsets = ctx.system.offsets_hz();
        let delta = match offsets {
            [a, b] => (b - a).abs(),
            _ => return Err(Error::config("--readout", "readout needs a 2-spin system")),
        };
        states = readout_transform(&states, &ctx.system, delta)?;
        name.push_str("-readout");
    }
    let table = expectation_table(&states, &basis, &labels)?;
    let path = io::write_table(
        &ctx.out,
        &ctx.run_id,
        &name,
        &io::trajectory_csv(&table),
        &json!({
            "params": args.common.params,
            "basis": labels,
            "max_imaginary": table.max_imaginary,
            "noise": noise.as_ref().map(|n| json!({"kind": n.kind, "gamma": n.gamma})),
        }),
    )?;
    println!("wrote {} ({} samples)", path.display(), table.times.len());
    Ok(Outcome::Done)
}

fn grape(args: GrapeArgs) -> Result<Outcome> {
    let mut cfg = load_config(&args.source)?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(noise) = single_gamma(&args.noise)? {
        cfg.noise = Some(noise);
    }
    let resolved = cfg.resolve()?;
    let amp_hz = args.amp_limit_hz.unwrap_or(cfg.network.amp_scale_hz);
    let config = GrapeConfig {
        n_segments: args.segments,
        duration: cfg.network.duration_s,
        amp_limit: 2.0 * std::f64::consts::PI * amp_hz,
        learning_rate: args.lr,
        max_iters: args.max_iters,
        f_threshold: cfg.optimizer.f_threshold,
        seed: args.seed.unwrap_or(cfg.optimizer.seed),
        clip_rule: args.clip.into(),
        ..GrapeConfig::default()
    };
    let observer = progress(cfg.optimizer.log_every, args.quiet);
    let (table, record) = grape_train_observed(&resolved.system, &resolved.objective, &config, Some(&observer))?;
    let dir = &cfg.output_dir;
    io::write_pulse_csv(&table, &io::artifact_path(dir, &cfg.run_id, "grape-pulse", "csv"))?;
    io::write_text(&io::artifact_path(dir, &cfg.run_id, "grape-record", "json"), &record.to_json()?)?;
    write_run_outputs(dir, &cfg.run_id, "grape-trace", &record, json!({ "grape": config }))?;
    println!(
        "{} (GRAPE, {} segments): F = {:.6} after {} iterations",
        cfg.run_id,
        config.n_segments,
        record.final_fidelity(),
        record.n_iterations()
    );
    Ok(Outcome::from_converged(record.converged))
}
