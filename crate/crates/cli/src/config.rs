// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration files and built-in presets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use pinnctl_core::objectives::{Normalization, ObjectiveSpec};
use pinnctl_core::optimizer::OptimizerConfig;
use pinnctl_core::spin_system::{noise_operators, NoiseKind, NoiseModel, SpinSystem};
use pinnctl_core::targets::{parse_target, NamedTarget};
use pinnctl_core::{Error, NetworkParams, Result};
use serde::{Deserialize, Serialize};

const DEFM_CNOT: &str = include_str!("../presets/defm-cnot.json");
const TCP_LLS: &str = include_str!("../presets/tcp-lls.json");

pub const PRESET_NAMES: [&str; 2] = ["defm-cnot", "tcp-lls"];

/// A preset name such as `"defm"` or an inline system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset(String),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub target: String,
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: Vec<usize>,
    /// Output bound in Hz; converted to rad/s when the network is built.
    pub amp_scale_hz: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub system: SystemSpec,
    pub objective: ObjectiveConfig,
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "one")]
    pub multi_start: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Everything a command needs, resolved and cross-checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: SpinSystem,
    pub target: NamedTarget,
    pub objective: ObjectiveSpec,
    pub noise: Option<NoiseModel>,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "defm-cnot" => DEFM_CNOT,
            "tcp-lls" => TCP_LLS,
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (known: {})", PRESET_NAMES.join(", ")),
                ))
            }
        };
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { path: field, message } => Error::Config {
                path: field,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn system(&self) -> Result<SpinSystem> {
        match &self.system {
            SystemSpec::Preset(name) => SpinSystem::preset(name)
                .ok_or_else(|| Error::config("system", format!("unknown system preset `{name}` (known: defm, tcp)"))),
            SystemSpec::Inline(value) => {
                serde_json::from_value(value.clone()).map_err(|e| Error::config("system", e.to_string()))
            }
        }
    }

    /// Checks every field and their cross-consistency before any compute.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::config("run_id", "must be a non-empty file-name-safe string"));
        }
        let system = self.system()?;
        let layers = &self.network.layers;
        if layers.len() < 2 {
            return Err(Error::config("network.layers", "need an input and an output layer"));
        }
        if layers[0] != 1 {
            return Err(Error::config("network.layers[0]", format!("input width must be 1, got {}", layers[0])));
        }
        if let Some(k) = layers.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("network.layers[{k}]"), "layer width must be positive"));
        }
        let out = layers[layers.len() - 1];
        if out != 2 * system.n_channels() {
            return Err(Error::config(
                format!("network.layers[{}]", layers.len() - 1),
                format!(
                    "network output width {out} does not match 2 x {} control channels",
                    system.n_channels()
                ),
            ));
        }
        if !(self.network.amp_scale_hz > 0.0) || !self.network.amp_scale_hz.is_finite() {
            return Err(Error::config("network.amp_scale_hz", "must be positive"));
        }
        if !(self.network.duration_s > 0.0) || !self.network.duration_s.is_finite() {
            return Err(Error::config("network.duration_s", "must be positive"));
        }
        self.optimizer.validate()?;
        if self.multi_start == 0 {
            return Err(Error::config("multi_start", "must be at least 1"));
        }
        let target = parse_target(&self.objective.target, &system)
            .map_err(|e| Error::config("objective.target", e.to_string()))?;
        let noise = match self.noise {
            None => None,
            Some(n) => Some(
                noise_operators(&system, n.kind, n.gamma).map_err(|e| Error::config("noise.gamma", e.to_string()))?,
            ),
        };
        let objective = target
            .objective(self.objective.normalization)
            .map_err(|e| Error::config("objective", e.to_string()))?
            .with_noise(noise.clone());
        objective.validate().map_err(|e| Error::config("objective", e.to_string()))?;
        Ok(Resolved {
            system,
            target,
            objective,
            noise,
        })
    }

    pub fn amp_scale(&self) -> f64 {
        2.0 * PI * self.network.amp_scale_hz
    }

    /// Fresh network for `seed`, tagged with the run id.
    pub fn init_network(&self, seed: u64) -> Result<NetworkParams> {
        let mut p = NetworkParams::init(&self.network.layers, self.amp_scale(), self.network.duration_s, seed)?;
        p.metadata_mut().preset = Some(self.run_id.clone());
        Ok(p)
    }
}
