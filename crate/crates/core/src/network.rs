// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Feed-forward tanh network mapping time to control amplitudes.
//!
//! Input is the normalized time t/T. Hidden layers apply tanh; the output
//! layer applies `amp_scale · tanh`, so every amplitude lies in
//! [−amp_scale, amp_scale]. Outputs are ordered `[u1x, u1y, u2x, u2y, ...]`,
//! one (x, y) pair per channel group.
//!
//! Weights of layer `l` form a `fan_in × fan_out` matrix stored row-major:
//! `w[i * fan_out + j]` connects node `i` of layer `l` to node `j` of layer `l + 1`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{PulseTable, SamplingRule};

/// Free-form provenance attached to saved parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamsMetadata {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub created: Option<String>,
    #[serde(default)]
    pub code_version: String,
    /// Ansatz choices the network was built with (output bound, input normalization, init).
    #[serde(default)]
    pub ansatz: String,
}

impl ParamsMetadata {
    fn current() -> Self {
        Self {
            preset: None,
            created: None,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            ansatz: ANSATZ_NOTE.to_string(),
        }
    }
}

pub const ANSATZ_NOTE: &str =
    "input t/T; hidden tanh; output amp_scale*tanh; init N(0, 1/fan_in), zero biases";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsFile", into = "ParamsFile")]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    amp_scale: f64,
    time_scale: f64,
    seed: u64,
    metadata: ParamsMetadata,
}

/// JSON form with nested row-major weight arrays.
#[derive(Serialize, Deserialize)]
struct ParamsFile {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    amp_scale: f64,
    time_scale: f64,
    seed: u64,
    #[serde(default)]
    metadata: ParamsMetadata,
}

impl TryFrom<ParamsFile> for NetworkParams {
    type Error = Error;

    fn try_from(f: ParamsFile) -> Result<Self> {
        let mut weights = Vec::with_capacity(f.weights.len());
        for (l, rows) in f.weights.into_iter().enumerate() {
            let fan_out = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != fan_out) {
                return Err(Error::Architecture(format!("ragged weight matrix in layer {l}")));
            }
            weights.push(rows.into_iter().flatten().collect());
        }
        let params = NetworkParams {
            layer_sizes: f.layer_sizes,
            weights,
            biases: f.biases,
            amp_scale: f.amp_scale,
            time_scale: f.time_scale,
            seed: f.seed,
            metadata: f.metadata,
        };
        params.validate()?;
        Ok(params)
    }
}

impl From<NetworkParams> for ParamsFile {
    fn from(p: NetworkParams) -> Self {
        let weights = p
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let fan_out = p.layer_sizes[l + 1];
                w.chunks(fan_out).map(<[f64]>::to_vec).collect()
            })
            .collect();
        ParamsFile {
            layer_sizes: p.layer_sizes,
            weights,
            biases: p.biases,
            amp_scale: p.amp_scale,
            time_scale: p.time_scale,
            seed: p.seed,
            metadata: p.metadata,
        }
    }
}

fn check_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Architecture("need at least an input and an output layer".into()));
    }
    if layer_sizes[0] != 1 {
        return Err(Error::Architecture(format!(
            "input layer must have exactly 1 node (time), got {}",
            layer_sizes[0]
        )));
    }
    if layer_sizes.iter().any(|&n| n == 0) {
        return Err(Error::Architecture("layer sizes must be positive".into()));
    }
    let last = *layer_sizes.last().expect("non-empty");
    if last % 2 != 0 {
        return Err(Error::Architecture(format!(
            "output layer must hold (x, y) pairs; size {last} is odd"
        )));
    }
    Ok(())
}

/// Per-sample record of layer activations for reverse-mode differentiation.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[0] = [t/T]`; `activations[l]` is tanh of layer `l`'s pre-activation.
    activations: Vec<Vec<f64>>,
}

/// Gradient with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkGradient {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Same ordering as [`NetworkParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
            .for_each(|g| *g *= c);
    }
}

impl NetworkParams {
    /// Random initialization: weights ~ N(0, 1/fan_in), biases zero.
    pub fn init(layer_sizes: &[usize], amp_scale: f64, time_scale: f64, seed: u64) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (1.0 / fan_in as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * std
                    })
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        let params = Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            amp_scale,
            time_scale,
            seed,
            metadata: ParamsMetadata::current(),
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from explicit row-major weights and biases.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        amp_scale: f64,
        time_scale: f64,
    ) -> Result<Self> {
        let params = Self {
            layer_sizes,
            weights,
            biases,
            amp_scale,
            time_scale,
            seed: 0,
            metadata: ParamsMetadata::current(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_layer_sizes(&self.layer_sizes)?;
        let n_layers = self.layer_sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(Error::Architecture(format!(
                "expected {n_layers} weight/bias layers, got {}/{}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            if self.weights[l].len() != pair[0] * pair[1] {
                return Err(Error::Architecture(format!(
                    "layer {l} weights: expected {}x{}, got {} entries",
                    pair[0],
                    pair[1],
                    self.weights[l].len()
                )));
            }
            if self.biases[l].len() != pair[1] {
                return Err(Error::Architecture(format!(
                    "layer {l} biases: expected {}, got {}",
                    pair[1],
                    self.biases[l].len()
                )));
            }
        }
        if !(self.amp_scale > 0.0) || !self.amp_scale.is_finite() {
            return Err(Error::Architecture(format!("amp_scale must be positive, got {}", self.amp_scale)));
        }
        if !(self.time_scale > 0.0) || !self.time_scale.is_finite() {
            return Err(Error::Architecture(format!(
                "time_scale must be positive, got {}",
                self.time_scale
            )));
        }
        if self.weights.iter().chain(&self.biases).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameter".into()));
        }
        Ok(())
    }

    /// Checks the output width against a system's channel count.
    pub fn check_channels(&self, n_channels: usize) -> Result<()> {
        let width = self.output_width();
        if width != 2 * n_channels {
            return Err(Error::Architecture(format!(
                "network output width {width} does not match 2 x {n_channels} channel groups"
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn amp_scale(&self) -> f64 {
        self.amp_scale
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Control window length T, seconds.
    pub fn duration(&self) -> f64 {
        self.time_scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn metadata(&self) -> &ParamsMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut ParamsMetadata {
        &mut self.metadata
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn n_channels(&self) -> usize {
        self.output_width() / 2
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Weights and biases flattened layer by layer (weights first).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_parameters() {
            return Err(Error::Dimension {
                expected: self.n_parameters(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.time_scale).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                duration: self.time_scale,
            });
        }
        Ok(())
    }

    /// Control amplitudes u(t) in rad/s.
    pub fn forward(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.forward_with_tape(t)?.0)
    }

    /// Amplitudes together with the activations needed by [`Self::backprop`].
    pub fn forward_with_tape(&self, t: f64) -> Result<(Vec<f64>, Tape)> {
        self.check_time(t)?;
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(vec![t / self.time_scale]);
        for l in 0..n_layers {
            let fan_out = self.layer_sizes[l + 1];
            let input = &activations[l];
            let mut z = self.biases[l].clone();
            let w = &self.weights[l];
            for (i, &x) in input.iter().enumerate() {
                let row = &w[i * fan_out..(i + 1) * fan_out];
                for (zj, &wij) in z.iter_mut().zip(row) {
                    *zj += wij * x;
                }
            }
            z.iter_mut().for_each(|v| *v = v.tanh());
            activations.push(z);
        }
        let out = activations[n_layers].iter().map(|a| self.amp_scale * a).collect();
        Ok((out, Tape { activations }))
    }

    /// Accumulates ∂(upstream · u(t))/∂θ into `grad`.
    pub fn backprop_into(&self, tape: &Tape, upstream: &[f64], grad: &mut NetworkGradient) -> Result<()> {
        let n_layers = self.weights.len();
        if upstream.len() != self.output_width() {
            return Err(Error::Dimension {
                expected: self.output_width(),
                got: upstream.len(),
            });
        }
        if tape.activations.len() != n_layers + 1
            || tape
                .activations
                .iter()
                .zip(&self.layer_sizes)
                .any(|(a, &n)| a.len() != n)
        {
            return Err(Error::Architecture("tape does not match network shape".into()));
        }
        if grad.weights.len() != n_layers {
            return Err(Error::Architecture("gradient does not match network shape".into()));
        }
        // δ at the output pre-activation
        let mut delta: Vec<f64> = tape.activations[n_layers]
            .iter()
            .zip(upstream)
            .map(|(a, g)| g * self.amp_scale * (1.0 - a * a))
            .collect();
        for l in (0..n_layers).rev() {
            let fan_out = self.layer_sizes[l + 1];
            let input = &tape.activations[l];
            let gw = &mut grad.weights[l];
            for (i, &x) in input.iter().enumerate() {
                let row = &mut gw[i * fan_out..(i + 1) * fan_out];
                for (g, &d) in row.iter_mut().zip(&delta) {
                    *g += x * d;
                }
            }
            for (g, &d) in grad.biases[l].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                let w = &self.weights[l];
                delta = input
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let row = &w[i * fan_out..(i + 1) * fan_out];
                        let s: f64 = row.iter().zip(&delta).map(|(wij, d)| wij * d).sum();
                        s * (1.0 - x * x)
                    })
                    .collect();
            }
        }
        Ok(())
    }

    /// Exact gradient of `upstream · u(t)` with respect to every weight and bias.
    pub fn backprop(&self, t: f64, upstream: &[f64]) -> Result<NetworkGradient> {
        let (_, tape) = self.forward_with_tape(t)?;
        let mut grad = NetworkGradient::zeros_like(self);
        self.backprop_into(&tape, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Samples the network onto `n_segments` equal segments.
    pub fn sample(&self, n_segments: usize, rule: SamplingRule) -> Result<PulseTable> {
        if n_segments == 0 {
            return Err(Error::InvalidPulse("segment count must be at least 1".into()));
        }
        PulseTable::from_fn(self.time_scale, n_segments, self.n_channels(), rule, |t| {
            self.forward(t).expect("sample times lie inside the window")
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn save_params(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, params.to_json()?)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetworkParams> {
    NetworkParams::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn one_node(w: [f64; 2], b: [f64; 2], amp: f64) -> NetworkParams {
        // (1, 1, 2): the second output duplicates the first with its own weight
        NetworkParams::from_parts(
            vec![1, 1, 2],
            vec![vec![w[0]], vec![w[1], 0.0]],
            vec![vec![b[0]], vec![b[1], 0.0]],
            amp,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn shapes_for_reference_architectures() {
        let p = NetworkParams::init(&[1, 40, 40, 4], 1000.0, 0.020, 7).unwrap();
        let shapes: Vec<usize> = p.weights().iter().map(Vec::len).collect();
        assert_eq!(shapes, vec![40, 1600, 160]);
        let q = NetworkParams::init(&[1, 60, 60, 60, 2], 1000.0, 0.05, 7).unwrap();
        assert_eq!(q.weights().len(), 4);
        assert!(q.biases().iter().flatten().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = NetworkParams::init(&[1, 8, 8, 2], 1.0, 1.0, 42).unwrap();
        let b = NetworkParams::init(&[1, 8, 8, 2], 1.0, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = NetworkParams::init(&[1, 8, 8, 2], 1.0, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_variance_follows_fan_in() {
        let p = NetworkParams::init(&[1, 200, 200, 2], 1.0, 1.0, 3).unwrap();
        let w = &p.weights()[1];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 1.0 / 200.0).abs() < 0.1 / 200.0, "variance {var}");
    }

    #[test]
    fn architecture_errors() {
        assert!(NetworkParams::init(&[2, 4, 2], 1.0, 1.0, 0).is_err());
        assert!(NetworkParams::init(&[1, 4, 3], 1.0, 1.0, 0).is_err());
        assert!(NetworkParams::init(&[1, 4, 2], 0.0, 1.0, 0).is_err());
        let p = NetworkParams::init(&[1, 4, 2], 1.0, 1.0, 0).unwrap();
        assert!(p.check_channels(1).is_ok());
        let err = p.check_channels(2).unwrap_err().to_string();
        assert!(err.contains("network output width"));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = NetworkParams::init(&[1, 5, 5, 4], 10.0, 2.0, 1).unwrap();
        let zeros = vec![0.0; p.n_parameters()];
        p.set_flat(&zeros).unwrap();
        for t in [0.0, 0.3, 1.7, 2.0] {
            assert_eq!(p.forward(t).unwrap(), vec![0.0; 4]);
        }
        let table = p.sample(33, SamplingRule::Midpoint).unwrap();
        assert!(table.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_tanh_composition() {
        let p = one_node([1.0, 1.0], [0.0, 0.0], 1.0);
        let u = p.forward(0.5).unwrap();
        assert_eq!(u[0], 0.5f64.tanh().tanh());
        assert_eq!(u[1], 0.0);
    }

    #[test]
    fn rejects_times_outside_window() {
        let p = one_node([1.0, 1.0], [0.0, 0.0], 1.0);
        assert!(matches!(p.forward(-1e-12), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(p.forward(1.0 + 1e-9), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn output_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = NetworkParams::init(&[1, 6, 6, 4], 3.5, 1.0, 2).unwrap();
        let big: Vec<f64> = (0..p.n_parameters()).map(|_| rng.random_range(-50.0..50.0)).collect();
        p.set_flat(&big).unwrap();
        for k in 0..=100 {
            for u in p.forward(k as f64 / 100.0).unwrap() {
                assert!(u.abs() <= 3.5);
            }
        }
    }

    #[test]
    fn single_node_analytic_gradient() {
        // u = A tanh(w2 tanh(w1 s + b1) + b2), s = t
        let (w1, w2, b1, b2, amp) = (0.7, -1.3, 0.2, 0.1, 2.5);
        let p = one_node([w1, w2], [b1, b2], amp);
        let t = 0.4;
        let h = (w1 * t + b1).tanh();
        let out = (w2 * h + b2).tanh();
        let sech2_out = 1.0 - out * out;
        let sech2_h = 1.0 - h * h;
        let g = p.backprop(t, &[1.0, 0.0]).unwrap();
        let d_w2 = amp * sech2_out * h;
        let d_b2 = amp * sech2_out;
        let d_w1 = amp * sech2_out * w2 * sech2_h * t;
        let d_b1 = amp * sech2_out * w2 * sech2_h;
        assert!((g.weights[1][0] - d_w2).abs() < 1e-14);
        assert!((g.biases[1][0] - d_b2).abs() < 1e-14);
        assert!((g.weights[0][0] - d_w1).abs() < 1e-14);
        assert!((g.biases[0][0] - d_b1).abs() < 1e-14);
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let p = NetworkParams::init(&[1, 3, 3, 2], 1.0, 1.0, 5).unwrap();
        let g = p.backprop(0.25, &[0.0, 0.0]).unwrap();
        assert_eq!(g.norm(), 0.0);
        assert!(p.backprop(0.25, &[1.0]).is_err());
    }

    #[test]
    fn params_json_round_trip_is_exact() {
        let p = NetworkParams::init(&[1, 7, 5, 4], 6283.185307179586, 0.02, 11).unwrap();
        let back = NetworkParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = rng.random_range(0.0..0.02);
            assert_eq!(p.forward(t).unwrap(), back.forward(t).unwrap());
        }
    }

    #[test]
    fn truncated_and_inconsistent_files() {
        let p = NetworkParams::init(&[1, 3, 2], 1.0, 1.0, 0).unwrap();
        let json = p.to_json().unwrap();
        assert!(matches!(
            NetworkParams::from_json(&json[..json.len() / 2]),
            Err(Error::Json(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["layer_sizes"] = serde_json::json!([1, 4, 2]);
        assert!(serde_json::from_value::<NetworkParams>(v).is_err());
    }
}
