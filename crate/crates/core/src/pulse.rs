// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant control tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where inside each segment a continuous pulse was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingRule {
    #[default]
    Midpoint,
    LeftEdge,
}

impl SamplingRule {
    /// Evaluation time of segment `s` given the segment width.
    pub fn sample_time(self, s: usize, width: f64) -> f64 {
        match self {
            SamplingRule::Midpoint => (s as f64 + 0.5) * width,
            SamplingRule::LeftEdge => s as f64 * width,
        }
    }
}

/// `n_segments × channels × {x, y}` amplitudes in rad/s over a fixed duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTable {
    duration: f64,
    n_segments: usize,
    channels: usize,
    /// Flat layout: `[segment][channel][x|y]`.
    samples: Vec<f64>,
    sampling_rule: SamplingRule,
}

impl PulseTable {
    pub fn new(
        duration: f64,
        n_segments: usize,
        channels: usize,
        samples: Vec<f64>,
        sampling_rule: SamplingRule,
    ) -> Result<Self> {
        if n_segments == 0 {
            return Err(Error::InvalidPulse("segment count must be at least 1".into()));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidPulse(format!("duration must be positive, got {duration}")));
        }
        if samples.len() != n_segments * channels * 2 {
            return Err(Error::InvalidPulse(format!(
                "expected {} samples for {n_segments} segments x {channels} channels, got {}",
                n_segments * channels * 2,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPulse("non-finite amplitude".into()));
        }
        Ok(Self {
            duration,
            n_segments,
            channels,
            samples,
            sampling_rule,
        })
    }

    pub fn zeros(duration: f64, n_segments: usize, channels: usize) -> Result<Self> {
        Self::new(
            duration,
            n_segments,
            channels,
            vec![0.0; n_segments * channels * 2],
            SamplingRule::Midpoint,
        )
    }

    /// Builds a table by evaluating `f(t) -> [u1x, u1y, u2x, ...]` at each segment's sample time.
    pub fn from_fn(
        duration: f64,
        n_segments: usize,
        channels: usize,
        rule: SamplingRule,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let width = duration / n_segments as f64;
        let mut samples = Vec::with_capacity(n_segments * channels * 2);
        for s in 0..n_segments {
            let row = f(rule.sample_time(s, width));
            if row.len() != channels * 2 {
                return Err(Error::InvalidPulse(format!(
                    "sample row has {} entries, expected {}",
                    row.len(),
                    channels * 2
                )));
            }
            samples.extend(row);
        }
        Self::new(duration, n_segments, channels, samples, rule)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sampling_rule(&self) -> SamplingRule {
        self.sampling_rule
    }

    pub fn segment_width(&self) -> f64 {
        self.duration / self.n_segments as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    /// All 2M amplitudes of segment `s`.
    pub fn segment(&self, s: usize) -> &[f64] {
        let w = self.channels * 2;
        &self.samples[s * w..(s + 1) * w]
    }

    pub fn amplitude(&self, s: usize, channel: usize, quadrature: usize) -> f64 {
        self.samples[(s * self.channels + channel) * 2 + quadrature]
    }

    /// Midpoint of segment `s`, seconds.
    pub fn midpoint(&self, s: usize) -> f64 {
        (s as f64 + 0.5) * self.segment_width()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest |u| per channel over both quadratures.
    pub fn max_abs_per_channel(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.channels];
        for s in 0..self.n_segments {
            for (c, m) in out.iter_mut().enumerate() {
                *m = m
                    .max(self.amplitude(s, c, 0).abs())
                    .max(self.amplitude(s, c, 1).abs());
            }
        }
        out
    }

    /// Every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Zero-order-hold upsampling onto `n_segments` (a multiple of the current count).
    pub fn resample_hold(&self, n_segments: usize) -> Result<Self> {
        if n_segments == 0 || n_segments % self.n_segments != 0 {
            return Err(Error::InvalidPulse(format!(
                "hold resampling needs a multiple of {} segments, got {n_segments}",
                self.n_segments
            )));
        }
        let factor = n_segments / self.n_segments;
        let mut samples = Vec::with_capacity(n_segments * self.channels * 2);
        for s in 0..self.n_segments {
            for _ in 0..factor {
                samples.extend_from_slice(self.segment(s));
            }
        }
        Self::new(
            self.duration,
            n_segments,
            self.channels,
            samples,
            self.sampling_rule,
        )
    }

    /// Largest jump |u_{s+1} − u_s| across segment boundaries, over all channels.
    pub fn max_jump(&self) -> f64 {
        let w = self.channels * 2;
        (1..self.n_segments)
            .flat_map(|s| (0..w).map(move |k| (s, k)))
            .map(|(s, k)| (self.samples[s * w + k] - self.samples[(s - 1) * w + k]).abs())
            .fold(0.0, f64::max)
    }

    /// Reversed in time with every amplitude negated.
    pub fn time_reversed_negated(&self) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for s in (0..self.n_segments).rev() {
            samples.extend(self.segment(s).iter().map(|v| -v));
        }
        Self {
            samples,
            ..self.clone()
        }
    }

    /// Piecewise-constant reconstruction u(t).
    pub fn hold_value(&self, t: f64) -> &[f64] {
        let s = ((t / self.segment_width()).floor() as usize).min(self.n_segments - 1);
        self.segment(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(PulseTable::zeros(1.0, 0, 1).is_err());
        assert!(PulseTable::zeros(0.0, 4, 1).is_err());
        assert!(PulseTable::new(1.0, 2, 1, vec![0.0; 3], SamplingRule::Midpoint).is_err());
    }

    #[test]
    fn width_halves_when_segments_double() {
        let a = PulseTable::zeros(0.02, 64, 2).unwrap();
        let b = PulseTable::zeros(0.02, 128, 2).unwrap();
        assert_eq!(a.segment_width(), 2.0 * b.segment_width());
    }

    #[test]
    fn hold_resampling_and_jumps() {
        let t = PulseTable::new(1.0, 2, 1, vec![1.0, 0.0, -1.0, 0.5], SamplingRule::Midpoint).unwrap();
        let up = t.resample_hold(8).unwrap();
        assert_eq!(up.segment(3), &[1.0, 0.0]);
        assert_eq!(up.segment(4), &[-1.0, 0.5]);
        assert_eq!(t.max_jump(), 2.0);
        assert_eq!(up.max_jump(), 2.0);
        assert!(t.resample_hold(3).is_err());
        let r = t.time_reversed_negated();
        assert_eq!(r.segment(0), &[1.0, -0.5]);
    }
}
