// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! CSV, shaped-pulse and sidecar files.
//!
//! Data files are deterministic: floats are written with 17 significant
//! digits and timestamps only appear in the JSON sidecars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pinnctl_core::analysis::{SpectrumResult, SweepResult, TrajectoryTable};
use pinnctl_core::optimizer::IterationRow;
use pinnctl_core::{Error, PulseTable, Result, SamplingRule};
use serde::Serialize;

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `<dir>/<run-id>__<analysis>.<ext>`
pub fn artifact_path(dir: &Path, run_id: &str, analysis: &str, ext: &str) -> PathBuf {
    dir.join(format!("{run_id}__{analysis}.{ext}"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn join_row(cells: impl IntoIterator<Item = String>) -> String {
    let mut line = cells.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn pulse_header(channels: usize) -> String {
    (1..=channels)
        .flat_map(|c| [format!("u{c}x_rad_s"), format!("u{c}y_rad_s")])
        .fold(String::from("t_s"), |acc, h| acc + "," + &h)
}

/// One row per segment: midpoint time, then (u_x, u_y) per channel in rad/s.
pub fn pulse_csv(table: &PulseTable) -> String {
    let mut out = pulse_header(table.channels());
    out.push('\n');
    for s in 0..table.n_segments() {
        let cells = std::iter::once(fmt_f64(table.midpoint(s))).chain(table.segment(s).iter().map(|&u| fmt_f64(u)));
        out.push_str(&join_row(cells));
    }
    out
}

pub fn write_pulse_csv(table: &PulseTable, path: &Path) -> Result<()> {
    write_file(path, &pulse_csv(table))
}

/// Inverse of [`pulse_csv`]; the duration is recovered from the first and last midpoints.
pub fn parse_pulse_csv(text: &str) -> Result<PulseTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let width = header.len();
    if width != 3 && width != 5 {
        return Err(Error::Parse(format!("pulse CSV needs 3 or 5 columns, got {width}")));
    }
    let channels = (width - 1) / 2;
    let expected = pulse_header(channels);
    if header.iter().collect::<Vec<_>>().join(",") != expected {
        return Err(Error::Parse(format!("pulse CSV header must be `{expected}`")));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number `{cell}`", line + 1)))?;
            if k == 0 {
                times.push(v);
            } else {
                samples.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(Error::Parse("pulse CSV has no rows".into()));
    }
    let duration = times[times.len() - 1] + times[0];
    PulseTable::new(duration, times.len(), channels, samples, SamplingRule::Midpoint)
}

pub fn read_pulse_csv(path: &Path) -> Result<PulseTable> {
    parse_pulse_csv(&std::fs::read_to_string(path)?)
}

/// Amplitude in percent of `amp_scale` and phase in degrees in [0, 360).
pub fn polar(ux: f64, uy: f64, amp_scale: f64) -> (f64, f64) {
    let amp = ux.hypot(uy) / amp_scale * 100.0;
    let mut phase = uy.atan2(ux).to_degrees().rem_euclid(360.0);
    // rem_euclid can round up to exactly 360
    if phase >= 360.0 {
        phase = 0.0;
    }
    (amp, phase)
}

/// Shaped-pulse text with `##` header lines and amplitude/phase columns per channel.
pub fn shaped_pulse(table: &PulseTable, amp_scale: f64, title: &str) -> Result<String> {
    if !(amp_scale > 0.0) {
        return Err(Error::InvalidPulse(format!("amplitude scale must be positive, got {amp_scale}")));
    }
    let mut out = String::new();
    let _ = writeln!(out, "##TITLE= {title}");
    let _ = writeln!(out, "##JCAMP-DX= 5.00 Bruker JCAMP library");
    let _ = writeln!(out, "##DATA TYPE= Shape Data");
    let _ = writeln!(out, "##ORIGIN= pinnctl {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "##$SHAPE_PARAMETERS= duration_s={} channels={}", fmt_f64(table.duration()), table.channels());
    let _ = writeln!(out, "##$SHAPE_AMP_SCALE_RAD_S= {}", fmt_f64(amp_scale));
    let _ = writeln!(out, "##MINX= 0.000000E00");
    let _ = writeln!(out, "##MAXX= 1.000000E02");
    let _ = writeln!(out, "##MINY= 0.000000E00");
    let _ = writeln!(out, "##MAXY= 3.600000E02");
    let _ = writeln!(out, "##NPOINTS= {}", table.n_segments());
    let _ = writeln!(out, "##XYPOINTS= (XY..XY)");
    for s in 0..table.n_segments() {
        let row = table.segment(s);
        let cells: Vec<String> = row
            .chunks(2)
            .flat_map(|q| {
                let (a, p) = polar(q[0], q[1], amp_scale);
                [format!("{a:.6}"), format!("{p:.6}")]
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(", "));
    }
    out.push_str("##END=\n");
    Ok(out)
}

/// Reads amplitude/phase rows back into a midpoint table.
pub fn parse_shaped_pulse(text: &str, amp_scale: f64, duration: f64) -> Result<PulseTable> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("##") {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad shaped-pulse value `{c}`"))))
            .collect::<Result<_>>()?;
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(Error::Parse(format!("shaped-pulse row needs amplitude/phase pairs: `{line}`")));
        }
        rows.push(values);
    }
    let channels = rows.first().map_or(0, |r| r.len() / 2);
    if rows.is_empty() || rows.iter().any(|r| r.len() != 2 * channels) {
        return Err(Error::Parse("shaped pulse has no rows or ragged rows".into()));
    }
    let samples = rows
        .iter()
        .flat_map(|r| {
            r.chunks(2).flat_map(|ap| {
                let a = ap[0] / 100.0 * amp_scale;
                let p = ap[1].to_radians();
                [a * p.cos(), a * p.sin()]
            })
        })
        .collect();
    PulseTable::new(duration, rows.len(), channels, samples, SamplingRule::Midpoint)
}

pub fn trace_csv(rows: &[IterationRow]) -> String {
    let mut out = String::from("iter,fidelity,grad_norm\n");
    for r in rows {
        out.push_str(&join_row([r.iter.to_string(), fmt_f64(r.fidelity), fmt_f64(r.grad_norm)]));
    }
    out
}

pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = format!("{},fidelity,infidelity,raw_fidelity\n", sweep.axis);
    for i in 0..sweep.len() {
        out.push_str(&join_row([
            fmt_f64(sweep.values[i]),
            fmt_f64(sweep.fidelity[i]),
            fmt_f64(sweep.infidelity[i]),
            fmt_f64(sweep.raw_fidelity[i]),
        ]));
    }
    out
}

pub fn spectrum_csv(spectrum: &SpectrumResult) -> String {
    let mut out = String::from("freq_hz");
    for c in 1..=spectrum.magnitude.len() {
        let _ = write!(out, ",mag_ch{c}");
    }
    out.push('\n');
    for (k, f) in spectrum.freqs.iter().enumerate() {
        let cells = std::iter::once(fmt_f64(*f)).chain(spectrum.magnitude.iter().map(|m| fmt_f64(m[k])));
        out.push_str(&join_row(cells));
    }
    out
}

pub fn trajectory_csv(table: &TrajectoryTable) -> String {
    let mut out = String::from("t_s");
    for l in &table.labels {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (t, row) in table.times.iter().zip(&table.values) {
        out.push_str(&join_row(std::iter::once(fmt_f64(*t)).chain(row.iter().map(|v| fmt_f64(*v)))));
    }
    out
}

#[derive(Serialize)]
struct Sidecar<'a, M: Serialize> {
    run_id: &'a str,
    analysis: &'a str,
    pinnctl_version: &'a str,
    written_unix_s: f64,
    metadata: &'a M,
}

/// Writes `<run-id>__<analysis>.csv` and its JSON sidecar; returns the CSV path.
pub fn write_table<M: Serialize>(
    dir: &Path,
    run_id: &str,
    analysis: &str,
    csv: &str,
    metadata: &M,
) -> Result<PathBuf> {
    let path = artifact_path(dir, run_id, analysis, "csv");
    write_file(&path, csv)?;
    write_sidecar(dir, run_id, analysis, metadata)?;
    Ok(path)
}

pub fn write_sidecar<M: Serialize>(dir: &Path, run_id: &str, analysis: &str, metadata: &M) -> Result<PathBuf> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let sidecar = Sidecar {
        run_id,
        analysis,
        pinnctl_version: env!("CARGO_PKG_VERSION"),
        written_unix_s: now,
        metadata,
    };
    let path = artifact_path(dir, run_id, analysis, "json");
    write_file(&path, &serde_json::to_string_pretty(&sidecar)?)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PulseTable {
        PulseTable::new(
            0.02,
            3,
            2,
            vec![1.0, -2.0, 0.5, 0.0, 1e-9, 3.25, -7.0, 0.1, 0.0, 0.0, 628.3185307179586, -1.0 / 3.0],
            SamplingRule::Midpoint,
        )
        .unwrap()
    }

    #[test]
    fn pulse_csv_round_trip_is_exact() {
        let t = table();
        let text = pulse_csv(&t);
        assert!(text.starts_with("t_s,u1x_rad_s,u1y_rad_s,u2x_rad_s,u2y_rad_s\n"));
        let back = parse_pulse_csv(&text).unwrap();
        assert_eq!(back.samples(), t.samples());
        assert_eq!(back.n_segments(), 3);
        assert!((back.duration() - 0.02).abs() < 1e-17);
    }

    #[test]
    fn pulse_csv_rejects_bad_headers() {
        assert!(parse_pulse_csv("t,a,b\n0.1,1,2\n").is_err());
        assert!(parse_pulse_csv("t_s,u1x_rad_s\n0.1,1\n").is_err());
        assert!(parse_pulse_csv("t_s,u1x_rad_s,u1y_rad_s\n").is_err());
        assert!(parse_pulse_csv("t_s,u1x_rad_s,u1y_rad_s\n0.5,x,1\n").is_err());
    }

    #[test]
    fn polar_conversion() {
        let (a, p) = polar(0.0, 5.0, 10.0);
        assert_eq!(format!("{a:.6} {p:.6}"), "50.000000 90.000000");
        assert_eq!(polar(-1.0, 0.0, 1.0).1, 180.0);
        assert!((polar(1.0, -1.0, 1.0).1 - 315.0).abs() < 1e-12);
        assert_eq!(polar(0.0, 0.0, 1.0), (0.0, 0.0));
        assert!(polar(1.0, -1e-300, 1.0).1 < 360.0);
    }

    #[test]
    fn shaped_round_trip_to_six_decimals() {
        let t = table();
        let text = shaped_pulse(&t, 700.0, "demo").unwrap();
        assert!(text.contains("##NPOINTS= 3"));
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with("##")).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].split(", ").count(), 4);
        let back = parse_shaped_pulse(&text, 700.0, 0.02).unwrap();
        for (a, b) in back.samples().iter().zip(t.samples()) {
            assert!((a - b).abs() < 1e-3, "{a} {b}");
        }
        assert!(shaped_pulse(&t, 0.0, "x").is_err());
    }

    #[test]
    fn naming_convention() {
        let p = artifact_path(Path::new("out"), "run", "spectrum", "csv");
        assert_eq!(p, Path::new("out/run__spectrum.csv"));
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }
}
