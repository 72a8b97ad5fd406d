//! Pulsed single-photon source: synthetic click streams and g²(0) analysis.
//!
//! Time is integer picoseconds. Trial `k` starts (pulse leading edge) at
//! `k * rep_period`; its detection gate spans
//! `[k * rep_period + gate_offset, … + gate_width)`.
//!
//! Coincidences are counted between the two APD channels. The zero-delay
//! peak pairs clicks from the same gate; peak `j` pairs a channel-0 click in
//! gate `k` with a channel-1 click in gate `k + j`. g²(0) is the zero-delay
//! count divided by the mean of the nearest non-zero peaks.

mod simulate;
pub mod stream_io;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::fmt_sig;

pub use simulate::simulate_stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("stream not sorted at record {index}: time {time} ps after {previous} ps")]
    Unsorted { index: usize, previous: u64, time: u64 },
    #[error("record {index}: channel {channel} is not 0 or 1")]
    BadChannel { index: usize, channel: u32 },
    #[error("no cross-gate coincidences to normalize against")]
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClickRecord {
    pub time_ps: u64,
    pub channel: u8,
}

/// Detector clicks sorted by time, ties broken by channel.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClickStream {
    records: Vec<ClickRecord>,
}

impl ClickStream {
    pub fn new(records: Vec<ClickRecord>) -> Result<Self, PhotonError> {
        for (index, r) in records.iter().enumerate() {
            if r.channel > 1 {
                return Err(PhotonError::BadChannel { index, channel: r.channel as u32 });
            }
            if index > 0 && records[index - 1] > *r {
                return Err(PhotonError::Unsorted { index, previous: records[index - 1].time_ps, time: r.time_ps });
            }
        }
        Ok(ClickStream { records })
    }

    pub(crate) fn from_sorted_unchecked(records: Vec<ClickRecord>) -> Self {
        debug_assert!(records.windows(2).all(|w| w[0] <= w[1]));
        ClickStream { records }
    }

    pub fn records(&self) -> &[ClickRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<ClickRecord> {
        self.records
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentTiming {
    pub rep_period_ps: u64,
    pub gate_offset_ps: u64,
    pub gate_width_ps: u64,
    pub pulse_duration_ps: u64,
}

impl Default for ExperimentTiming {
    fn default() -> Self {
        ExperimentTiming {
            rep_period_ps: 26_000_000,
            gate_offset_ps: 0,
            gate_width_ps: 200_000,
            pulse_duration_ps: 10_000,
        }
    }
}

impl ExperimentTiming {
    pub fn validate(&self) -> Result<(), PhotonError> {
        let bad = |name, v: u64| Err(PhotonError::InvalidParameter { name, value: v as f64 });
        if self.rep_period_ps == 0 {
            return bad("rep_period_ps", self.rep_period_ps);
        }
        if self.gate_width_ps == 0 {
            return bad("gate_width_ps", self.gate_width_ps);
        }
        if self.pulse_duration_ps == 0 {
            return bad("pulse_duration_ps", self.pulse_duration_ps);
        }
        if self.gate_offset_ps + self.gate_width_ps > self.rep_period_ps {
            return bad("gate_offset_ps + gate_width_ps", self.gate_offset_ps + self.gate_width_ps);
        }
        Ok(())
    }

    /// Gate index and offset within the gate, if the time is gated.
    pub fn locate(&self, time_ps: u64) -> Option<(u64, u64)> {
        let d = time_ps.checked_sub(self.gate_offset_ps)?;
        let (k, off) = (d / self.rep_period_ps, d % self.rep_period_ps);
        (off < self.gate_width_ps).then_some((k, off))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceModel {
    /// Probability of at least one emission into the collected band per trial.
    pub p_emit: f64,
    /// Probability of a second emission per trial (counted within `p_emit`).
    pub p_double: f64,
    /// Emission delay time constant, ps.
    pub tau_e_ps: f64,
    /// Detection efficiency of an emitted photon (collection × detector).
    pub eta: f64,
    /// Dark count rate of each detector, Hz.
    pub dark_rate_hz: f64,
    /// Rate of detected leakage light during the gate, Hz, summed over both
    /// detectors and split 50/50.
    pub leakage_rate_hz: f64,
    /// Per-channel dead time after a click, ps. Zero disables it.
    pub dead_time_ps: u64,
    /// Probability that a click is followed by an afterpulse. Zero disables it.
    pub afterpulse_prob: f64,
    /// Afterpulse delay after the parent click, ps.
    pub afterpulse_delay_ps: u64,
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel {
            p_emit: 1.0,
            p_double: 0.0,
            tau_e_ps: 10_000.0,
            eta: 1.0,
            dark_rate_hz: 0.0,
            leakage_rate_hz: 0.0,
            dead_time_ps: 0,
            afterpulse_prob: 0.0,
            afterpulse_delay_ps: 0,
        }
    }
}

impl SourceModel {
    pub fn validate(&self, timing: &ExperimentTiming) -> Result<(), PhotonError> {
        let prob = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(PhotonError::InvalidParameter { name, value: v })
            }
        };
        prob("p_emit", self.p_emit)?;
        prob("p_double", self.p_double)?;
        prob("eta", self.eta)?;
        prob("afterpulse_prob", self.afterpulse_prob)?;
        if self.p_double > self.p_emit {
            return Err(PhotonError::InvalidParameter { name: "p_double (exceeds p_emit)", value: self.p_double });
        }
        for (name, v) in [("tau_e_ps", self.tau_e_ps), ("dark_rate_hz", self.dark_rate_hz), ("leakage_rate_hz", self.leakage_rate_hz)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PhotonError::InvalidParameter { name, value: v });
            }
        }
        if self.tau_e_ps <= 0.0 {
            return Err(PhotonError::InvalidParameter { name: "tau_e_ps", value: self.tau_e_ps });
        }
        if self.dead_time_ps >= timing.rep_period_ps - timing.gate_width_ps {
            return Err(PhotonError::InvalidParameter { name: "dead_time_ps", value: self.dead_time_ps as f64 });
        }
        Ok(())
    }
}

/// Coincidence window inside the gate, relative to the gate start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub offset_ps: u64,
    pub width_ps: u64,
}

impl Window {
    pub fn from_gate_start(width_ps: u64) -> Self {
        Window { offset_ps: 0, width_ps }
    }

    fn contains(&self, offset_in_gate: u64) -> bool {
        offset_in_gate >= self.offset_ps && offset_in_gate - self.offset_ps < self.width_ps
    }

    fn validate(&self, timing: &ExperimentTiming) -> Result<(), PhotonError> {
        if self.width_ps == 0 || self.offset_ps + self.width_ps > timing.gate_width_ps {
            return Err(PhotonError::InvalidParameter {
                name: "window (must be nonempty and inside the gate)",
                value: (self.offset_ps + self.width_ps) as f64,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Result {
    pub g2: f64,
    pub sigma: f64,
    pub n_zero: u64,
    /// Mean count of the normalization peaks.
    pub n_norm: f64,
    /// Counts of the individual normalization peaks.
    pub norm_peaks: Vec<u64>,
    pub window_ps: u64,
}

impl G2Result {
    /// g² = n_zero / mean(norm_peaks), with Poisson errors on both.
    ///
    /// With zero coincidences the one-count convention applies: σ = 1/n_norm,
    /// the value a single count at zero delay would give.
    pub fn from_counts(n_zero: u64, norm_peaks: &[u64], window_ps: u64) -> Result<Self, PhotonError> {
        let total: u64 = norm_peaks.iter().sum();
        if norm_peaks.is_empty() || total == 0 {
            return Err(PhotonError::InsufficientData);
        }
        let n_norm = total as f64 / norm_peaks.len() as f64;
        let g2 = n_zero as f64 / n_norm;
        let sigma = if n_zero > 0 {
            g2 * (1.0 / n_zero as f64 + 1.0 / total as f64).sqrt()
        } else {
            1.0 / n_norm
        };
        Ok(G2Result { g2, sigma, n_zero, n_norm, norm_peaks: norm_peaks.to_vec(), window_ps })
    }
}

/// Per-gate in-window click counts (gate, channel 0, channel 1), ascending gate.
fn gate_counts(stream: &ClickStream, timing: &ExperimentTiming, window: &Window) -> Vec<(u64, u64, u64)> {
    let mut out: Vec<(u64, u64, u64)> = Vec::new();
    for r in stream.records() {
        let Some((gate, off)) = timing.locate(r.time_ps) else { continue };
        if !window.contains(off) {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.0 == gate => {
                if r.channel == 0 { last.1 += 1 } else { last.2 += 1 }
            }
            _ => out.push(if r.channel == 0 { (gate, 1, 0) } else { (gate, 0, 1) }),
        }
    }
    out
}

/// Σ_k c0(k) · c1(k + shift).
fn shifted_product(counts: &[(u64, u64, u64)], shift: i64) -> u64 {
    let mut total = 0;
    let mut b = 0;
    for &(gate, c0, _) in counts {
        if c0 == 0 {
            continue;
        }
        let Some(target) = gate.checked_add_signed(shift) else { continue };
        while b < counts.len() && counts[b].0 < target {
            b += 1;
        }
        if b == counts.len() {
            break;
        }
        if counts[b].0 == target {
            total += c0 * counts[b].2;
        }
    }
    total
}

/// Peak shifts ordered by distance from zero: +1, −1, +2, −2, …
fn nearest_shifts(n: usize) -> impl Iterator<Item = i64> {
    (0..n).map(|i| {
        let mag = (i / 2 + 1) as i64;
        if i % 2 == 0 { mag } else { -mag }
    })
}

pub fn g2_zero(stream: &ClickStream, timing: &ExperimentTiming, window: Window, n_norm_peaks: usize) -> Result<G2Result, PhotonError> {
    timing.validate()?;
    window.validate(timing)?;
    if n_norm_peaks < 2 {
        return Err(PhotonError::InvalidParameter { name: "n_norm_peaks", value: n_norm_peaks as f64 });
    }
    let counts = gate_counts(stream, timing, &window);
    let n_zero = counts.iter().map(|&(_, a, b)| a * b).sum();
    let peaks: Vec<u64> = nearest_shifts(n_norm_peaks).map(|j| shifted_product(&counts, j)).collect();
    G2Result::from_counts(n_zero, &peaks, window.width_ps)
}

/// Cross-check estimator: n_zero · n_trials / (S₀ · S₁) with S_c the
/// in-window singles of channel c.
pub fn g2_singles_product(stream: &ClickStream, timing: &ExperimentTiming, window: Window, n_trials: u64) -> Result<f64, PhotonError> {
    timing.validate()?;
    window.validate(timing)?;
    let counts = gate_counts(stream, timing, &window);
    let n_zero: u64 = counts.iter().map(|&(_, a, b)| a * b).sum();
    let s0: u64 = counts.iter().map(|c| c.1).sum();
    let s1: u64 = counts.iter().map(|c| c.2).sum();
    if s0 == 0 || s1 == 0 {
        return Err(PhotonError::InsufficientData);
    }
    Ok(n_zero as f64 * n_trials as f64 / (s0 as f64 * s1 as f64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bin_width_ps: u64,
    /// Bin centers, ps; bin k covers [k·w − w/2, k·w + w/2).
    pub tau_ps: Vec<i64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub const CSV_HEADER: &'static str = "tau_ps,count";

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of counts with bin centers in [lo, hi].
    pub fn integrate(&self, lo: i64, hi: i64) -> u64 {
        self.tau_ps
            .iter()
            .zip(&self.counts)
            .filter(|(t, _)| (lo..=hi).contains(*t))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (t, c) in self.tau_ps.iter().zip(&self.counts) {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    }
}

/// Histogram of t₁ − t₀ over all channel-0 × channel-1 pairs with
/// |t₁ − t₀| ≤ max_delay.
pub fn coincidence_histogram(
    stream: &ClickStream,
    timing: &ExperimentTiming,
    bin_width_ps: u64,
    max_delay_ps: u64,
) -> Result<Histogram, PhotonError> {
    timing.validate()?;
    if bin_width_ps == 0 {
        return Err(PhotonError::InvalidParameter { name: "bin_width_ps", value: 0.0 });
    }
    if max_delay_ps % timing.rep_period_ps != 0 || max_delay_ps < 5 * timing.rep_period_ps {
        return Err(PhotonError::InvalidParameter {
            name: "max_delay_ps (multiple of rep_period covering 5 peaks)",
            value: max_delay_ps as f64,
        });
    }
    let w = bin_width_ps as i64;
    let half_bins = (max_delay_ps as i64 + w / 2) / w + 1;
    let n_bins = (2 * half_bins + 1) as usize;
    let mut counts = vec![0u64; n_bins];

    let ch1: Vec<u64> = stream.records().iter().filter(|r| r.channel == 1).map(|r| r.time_ps).collect();
    let mut start = 0;
    for r in stream.records().iter().filter(|r| r.channel == 0) {
        let t0 = r.time_ps;
        let lo = t0.saturating_sub(max_delay_ps);
        while start < ch1.len() && ch1[start] < lo {
            start += 1;
        }
        for &t1 in ch1[start..].iter().take_while(|&&t1| t1 <= t0 + max_delay_ps) {
            let dt = t1 as i64 - t0 as i64;
            let k = (dt + w / 2).div_euclid(w);
            counts[(k + half_bins) as usize] += 1;
        }
    }
    let tau_ps = (-half_bins..=half_bins).map(|k| k * w).collect();
    Ok(Histogram { bin_width_ps, tau_ps, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowScanPoint {
    pub window_ps: u64,
    pub result: G2Result,
    pub collected_fraction: f64,
}

pub const WINDOW_SCAN_CSV_HEADER: &str = "window_ns,g2,g2_sigma,collected_fraction";

pub fn write_window_scan_csv<W: Write>(points: &[WindowScanPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{WINDOW_SCAN_CSV_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(p.window_ps as f64 / 1000.0, 12),
            fmt_sig(p.result.g2, 12),
            fmt_sig(p.result.sigma, 12),
            fmt_sig(p.collected_fraction, 12)
        )?;
    }
    Ok(())
}

/// g²(0) and the fraction of gated clicks kept, for each window width
/// starting at `offset_ps` into the gate.
pub fn g2_window_scan(
    stream: &ClickStream,
    timing: &ExperimentTiming,
    offset_ps: u64,
    widths_ps: &[u64],
    n_norm_peaks: usize,
) -> Result<Vec<WindowScanPoint>, PhotonError> {
    if widths_ps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PhotonError::InvalidParameter { name: "window grid (must increase)", value: f64::NAN });
    }
    let gated: Vec<u64> = stream.records().iter().filter_map(|r| timing.locate(r.time_ps)).map(|(_, off)| off).collect();
    widths_ps
        .iter()
        .map(|&width_ps| {
            let window = Window { offset_ps, width_ps };
            let result = g2_zero(stream, timing, window, n_norm_peaks)?;
            let kept = gated.iter().filter(|&&off| window.contains(off)).count();
            let collected_fraction = if gated.is_empty() { 0.0 } else { kept as f64 / gated.len() as f64 };
            Ok(WindowScanPoint { window_ps: width_ps, result, collected_fraction })
        })
        .collect()
}

/// Noise rates that put a source at a chosen g²(0) for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTuning {
    pub dark_rate_hz: f64,
    pub leakage_rate_hz: f64,
    /// Mean in-window source clicks per trial, both detectors.
    pub signal_per_trial: f64,
    /// Mean coincidences per trial in one non-zero peak.
    pub peak_per_trial: f64,
}

impl NoiseTuning {
    /// Trials needed for a mean normalization peak of `n_norm` counts.
    pub fn trials_for_peak(&self, n_norm: f64) -> u64 {
        (n_norm / self.peak_per_trial).round() as u64
    }
}

/// Choose the dark rate so dark counts alone give g²(0) = `dark_floor`, then
/// the leakage rate that brings the total to `g2_target`, for the given
/// window. Uses the mean-field relation g² = (Z_double + sμ + μ²)/(s/2 + μ)²
/// with s the in-window source clicks and μ the noise clicks per detector.
pub fn tune_noise(model: &SourceModel, timing: &ExperimentTiming, window: Window, dark_floor: f64, g2_target: f64) -> Result<NoiseTuning, PhotonError> {
    timing.validate()?;
    model.validate(timing)?;
    window.validate(timing)?;
    if !(dark_floor > 0.0 && dark_floor < g2_target && g2_target < 1.0) {
        return Err(PhotonError::InvalidParameter { name: "dark_floor / g2_target", value: dark_floor });
    }
    let tau = model.tau_e_ps;
    let a = (timing.gate_offset_ps + window.offset_ps) as f64;
    let b = a + window.width_ps as f64;
    let first = (-a / tau).exp() - (-b / tau).exp();
    let gamma2 = |u: f64| 1.0 - (-u / tau).exp() * (1.0 + u / tau);
    let second = gamma2(b) - gamma2(a);
    let both = (-a / tau).exp() - (-b / tau).exp() - ((b - a) / tau) * (-b / tau).exp();
    let single = model.p_emit - model.p_double;
    let s = single * model.eta * first + model.p_double * model.eta * (first + second);
    if s <= 0.0 {
        return Err(PhotonError::InsufficientData);
    }
    let z_double = 0.5 * model.p_double * model.eta * model.eta * both;
    let noise_for = |g: f64| {
        let c = (g * s * s / 4.0 - z_double) / (1.0 - g);
        if c <= 0.0 {
            return None;
        }
        Some(0.5 * (-s + (s * s + 4.0 * c).sqrt()))
    };
    let too_low = PhotonError::InvalidParameter { name: "g2 target below the double-emission floor", value: g2_target };
    let mu_total = noise_for(g2_target).ok_or(too_low.clone())?;
    let mu_dark = noise_for(dark_floor + z_double / (s * s / 4.0)).ok_or(too_low)?;
    let width_s = window.width_ps as f64 * 1e-12;
    let per_channel = 0.5 * s + mu_total;
    Ok(NoiseTuning {
        dark_rate_hz: mu_dark / width_s,
        leakage_rate_hz: 2.0 * (mu_total - mu_dark) / width_s,
        signal_per_trial: s,
        peak_per_trial: per_channel * per_channel,
    })
}
