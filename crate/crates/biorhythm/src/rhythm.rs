//! Periodicity extraction and rhythm-disruption scoring.
//!
//! A user's daily series is reduced to its characteristic rhythm — the
//! period (in days) holding maximum power in a Welch spectral estimate —
//! within a window before and after an event. The per-user difference of
//! the two is the rhythm shift; shifts are aggregated into a binned
//! frequency distribution, and an event's rhythm disruption is the KL
//! divergence between its shift distribution and the random-day baseline.
//!
//! Rhythm windows are deliberately wider than the week-long volume/OOS
//! buffer: resolving a 7-day period needs several periods of daily
//! samples, so the default window is 28 days per side with 14-day Welch
//! segments at 50% overlap.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data_model::DailySeries;
use crate::error::{Error, Result};
use crate::EventSpec;

/// Interior gaps up to this many days are linearly interpolated; longer
/// gaps disqualify the user-window.
pub const MAX_GAP_DAYS: usize = 2;

/// Spectral and binning parameters for the rhythm metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhythmConfig {
    /// Days on each side of the event used for the before/after spectra.
    pub window_days: usize,
    /// Welch segment length in days.
    pub segment_days: usize,
    /// Fractional overlap between consecutive segments, in [0, 1).
    pub overlap_fraction: f64,
    /// Histogram bin width for shift distributions, in days.
    pub bin_width_days: f64,
    /// Additive smoothing mass per bin, keeping KL finite.
    pub smoothing_mass: f64,
}

impl Default for RhythmConfig {
    fn default() -> Self {
        let segment_days = 14;
        RhythmConfig {
            window_days: 28,
            segment_days,
            overlap_fraction: 0.5,
            bin_width_days: default_bin_width(segment_days),
            smoothing_mass: 1e-9,
        }
    }
}

/// Smallest period resolution of the spectral grid: the gap between the
/// two shortest representable periods.
pub fn default_bin_width(segment_days: usize) -> f64 {
    let h = (segment_days / 2) as f64;
    segment_days as f64 / (h * (h - 1.0))
}

impl RhythmConfig {
    pub fn with_segment_days(segment_days: usize) -> Self {
        RhythmConfig {
            segment_days,
            bin_width_days: default_bin_width(segment_days),
            ..RhythmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_days < 4 {
            return Err(Error::InvalidParameter(format!(
                "segment_days {} below minimum 4",
                self.segment_days
            )));
        }
        if self.window_days < self.segment_days {
            return Err(Error::InvalidParameter(format!(
                "window_days {} shorter than segment_days {}",
                self.window_days, self.segment_days
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidParameter(format!(
                "overlap_fraction {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        if !self.bin_width_days.is_finite() || self.bin_width_days <= 0.0 {
            return Err(Error::InvalidParameter("bin_width_days must be > 0".into()));
        }
        if self.smoothing_mass < 0.0 {
            return Err(Error::InvalidParameter("smoothing_mass must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Largest |shift| the spectral grid can produce: longest minus
    /// shortest representable period.
    pub fn max_abs_shift_days(&self) -> f64 {
        self.segment_days as f64 - 2.0
    }
}

/// One-sided Welch power spectral density on the period axis, longest
/// period first, zero-frequency term dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub periods: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdEstimate {
    /// CSV export, header `period_days,power`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period_days,power\n");
        for (p, w) in self.periods.iter().zip(&self.power) {
            out.push_str(&format!("{p},{w}\n"));
        }
        out
    }
}

type FftCache = (FftPlanner<f64>, HashMap<usize, Arc<dyn Fft<f64>>>);

thread_local! {
    static FFT_CACHE: RefCell<FftCache> = RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn fft_forward(buf: &mut [Complex<f64>]) {
    FFT_CACHE.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        let fft = cache
            .entry(buf.len())
            .or_insert_with(|| planner.plan_fft_forward(buf.len()))
            .clone();
        fft.process(buf);
    });
}

/// Resolve the window's samples: trim missing edges, linearly interpolate
/// interior gaps of at most [`MAX_GAP_DAYS`].
fn fill_window(series: &DailySeries, window: &Range<usize>) -> Result<Vec<f64>> {
    if window.start >= window.end || window.end > series.len() {
        return Err(Error::domain(format!(
            "window {}..{} outside series of {} days",
            window.start,
            window.end,
            series.len()
        )));
    }
    let slice = &series.values[window.clone()];
    if slice.iter().all(Option::is_none) {
        return Err(Error::domain("all-missing window"));
    }
    let first = slice.iter().position(Option::is_some).unwrap();
    let last = slice.iter().rposition(Option::is_some).unwrap();
    let trimmed = &slice[first..=last];

    let mut filled = Vec::with_capacity(trimmed.len());
    let mut i = 0;
    while i < trimmed.len() {
        match trimmed[i] {
            Some(v) => {
                filled.push(v);
                i += 1;
            }
            None => {
                let gap_start = i;
                while trimmed[i].is_none() {
                    i += 1;
                }
                let gap = i - gap_start;
                if gap > MAX_GAP_DAYS {
                    return Err(Error::insufficient(format!(
                        "gap of {gap} missing days exceeds the {MAX_GAP_DAYS}-day limit"
                    )));
                }
                let left = trimmed[gap_start - 1].unwrap();
                let right = trimmed[i].unwrap();
                for k in 0..gap {
                    let frac = (k + 1) as f64 / (gap + 1) as f64;
                    filled.push(left + frac * (right - left));
                }
            }
        }
    }
    Ok(filled)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

fn detrend_linear(seg: &mut [f64]) {
    let n = seg.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = seg.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in seg.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (v - mean_y);
        den += dx * dx;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    for (i, v) in seg.iter_mut().enumerate() {
        *v -= mean_y + slope * (i as f64 - mean_x);
    }
}

/// Welch PSD of a daily series window: detrended, Hann-windowed,
/// overlapped segments with averaged periodograms, converted to periods.
pub fn welch_psd(
    series: &DailySeries,
    window: Range<usize>,
    segment_days: usize,
    overlap_fraction: f64,
) -> Result<PsdEstimate> {
    if segment_days < 4 {
        return Err(Error::InvalidParameter(format!(
            "segment_days {segment_days} below minimum 4"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidParameter(format!(
            "overlap_fraction {overlap_fraction} outside [0, 1)"
        )));
    }
    let mut samples = fill_window(series, &window)?;
    if samples.len() < segment_days {
        return Err(Error::insufficient(format!(
            "{} usable day(s), need at least segment_days = {segment_days}",
            samples.len()
        )));
    }
    let grand_mean = samples.iter().sum::<f64>() / samples.len() as f64;
    for v in &mut samples {
        *v -= grand_mean;
    }

    let step = ((segment_days as f64) * (1.0 - overlap_fraction)).round().max(1.0) as usize;
    let window_fn = hann(segment_days);
    let win_power: f64 = window_fn.iter().map(|w| w * w).sum();
    let n_bins = segment_days / 2;
    let mut acc = vec![0.0f64; n_bins];
    let mut n_segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); segment_days];

    let mut start = 0usize;
    while start + segment_days <= samples.len() {
        let mut seg: Vec<f64> = samples[start..start + segment_days].to_vec();
        detrend_linear(&mut seg);
        for (i, (v, w)) in seg.iter().zip(&window_fn).enumerate() {
            buf[i] = Complex::new(v * w, 0.0);
        }
        fft_forward(&mut buf);
        for k in 1..=n_bins {
            // One-sided density at fs = 1/day; double interior bins.
            let factor = if segment_days.is_multiple_of(2) && k == n_bins {
                1.0
            } else {
                2.0
            };
            acc[k - 1] += factor * buf[k].norm_sqr() / win_power;
        }
        n_segments += 1;
        start += step;
    }
    for a in &mut acc {
        *a /= n_segments as f64;
    }
    let periods: Vec<f64> = (1..=n_bins).map(|k| segment_days as f64 / k as f64).collect();
    Ok(PsdEstimate { periods, power: acc })
}

/// Period (days) of the maximum-power bin; ties resolve toward the
/// smaller period.
pub fn characteristic_rhythm(
    series: &DailySeries,
    window: Range<usize>,
    cfg: &RhythmConfig,
) -> Result<f64> {
    cfg.validate()?;
    let psd = welch_psd(series, window, cfg.segment_days, cfg.overlap_fraction)?;
    let mut best = 0usize;
    for i in 1..psd.power.len() {
        // Periods descend with the index, so >= favors the smaller period.
        if psd.power[i] >= psd.power[best] {
            best = i;
        }
    }
    Ok(psd.periods[best])
}

/// Rhythm shift of one user across an event:
/// `rhythm(t, t+W) − rhythm(t−W, t)` in days.
pub fn rhythm_shift_user(series: &DailySeries, event: &EventSpec, cfg: &RhythmConfig) -> Result<f64> {
    let idx = series.index_of(event.date)?;
    rhythm_shift_at(series, idx, cfg)
}

/// Same as [`rhythm_shift_user`] with the event given as a day index.
pub fn rhythm_shift_at(series: &DailySeries, idx: usize, cfg: &RhythmConfig) -> Result<f64> {
    cfg.validate()?;
    let w = cfg.window_days;
    if idx < w || idx + w > series.len() {
        return Err(Error::domain(format!(
            "rhythm windows around day {idx} exceed the series ({} days, window {w})",
            series.len()
        )));
    }
    let before = characteristic_rhythm(series, idx - w..idx, cfg)?;
    let after = characteristic_rhythm(series, idx..idx + w, cfg)?;
    Ok(after - before)
}

/// A binned, normalized frequency distribution of rhythm shifts over
/// shared symmetric edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDistribution {
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ShiftDistribution {
    pub fn new(bin_edges: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if bin_edges.len() != probabilities.len() + 1 || probabilities.is_empty() {
            return Err(Error::domain("bin edges must be one longer than masses"));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("bin edges must be strictly ascending"));
        }
        if probabilities.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::domain("negative probability mass"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("masses sum to {total}, expected 1")));
        }
        Ok(ShiftDistribution {
            bin_edges,
            probabilities,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.probabilities.len()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| p * 0.5 * (self.bin_edges[i] + self.bin_edges[i + 1]))
            .sum()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }
}

/// Histogram the shifts over symmetric edges covering `[−max_abs_shift,
/// +max_abs_shift]`, add `smoothing_mass` per bin and renormalize.
///
/// Two calls with the same `bin_width_days` and `max_abs_shift_days`
/// produce identical edges, as [`rhythm_disruption`] requires.
pub fn shift_distribution(
    shifts: &[f64],
    bin_width_days: f64,
    smoothing_mass: f64,
    max_abs_shift_days: f64,
) -> Result<ShiftDistribution> {
    if shifts.is_empty() {
        return Err(Error::domain("no shift values to bin"));
    }
    if !bin_width_days.is_finite() || bin_width_days <= 0.0 {
        return Err(Error::InvalidParameter("bin width must be > 0".into()));
    }
    if smoothing_mass < 0.0 {
        return Err(Error::InvalidParameter("smoothing mass must be ≥ 0".into()));
    }
    if !max_abs_shift_days.is_finite() || max_abs_shift_days <= 0.0 {
        return Err(Error::InvalidParameter(
            "max_abs_shift_days must be positive and finite".into(),
        ));
    }
    let n_side = (max_abs_shift_days / bin_width_days).ceil().max(1.0) as usize;
    let n_bins = 2 * n_side;
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|i| (i as f64 - n_side as f64) * bin_width_days)
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &s in shifts {
        let raw = ((s - bin_edges[0]) / bin_width_days).floor();
        let idx = (raw.max(0.0) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    if smoothing_mass == 0.0 && counts.contains(&0) {
        return Err(Error::InvalidParameter(
            "smoothing_mass = 0 requires every bin to be occupied".into(),
        ));
    }
    let total = shifts.len() as f64;
    let mut probabilities: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / total + smoothing_mass)
        .collect();
    let norm: f64 = probabilities.iter().sum();
    for p in &mut probabilities {
        *p /= norm;
    }
    ShiftDistribution::new(bin_edges, probabilities)
}

/// `D_KL(event ‖ null) = Σ pᵢ · ln(pᵢ/qᵢ)`, requiring identical bin edges.
/// Nonnegative; zero iff the distributions are identical.
pub fn rhythm_disruption(event_dist: &ShiftDistribution, null_dist: &ShiftDistribution) -> Result<f64> {
    if event_dist.bin_edges != null_dist.bin_edges {
        return Err(Error::domain("shift distributions have mismatched bin edges"));
    }
    let mut kl = 0.0;
    for (p, q) in event_dist.probabilities.iter().zip(&null_dist.probabilities) {
        if *p > 0.0 {
            if *q > 0.0 {
                kl += p * (p / q).ln();
            } else {
                return Ok(f64::INFINITY);
            }
        }
    }
    Ok(kl.max(0.0))
}

/// Plot-ready CSV comparing an event shift distribution with its null,
/// header `bin_left,bin_right,event_mass,null_mass`.
pub fn shift_distribution_csv(event: &ShiftDistribution, null: &ShiftDistribution) -> Result<String> {
    if event.bin_edges != null.bin_edges {
        return Err(Error::domain("shift distributions have mismatched bin edges"));
    }
    let mut out = String::from("bin_left,bin_right,event_mass,null_mass\n");
    for i in 0..event.n_bins() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            event.bin_edges[i],
            event.bin_edges[i + 1],
            event.probabilities[i],
            null.probabilities[i]
        ));
    }
    Ok(out)
}

/// JSON-ready rhythm-disruption record for one event and activity.
#[derive(Debug, Clone, Serialize)]
pub struct DisruptionReport {
    pub event: String,
    pub activity: String,
    pub kl: f64,
    pub n_users: usize,
    pub window_days: usize,
}
