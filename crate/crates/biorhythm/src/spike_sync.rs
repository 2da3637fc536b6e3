//! SPIKE-distance between sleep-onset spike trains and the out-of-sync
//! event metrics built on it.
//!
//! The instantaneous spike function S(t) compares, at every time point,
//! the preceding and following spikes of two trains. Two evaluation
//! variants are provided:
//!
//! - [`SpikeVariant::PaperVerbatim`] — weighted spike-time differences
//!   normalized by the mean inter-spike interval of the two trains:
//!   `S(t) = (|Δt_P|·⟨x_F⟩ + |Δt_F|·⟨x_P⟩) / ⟨ISI⟩`.
//! - [`SpikeVariant::StandardNormalized`] (default) — the standard
//!   locally-normalized spike function, whose time average is guaranteed
//!   to lie in [0, 1]:
//!   `S(t) = (S₁·x_ISI⁽²⁾ + S₂·x_ISI⁽¹⁾) / (2·⟨x_ISI⟩²)` with
//!   `Sₙ = (ΔT_P⁽ⁿ⁾·x_F⁽ⁿ⁾ + ΔT_F⁽ⁿ⁾·x_P⁽ⁿ⁾) / x_ISI⁽ⁿ⁾`, where ΔT are
//!   nearest-neighbor spike distances across trains.
//!
//! The bivariate distance D_S is the trapezoidal time average of S(t)
//! over a window; the multivariate distance averages D_S over user pairs
//! (optionally a seeded uniform sample of pairs). Event synchronicity is
//! summarized by the out-of-sync score `OOS = D̄_S(after) − D̄_S(before)`
//! and by the relative growth of the heavily out-of-sync pair fraction,
//! thresholded at 2σ above the median of the full-interval pair
//! distribution.

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{filter_complete_trains, to_spike_train, Cohort, EventSpec, SpikeTrain};
use crate::error::{Error, Result};

/// Which spike-function normalization to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeVariant {
    PaperVerbatim,
    StandardNormalized,
}

impl SpikeVariant {
    pub fn name(&self) -> &'static str {
        match self {
            SpikeVariant::PaperVerbatim => "paper",
            SpikeVariant::StandardNormalized => "standard",
        }
    }
}

impl FromStr for SpikeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper-verbatim" => Ok(SpikeVariant::PaperVerbatim),
            "standard" | "standard-normalized" => Ok(SpikeVariant::StandardNormalized),
            other => Err(Error::config(format!("unknown spike variant `{other}`"))),
        }
    }
}

/// How S(t) is kept defined near the window boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeHandling {
    /// Add auxiliary spikes at both window edges to both trains.
    AuxiliaryEndpointSpikes,
    /// Restrict the integration range to where both trains have real
    /// preceding and following spikes.
    Clip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeDistanceConfig {
    pub variant: SpikeVariant,
    /// Grid density for the trapezoidal integration, in sample points per
    /// mean inter-spike interval.
    pub grid_points_per_mean_isi: usize,
    pub edge_handling: EdgeHandling,
}

impl Default for SpikeDistanceConfig {
    fn default() -> Self {
        SpikeDistanceConfig {
            variant: SpikeVariant::StandardNormalized,
            grid_points_per_mean_isi: 200,
            edge_handling: EdgeHandling::AuxiliaryEndpointSpikes,
        }
    }
}

impl SpikeDistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_mean_isi < 10 {
            return Err(Error::InvalidParameter(format!(
                "grid_points_per_mean_isi {} below minimum 10",
                self.grid_points_per_mean_isi
            )));
        }
        Ok(())
    }
}

/// Pairwise distances for one window, keyed by user index pairs (a < b)
/// into a sorted user list.
#[derive(Debug, Clone)]
pub struct PairDistanceMatrix {
    users: Vec<String>,
    pairs: Vec<(u32, u32, f64)>,
    window: (f64, f64),
}

impl PairDistanceMatrix {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|&(_, _, d)| d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.pairs
            .iter()
            .map(|&(a, b, d)| (self.users[a as usize].as_str(), self.users[b as usize].as_str(), d))
    }

    pub fn mean(&self) -> f64 {
        self.values().sum::<f64>() / self.pairs.len() as f64
    }

    /// CSV export, header `user_a,user_b,d_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_a,user_b,d_s\n");
        for (a, b, d) in self.iter() {
            out.push_str(&format!("{a},{b},{d}\n"));
        }
        out
    }
}

/// Per-train evaluation state for one window.
struct EvalTrain {
    /// Real in-window spikes plus auxiliary edge spikes when configured.
    spikes: Vec<f64>,
    /// Mean inter-spike interval of the real in-window spikes.
    mean_isi: f64,
    /// Nearest-neighbor distance of each spike to the other train.
    nn: Vec<f64>,
}

struct PairContext {
    a: EvalTrain,
    b: EvalTrain,
    /// Effective integration range (shrunk under [`EdgeHandling::Clip`]).
    t1: f64,
    t2: f64,
    variant: SpikeVariant,
}

fn in_window(train: &SpikeTrain, t1: f64, t2: f64) -> &[f64] {
    let s = train.spikes();
    let lo = s.partition_point(|&t| t < t1);
    let hi = s.partition_point(|&t| t <= t2);
    &s[lo..hi]
}

fn nearest_distances(from: &[f64], to: &[f64]) -> Vec<f64> {
    from.iter()
        .map(|&t| {
            let i = to.partition_point(|&u| u < t);
            let right = to.get(i).map(|u| (u - t).abs());
            let left = i.checked_sub(1).and_then(|j| to.get(j)).map(|u| (t - u).abs());
            match (left, right) {
                (Some(l), Some(r)) => l.min(r),
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => f64::INFINITY,
            }
        })
        .collect()
}

fn build_context(
    s1: &SpikeTrain,
    s2: &SpikeTrain,
    window: (f64, f64),
    cfg: &SpikeDistanceConfig,
    label1: &str,
    label2: &str,
) -> Result<PairContext> {
    cfg.validate()?;
    let (t1, t2) = window;
    if !(t1.is_finite() && t2.is_finite() && t1 < t2) {
        return Err(Error::domain(format!("degenerate window [{t1}, {t2}]")));
    }
    if t1 < 0.0 || t2 > s1.t_end() || t2 > s2.t_end() {
        return Err(Error::domain(format!(
            "window [{t1}, {t2}] outside the trains' intervals"
        )));
    }

    let reals1 = in_window(s1, t1, t2);
    let reals2 = in_window(s2, t1, t2);
    for (reals, label) in [(reals1, label1), (reals2, label2)] {
        if reals.len() < 2 {
            return Err(Error::insufficient(format!(
                "{label}: {} spike(s) in window [{t1}, {t2}], need at least 2",
                reals.len()
            )));
        }
    }
    let mean_isi = |r: &[f64]| (r[r.len() - 1] - r[0]) / (r.len() - 1) as f64;
    let (isi1, isi2) = (mean_isi(reals1), mean_isi(reals2));

    let (eval1, eval2, eff1, eff2) = match cfg.edge_handling {
        EdgeHandling::AuxiliaryEndpointSpikes => {
            let aux = |reals: &[f64]| {
                let mut v = Vec::with_capacity(reals.len() + 2);
                if reals[0] > t1 {
                    v.push(t1);
                }
                v.extend_from_slice(reals);
                if *reals.last().unwrap() < t2 {
                    v.push(t2);
                }
                v
            };
            (aux(reals1), aux(reals2), t1, t2)
        }
        EdgeHandling::Clip => {
            let eff1 = reals1[0].max(reals2[0]).max(t1);
            let eff2 = reals1[reals1.len() - 1]
                .min(reals2[reals2.len() - 1])
                .min(t2);
            if eff1 >= eff2 {
                return Err(Error::domain(format!(
                    "clipped window [{eff1}, {eff2}] is degenerate"
                )));
            }
            (reals1.to_vec(), reals2.to_vec(), eff1, eff2)
        }
    };

    let nn1 = nearest_distances(&eval1, &eval2);
    let nn2 = nearest_distances(&eval2, &eval1);
    Ok(PairContext {
        a: EvalTrain {
            spikes: eval1,
            mean_isi: isi1,
            nn: nn1,
        },
        b: EvalTrain {
            spikes: eval2,
            mean_isi: isi2,
            nn: nn2,
        },
        t1: eff1,
        t2: eff2,
        variant: cfg.variant,
    })
}

impl PairContext {
    /// Index of the last spike at or before `t` (t ≥ first spike holds by
    /// construction of the effective window).
    fn preceding(spikes: &[f64], t: f64) -> usize {
        spikes.partition_point(|&u| u <= t).saturating_sub(1)
    }

    fn spike_value(&self, t: f64, ia: usize, ib: usize) -> f64 {
        let a = &self.a;
        let b = &self.b;
        let pa = a.spikes[ia];
        let pb = b.spikes[ib];
        // Clamp at the final spike: x_F = 0 there, so the value is exact.
        let (fa_idx, fb_idx) = (
            (ia + 1).min(a.spikes.len() - 1),
            (ib + 1).min(b.spikes.len() - 1),
        );
        let fa = a.spikes[fa_idx];
        let fb = b.spikes[fb_idx];
        let (x_pa, x_fa) = (t - pa, (fa - t).max(0.0));
        let (x_pb, x_fb) = (t - pb, (fb - t).max(0.0));

        match self.variant {
            SpikeVariant::PaperVerbatim => {
                let dt_p = (pa - pb).abs();
                let dt_f = (fa - fb).abs();
                let mean_x_f = 0.5 * (x_fa + x_fb);
                let mean_x_p = 0.5 * (x_pa + x_pb);
                let mean_isi = 0.5 * (a.mean_isi + b.mean_isi);
                (dt_p * mean_x_f + dt_f * mean_x_p) / mean_isi
            }
            SpikeVariant::StandardNormalized => {
                let isi_a = fa - pa;
                let isi_b = fb - pb;
                let s_a = if isi_a > 0.0 {
                    (a.nn[ia] * x_fa + a.nn[fa_idx] * x_pa) / isi_a
                } else {
                    0.0
                };
                let s_b = if isi_b > 0.0 {
                    (b.nn[ib] * x_fb + b.nn[fb_idx] * x_pb) / isi_b
                } else {
                    0.0
                };
                let isi_sum = isi_a + isi_b;
                if isi_sum > 0.0 {
                    (s_a * isi_b + s_b * isi_a) / (0.5 * isi_sum * isi_sum)
                } else {
                    0.0
                }
            }
        }
    }

    fn grid_intervals(&self, density: usize) -> usize {
        let span = self.t2 - self.t1;
        let mean_isi = 0.5 * (self.a.mean_isi + self.b.mean_isi);
        let n = (span / mean_isi * density as f64).ceil();
        (n as usize).clamp(16, 20_000_000)
    }

    /// Trapezoidal integration of S(t) over the uniform grid augmented
    /// with the spike times. S(t) is linear between spikes but jumps at
    /// them, so each segment is closed with one-sided limits: both
    /// endpoints are evaluated with the segment's own preceding-spike
    /// state, which makes the quadrature exact on every linear piece.
    fn integrate(&self, density: usize) -> f64 {
        let n = self.grid_intervals(density);
        let span = self.t2 - self.t1;
        let h = span / n as f64;
        let a = &self.a.spikes;
        let b = &self.b.spikes;
        let mut ia = PairContext::preceding(a, self.t1);
        let mut ib = PairContext::preceding(b, self.t1);
        let mut sum = 0.0;
        let mut t_left = self.t1;
        let mut s_left = self.spike_value(self.t1, ia, ib);
        let mut k = 1usize; // next uniform grid index
        loop {
            // End of the current linear piece: next spike in either train.
            let next_a = a.get(ia + 1).copied().unwrap_or(f64::INFINITY);
            let next_b = b.get(ib + 1).copied().unwrap_or(f64::INFINITY);
            let t_break = next_a.min(next_b).min(self.t2);
            // Uniform grid points interior to the piece.
            while k < n {
                let t = self.t1 + k as f64 * h;
                if t >= t_break {
                    break;
                }
                let s = self.spike_value(t, ia, ib);
                sum += 0.5 * (s_left + s) * (t - t_left);
                t_left = t;
                s_left = s;
                k += 1;
            }
            // Close the piece with its left-limit value at the break.
            let s_end = self.spike_value(t_break, ia, ib);
            sum += 0.5 * (s_left + s_end) * (t_break - t_left);
            if t_break >= self.t2 {
                break;
            }
            while ia + 1 < a.len() && a[ia + 1] <= t_break {
                ia += 1;
            }
            while ib + 1 < b.len() && b[ib + 1] <= t_break {
                ib += 1;
            }
            t_left = t_break;
            s_left = self.spike_value(t_break, ia, ib);
        }
        sum / span
    }
}

/// Instantaneous spike function S(t), evaluated over the trains' shared
/// interval `[0, min(T₁, T₂)]`.
pub fn spike_function_at(
    t: f64,
    s1: &SpikeTrain,
    s2: &SpikeTrain,
    cfg: &SpikeDistanceConfig,
) -> Result<f64> {
    let window = (0.0, s1.t_end().min(s2.t_end()));
    let ctx = build_context(s1, s2, window, cfg, "train 1", "train 2")?;
    if t < ctx.t1 || t > ctx.t2 {
        return Err(Error::domain(format!(
            "t = {t} outside the evaluation window [{}, {}]",
            ctx.t1, ctx.t2
        )));
    }
    let ia = PairContext::preceding(&ctx.a.spikes, t);
    let ib = PairContext::preceding(&ctx.b.spikes, t);
    Ok(ctx.spike_value(t, ia, ib))
}

/// Time-averaged SPIKE-distance over `window`, trapezoidal on a uniform
/// grid. Symmetric in its arguments and zero for identical trains.
pub fn bivariate_spike_distance(
    s1: &SpikeTrain,
    s2: &SpikeTrain,
    window: (f64, f64),
    cfg: &SpikeDistanceConfig,
) -> Result<f64> {
    let ctx = build_context(s1, s2, window, cfg, "train 1", "train 2")?;
    Ok(ctx.integrate(cfg.grid_points_per_mean_isi))
}

/// Decode the k-th pair (row-major over the upper triangle) of an
/// n-element set.
fn decode_pair(k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    let mut offset = 0;
    loop {
        let row = n - 1 - i;
        if k < offset + row {
            return (i, i + 1 + (k - offset));
        }
        offset += row;
        i += 1;
    }
}

/// Floyd's algorithm: `m` distinct values from `0..total`, seeded.
fn sample_indices(total: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    for j in (total - m)..total {
        let t = rng.gen_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

/// Average bivariate SPIKE-distance over all `n(n−1)/2` pairs of labeled
/// trains, or over `pair_budget` uniformly sampled pairs when set.
/// Returns the mean together with the per-pair matrix.
pub fn multivariate_spike_distance(
    trains: &[(String, SpikeTrain)],
    window: (f64, f64),
    cfg: &SpikeDistanceConfig,
    pair_budget: Option<usize>,
    seed: u64,
) -> Result<(f64, PairDistanceMatrix)> {
    if trains.len() < 2 {
        return Err(Error::insufficient(format!(
            "{} usable train(s), need at least 2",
            trains.len()
        )));
    }
    let mut order: Vec<usize> = (0..trains.len()).collect();
    order.sort_by(|&i, &j| trains[i].0.cmp(&trains[j].0));
    let users: Vec<String> = order.iter().map(|&i| trains[i].0.clone()).collect();
    for w in users.windows(2) {
        if w[0] == w[1] {
            return Err(Error::domain(format!("duplicate train label `{}`", w[0])));
        }
    }

    let n = users.len();
    let total = n * (n - 1) / 2;
    let pair_indices: Vec<usize> = match pair_budget {
        Some(0) => return Err(Error::InvalidParameter("pair_budget must be ≥ 1".into())),
        Some(budget) if budget < total => sample_indices(total, budget, seed),
        _ => (0..total).collect(),
    };

    let pairs: Vec<(u32, u32, f64)> = pair_indices
        .par_iter()
        .map(|&k| {
            let (i, j) = decode_pair(k, n);
            let (label_i, train_i) = &trains[order[i]];
            let (label_j, train_j) = &trains[order[j]];
            let ctx = build_context(train_i, train_j, window, cfg, label_i, label_j)?;
            Ok((i as u32, j as u32, ctx.integrate(cfg.grid_points_per_mean_isi)))
        })
        .collect::<Result<_>>()?;

    let matrix = PairDistanceMatrix {
        users,
        pairs,
        window,
    };
    Ok((matrix.mean(), matrix))
}

/// Knobs shared by the event-level synchronicity metrics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SyncConfig {
    pub distance: SpikeDistanceConfig,
    /// Cap on sampled pairs; `None` evaluates every pair.
    pub pair_budget: Option<usize>,
    pub seed: u64,
}

/// Everything the OOS metrics share for one event: the complete-train
/// user set and the before/after pair matrices (same sampled pairs on
/// both sides).
#[derive(Debug, Clone)]
pub struct OosAnalysis {
    pub event: String,
    pub oos: f64,
    pub before_mean: f64,
    pub after_mean: f64,
    pub before_pairs: PairDistanceMatrix,
    pub after_pairs: PairDistanceMatrix,
    pub n_users: usize,
}

/// Build labeled full-interval spike trains for the users with complete
/// trains around `event`.
pub fn complete_event_trains(
    cohort: &Cohort,
    event: &EventSpec,
) -> Result<Vec<(String, SpikeTrain)>> {
    let users = filter_complete_trains(cohort, event)?;
    users
        .into_iter()
        .map(|u| {
            let train = to_spike_train(cohort, &u)?;
            Ok((u, train))
        })
        .collect()
}

pub fn oos_analysis(cohort: &Cohort, event: &EventSpec, cfg: &SyncConfig) -> Result<OosAnalysis> {
    let trains = complete_event_trains(cohort, event)?;
    if trains.len() < 2 {
        return Err(Error::insufficient(format!(
            "event `{}`: {} complete user(s), need at least 2",
            event.name,
            trains.len()
        )));
    }
    oos_analysis_for_trains(&trains, cohort, event, cfg)
}

pub(crate) fn oos_analysis_for_trains(
    trains: &[(String, SpikeTrain)],
    cohort: &Cohort,
    event: &EventSpec,
    cfg: &SyncConfig,
) -> Result<OosAnalysis> {
    let t = cohort.interval().index_of(event.date)? as f64;
    let alpha = event.alpha_days as f64;
    let before = (t - alpha, t);
    let after = (t, t + alpha);
    let (before_mean, before_pairs) =
        multivariate_spike_distance(trains, before, &cfg.distance, cfg.pair_budget, cfg.seed)?;
    let (after_mean, after_pairs) =
        multivariate_spike_distance(trains, after, &cfg.distance, cfg.pair_budget, cfg.seed)?;
    Ok(OosAnalysis {
        event: event.name.clone(),
        oos: after_mean - before_mean,
        before_mean,
        after_mean,
        before_pairs,
        after_pairs,
        n_users: trains.len(),
    })
}

/// Out-of-sync score `OOS = D̄_S(t, t+α) − D̄_S(t−α, t)` over the users
/// with complete trains. Positive means the population desynchronized.
pub fn oos_score(cohort: &Cohort, event: &EventSpec, cfg: &SyncConfig) -> Result<f64> {
    Ok(oos_analysis(cohort, event, cfg)?.oos)
}

/// Fraction of `pairs` whose distance exceeds `median + 2σ` of the
/// threshold-source distribution (the full-interval pair distances).
pub fn oos_outlier_fraction(
    pairs: &PairDistanceMatrix,
    threshold_source: &PairDistanceMatrix,
) -> Result<f64> {
    if threshold_source.n_pairs() == 0 {
        return Err(Error::domain("empty threshold source"));
    }
    if pairs.n_pairs() == 0 {
        return Err(Error::domain("empty pair matrix"));
    }
    let threshold = outlier_threshold(threshold_source);
    let count = pairs.values().filter(|&d| d > threshold).count();
    Ok(count as f64 / pairs.n_pairs() as f64)
}

fn outlier_threshold(source: &PairDistanceMatrix) -> f64 {
    let mut values: Vec<f64> = source.values().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    let sd = if n < 2 {
        0.0
    } else {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    };
    median + 2.0 * sd
}

pub(crate) fn growth_from_fractions(before: f64, after: f64) -> Result<f64> {
    if before <= 0.0 {
        return Err(Error::UndefinedGrowth);
    }
    Ok((after - before) / before)
}

/// Relative increase across the event of the heavily out-of-sync pair
/// fraction (`(outliers_after − outliers_before) / outliers_before`).
/// The outlier threshold comes from the same pairs evaluated over the
/// full cohort interval.
pub fn oos_population_growth(cohort: &Cohort, event: &EventSpec, cfg: &SyncConfig) -> Result<f64> {
    let trains = complete_event_trains(cohort, event)?;
    if trains.len() < 2 {
        return Err(Error::insufficient(format!(
            "event `{}`: {} complete user(s), need at least 2",
            event.name,
            trains.len()
        )));
    }
    let analysis = oos_analysis_for_trains(&trains, cohort, event, cfg)?;
    let year = full_interval_matrix(&trains, cohort, cfg)?;
    let before = oos_outlier_fraction(&analysis.before_pairs, &year)?;
    let after = oos_outlier_fraction(&analysis.after_pairs, &year)?;
    growth_from_fractions(before, after)
}

/// Pair distances over the whole cohort interval for the given trains.
pub fn full_interval_matrix(
    trains: &[(String, SpikeTrain)],
    cohort: &Cohort,
    cfg: &SyncConfig,
) -> Result<PairDistanceMatrix> {
    let window = (0.0, cohort.interval().n_days() as f64);
    let (_, matrix) =
        multivariate_spike_distance(trains, window, &cfg.distance, cfg.pair_budget, cfg.seed)?;
    Ok(matrix)
}

/// JSON-ready record of the synchronicity metrics for one event.
#[derive(Debug, Clone, Serialize)]
pub struct SyncReport {
    pub event: String,
    pub oos: f64,
    pub oos_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_error: Option<String>,
    pub n_users: usize,
    pub n_pairs: usize,
    pub variant: String,
    pub seed: u64,
}

/// One-pass computation of OOS and OOS growth for an event, reusing the
/// window matrices; growth failures are reported in-band rather than
/// aborting the report.
pub fn event_sync_report(cohort: &Cohort, event: &EventSpec, cfg: &SyncConfig) -> Result<SyncReport> {
    let trains = complete_event_trains(cohort, event)?;
    if trains.len() < 2 {
        return Err(Error::insufficient(format!(
            "event `{}`: {} complete user(s), need at least 2",
            event.name,
            trains.len()
        )));
    }
    let analysis = oos_analysis_for_trains(&trains, cohort, event, cfg)?;
    let year = full_interval_matrix(&trains, cohort, cfg)?;
    let growth = oos_outlier_fraction(&analysis.before_pairs, &year).and_then(|before| {
        let after = oos_outlier_fraction(&analysis.after_pairs, &year)?;
        growth_from_fractions(before, after)
    });
    let (oos_growth, growth_error) = match growth {
        Ok(g) => (Some(g), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SyncReport {
        event: event.name.clone(),
        oos: analysis.oos,
        oos_growth,
        growth_error,
        n_users: analysis.n_users,
        n_pairs: analysis.before_pairs.n_pairs(),
        variant: cfg.distance.variant.name().to_string(),
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn train(spikes: &[f64], t_end: f64) -> SpikeTrain {
        SpikeTrain::new(spikes.to_vec(), t_end).unwrap()
    }

    fn cfg(variant: SpikeVariant) -> SpikeDistanceConfig {
        SpikeDistanceConfig {
            variant,
            ..SpikeDistanceConfig::default()
        }
    }

    fn random_train(rng: &mut ChaCha8Rng, t_end: f64, n: usize) -> SpikeTrain {
        use rand::Rng as _;
        let mut spikes: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..t_end)).collect();
        spikes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        spikes.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        SpikeTrain::new(spikes, t_end).unwrap()
    }

    /// Complete nightly onsets with Gaussian jitter: the shape of the
    /// trains the OOS pipeline feeds to the distance (incomplete trains
    /// are filtered out upstream).
    fn jittered_train(rng: &mut ChaCha8Rng, n_days: usize, sd: f64) -> SpikeTrain {
        use rand::Rng as _;
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, sd).unwrap();
        let phase = rng.gen_range(0.85..0.99);
        let mut spikes = Vec::with_capacity(n_days);
        for d in 0..n_days {
            spikes.push((d as f64 + phase + normal.sample(rng)).clamp(0.0, n_days as f64));
        }
        spikes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        spikes.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        SpikeTrain::new(spikes, n_days as f64 + 1.0).unwrap()
    }

    #[test]
    fn identical_trains_have_zero_spike_function_and_distance() {
        let s = train(&[1.0, 2.5, 4.0, 6.0], 8.0);
        for variant in [SpikeVariant::PaperVerbatim, SpikeVariant::StandardNormalized] {
            let c = cfg(variant);
            assert_eq!(spike_function_at(3.3, &s, &s, &c).unwrap(), 0.0);
            let d = bivariate_spike_distance(&s, &s, (0.0, 8.0), &c).unwrap();
            assert!(d.abs() <= 1e-12, "{d}");
        }
    }

    #[test]
    fn hand_expanded_fixture_at_midpoint() {
        // Over [0, 5] with auxiliary edge spikes: preceding spikes 1 vs 2,
        // following 3 vs 4, both mean ISIs 2.
        let s1 = train(&[1.0, 3.0], 5.0);
        let s2 = train(&[2.0, 4.0], 5.0);
        let paper = spike_function_at(2.5, &s1, &s2, &cfg(SpikeVariant::PaperVerbatim)).unwrap();
        assert!((paper - 1.0).abs() < 1e-12, "{paper}");
        let standard =
            spike_function_at(2.5, &s1, &s2, &cfg(SpikeVariant::StandardNormalized)).unwrap();
        assert!((standard - 0.5).abs() < 1e-12, "{standard}");
    }

    #[test]
    fn spike_function_vanishes_with_the_shift() {
        // s2 = s1 + δ: Δt_P = Δt_F = δ and ⟨x_P⟩ + ⟨x_F⟩ = 2 at t = 2.5
        // (the δ contributions cancel), so the paper variant gives exactly δ.
        let s1 = train(&[1.0, 3.0], 5.0);
        let mut last = f64::INFINITY;
        for delta in [0.1, 0.01, 0.001] {
            let s2 = SpikeTrain::new(vec![1.0 + delta, 3.0 + delta], 5.0).unwrap();
            let v = spike_function_at(2.5, &s1, &s2, &cfg(SpikeVariant::PaperVerbatim)).unwrap();
            assert!((v - delta).abs() < 1e-12, "δ={delta}: {v}");
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn insufficient_spikes_identify_the_train() {
        let s1 = train(&[1.0], 5.0);
        let s2 = train(&[1.0, 2.0], 5.0);
        let err = bivariate_spike_distance(&s1, &s2, (0.0, 5.0), &cfg(SpikeVariant::PaperVerbatim))
            .unwrap_err();
        assert!(err.to_string().contains("train 1"), "{err}");
    }

    #[test]
    fn half_isi_shift_exceeds_quarter_isi_shift() {
        let spikes: Vec<f64> = (0..20).map(|k| 0.5 + k as f64).collect();
        let s = SpikeTrain::new(spikes.clone(), 21.0).unwrap();
        let shift = |d: f64| SpikeTrain::new(spikes.iter().map(|t| t + d).collect(), 21.0).unwrap();
        for variant in [SpikeVariant::PaperVerbatim, SpikeVariant::StandardNormalized] {
            let c = cfg(variant);
            let quarter = bivariate_spike_distance(&s, &shift(0.25), (1.0, 20.0), &c).unwrap();
            let half = bivariate_spike_distance(&s, &shift(0.5), (1.0, 20.0), &c).unwrap();
            assert!(half > quarter && quarter > 0.0, "{half} vs {quarter}");
        }
    }

    #[test]
    fn default_grid_matches_fine_grid_oracle() {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            // Onset jitter between ~15 minutes and 2 hours of a day.
            let sd = rng.gen_range(0.01..0.08);
            let a = jittered_train(&mut rng, 30, sd);
            let b = jittered_train(&mut rng, 30, sd);
            for variant in [SpikeVariant::PaperVerbatim, SpikeVariant::StandardNormalized] {
                let coarse = bivariate_spike_distance(&a, &b, (0.0, 30.0), &cfg(variant)).unwrap();
                let fine_cfg = SpikeDistanceConfig {
                    grid_points_per_mean_isi: 2000,
                    ..cfg(variant)
                };
                let fine = bivariate_spike_distance(&a, &b, (0.0, 30.0), &fine_cfg).unwrap();
                let rel = (coarse - fine).abs() / fine.max(1e-12);
                assert!(rel < 1e-4, "{variant:?}: {coarse} vs {fine} (rel {rel})");
            }
        }
    }

    #[test]
    fn multivariate_mean_is_arithmetic_mean_of_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trains: Vec<(String, SpikeTrain)> = (0..3)
            .map(|i| (format!("u{i}"), random_train(&mut rng, 20.0, 15)))
            .collect();
        let c = SpikeDistanceConfig::default();
        let (mean, matrix) = multivariate_spike_distance(&trains, (0.0, 20.0), &c, None, 0).unwrap();
        assert_eq!(matrix.n_pairs(), 3);
        let pairwise: Vec<f64> = (0..3)
            .flat_map(|i| ((i + 1)..3).map(move |j| (i, j)))
            .map(|(i, j)| {
                bivariate_spike_distance(&trains[i].1, &trains[j].1, (0.0, 20.0), &c).unwrap()
            })
            .collect();
        let expect = pairwise.iter().sum::<f64>() / 3.0;
        assert!((mean - expect).abs() < 1e-15);

        // A budget covering all pairs is the exact computation.
        let (mean_budget, matrix_budget) =
            multivariate_spike_distance(&trains, (0.0, 20.0), &c, Some(3), 99).unwrap();
        assert_eq!(mean, mean_budget);
        assert_eq!(matrix.pairs, matrix_budget.pairs);
    }

    #[test]
    fn identical_train_set_has_zero_mean_distance() {
        let base = train(&[0.9, 1.9, 2.9, 3.9, 4.9], 6.0);
        let trains: Vec<(String, SpikeTrain)> =
            (0..4).map(|i| (format!("u{i}"), base.clone())).collect();
        let (mean, _) =
            multivariate_spike_distance(&trains, (0.5, 5.5), &SpikeDistanceConfig::default(), None, 0)
                .unwrap();
        assert!(mean.abs() <= 1e-12);
    }

    #[test]
    fn sampled_pairs_are_deterministic_and_distinct() {
        let idx1 = sample_indices(1000, 50, 42);
        let idx2 = sample_indices(1000, 50, 42);
        assert_eq!(idx1, idx2);
        assert_eq!(idx1.len(), 50);
        let set: BTreeSet<_> = idx1.iter().collect();
        assert_eq!(set.len(), 50);
        assert!(idx1.iter().all(|&k| k < 1000));
        assert_ne!(idx1, sample_indices(1000, 50, 43));
    }

    #[test]
    fn decode_pair_covers_the_upper_triangle() {
        let n = 7;
        let mut seen = BTreeSet::new();
        for k in 0..(n * (n - 1) / 2) {
            let (i, j) = decode_pair(k, n);
            assert!(i < j && j < n);
            assert!(seen.insert((i, j)));
        }
    }

    fn matrix_from(values: &[f64]) -> PairDistanceMatrix {
        let users: Vec<String> = (0..=values.len()).map(|i| format!("u{i:03}")).collect();
        let pairs = values
            .iter()
            .enumerate()
            .map(|(i, &d)| (0u32, (i + 1) as u32, d))
            .collect();
        PairDistanceMatrix {
            users,
            pairs,
            window: (0.0, 1.0),
        }
    }

    #[test]
    fn equal_pairs_have_no_outliers() {
        let m = matrix_from(&[0.3; 12]);
        assert_eq!(oos_outlier_fraction(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn constructed_tail_gives_five_percent() {
        // 18 × 1.0, one 1.2, one 10.0: median 1.0, sample σ ≈ 2.0106,
        // threshold ≈ 5.02 — exactly one value above.
        let mut values = vec![1.0; 18];
        values.push(1.2);
        values.push(10.0);
        let m = matrix_from(&values);
        let frac = oos_outlier_fraction(&m, &m).unwrap();
        assert!((frac - 0.05).abs() < 1e-12, "{frac}");
    }

    #[test]
    fn normal_tail_fraction_matches_two_sigma_probability() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(5.0, 1.5).unwrap();
        let source: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
        let pairs: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
        let frac = oos_outlier_fraction(&matrix_from(&pairs), &matrix_from(&source)).unwrap();
        // P(X > median + 2σ) = 1 − Φ(2) ≈ 0.02275
        assert!((frac - 0.02275).abs() < 0.006, "{frac}");
    }

    #[test]
    fn growth_arithmetic() {
        assert_eq!(growth_from_fractions(0.05, 0.05).unwrap(), 0.0);
        let g = growth_from_fractions(0.05, 0.065).unwrap();
        assert!((g - 0.3).abs() < 1e-12, "{g}");
        assert!(matches!(
            growth_from_fractions(0.0, 0.1),
            Err(Error::UndefinedGrowth)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distance_is_symmetric_nonnegative_and_bounded(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_train(&mut rng, 15.0, 12);
            let b = random_train(&mut rng, 15.0, 12);
            for variant in [SpikeVariant::PaperVerbatim, SpikeVariant::StandardNormalized] {
                let c = cfg(variant);
                let ab = bivariate_spike_distance(&a, &b, (0.0, 15.0), &c).unwrap();
                let ba = bivariate_spike_distance(&b, &a, (0.0, 15.0), &c).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab >= 0.0);
                if variant == SpikeVariant::StandardNormalized {
                    prop_assert!(ab <= 1.0, "standard variant out of bounds: {}", ab);
                }
            }
        }

        #[test]
        fn distance_is_translation_invariant(seed in 0u64..10_000, shift in 0.0..50.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_train(&mut rng, 15.0, 12);
            let b = random_train(&mut rng, 15.0, 12);
            let c = SpikeDistanceConfig::default();
            let base = bivariate_spike_distance(&a, &b, (0.0, 15.0), &c).unwrap();
            let moved = bivariate_spike_distance(
                &a.shifted(shift).unwrap(),
                &b.shifted(shift).unwrap(),
                (shift, 15.0 + shift),
                &c,
            )
            .unwrap();
            prop_assert!((base - moved).abs() < 1e-9, "{} vs {}", base, moved);
        }

        #[test]
        fn doubling_the_grid_barely_moves_the_distance(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = jittered_train(&mut rng, 15, 0.1);
            let b = jittered_train(&mut rng, 15, 0.1);
            let base = bivariate_spike_distance(&a, &b, (0.0, 15.0), &SpikeDistanceConfig::default())
                .unwrap();
            let doubled_cfg = SpikeDistanceConfig {
                grid_points_per_mean_isi: 400,
                ..SpikeDistanceConfig::default()
            };
            let doubled = bivariate_spike_distance(&a, &b, (0.0, 15.0), &doubled_cfg).unwrap();
            prop_assert!((base - doubled).abs() / doubled.max(1e-12) < 1e-3);
        }
    }
}
