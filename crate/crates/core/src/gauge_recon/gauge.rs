use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{simulate_bm, support_set, BrownianPath, RunningMaxProfile, SupportSet};
use crate::error::{Error, Result};

/// Largest admissible cover scale, `e^{-e}`.
pub fn scale_guard() -> f64 {
    (-std::f64::consts::E).exp()
}

/// `φ(h) = (h log|log h|)^{1/2}`.
pub fn gauge_phi(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < scale_guard()) {
        return Err(Error::ScaleGuard(h));
    }
    Ok((h * h.ln().abs().ln()).sqrt())
}

/// Time interval `(start, end]` with grid endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: f64,
    pub end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start < end) {
            return Err(Error::Precondition(format!("empty interval ({start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    /// `parts` equal consecutive pieces.
    pub fn split(self, parts: usize) -> Vec<TimeInterval> {
        let w = (self.end - self.start) / parts as f64;
        (0..parts)
            .map(|k| TimeInterval { start: self.start + k as f64 * w, end: self.start + (k + 1) as f64 * w })
            .collect()
    }

    fn grid(&self, step: f64, steps: usize) -> Result<(usize, usize)> {
        let to_index = |t: f64| {
            let x = t / step;
            let k = x.round();
            if (x - k).abs() > 1e-6 || k < 0.0 || k as usize > steps {
                Err(Error::Precondition(format!("time {t} is not a grid point")))
            } else {
                Ok(k as usize)
            }
        };
        Ok((to_index(self.start)?, to_index(self.end)?))
    }
}

/// `φ(h_cover)` times the number of cells `(k·h_cover, (k+1)·h_cover]` meeting
/// the support inside `interval`.
pub fn gauge_measure(k: &SupportSet, interval: TimeInterval, h_cover: f64) -> Result<f64> {
    if h_cover < k.step * (1.0 - 1e-12) {
        return Err(Error::ScaleGuard(h_cover));
    }
    let phi = gauge_phi(h_cover)?;
    let (a, b) = interval.grid(k.step, k.steps)?;
    let ratio = h_cover / k.step;
    let cell = |t: usize| (t as f64 / ratio - 1e-9).ceil() as i64 - 1;
    let records = k.within(a, b);
    let chunk = 1 << 14;
    let count: usize = records
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, block)| {
            // a cell shared with the previous block is counted there
            let mut last = (c > 0).then(|| cell(records[c * chunk - 1]));
            let mut n = 0;
            for &t in block {
                let id = cell(t);
                if last != Some(id) {
                    n += 1;
                    last = Some(id);
                }
            }
            n
        })
        .sum();
    Ok(count as f64 * phi)
}

/// One interval at one cover scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub interval: TimeInterval,
    pub scale: f64,
    pub estimate: f64,
    pub truth: f64,
    /// `ratio · estimate`.
    pub reconstructed: f64,
    pub relative_error: f64,
}

/// Per-interval gauge estimates calibrated against the true running maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeReconstruction {
    pub seed: u64,
    /// Finest scale used.
    pub scale: f64,
    /// `Σ truth / Σ estimate` at the finest scale.
    pub ratio: f64,
    pub rows: Vec<IntervalEstimate>,
    /// All intervals at every scale, coarsest first, each calibrated at its own scale.
    pub by_scale: Vec<(f64, f64, Vec<IntervalEstimate>)>,
}

impl GaugeReconstruction {
    pub fn max_relative_error(&self) -> f64 {
        self.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max)
    }

    /// Columns: seed, start, end, scale, estimate, truth, ratio.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,start,end,scale,estimate,truth,ratio\n");
        for (scale, ratio, rows) in &self.by_scale {
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    self.seed, r.interval.start, r.interval.end, scale, r.estimate, r.truth, ratio
                ));
            }
        }
        out
    }
}

fn relative_error(reconstructed: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if reconstructed == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (reconstructed - truth).abs() / truth
    }
}

fn calibrate(
    k: &SupportSet,
    truth: &RunningMaxProfile,
    intervals: &[TimeInterval],
    scale: f64,
) -> Result<(f64, Vec<IntervalEstimate>)> {
    let mut raw = Vec::with_capacity(intervals.len());
    for &iv in intervals {
        let (a, b) = iv.grid(k.step, k.steps)?;
        raw.push((iv, gauge_measure(k, iv, scale)?, truth.increment(a, b)));
    }
    let total_est: f64 = raw.iter().map(|r| r.1).sum();
    let total_truth: f64 = raw.iter().map(|r| r.2).sum();
    let ratio = if total_est > 0.0 { total_truth / total_est } else { 0.0 };
    let rows = raw
        .into_iter()
        .map(|(interval, estimate, truth)| {
            let reconstructed = ratio * estimate;
            IntervalEstimate {
                interval,
                scale,
                estimate,
                truth,
                reconstructed,
                relative_error: relative_error(reconstructed, truth),
            }
        })
        .collect();
    Ok((ratio, rows))
}

fn check_disjoint(intervals: &[TimeInterval]) -> Result<()> {
    if intervals.len() < 2 {
        return Err(Error::Precondition("at least two intervals are required".into()));
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    if sorted.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(Error::Precondition("intervals overlap".into()));
    }
    Ok(())
}

/// Gauge estimates per interval and scale, calibrated by the summed true increments.
pub fn reconstruct_increments(
    k: &SupportSet,
    truth: &RunningMaxProfile,
    intervals: &[TimeInterval],
    scales: &[f64],
) -> Result<GaugeReconstruction> {
    check_disjoint(intervals)?;
    if scales.is_empty() {
        return Err(Error::Precondition("no cover scales given".into()));
    }
    if truth.values.len() != k.steps + 1 {
        return Err(Error::Mismatch("profile and support live on different grids".into()));
    }
    let mut ordered = scales.to_vec();
    ordered.sort_by(|a, b| b.total_cmp(a));
    let by_scale = ordered
        .iter()
        .map(|&s| calibrate(k, truth, intervals, s).map(|(r, rows)| (s, r, rows)))
        .collect::<Result<Vec<_>>>()?;
    let (scale, ratio, rows) = by_scale.last().cloned().expect("scales are non-empty");
    Ok(GaugeReconstruction { seed: 0, scale, ratio, rows, by_scale })
}

/// Gauge estimates of one interval over a sequence of scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTrend {
    /// Coarsest first.
    pub scales: Vec<f64>,
    pub estimates: Vec<f64>,
}

impl ScaleTrend {
    /// `|e_k - e_{k-1}| / e_k` between consecutive scales.
    pub fn oscillations(&self) -> Vec<f64> {
        self.estimates.windows(2).map(|w| (w[1] - w[0]).abs() / w[1]).collect()
    }

    /// Mean oscillation over the finer half is below that of the coarser half.
    pub fn oscillation_decreases(&self) -> bool {
        let o = self.oscillations();
        if o.len() < 2 {
            return false;
        }
        let half = o.len() / 2;
        let coarse = o[..half].iter().sum::<f64>() / half as f64;
        let fine = o[o.len() - half..].iter().sum::<f64>() / half as f64;
        fine < coarse
    }

    /// Largest over smallest estimate.
    pub fn spread(&self) -> f64 {
        let max = self.estimates.iter().copied().fold(f64::MIN, f64::max);
        let min = self.estimates.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,estimate\n");
        for (s, e) in self.scales.iter().zip(&self.estimates) {
            out.push_str(&format!("{s},{e}\n"));
        }
        out
    }
}

pub fn scale_trend(k: &SupportSet, interval: TimeInterval, scales: &[f64]) -> Result<ScaleTrend> {
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    let estimates = scales.iter().map(|&s| gauge_measure(k, interval, s)).collect::<Result<_>>()?;
    Ok(ScaleTrend { scales, estimates })
}

/// `ε` times the number of excursions of `|X|` from 0 that reach `ε`, at checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl LocalTimeEstimate {
    pub fn total(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }
}

/// Probability that a Brownian bridge over one step, with endpoints at distances
/// `u, v ≥ 0` on the same side of a level, touches the level.
fn bridge_hit(u: f64, v: f64, variance_step: f64) -> f64 {
    (-2.0 * u * v / variance_step).exp()
}

/// Crossing-count local time at 0 of `|X|` for a driftless path.
///
/// Level hits between grid points are sampled from the exact bridge law, seeded
/// by the path seed.
pub fn local_time_crosscheck(
    path: &BrownianPath,
    epsilons: &[f64],
    checkpoints: &[f64],
) -> Result<Vec<LocalTimeEstimate>> {
    if path.drift != 0.0 {
        return Err(Error::Precondition("the local-time leg needs a driftless path".into()));
    }
    let marks = checkpoints.iter().map(|&t| path.index_of(t)).collect::<Result<Vec<_>>>()?;
    if marks.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("checkpoints must be increasing".into()));
    }
    let vh = path.variance * path.step;
    epsilons
        .par_iter()
        .enumerate()
        .map(|(e, &eps)| {
            if !(eps > 0.0) {
                return Err(Error::Precondition("epsilon must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(path.seed);
            rng.set_stream(u64::MAX - e as u64);
            let mut hit = |p: f64| p > 1e-15 && rng.random::<f64>() < p;
            let mut values = Vec::with_capacity(marks.len());
            let mut count = 0usize;
            // after reaching ε, an excursion ends at the next zero
            let mut away = false;
            let mut next = 0;
            let mut prev = path.values[0];
            for (t, &x) in path.values.iter().enumerate() {
                if t > 0 {
                    let same_side = x.signum() == prev.signum() && x != 0.0;
                    if away {
                        if !same_side || hit(bridge_hit(prev.abs(), x.abs(), vh)) {
                            away = false;
                        }
                    } else if x.abs() >= eps
                        || (same_side && hit(bridge_hit(eps - prev.abs(), eps - x.abs(), vh)))
                    {
                        count += 1;
                        away = true;
                    }
                }
                prev = x;
                while next < marks.len() && marks[next] == t {
                    values.push(eps * count as f64);
                    next += 1;
                }
            }
            Ok(LocalTimeEstimate { epsilon: eps, times: checkpoints.to_vec(), values })
        })
        .collect()
}

/// Parameters of the single-path gauge study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeStudyConfig {
    pub horizon: f64,
    pub log2_steps: u32,
    pub drift: f64,
    pub intervals: usize,
    /// Cover scales `2^-k` for `k` in this inclusive range.
    pub scale_exponents: (i32, i32),
    pub seed: u64,
}

impl Default for GaugeStudyConfig {
    fn default() -> Self {
        Self { horizon: 64.0, log2_steps: 22, drift: 1.0, intervals: 4, scale_exponents: (8, 14), seed: 1 }
    }
}

impl GaugeStudyConfig {
    pub fn scales(&self) -> Vec<f64> {
        (self.scale_exponents.0..=self.scale_exponents.1).map(|k| 2f64.powi(-k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeStudy {
    pub config: GaugeStudyConfig,
    pub reconstruction: GaugeReconstruction,
    /// Calibration ratios on the first and second half of the horizon.
    pub half_ratios: (f64, f64),
    pub trend: ScaleTrend,
    /// Calibration ratio of the same seed without drift.
    pub driftless_ratio: f64,
}

impl GaugeStudy {
    /// `|r1 - r2| / max(r1, r2)`.
    pub fn half_disagreement(&self) -> f64 {
        let (a, b) = self.half_ratios;
        (a - b).abs() / a.max(b)
    }

    pub fn drift_disagreement(&self) -> f64 {
        let (a, b) = (self.reconstruction.ratio, self.driftless_ratio);
        (a - b).abs() / a.max(b)
    }
}

fn analyse(path: &BrownianPath, intervals: &[TimeInterval], scales: &[f64]) -> Result<GaugeReconstruction> {
    let k = support_set(path);
    let m = RunningMaxProfile::of(path);
    let mut rec = reconstruct_increments(&k, &m, intervals, scales)?;
    rec.seed = path.seed;
    Ok(rec)
}

/// Reconstruction, half-horizon calibration, scale trend and drift comparison on one seed.
pub fn gauge_study(config: &GaugeStudyConfig) -> Result<GaugeStudy> {
    let step = config.horizon / 2f64.powi(config.log2_steps as i32);
    let whole = TimeInterval::new(0.0, config.horizon)?;
    let intervals = whole.split(config.intervals);
    let scales = config.scales();
    let finest = scales.iter().copied().fold(f64::MAX, f64::min);
    let (drifted, driftless) = rayon::join(
        || simulate_bm(config.horizon, step, config.drift, 1.0, config.seed),
        || simulate_bm(config.horizon, step, 0.0, 1.0, config.seed),
    );
    let (drifted, driftless) = (drifted?, driftless?);
    let reconstruction = analyse(&drifted, &intervals, &scales)?;
    let k = support_set(&drifted);
    let m = RunningMaxProfile::of(&drifted);
    let halves = whole.split(2);
    let half_ratio = |iv: TimeInterval| -> Result<f64> {
        calibrate(&k, &m, &iv.split(config.intervals.max(2) / 2), finest).map(|(r, _)| r)
    };
    let half_ratios = (half_ratio(halves[0])?, half_ratio(halves[1])?);
    let trend = scale_trend(&k, whole, &scales)?;
    let driftless_ratio = analyse(&driftless, &intervals, &[finest])?.ratio;
    Ok(GaugeStudy { config: config.clone(), reconstruction, half_ratios, trend, driftless_ratio })
}
