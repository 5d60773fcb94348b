//! Seeded distributional studies of `Δ`, the stationary horizon and
//! competition interfaces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::report::feasible_horizon;
use crate::busemann::{build_tree_and_busemann, interface_escape_stat, DirectionSlope, EscapeStudy, TreeParams};
use crate::delta_profile::{
    coalescence_prob_estimate, delta_increment_reference, delta_row, horizon_marginals, horizon_sample, CoalescenceTable,
    HorizonGrid, WalkParams,
};
use crate::error::{Error, Result};
use crate::lpp::{LatticeBox, WeightField};
use crate::stats::{ks_one_sample, ks_two_sample, mean, KsResult};

/// Increments of discrete `Δ` rows against the running-maximum reference law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaLawConfig {
    pub seeds: Vec<u64>,
    pub window: i32,
    pub horizon: i32,
    pub lower: f64,
    pub upper: f64,
    /// Inclusive first and exclusive last level, and the level stride.
    pub levels: (i32, i32, i32),
    pub lags: Vec<usize>,
    /// Column stride between increments is `max(lag, min_stride)`.
    pub min_stride: usize,
    pub reference_reps: usize,
    pub reference_seed: u64,
}

impl Default for DeltaLawConfig {
    fn default() -> Self {
        Self {
            seeds: (0..24).collect(),
            window: 100,
            horizon: 3200,
            lower: 0.5,
            upper: 2.0,
            levels: (40, 160, 10),
            lags: vec![4, 8, 16],
            min_stride: 8,
            reference_reps: 20_000,
            reference_seed: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaLawRow {
    pub lag: usize,
    pub samples: usize,
    pub ks: KsResult,
    pub mean: f64,
    pub reference_mean: f64,
    pub zero_fraction: f64,
    pub reference_zero_fraction: f64,
}

fn zero_fraction(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().filter(|&&x| x.abs() < 1e-9).count() as f64 / xs.len() as f64
}

pub fn delta_law(config: &DeltaLawConfig) -> Result<Vec<DeltaLawRow>> {
    let (first, last, stride) = config.levels;
    if config.seeds.is_empty() || config.lags.is_empty() || stride < 1 || first >= last {
        return Err(Error::Config("Δ law needs seeds, lags and a non-empty level range".into()));
    }
    let window = LatticeBox::square(config.window);
    let (d1, d2) = (DirectionSlope::new(config.lower)?, DirectionSlope::new(config.upper)?);
    if d1 >= d2 {
        return Err(Error::Config("lower slope must be below upper slope".into()));
    }
    let horizon = feasible_horizon(&window, &[d1, d2], config.horizon);
    let params = TreeParams::fixed(horizon);
    let per_seed: Vec<Vec<Vec<f64>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let field = WeightField::exponential(LatticeBox::square(config.window + 2 * horizon + 2), seed)?;
            let (_, b1) = build_tree_and_busemann(&field, d1, window, &params)?;
            let (_, b2) = build_tree_and_busemann(&field, d2, window, &params)?;
            let mut out = vec![Vec::new(); config.lags.len()];
            for level in (first..last).step_by(stride as usize) {
                let row = delta_row(&b1, &b2, level)?;
                for (k, &lag) in config.lags.iter().enumerate() {
                    out[k].extend(row.increments(lag, lag.max(config.min_stride)));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let params = WalkParams::matched_to_slopes(config.lower, config.upper);
    config
        .lags
        .iter()
        .enumerate()
        .map(|(k, &lag)| {
            let incs: Vec<f64> = per_seed.iter().flat_map(|s| s[k].iter().copied()).collect();
            if incs.is_empty() {
                return Err(Error::Precondition(format!("no certified increments at lag {lag}")));
            }
            let reference = delta_increment_reference(params, lag as f64, config.reference_reps, config.reference_seed)?;
            Ok(DeltaLawRow {
                lag,
                samples: incs.len(),
                ks: ks_two_sample(&incs, &reference),
                mean: mean(&incs),
                reference_mean: mean(&reference),
                zero_fraction: zero_fraction(&incs),
                reference_zero_fraction: zero_fraction(&reference),
            })
        })
        .collect()
}

/// Marginal, monotonicity, `Δ`-law and coalescence checks of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonStudyConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub half_width: f64,
    /// `B2` is sampled at this position.
    pub position: f64,
    pub marginal_reps: usize,
    /// Independent paths checked for a non-decreasing `B2 - B1`.
    pub monotone_samples: usize,
    pub coalescence_y: Vec<f64>,
    pub coalescence_reps: usize,
    pub seed: u64,
    pub delta_law: DeltaLawConfig,
}

impl Default for HorizonStudyConfig {
    fn default() -> Self {
        Self {
            theta1: -0.5,
            theta2: 0.5,
            half_width: 16.0,
            position: 1.0,
            marginal_reps: 10_000,
            monotone_samples: 200,
            coalescence_y: vec![1.0, 2.0, 4.0],
            coalescence_reps: 20_000,
            seed: 1,
            delta_law: DeltaLawConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonStudy {
    pub marginal_samples: usize,
    /// `B2(x)` against the drift `2θ2`, variance `2` Gaussian.
    pub marginal: KsResult,
    pub monotone: usize,
    pub monotone_samples: usize,
    pub delta_law: Vec<DeltaLawRow>,
    pub coalescence: CoalescenceTable,
}

impl HorizonStudy {
    pub fn failures(&self, alpha: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.marginal.p_value > alpha) {
            out.push(format!("B2 marginal KS p = {:.4}", self.marginal.p_value));
        }
        if self.monotone != self.monotone_samples {
            out.push(format!("B2 - B1 monotone in {}/{} samples", self.monotone, self.monotone_samples));
        }
        for r in &self.delta_law {
            if !(r.ks.p_value > alpha) {
                out.push(format!("Δ increment law at lag {} KS p = {:.4}", r.lag, r.ks.p_value));
            }
        }
        if !(self.coalescence.strictly_decreasing() && self.coalescence.rows.iter().all(|r| r.estimate > 0.0)) {
            out.push("coalescence probabilities are not positive and decreasing".into());
        }
        out
    }
}

pub fn horizon_study(config: &HorizonStudyConfig) -> Result<HorizonStudy> {
    if !(config.position > 0.0 && config.position < config.half_width) {
        return Err(Error::Config("sample position must lie in (0, half_width)".into()));
    }
    let grid = HorizonGrid::standard(config.half_width);
    let b2 = horizon_marginals(config.theta1, config.theta2, grid, config.position, config.marginal_reps, config.seed)?;
    let law = Normal::new(2.0 * config.theta2 * config.position, (2.0 * config.position).sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let marginal = ks_one_sample(&b2, |x| law.cdf(x));
    let monotone = (0..config.monotone_samples as u64)
        .into_par_iter()
        .map(|k| horizon_sample(config.theta1, config.theta2, grid, config.seed.wrapping_add(k + 1)).map(|s| s.gap_monotone() as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let delta_law = delta_law(&config.delta_law)?;
    let coalescence = coalescence_prob_estimate(config.theta1, config.theta2, &config.coalescence_y, config.coalescence_reps, config.seed)?;
    Ok(HorizonStudy {
        marginal_samples: b2.len(),
        marginal,
        monotone,
        monotone_samples: config.monotone_samples,
        delta_law,
        coalescence,
    })
}

/// Escape of competition interfaces across slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterfaceStudyConfig {
    pub seeds: usize,
    pub first_seed: u64,
    pub side: i32,
    pub slopes: Vec<f64>,
    pub depths: (i32, i32),
}

impl Default for InterfaceStudyConfig {
    fn default() -> Self {
        Self { seeds: 200, first_seed: 1, side: 24, slopes: vec![1.0, 4.0, 16.0], depths: (12, 24) }
    }
}

pub fn interface_study(config: &InterfaceStudyConfig) -> Result<EscapeStudy> {
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|k| config.first_seed.wrapping_add(k)).collect();
    interface_escape_stat(&seeds, config.side, &config.slopes, config.depths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configs_reject_unknown_keys() {
        assert!(serde_json::from_str::<HorizonStudyConfig>(r#"{"thetta": 1}"#).is_err());
        let c: InterfaceStudyConfig = serde_json::from_str(r#"{"seeds": 3}"#).unwrap();
        assert_eq!(c, InterfaceStudyConfig { seeds: 3, ..InterfaceStudyConfig::default() });
    }

    #[test]
    fn small_delta_law_runs() {
        let c = DeltaLawConfig {
            seeds: vec![1],
            window: 20,
            horizon: 320,
            levels: (8, 30, 4),
            lags: vec![2],
            min_stride: 2,
            reference_reps: 200,
            ..DeltaLawConfig::default()
        };
        let rows = delta_law(&c).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].samples > 0);
        assert!((0.0..=1.0).contains(&rows[0].ks.p_value));
    }

    #[test]
    fn bad_position_is_a_config_error() {
        let c = HorizonStudyConfig { position: 20.0, ..HorizonStudyConfig::default() };
        assert!(matches!(horizon_study(&c), Err(Error::Config(_))));
    }
}
