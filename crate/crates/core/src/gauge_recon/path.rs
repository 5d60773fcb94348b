use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported number of grid steps.
pub const MAX_STEPS: usize = 1 << 26;

/// Grid samples of `B(t) + drift·t` on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub horizon: f64,
    pub step: f64,
    pub drift: f64,
    pub variance: f64,
    pub seed: u64,
    /// `values[k]` is the path at time `k·step`.
    pub values: Vec<f64>,
}

impl BrownianPath {
    /// Wraps explicit samples; used for fixtures.
    pub fn from_values(step: f64, drift: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(step > 0.0) {
            return Err(Error::Precondition("a path needs at least one step".into()));
        }
        let horizon = step * (values.len() - 1) as f64;
        Ok(Self { horizon, step, drift, variance: 1.0, seed: 0, values })
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Grid index of time `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.step;
        let k = x.round();
        if (x - k).abs() > 1e-6 || k < 0.0 || k as usize > self.steps() {
            return Err(Error::Precondition(format!("time {t} is not a grid point of [0, {}]", self.horizon)));
        }
        Ok(k as usize)
    }

    /// Every `factor`-th sample.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::Precondition(format!("factor {factor} does not divide the step count")));
        }
        Ok(Self {
            step: self.step * factor as f64,
            values: self.values.iter().step_by(factor).copied().collect(),
            ..self.clone()
        })
    }
}

/// Lévy midpoint construction: the normal used at each dyadic node depends only on
/// its refinement depth and position, so halving `step` refines the same path.
pub fn simulate_bm(horizon: f64, step: f64, drift: f64, variance: f64, seed: u64) -> Result<BrownianPath> {
    if !(horizon > 0.0 && step > 0.0 && variance >= 0.0) {
        return Err(Error::Precondition("horizon and step must be positive".into()));
    }
    let ratio = horizon / step;
    if ratio > MAX_STEPS as f64 {
        return Err(Error::InstanceTooLarge(format!("{ratio} steps exceed {MAX_STEPS}")));
    }
    let n = ratio.round() as usize;
    if n == 0 || (ratio - n as f64).abs() > 1e-9 * ratio || !n.is_power_of_two() {
        return Err(Error::Precondition(format!("horizon/step = {ratio} must be a power of two")));
    }
    let mut values = vec![0.0; n + 1];
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values[n] = (variance * horizon).sqrt() * normal(&mut rng);
    let mut half = n / 2;
    let mut depth = 1u64;
    while half >= 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(depth);
        // midpoint of a bridge over `2·half` steps has variance `half·step/2`
        let sd = (variance * half as f64 * step / 2.0).sqrt();
        let mut left = 0;
        while left < n {
            let right = left + 2 * half;
            values[left + half] = 0.5 * (values[left] + values[right]) + sd * normal(&mut rng);
            left = right;
        }
        half /= 2;
        depth += 1;
    }
    for (k, v) in values.iter_mut().enumerate() {
        *v += drift * k as f64 * step;
    }
    Ok(BrownianPath { horizon, step, drift, variance, seed, values })
}

/// `M(t) = max_{s ≤ t} X(s)` on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMaxProfile {
    pub step: f64,
    pub values: Vec<f64>,
}

impl RunningMaxProfile {
    pub fn of(path: &BrownianPath) -> Self {
        let mut m = f64::NEG_INFINITY;
        let values = path
            .values
            .iter()
            .map(|&x| {
                m = m.max(x);
                m
            })
            .collect();
        Self { step: path.step, values }
    }

    /// `M(end) - M(start)` for grid indices.
    pub fn increment(&self, start: usize, end: usize) -> f64 {
        self.values[end] - self.values[start]
    }
}

/// Grid times where the path equals its running maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub step: f64,
    pub steps: usize,
    /// Increasing grid indices; always starts with 0.
    pub indices: Vec<usize>,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// Records with index in `(start, end]`.
    pub fn within(&self, start: usize, end: usize) -> &[usize] {
        let a = self.indices.partition_point(|&k| k <= start);
        let b = self.indices.partition_point(|&k| k <= end);
        &self.indices[a..b.max(a)]
    }
}

pub fn support_set(path: &BrownianPath) -> SupportSet {
    let mut m = f64::NEG_INFINITY;
    let mut indices = Vec::new();
    for (k, &x) in path.values.iter().enumerate() {
        if x >= m {
            indices.push(k);
            m = x;
        }
    }
    SupportSet { step: path.step, steps: path.steps(), indices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn starts_at_zero_and_guards_size() {
        let p = simulate_bm(1.0, 1.0 / 8.0, 0.0, 1.0, 3).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.values.len(), 9);
        assert!(matches!(simulate_bm(1.0, 1.0 / 6.0, 0.0, 1.0, 3), Err(Error::Precondition(_))));
        assert!(matches!(simulate_bm(1.0, 2f64.powi(-27), 0.0, 1.0, 3), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn terminal_variance_matches() {
        let ends: Vec<f64> =
            (0..10_000).map(|s| *simulate_bm(1.0, 1.0 / 4.0, 0.0, 1.0, s).unwrap().values.last().unwrap()).collect();
        assert!((stats::variance(&ends) - 1.0).abs() < 0.05);
        assert!(stats::mean(&ends).abs() < 0.03);
    }

    #[test]
    fn increments_have_stated_moments() {
        let p = simulate_bm(64.0, 1.0 / 64.0, 0.5, 2.0, 11).unwrap();
        let inc: Vec<f64> = p.values.windows(2).map(|w| w[1] - w[0]).collect();
        let h = p.step;
        assert!((stats::mean(&inc) / h - 0.5).abs() < 0.3);
        assert!((stats::variance(&inc) / h - 2.0).abs() < 0.1);
        // neighbouring increments are uncorrelated
        let m = stats::mean(&inc);
        let cov = inc.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (inc.len() - 1) as f64;
        assert!(cov.abs() / (2.0 * h) < 0.03);
    }

    #[test]
    fn refinement_restricts_to_coarse_path() {
        let coarse = simulate_bm(4.0, 1.0 / 16.0, 1.0, 1.0, 5).unwrap();
        let fine = simulate_bm(4.0, 1.0 / 32.0, 1.0, 1.0, 5).unwrap();
        let restricted = fine.coarsen(2).unwrap();
        for (a, b) in restricted.values.iter().zip(&coarse.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn support_of_fixtures() {
        let up = BrownianPath::from_values(0.5, 1.0, vec![0.0, 1.0, 2.0, 2.5]).unwrap();
        assert_eq!(support_set(&up).indices, vec![0, 1, 2, 3]);
        let down = BrownianPath::from_values(0.5, 1.0, vec![0.0, -1.0, -0.5, -2.0]).unwrap();
        assert_eq!(support_set(&down).indices, vec![0]);
    }

    #[test]
    fn running_max_constant_off_support() {
        let p = simulate_bm(8.0, 1.0 / 256.0, 1.0, 1.0, 9).unwrap();
        let k = support_set(&p);
        let m = RunningMaxProfile::of(&p);
        assert_eq!(k.indices[0], 0);
        for t in 1..=p.steps() {
            if k.contains(t) {
                assert_eq!(m.values[t], p.values[t]);
            } else {
                assert_eq!(m.values[t], m.values[t - 1]);
            }
        }
    }
}
