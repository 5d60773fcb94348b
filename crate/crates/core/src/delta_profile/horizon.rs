use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Symmetric grid `[-half_width, half_width]` with `cells` equal cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonGrid {
    pub half_width: f64,
    pub cells: usize,
}

impl HorizonGrid {
    /// Cell size `2^-12` of the window.
    pub fn standard(half_width: f64) -> Self {
        Self { half_width, cells: 1 << 12 }
    }

    /// Same window, half the cell size.
    pub fn refined(self) -> Self {
        Self { cells: 2 * self.cells, ..self }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..=self.cells).map(|k| -self.half_width + k as f64 * self.step()).collect()
    }

    /// Index of the grid point at 0 (`cells` is even).
    fn origin(&self) -> usize {
        self.cells / 2
    }
}

/// Drift and variance per unit length of two independent Brownian motions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub drift1: f64,
    pub var1: f64,
    pub drift3: f64,
    pub var3: f64,
}

impl WalkParams {
    /// Drifts `2θ` and variance 2 for both motions.
    pub fn from_thetas(theta1: f64, theta2: f64) -> Self {
        Self { drift1: 2.0 * theta1, var1: 2.0, drift3: 2.0 * theta2, var3: 2.0 }
    }

    /// Mean and variance of one level-step increment `W_d(x + 2) - W_d(x)` of
    /// the exponential-weight Busemann function, for slopes `d1` and `d2`.
    pub fn matched_to_slopes(d1: f64, d2: f64) -> Self {
        let moments = |d: f64| {
            let (h, v) = (1.0 + d.sqrt(), 1.0 + 1.0 / d.sqrt());
            (h - v, h * h + v * v)
        };
        let (m1, s1) = moments(d1);
        let (m3, s3) = moments(d2);
        Self { drift1: m1, var1: s1, drift3: m3, var3: s3 }
    }

    fn b4(&self) -> (f64, f64) {
        (self.drift3 - self.drift1, self.var1 + self.var3)
    }
}

/// A discretized coupled pair `(B1, B2)` together with the driving `B3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonSample {
    pub theta1: f64,
    pub theta2: f64,
    pub positions: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
    /// The supremum over `y <= 0` is attained in the left burn-in quarter.
    pub flagged: bool,
    pub seed: u64,
}

fn rng_for(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Maximum of a Brownian bridge from `a` to `b` over a cell of variance `v`.
fn bridge_max(rng: &mut ChaCha8Rng, a: f64, b: f64, v: f64) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    0.5 * (a + b + ((b - a).powi(2) - 2.0 * v * u.ln()).sqrt())
}

/// Two-sided Brownian motion on the grid, zero at the origin.
fn two_sided(rng: &mut ChaCha8Rng, grid: &HorizonGrid, drift: f64, var: f64) -> Vec<f64> {
    let h = grid.step();
    let o = grid.origin();
    let mut b = vec![0.0; grid.cells + 1];
    for k in o + 1..=grid.cells {
        b[k] = b[k - 1] + drift * h + (var * h).sqrt() * normal(rng);
    }
    for k in (0..o).rev() {
        b[k] = b[k + 1] - drift * h - (var * h).sqrt() * normal(rng);
    }
    b
}

/// Running supremum of the continuous path through `b` with exact bridge
/// maxima per cell; also the index of the cell holding the supremum.
fn running_sup(rng: &mut ChaCha8Rng, b: &[f64], cell_var: f64) -> (Vec<f64>, Vec<usize>) {
    let mut sup = Vec::with_capacity(b.len());
    let mut arg = Vec::with_capacity(b.len());
    sup.push(b[0]);
    arg.push(0);
    for k in 1..b.len() {
        let m = bridge_max(rng, b[k - 1], b[k], cell_var);
        if m > sup[k - 1] {
            sup.push(m);
            arg.push(k);
        } else {
            sup.push(sup[k - 1]);
            arg.push(arg[k - 1]);
        }
    }
    (sup, arg)
}

/// Samples `B1` (drift `2θ1`), an independent `B3` (drift `2θ2`), both with
/// variance 2, and `B2 = B1 + sup_{y<=x}(B3 - B1) - sup_{y<=0}(B3 - B1)`.
///
/// Suprema start at the left grid edge; the left quarter is burn-in.
pub fn horizon_sample(theta1: f64, theta2: f64, grid: HorizonGrid, seed: u64) -> Result<HorizonSample> {
    horizon_replica(theta1, theta2, grid, seed, 0)
}

fn horizon_replica(theta1: f64, theta2: f64, grid: HorizonGrid, seed: u64, replica: u64) -> Result<HorizonSample> {
    if !(theta1 < theta2) {
        return Err(Error::Precondition("θ1 must be smaller than θ2".into()));
    }
    if grid.cells % 2 != 0 || grid.cells < 4 || !(grid.half_width > 0.0) {
        return Err(Error::Precondition("grid needs an even number of cells and positive width".into()));
    }
    let mut rng = rng_for(seed, replica);
    let params = WalkParams::from_thetas(theta1, theta2);
    let b1 = two_sided(&mut rng, &grid, params.drift1, params.var1);
    let b3 = two_sided(&mut rng, &grid, params.drift3, params.var3);
    let b4: Vec<f64> = b3.iter().zip(&b1).map(|(x, y)| x - y).collect();
    let (sup, arg) = running_sup(&mut rng, &b4, (params.var1 + params.var3) * grid.step());
    let o = grid.origin();
    let b2 = b1.iter().zip(&sup).map(|(x, s)| x + s - sup[o]).collect();
    let flagged = arg[o] <= grid.cells / 4;
    Ok(HorizonSample { theta1, theta2, positions: grid.positions(), b1, b2, b3, flagged, seed })
}

impl HorizonSample {
    pub fn value_at(&self, path: &[f64], x: f64) -> f64 {
        let h = self.positions[1] - self.positions[0];
        let k = ((x - self.positions[0]) / h).round() as usize;
        path[k.min(path.len() - 1)]
    }

    /// Whether `B2 - B1` never decreases beyond rounding.
    pub fn gap_monotone(&self) -> bool {
        let gap: Vec<f64> = self.b2.iter().zip(&self.b1).map(|(a, b)| a - b).collect();
        gap.windows(2).all(|w| w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()))
    }
}

/// `B2(x)` across independent replicas, skipping flagged ones.
pub fn horizon_marginals(theta1: f64, theta2: f64, grid: HorizonGrid, x: f64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let out: Vec<Option<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let s = horizon_replica(theta1, theta2, grid, seed, r)?;
            Ok((!s.flagged).then(|| s.value_at(&s.b2, x)))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

/// Samples of `sup_{y<=lag} B4 - sup_{y<=0} B4` for `B4 = B3 - B1`.
///
/// The left supremum is simulated over `40 var/drift^2` units before 0.
pub fn delta_increment_reference(params: WalkParams, lag: f64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let (mu, var) = params.b4();
    if !(mu > 0.0) || !(lag > 0.0) {
        return Err(Error::Precondition("needs a positive relative drift and lag".into()));
    }
    let left = 40.0 * var / (mu * mu);
    let cells = 1usize << 12;
    let h = (left + lag) / cells as f64;
    let origin = (left / h).round() as usize;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, r);
            let mut b = vec![0.0; cells + 1];
            for k in origin + 1..=cells {
                b[k] = b[k - 1] + mu * h + (var * h).sqrt() * normal(&mut rng);
            }
            for k in (0..origin).rev() {
                b[k] = b[k + 1] - mu * h - (var * h).sqrt() * normal(&mut rng);
            }
            let (sup, _) = running_sup(&mut rng, &b, var * h);
            sup[cells] - sup[origin]
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceRow {
    pub y: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub closed_form: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceTable {
    pub theta1: f64,
    pub theta2: f64,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<CoalescenceRow>,
}

impl CoalescenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].estimate < w[0].estimate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,estimate,ci_low,ci_high,closed_form\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.y, r.estimate, r.ci_low, r.ci_high, r.closed_form));
        }
        out
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let centre = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `P(sup_{0<=z<=2y} B4 <= sup_{z<=0} B4)` for `B4` with drift `2α` and
/// variance 4, `α = θ2 - θ1`; the left supremum is `Exp(α)`.
pub fn coalescence_prob_closed_form(theta1: f64, theta2: f64, y: f64) -> f64 {
    let alpha = theta2 - theta1;
    let (mu, sigma) = (2.0 * alpha, 2.0);
    let t = 2.0 * y;
    if t <= 0.0 {
        return 1.0;
    }
    let phi = Normal::new(0.0, 1.0).expect("standard normal");
    let s = sigma * t.sqrt();
    // α e^{-αm} P(M_t <= m), with the reflection term simplified by e^{2μm/σ²} = e^{αm}
    let integrand = |m: f64| alpha * ((-alpha * m).exp() * phi.cdf((m - mu * t) / s) - phi.cdf((-m - mu * t) / s));
    let upper = mu * t + 12.0 * s + 60.0 / alpha;
    let n = 20_000;
    let h = upper / n as f64;
    let mut acc = integrand(0.0) + integrand(upper);
    for k in 1..n {
        acc += integrand(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Monte Carlo estimate with common random numbers across `y_list`.
pub fn coalescence_prob_estimate(theta1: f64, theta2: f64, y_list: &[f64], reps: usize, seed: u64) -> Result<CoalescenceTable> {
    if !(theta1 < theta2) {
        return Err(Error::Precondition("θ1 must be smaller than θ2".into()));
    }
    if y_list.is_empty() || y_list.windows(2).any(|w| w[1] <= w[0]) || y_list[0] <= 0.0 {
        return Err(Error::Precondition("y_list must be positive and increasing".into()));
    }
    let alpha = theta2 - theta1;
    let (mu, var) = (2.0 * alpha, 4.0);
    let left = 40.0 * var / (mu * mu);
    let right = 2.0 * y_list[y_list.len() - 1];
    let h = (left + right) / (1 << 12) as f64;
    let left_cells = (left / h).ceil() as usize;
    let right_cells = (right / h).ceil() as usize;
    let h_right = right / right_cells as f64;
    let hits: Vec<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, r);
            // looking left from 0 the path drifts down
            let (mut b, mut sup_left) = (0.0, 0.0f64);
            for _ in 0..left_cells {
                let next = b - mu * h - (var * h).sqrt() * normal(&mut rng);
                sup_left = sup_left.max(bridge_max(&mut rng, b, next, var * h));
                b = next;
            }
            let (mut b, mut sup_right) = (0.0, 0.0f64);
            let mut out = Vec::with_capacity(y_list.len());
            let mut idx = 0;
            for k in 1..=right_cells {
                let next = b + mu * h_right + (var * h_right).sqrt() * normal(&mut rng);
                sup_right = sup_right.max(bridge_max(&mut rng, b, next, var * h_right));
                b = next;
                let t = k as f64 * h_right;
                while idx < y_list.len() && 2.0 * y_list[idx] <= t + 1e-12 {
                    out.push(sup_right <= sup_left);
                    idx += 1;
                }
            }
            while out.len() < y_list.len() {
                out.push(sup_right <= sup_left);
            }
            out
        })
        .collect();
    let rows = y_list
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let s = hits.iter().filter(|h| h[k]).count();
            let (lo, hi) = wilson_interval(s, reps);
            CoalescenceRow {
                y,
                estimate: s as f64 / reps as f64,
                ci_low: lo,
                ci_high: hi,
                closed_form: coalescence_prob_closed_form(theta1, theta2, y),
            }
        })
        .collect();
    Ok(CoalescenceTable { theta1, theta2, reps, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_identities() {
        let s = horizon_sample(-0.5, 0.5, HorizonGrid::standard(4.0), 7).unwrap();
        let o = s.positions.len() / 2;
        assert_eq!(s.positions[o], 0.0);
        assert_eq!(s.b1[o], 0.0);
        assert_eq!(s.b2[o], 0.0);
        assert!(s.gap_monotone());
        assert!(horizon_sample(1.0, 1.0, HorizonGrid::standard(4.0), 7).is_err());
    }

    #[test]
    fn refinement_keeps_window() {
        let g = HorizonGrid::standard(2.0);
        let r = g.refined();
        assert_eq!(r.half_width, 2.0);
        assert!((r.step() - g.step() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_limits_and_scaling() {
        assert!(coalescence_prob_closed_form(0.0, 1.0, 1e-6) > 0.99);
        let a = coalescence_prob_closed_form(0.0, 1.0, 1.0);
        let b = coalescence_prob_closed_form(0.0, 1.0, 2.0);
        assert!(a > b && b > 0.0);
        // P(α, y) = P(1, α² y)
        let c = coalescence_prob_closed_form(0.0, 2.0, 0.5);
        let d = coalescence_prob_closed_form(0.0, 1.0, 2.0);
        assert!((c - d).abs() < 1e-6);
    }

    #[test]
    fn estimate_matches_closed_form() {
        let t = coalescence_prob_estimate(-0.5, 0.5, &[0.5, 1.0, 2.0], 20_000, 3).unwrap();
        assert!(t.strictly_decreasing());
        for r in &t.rows {
            assert!(r.estimate > 0.0);
            let sd = (r.closed_form * (1.0 - r.closed_form) / t.reps as f64).sqrt();
            assert!((r.estimate - r.closed_form).abs() < 4.0 * sd + 2e-3, "{r:?}");
        }
        assert!(coalescence_prob_estimate(0.0, 1.0, &[2.0, 1.0], 10, 1).is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
    }

    #[test]
    fn reference_increments_are_nonnegative() {
        let p = WalkParams::matched_to_slopes(0.5, 2.0);
        assert!((p.drift1 + p.drift3).abs() < 1e-12);
        let xs = delta_increment_reference(p, 8.0, 200, 1).unwrap();
        assert!(xs.iter().all(|&x| x >= 0.0));
        assert!(xs.iter().any(|&x| x == 0.0));
    }
}
