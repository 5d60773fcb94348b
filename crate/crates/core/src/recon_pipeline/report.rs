use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::delta::{assemble_delta, DeltaField};
use super::distance::{nested_directions, reconstruct_distance, DistanceWindow};
use super::shock::{additive_residual, shock_measure, ShockRectangle};
use super::tree::{reconstruct_tree, ReconParams};
use crate::busemann::{build_tree_and_busemann, horizon_target, BusemannField, DirectionSlope, GeodesicTree, TreeParams};
use crate::delta_profile::{delta_row, partition_from_trees, plateau_partition, DeltaProfile};
use crate::differential::{differential_distance, differential_from_table};
use crate::error::{Error, Result};
use crate::lpp::{passage_time, ForwardTable, LatticeBox, LatticePoint, WeightField};
use crate::modified_distance::{modified_distance, SwitchingDag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Side of the square window at the origin.
    pub window: i32,
    /// Near horizon in levels; far targets sit twice as far.
    pub horizon: i32,
    pub direction: f64,
    /// Number of nested direction windows `(d / 2^n, d · 2^n)`.
    pub direction_windows: u32,
    pub partition_rows: usize,
    pub distance_pairs: usize,
    /// Largest coordinate offset between the two points of a tested pair.
    pub pair_span: i32,
    pub rectangles: usize,
    /// Largest level gap of a tested rectangle.
    pub rectangle_span: i32,
    pub tolerance: f64,
    /// Certification coverage below this fraction is flagged as a failure.
    pub coverage_floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            window: 100,
            horizon: 3200,
            direction: 1.0,
            direction_windows: 3,
            partition_rows: 20,
            distance_pairs: 1000,
            pair_span: 24,
            rectangles: 10_000,
            rectangle_span: 40,
            tolerance: 1e-9,
            coverage_floor: 0.5,
        }
    }
}

impl PipelineConfig {
    /// A 20×20 window with small budgets.
    pub fn tiny(seed: u64) -> Self {
        Self {
            seed,
            window: 20,
            horizon: 640,
            partition_rows: 5,
            distance_pairs: 100,
            pair_span: 8,
            rectangles: 200,
            rectangle_span: 12,
            ..Self::default()
        }
    }

    pub fn window_box(&self) -> LatticeBox {
        LatticeBox::square(self.window)
    }

    fn validate(&self) -> Result<()> {
        if self.window < 2 || self.direction_windows == 0 || !(self.tolerance > 0.0) || self.horizon < 1 {
            return Err(Error::Config("window ≥ 2, horizon ≥ 1, at least one direction window, positive tolerance".into()));
        }
        DirectionSlope::new(self.direction)?;
        Ok(())
    }
}

/// One direction's tree and Busemann field.
#[derive(Clone, Debug)]
pub struct DirectionData {
    pub direction: DirectionSlope,
    pub tree: GeodesicTree,
    pub busemann: BusemannField,
}

/// Assembled `Δ` for one direction window.
#[derive(Clone, Debug)]
pub struct WindowData {
    pub lower: DirectionData,
    pub upper: DirectionData,
    /// `W_{d2} - W_{d1}` chained from rows.
    pub delta: DeltaField,
    /// `W_{d2} - W_d` chained from rows.
    pub delta_to_upper: DeltaField,
}

/// Field, trees and assembled `Δ` shared by every stage.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: PipelineConfig,
    pub field: WeightField,
    /// Horizon actually used; raised when the configured one cannot reach past the window.
    pub horizon: i32,
    pub center: DirectionData,
    pub windows: Vec<WindowData>,
}

fn rows_of(b1: &BusemannField, b2: &BusemannField) -> Result<Vec<DeltaProfile>> {
    let w = b1.window();
    (w.min_level()..=w.max_level()).map(|l| delta_row(b1, b2, l)).collect()
}

fn true_delta(b1: &BusemannField, b2: &BusemannField) -> DeltaField {
    DeltaField::from_fn(b1.window(), |v| b2.raw(v).expect("window vertex") - b1.raw(v).expect("window vertex"))
}

/// Smallest horizon whose targets dominate the window in every direction.
pub(crate) fn feasible_horizon(window: &LatticeBox, directions: &[DirectionSlope], wanted: i32) -> i32 {
    let mut n = wanted.max(1);
    while directions.iter().any(|&d| horizon_target(window, d, n).is_err()) {
        n += 1;
    }
    n
}

impl Prepared {
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let window = config.window_box();
        let d = DirectionSlope::new(config.direction)?;
        let pairs = nested_directions(d, config.direction_windows)?;
        let mut directions = vec![d];
        for &(a, b) in &pairs {
            directions.extend([a, b]);
        }
        let horizon = feasible_horizon(&window, &directions, config.horizon);
        let field = WeightField::exponential(LatticeBox::square(config.window + 2 * horizon + 2), config.seed)?;
        let params = TreeParams::fixed(horizon);
        let built: Vec<DirectionData> = directions
            .par_iter()
            .map(|&direction| {
                let (tree, busemann) = build_tree_and_busemann(&field, direction, window, &params)?;
                Ok(DirectionData { direction, tree, busemann })
            })
            .collect::<Result<_>>()?;
        let mut built = built.into_iter();
        let center = built.next().expect("centre direction");
        let mut windows = Vec::new();
        while let (Some(lower), Some(upper)) = (built.next(), built.next()) {
            let delta = assemble_delta(&lower.tree, &upper.tree, &rows_of(&lower.busemann, &upper.busemann)?)?;
            let delta_to_upper = assemble_delta(&center.tree, &upper.tree, &rows_of(&center.busemann, &upper.busemann)?)?;
            windows.push(WindowData { lower, upper, delta, delta_to_upper });
        }
        Ok(Self { config: config.clone(), field, horizon, center, windows })
    }

    fn innermost(&self) -> &WindowData {
        &self.windows[0]
    }

    pub fn coverage(&self) -> Vec<CoverageRow> {
        let mut all = vec![&self.center];
        for w in &self.windows {
            all.extend([&w.lower, &w.upper]);
        }
        all.into_iter()
            .map(|x| CoverageRow { direction: x.direction.value(), tree: x.tree.coverage(), busemann: x.busemann.coverage() })
            .collect()
    }

    /// Plateau shapes from the innermost trees against shapes of true `Δ`.
    pub fn partition_score(&self) -> Result<PartitionScore> {
        let w = self.innermost();
        let window = self.config.window_box();
        let (lo, hi) = (window.min_level(), window.max_level());
        let rows = self.config.partition_rows.max(1);
        let levels: Vec<i32> = (1..=rows).map(|k| lo + ((hi - lo) as usize * k / (rows + 1)) as i32).collect();
        let mut score = PartitionScore::default();
        for level in levels {
            let truth = plateau_partition(&delta_row(&w.lower.busemann, &w.upper.busemann, level)?);
            match partition_from_trees(&w.lower.tree, &w.upper.tree, level) {
                Ok(shape) => {
                    let (agree, total) = shape.agreement(&truth)?;
                    score.agree += agree;
                    score.compared += total;
                }
                Err(Error::ClassesNotIntervals { level }) => score.failed_rows.push(level),
                Err(e) => return Err(e),
            }
            score.rows += 1;
        }
        score.fraction = fraction(score.agree, score.compared);
        Ok(score)
    }

    pub fn delta_score(&self) -> Result<Vec<DeltaScore>> {
        self.windows
            .iter()
            .map(|w| {
                let a = w.delta.max_deviation(&true_delta(&w.lower.busemann, &w.upper.busemann))?;
                let b = w.delta_to_upper.max_deviation(&true_delta(&self.center.busemann, &w.upper.busemann))?;
                Ok(DeltaScore {
                    lower: w.lower.direction.value(),
                    upper: w.upper.direction.value(),
                    coverage: w.delta.coverage().min(w.delta_to_upper.coverage()),
                    max_deviation: a.max(b),
                })
            })
            .collect()
    }

    /// Reconstructed centre tree, and the upper tree re-derived from itself.
    pub fn tree_score(&self) -> Result<TreeScore> {
        let w = self.innermost();
        let params = ReconParams { tolerance: self.config.tolerance, ..ReconParams::default() };
        let rec = reconstruct_tree(&w.lower.tree, &w.upper.tree, &w.delta, self.center.direction, &params)?;
        let truth = &self.center.tree;
        let mut score = TreeScore { certified: rec.certified, ties: rec.ties.len(), ..TreeScore::default() };
        for v in self.config.window_box().points() {
            if !(rec.tree.is_stabilized(v) && truth.is_stabilized(v)) {
                continue;
            }
            let ok = rec.tree.parent_step(v) == truth.parent_step(v);
            score.compared += 1;
            score.agree += ok as usize;
            if w.lower.tree.parent_step(v) != w.upper.tree.parent_step(v) {
                score.split_compared += 1;
                score.split_agree += ok as usize;
            }
        }
        let degenerate = reconstruct_tree(&w.lower.tree, &w.upper.tree, &w.delta, w.upper.direction, &params)?;
        for v in self.config.window_box().points() {
            if degenerate.tree.is_stabilized(v) && w.upper.tree.is_stabilized(v) {
                score.degenerate_compared += 1;
                score.degenerate_agree += (degenerate.tree.parent_step(v) == w.upper.tree.parent_step(v)) as usize;
            }
        }
        score.fraction = fraction(score.agree, score.compared);
        score.split_fraction = fraction(score.split_agree, score.split_compared);
        score.degenerate_fraction = fraction(score.degenerate_agree, score.degenerate_compared);
        score.coverage = rec.coverage();
        Ok(score)
    }

    /// Random pairs within `pair_span` of each other.
    pub fn distance_pairs(&self) -> Vec<(LatticePoint, LatticePoint)> {
        let window = self.config.window_box();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1);
        let span = self.config.pair_span.max(0);
        let mut out = Vec::with_capacity(self.config.distance_pairs);
        while out.len() < self.config.distance_pairs {
            let p = LatticePoint::new(rng.random_range(0..self.config.window), rng.random_range(0..self.config.window));
            let q = LatticePoint::new(p.i + rng.random_range(0..=span), p.j + rng.random_range(0..=span));
            if window.contains(q) {
                out.push((p, q));
            }
        }
        out
    }

    pub fn distance_rows(&self) -> Result<Vec<DistanceRow>> {
        let d = self.center.direction;
        let dags: Vec<SwitchingDag> = self
            .windows
            .iter()
            .map(|w| Ok(SwitchingDag::new(&w.lower.tree, &w.upper.tree)?.without_holes().with_weights(&self.field)?))
            .collect::<Result<_>>()?;
        let views: Vec<DistanceWindow<'_>> = self
            .windows
            .iter()
            .map(|w| DistanceWindow { tree1: &w.lower.tree, tree2: &w.upper.tree, delta: &w.delta, delta_to_upper: &w.delta_to_upper })
            .collect();
        let tol = self.config.tolerance;
        self.distance_pairs()
            .par_iter()
            .map(|&(p, q)| {
                let trace = reconstruct_distance(&views, d, p, q)?;
                let truth = match differential_distance(&self.center.busemann, &self.field, p, q) {
                    Ok(v) => Some(v.value()),
                    Err(Error::NotStabilized { .. }) => None,
                    Err(e) => return Err(e),
                };
                let g = passage_time(&self.field, p, q)?;
                let mut switching_from = None;
                for (n, dag) in dags.iter().enumerate() {
                    if (modified_distance(dag, p, q)? - g).abs() <= tol {
                        switching_from = Some(n);
                        break;
                    }
                }
                let values: Vec<Option<f64>> = trace.values.iter().map(|v| v.map(|x| x.value())).collect();
                // windows that could not determine a value are not scored
                let error = match (truth, switching_from) {
                    (Some(t), Some(n0)) => values[n0..].iter().flatten().map(|x| (x - t).abs()).reduce(f64::max),
                    _ => None,
                };
                Ok(DistanceRow { p, q, values, truth, switching_from, error, monotone: trace.is_monotone(tol) })
            })
            .collect()
    }

    pub fn distance_score(&self) -> Result<(DistanceScore, Vec<DistanceRow>)> {
        let rows = self.distance_rows()?;
        let mut s = DistanceScore { pairs: rows.len(), ..DistanceScore::default() };
        for r in &rows {
            s.certified += r.truth.is_some() as usize;
            s.switching += r.switching_from.is_some() as usize;
            s.monotone_violations += (!r.monotone) as usize;
            if r.truth.is_some() && r.switching_from.is_some() && r.error.is_none() {
                s.undetermined += 1;
            }
            if let Some(e) = r.error {
                s.checked += 1;
                s.max_abs_error = s.max_abs_error.max(e);
                s.exact += (e <= self.config.tolerance) as usize;
            }
        }
        Ok((s, rows))
    }

    pub fn rectangles(&self) -> Vec<ShockRectangle> {
        let window = self.config.window_box();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(2);
        let (lo, hi) = (window.min_level(), window.max_level());
        let span = self.config.rectangle_span.clamp(1, hi - lo);
        let mut out = Vec::with_capacity(self.config.rectangles);
        while out.len() < self.config.rectangles {
            let s = rng.random_range(lo..hi);
            let t = (s + rng.random_range(1..=span)).min(hi);
            let (a, b) = (window.level_points(s), window.level_points(t));
            let pick = |rng: &mut ChaCha8Rng, row: &[LatticePoint]| {
                let (u, v) = (row[rng.random_range(0..row.len())].transverse(), row[rng.random_range(0..row.len())].transverse());
                (u.min(v), u.max(v))
            };
            let (x1, x2) = pick(&mut rng, &a);
            let (y1, y2) = pick(&mut rng, &b);
            let r = ShockRectangle { s, t, x1, x2, y1, y2 };
            if r.is_reachable() {
                out.push(r);
            }
        }
        out
    }

    pub fn shock_score(&self) -> Result<ShockScore> {
        let values: Vec<Option<(f64, f64)>> = self
            .rectangles()
            .par_iter()
            .map(|r| match shock_measure(&self.field, &self.center.busemann, r) {
                Ok(v) => Ok(Some((v.mu, v.residual()))),
                Err(Error::NotStabilized { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let mut s = ShockScore { rectangles: values.len(), ..ShockScore::default() };
        s.min_mu = f64::INFINITY;
        for v in &values {
            match v {
                Some((mu, res)) => {
                    s.checked += 1;
                    s.min_mu = s.min_mu.min(*mu);
                    s.max_residual = s.max_residual.max(*res);
                }
                None => s.skipped += 1,
            }
        }
        if s.checked == 0 {
            s.min_mu = 0.0;
        }
        s.additive_residual = self.additive_check()?;
        Ok(s)
    }

    /// `G` and `-D_d` on a central block of two levels differ by `f(x) + g(y)`.
    pub fn additive_check(&self) -> Result<Option<f64>> {
        let window = self.config.window_box();
        let mid = (window.min_level() + window.max_level()) / 2;
        let gap = (self.config.rectangle_span / 2).clamp(1, mid - window.min_level());
        let (s, t) = (mid - gap, mid + gap);
        let starts: Vec<LatticePoint> = window.level_points(s).into_iter().filter(|p| 2 * p.transverse().abs() <= gap).collect();
        let ends: Vec<LatticePoint> = window.level_points(t).into_iter().filter(|q| 2 * q.transverse().abs() <= gap).collect();
        if starts.is_empty() || ends.is_empty() {
            return Ok(None);
        }
        let hi = LatticePoint::new(ends[0].i, ends[ends.len() - 1].j);
        let mut g = Vec::new();
        let mut minus_d = Vec::new();
        for &p in &starts {
            let table = ForwardTable::new(&self.field, p, hi)?;
            g.push(ends.iter().map(|&q| table.value(q)).collect::<Vec<_>>());
            let row: Result<Vec<f64>> = ends.iter().map(|&q| Ok(-differential_from_table(&self.center.busemann, &table, q)?.value())).collect();
            match row {
                Ok(r) => minus_d.push(r),
                Err(Error::NotStabilized { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(additive_residual(&g, &minus_d)?))
    }
}

fn fraction(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub direction: f64,
    pub tree: f64,
    pub busemann: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    pub rows: usize,
    pub agree: usize,
    pub compared: usize,
    pub fraction: f64,
    /// Rows whose tree classes were not intervals.
    pub failed_rows: Vec<i32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaScore {
    pub lower: f64,
    pub upper: f64,
    pub coverage: f64,
    /// Against the true field, up to one constant.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeScore {
    pub certified: usize,
    pub coverage: f64,
    pub ties: usize,
    pub compared: usize,
    pub agree: usize,
    pub fraction: f64,
    /// Vertices where the two input trees step differently.
    pub split_compared: usize,
    pub split_agree: usize,
    pub split_fraction: f64,
    pub degenerate_compared: usize,
    pub degenerate_agree: usize,
    pub degenerate_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub p: LatticePoint,
    pub q: LatticePoint,
    /// Per direction window; `None` when undetermined, infinite values as `inf`.
    #[serde(with = "opt_floats")]
    pub values: Vec<Option<f64>>,
    pub truth: Option<f64>,
    /// First window whose heaviest switching walk is a geodesic.
    pub switching_from: Option<usize>,
    /// Largest deviation from the truth over determined values from that window on.
    pub error: Option<f64>,
    pub monotone: bool,
}

mod opt_floats {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<Option<String>> = v.iter().map(|x| x.map(|x| x.to_string())).collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<f64>>, D::Error> {
        let text = Vec::<Option<String>>::deserialize(d)?;
        text.into_iter()
            .map(|x| x.map(|x| x.parse::<f64>().map_err(serde::de::Error::custom)).transpose())
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceScore {
    pub pairs: usize,
    /// Pairs whose true value is certified.
    pub certified: usize,
    /// Pairs joined by a geodesic switching walk in some window.
    pub switching: usize,
    /// Pairs with both of the above and a determined value from that window on.
    pub checked: usize,
    /// Pairs with both of the above but `Δ` unknown along the way.
    pub undetermined: usize,
    pub exact: usize,
    pub max_abs_error: f64,
    pub monotone_violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShockScore {
    pub rectangles: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_residual: f64,
    pub min_mu: f64,
    pub additive_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub millis: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub version: String,
    pub config: PipelineConfig,
    pub horizon: i32,
    pub coverage: Vec<CoverageRow>,
    pub partition: PartitionScore,
    pub delta: Vec<DeltaScore>,
    pub tree: TreeScore,
    pub distance: DistanceScore,
    pub shock: ShockScore,
    pub flags: Vec<String>,
    pub runtimes: Vec<StageTime>,
}

impl ReconstructionReport {
    /// Every failed check, empty when all pass.
    pub fn failures(&self) -> Vec<String> {
        let tol = self.config.tolerance;
        let mut out = self.flags.clone();
        let mut need = |ok: bool, what: String| {
            if !ok {
                out.push(what);
            }
        };
        need(self.partition.fraction >= 0.99, format!("partition agreement {:.4} < 0.99", self.partition.fraction));
        need(self.partition.failed_rows.is_empty(), format!("non-interval classes on rows {:?}", self.partition.failed_rows));
        for d in &self.delta {
            need(d.max_deviation <= 1e3 * tol, format!("assembled Δ off by {:e} in ({}, {})", d.max_deviation, d.lower, d.upper));
        }
        need(self.tree.fraction >= 0.99, format!("tree agreement {:.4} < 0.99", self.tree.fraction));
        need(
            self.tree.degenerate_compared > 0 && self.tree.degenerate_agree == self.tree.degenerate_compared,
            format!("degenerate tree agreement {}/{}", self.tree.degenerate_agree, self.tree.degenerate_compared),
        );
        need(self.distance.checked > 0 && self.distance.exact == self.distance.checked, format!(
            "distance exact on {}/{} pairs, max error {:e}",
            self.distance.exact, self.distance.checked, self.distance.max_abs_error
        ));
        need(self.distance.monotone_violations == 0, format!("{} non-monotone traces", self.distance.monotone_violations));
        need(self.shock.checked > 0 && self.shock.max_residual <= tol, format!("shock identity residual {:e}", self.shock.max_residual));
        need(self.shock.min_mu >= -tol, format!("negative shock measure {:e}", self.shock.min_mu));
        need(
            self.shock.additive_residual.is_some_and(|r| r <= tol),
            format!("additive residual {:?}", self.shock.additive_residual),
        );
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn timed<T>(runtimes: &mut Vec<StageTime>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    runtimes.push(StageTime { stage: stage.to_string(), millis: start.elapsed().as_millis() });
    Ok(out)
}

/// Every stage on one seeded field, scored against the truth.
pub fn end_to_end(config: &PipelineConfig) -> Result<ReconstructionReport> {
    let mut runtimes = Vec::new();
    let prepared = timed(&mut runtimes, "prepare", || Prepared::new(config))?;
    let mut flags = Vec::new();
    if prepared.horizon != config.horizon {
        flags.push(format!("horizon raised from {} to {}", config.horizon, prepared.horizon));
    }
    let coverage = prepared.coverage();
    for c in &coverage {
        if c.tree < config.coverage_floor {
            flags.push(format!("low certification coverage {:.3} for direction {}", c.tree, c.direction));
        }
    }
    let partition = timed(&mut runtimes, "partition", || prepared.partition_score())?;
    let delta = timed(&mut runtimes, "delta", || prepared.delta_score())?;
    let tree = timed(&mut runtimes, "tree", || prepared.tree_score())?;
    if tree.coverage < config.coverage_floor {
        flags.push(format!("low reconstruction coverage {:.3}", tree.coverage));
    }
    let (distance, _) = timed(&mut runtimes, "distance", || prepared.distance_score())?;
    let shock = timed(&mut runtimes, "shock", || prepared.shock_score())?;
    Ok(ReconstructionReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        horizon: prepared.horizon,
        coverage,
        partition,
        delta,
        tree,
        distance,
        shock,
        flags,
        runtimes,
    })
}
