use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpp::{BackwardTable, ForwardTable, LatticeBox, LatticePath, LatticePoint, Step, WeightField};

/// Two Busemann evaluations at horizons `N` and `2N` closer than this count as
/// the same value.
pub const BUSEMANN_TOLERANCE: f64 = 1e-9;

/// Asymptotic slope `j / i` of a ray. Larger slopes point further right.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DirectionSlope(f64);

impl DirectionSlope {
    pub fn new(d: f64) -> Result<Self> {
        if d.is_finite() && d > 0.0 {
            Ok(Self(d))
        } else {
            Err(Error::Precondition(format!("slope must be positive and finite, got {d}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Point at `n` levels beyond the centre of `window` in direction `d`.
///
/// Fails when the target would not dominate every window vertex.
pub fn horizon_target(window: &LatticeBox, d: DirectionSlope, n: i32) -> Result<LatticePoint> {
    let ci = (window.i_min + window.i_max) as f64 / 2.0;
    let cj = (window.j_min + window.j_max) as f64 / 2.0;
    let s = d.value();
    let t = LatticePoint::new(
        (ci + n as f64 / (1.0 + s)).round() as i32,
        (cj + n as f64 * s / (1.0 + s)).round() as i32,
    );
    if t.i < window.i_max || t.j < window.j_max {
        return Err(Error::Precondition(format!("horizon {n} too short for window {window:?}")));
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    /// Starting horizon in levels; defaults to eight window diameters.
    pub horizon: Option<i32>,
    /// Doubling stops once the horizon reaches this many levels.
    pub max_horizon: Option<i32>,
    /// Target fraction of certified window vertices.
    pub coverage_goal: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { horizon: None, max_horizon: None, coverage_goal: 0.99 }
    }
}

impl TreeParams {
    pub fn fixed(horizon: i32) -> Self {
        Self { horizon: Some(horizon), max_horizon: Some(horizon), coverage_goal: 0.0 }
    }
}

/// Where a ray sits on a given level relative to its window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RaySide {
    At(LatticePoint),
    /// Left through `i > i_max`; it stays left of every window vertex.
    ExitedLeft,
    /// Left through `j > j_max`; it stays right of every window vertex.
    ExitedRight,
    Unstable,
}

/// Parent-pointer forest of direction-`d` rays restricted to a window.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicTree {
    direction: DirectionSlope,
    window: LatticeBox,
    horizon: i32,
    seed: u64,
    parent: Vec<Step>,
    stabilized: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct TreeHeader {
    direction: f64,
    window: LatticeBox,
    horizon: i32,
    seed: u64,
}

impl GeodesicTree {
    pub fn from_parts(
        direction: DirectionSlope,
        window: LatticeBox,
        horizon: i32,
        seed: u64,
        parent: Vec<Step>,
        stabilized: Vec<bool>,
    ) -> Result<Self> {
        if parent.len() != window.area() || stabilized.len() != window.area() {
            return Err(Error::Mismatch("tree arrays do not cover the window".into()));
        }
        Ok(Self { direction, window, horizon, seed, parent, stabilized })
    }

    pub fn direction(&self) -> DirectionSlope {
        self.direction
    }

    pub fn window(&self) -> LatticeBox {
        self.window
    }

    pub fn horizon(&self) -> i32 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parent_step(&self, v: LatticePoint) -> Step {
        self.parent[self.window.index(v)]
    }

    pub fn parent(&self, v: LatticePoint) -> LatticePoint {
        v.step(self.parent_step(v))
    }

    pub fn is_stabilized(&self, v: LatticePoint) -> bool {
        self.window.contains(v) && self.stabilized[self.window.index(v)]
    }

    pub fn coverage(&self) -> f64 {
        self.stabilized.iter().filter(|&&s| s).count() as f64 / self.stabilized.len() as f64
    }

    /// The ray from `v` while it stays inside the window.
    pub fn ray(&self, v: LatticePoint) -> LatticePath {
        let mut points = vec![v];
        let mut cur = v;
        loop {
            let next = self.parent(cur);
            if !self.window.contains(next) {
                break;
            }
            points.push(next);
            cur = next;
        }
        LatticePath::new(points).expect("parent steps are unit steps")
    }

    /// Whether the in-window ray from `v` is certified all the way.
    pub fn ray_certified(&self, v: LatticePoint) -> bool {
        let mut cur = v;
        loop {
            if !self.is_stabilized(cur) {
                return false;
            }
            let next = self.parent(cur);
            if !self.window.contains(next) {
                return true;
            }
            cur = next;
        }
    }

    /// Position of the ray from `v` on `level >= level(v)`.
    pub fn ray_at_level(&self, v: LatticePoint, level: i32) -> RaySide {
        let mut cur = v;
        while cur.level() < level {
            if !self.is_stabilized(cur) {
                return RaySide::Unstable;
            }
            let step = self.parent_step(cur);
            let next = cur.step(step);
            if !self.window.contains(next) {
                return match step {
                    Step::Horizontal => RaySide::ExitedLeft,
                    Step::Vertical => RaySide::ExitedRight,
                };
            }
            cur = next;
        }
        if self.is_stabilized(cur) {
            RaySide::At(cur)
        } else {
            RaySide::Unstable
        }
    }

    /// Whether `q` lies on the certified ray from `p` (or equals `p`).
    pub fn is_on_ray(&self, p: LatticePoint, q: LatticePoint) -> Result<bool> {
        if p == q {
            return Ok(true);
        }
        if q.level() < p.level() || !p.precedes(q) {
            return Ok(false);
        }
        match self.ray_at_level(p, q.level()) {
            RaySide::At(r) => Ok(r == q),
            RaySide::ExitedLeft | RaySide::ExitedRight => Ok(false),
            RaySide::Unstable => Err(Error::NotStabilized { at: p }),
        }
    }

    /// Two bits per vertex (parent step, stabilized flag) after a JSON header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&TreeHeader {
            direction: self.direction.value(),
            window: self.window,
            horizon: self.horizon,
            seed: self.seed,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(4 + header.len() + self.parent.len() / 4 + 1);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut packed = vec![0u8; self.parent.len().div_ceil(4)];
        for (k, (&s, &ok)) in self.parent.iter().zip(&self.stabilized).enumerate() {
            let bits = (matches!(s, Step::Vertical) as u8) | ((ok as u8) << 1);
            packed[k / 4] |= bits << (2 * (k % 4));
        }
        out.extend_from_slice(&packed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Io("truncated tree encoding".into());
        let len = u32::from_le_bytes(bytes.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
        let header: TreeHeader = serde_json::from_slice(bytes.get(4..4 + len).ok_or_else(bad)?)?;
        let body = &bytes[4 + len..];
        let n = header.window.area();
        if body.len() < n.div_ceil(4) {
            return Err(bad());
        }
        let mut parent = Vec::with_capacity(n);
        let mut stabilized = Vec::with_capacity(n);
        for k in 0..n {
            let bits = (body[k / 4] >> (2 * (k % 4))) & 0b11;
            parent.push(if bits & 1 == 1 { Step::Vertical } else { Step::Horizontal });
            stabilized.push(bits & 2 == 2);
        }
        Self::from_parts(DirectionSlope::new(header.direction)?, header.window, header.horizon, header.seed, parent, stabilized)
    }
}

/// `W_d(v; ref)` for every window vertex, with `ref` the window origin.
///
/// Values come from the horizon-`2N` target; a pair is certified when the
/// horizon-`N` target gives the same difference.
#[derive(Clone, Debug, PartialEq)]
pub struct BusemannField {
    direction: DirectionSlope,
    window: LatticeBox,
    horizon: i32,
    far: Vec<f64>,
    near: Vec<f64>,
}

impl BusemannField {
    pub fn direction(&self) -> DirectionSlope {
        self.direction
    }

    pub fn window(&self) -> LatticeBox {
        self.window
    }

    pub fn reference(&self) -> LatticePoint {
        self.window.lo()
    }

    pub fn horizon(&self) -> i32 {
        self.horizon
    }

    /// Uncertified horizon-`2N` value of `W_d(v; ref)`.
    pub fn raw(&self, v: LatticePoint) -> Result<f64> {
        if !self.window.contains(v) {
            return Err(Error::OutOfBox(v));
        }
        Ok(self.far[self.window.index(v)])
    }

    pub fn is_pair_certified(&self, p: LatticePoint, q: LatticePoint) -> bool {
        if !self.window.contains(p) || !self.window.contains(q) {
            return false;
        }
        let (a, b) = (self.window.index(p), self.window.index(q));
        ((self.far[a] - self.far[b]) - (self.near[a] - self.near[b])).abs() <= BUSEMANN_TOLERANCE
    }

    pub fn is_certified(&self, v: LatticePoint) -> bool {
        self.is_pair_certified(v, self.reference())
    }

    /// `W_d(v; ref)`.
    pub fn value(&self, v: LatticePoint) -> Result<f64> {
        self.between(v, self.reference())
    }

    /// `W_d(p; q)`.
    pub fn between(&self, p: LatticePoint, q: LatticePoint) -> Result<f64> {
        let (wp, wq) = (self.raw(p)?, self.raw(q)?);
        if !self.is_pair_certified(p, q) {
            return Err(Error::NotStabilized { at: p });
        }
        Ok(wp - wq)
    }

    /// Fraction of vertices certified against the reference point.
    pub fn coverage(&self) -> f64 {
        let r = self.window.index(self.reference());
        let ok = self
            .far
            .iter()
            .zip(&self.near)
            .filter(|(f, n)| ((*f - self.far[r]) - (*n - self.near[r])).abs() <= BUSEMANN_TOLERANCE)
            .count();
        ok as f64 / self.far.len() as f64
    }
}

fn certify(window: LatticeBox, near: &BackwardTable, far: &BackwardTable) -> (Vec<Step>, Vec<bool>, Vec<f64>, Vec<f64>) {
    let n = window.area();
    let mut parent = vec![Step::Horizontal; n];
    let mut stabilized = vec![false; n];
    let mut far_values = vec![0.0; n];
    let mut near_values = vec![0.0; n];
    let reference = window.lo();
    let (near_ref, far_ref) = (near.value(reference), far.value(reference));
    for k in 0..n {
        let v = window.point(k);
        let far_step = far.next_step(v).expect("window vertices reach the target");
        parent[k] = far_step;
        let agrees = near.next_step(v) == Some(far_step) && !far.is_tied(v) && !near.is_tied(v);
        stabilized[k] = agrees;
        far_values[k] = far.value(v) - far_ref;
        near_values[k] = near.value(v) - near_ref;
    }
    (parent, stabilized, far_values, near_values)
}

/// Builds the direction-`d` tree and Busemann field on `window`, doubling the
/// horizon until `params.coverage_goal` of the vertices is certified or the
/// horizon cap (or the field box) is reached.
pub fn build_tree_and_busemann(
    field: &WeightField,
    d: DirectionSlope,
    window: LatticeBox,
    params: &TreeParams,
) -> Result<(GeodesicTree, BusemannField)> {
    let bounds = field.bounds();
    if window.is_empty() || !bounds.contains_box(&window) {
        return Err(Error::Mismatch("window must lie inside the field box".into()));
    }
    let diameter = (window.width() + window.height()) as i32;
    let mut n = params.horizon.unwrap_or(8 * diameter).max(1);
    let cap = params.max_horizon.unwrap_or(64 * diameter).max(n);
    let sweep = |n: i32| -> Result<BackwardTable> {
        let target = horizon_target(&window, d, n)?;
        BackwardTable::sweep(field, window.lo(), target, window)
    };
    let (near, far) = rayon::join(|| sweep(n), || sweep(2 * n));
    let (mut near, mut far) = (near?, far?);
    loop {
        let (parent, stabilized, far_values, near_values) = certify(window, &near, &far);
        let good = stabilized.iter().filter(|&&s| s).count();
        let coverage = good as f64 / window.area() as f64;
        let next_target = horizon_target(&window, d, 4 * n)?;
        let can_grow = 2 * n < cap && bounds.contains(next_target);
        if coverage >= params.coverage_goal || !can_grow {
            let tree = GeodesicTree { direction: d, window, horizon: n, seed: field.seed(), parent, stabilized };
            let busemann = BusemannField { direction: d, window, horizon: n, far: far_values, near: near_values };
            return Ok((tree, busemann));
        }
        n *= 2;
        near = far;
        far = sweep(2 * n)?;
    }
}

pub fn build_tree(field: &WeightField, d: DirectionSlope, window: LatticeBox, params: &TreeParams) -> Result<GeodesicTree> {
    Ok(build_tree_and_busemann(field, d, window, params)?.0)
}

/// A ray to the horizon-`2N` target and the length of its prefix shared with
/// the ray to the horizon-`N` target.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifiedRay {
    pub path: LatticePath,
    pub certified_len: usize,
}

impl CertifiedRay {
    pub fn certified(&self) -> LatticePath {
        self.path.sub_path(0, self.certified_len - 1)
    }
}

/// Semi-infinite ray from `p` in direction `d`, certified by doubling `horizon`.
pub fn semi_infinite_ray(field: &WeightField, p: LatticePoint, d: DirectionSlope, horizon: i32) -> Result<CertifiedRay> {
    let here = LatticeBox::spanning(p, p);
    let near = horizon_target(&here, d, horizon)?;
    let far = horizon_target(&here, d, 2 * horizon)?;
    if !field.bounds().contains(far) {
        return Err(Error::HorizonOutsideBox { target: far });
    }
    let table = ForwardTable::new(field, p, far)?;
    let long = table.geodesic(far)?;
    let short = table.geodesic(near)?;
    let certified_len = long
        .points()
        .iter()
        .zip(short.points())
        .take_while(|(a, b)| a == b)
        .count();
    if certified_len < 2 {
        return Err(Error::NotStabilized { at: p });
    }
    Ok(CertifiedRay { path: long, certified_len })
}

/// `W_d(p; q)` evaluated against far targets from the box spanned by `p, q`.
pub fn busemann_value(field: &WeightField, d: DirectionSlope, p: LatticePoint, q: LatticePoint, horizon: i32) -> Result<f64> {
    if p == q {
        return Ok(0.0);
    }
    let window = LatticeBox::new(p.i.min(q.i), p.i.max(q.i), p.j.min(q.j), p.j.max(q.j));
    let sweep = |n: i32| -> Result<BackwardTable> {
        BackwardTable::sweep(field, window.lo(), horizon_target(&window, d, n)?, window)
    };
    let (near, far) = rayon::join(|| sweep(horizon), || sweep(2 * horizon));
    let (near, far) = (near?, far?);
    let v_far = far.value(p) - far.value(q);
    let v_near = near.value(p) - near.value(q);
    if (v_far - v_near).abs() > BUSEMANN_TOLERANCE {
        return Err(Error::NotStabilized { at: p });
    }
    Ok(v_far)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationalResult {
    pub residual: f64,
    pub argmax: LatticePoint,
}

/// Residual of `W(p; ref) = max_z { G(p; z) + W(z; ref) }` with `z` ranging
/// over window vertices on `level_t` whose pair `(p, z)` is certified.
pub fn variational_check(
    field: &WeightField,
    busemann: &BusemannField,
    level_s: i32,
    level_t: i32,
    p: LatticePoint,
) -> Result<VariationalResult> {
    if p.level() != level_s {
        return Err(Error::Precondition(format!("{p:?} is not on level {level_s}")));
    }
    if level_t < level_s {
        return Err(Error::Precondition("level_t precedes level_s".into()));
    }
    busemann.raw(p)?;
    if level_t == level_s {
        return Ok(VariationalResult { residual: 0.0, argmax: p });
    }
    let window = busemann.window();
    let table = ForwardTable::new(field, p, window.hi())?;
    // W(p; ref) - [G(p; z) + W(z; ref)] = W(p; z) - G(p; z)
    let mut best: Option<(f64, LatticePoint)> = None;
    for z in window.level_points(level_t) {
        let g = table.value(z);
        if !g.is_finite() || !busemann.is_pair_certified(p, z) {
            continue;
        }
        let gap = busemann.between(p, z)? - g;
        if best.is_none_or(|(b, _)| gap < b) {
            best = Some((gap, z));
        }
    }
    let (residual, argmax) = best.ok_or(Error::NotStabilized { at: p })?;
    Ok(VariationalResult { residual, argmax })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpp::passage_time;

    fn pt(i: i32, j: i32) -> LatticePoint {
        LatticePoint::new(i, j)
    }

    fn slope(d: f64) -> DirectionSlope {
        DirectionSlope::new(d).unwrap()
    }

    #[test]
    fn slope_guard() {
        assert!(DirectionSlope::new(0.0).is_err());
        assert!(DirectionSlope::new(f64::INFINITY).is_err());
    }

    #[test]
    fn target_geometry() {
        let w = LatticeBox::square(10);
        let t = horizon_target(&w, slope(1.0), 100).unwrap();
        assert!((t.level() - 109).abs() <= 1);
        assert!(horizon_target(&w, slope(1.0), 4).is_err());
    }

    #[test]
    fn ray_at_box_edge_with_long_horizon_fails() {
        let f = WeightField::exponential(LatticeBox::square(40), 3).unwrap();
        let r = semi_infinite_ray(&f, pt(35, 35), slope(1.0), 20);
        assert!(matches!(r, Err(Error::HorizonOutsideBox { .. })));
    }

    #[test]
    fn doubling_horizon_rays_share_a_prefix() {
        let f = WeightField::exponential(LatticeBox::square(400), 21).unwrap();
        let ray = semi_infinite_ray(&f, pt(0, 0), slope(1.0), 180).unwrap();
        assert!(ray.certified_len >= 2);
        // the certified prefix is itself a geodesic
        let c = ray.certified();
        let g = passage_time(&f, c.start(), c.end()).unwrap();
        let len = crate::lpp::path_length(&f, &c).unwrap();
        assert!((g - len).abs() < 1e-9);
    }

    #[test]
    fn later_ray_is_suffix_of_earlier() {
        let f = WeightField::exponential(LatticeBox::square(500), 4).unwrap();
        let ray = semi_infinite_ray(&f, pt(0, 0), slope(1.0), 200).unwrap();
        let certified = ray.certified();
        let k = (certified.len() / 2).max(1);
        let mid = certified.points()[k];
        let later = semi_infinite_ray(&f, mid, slope(1.0), 200).unwrap();
        let overlap = later.certified_len.min(certified.len() - k);
        for m in 0..overlap {
            assert_eq!(later.path.points()[m], certified.points()[k + m]);
        }
    }

    #[test]
    fn single_vertex_window() {
        let f = WeightField::exponential(LatticeBox::square(200), 9).unwrap();
        let w = LatticeBox::spanning(pt(10, 10), pt(10, 10));
        let tree = build_tree(&f, slope(1.0), w, &TreeParams::fixed(64)).unwrap();
        let _ = tree.parent_step(pt(10, 10));
        assert_eq!(tree.ray(pt(10, 10)).len(), 1);
    }

    #[test]
    fn tree_serialization_round_trip() {
        let f = WeightField::exponential(LatticeBox::square(300), 2).unwrap();
        let tree = build_tree(&f, slope(1.0), LatticeBox::square(13), &TreeParams::default()).unwrap();
        let back = GeodesicTree::from_bytes(&tree.to_bytes()).unwrap();
        assert_eq!(back, tree);
        assert!(GeodesicTree::from_bytes(&tree.to_bytes()[..10]).is_err());
    }

    #[test]
    fn busemann_identities_on_small_window() {
        let f = WeightField::exponential(LatticeBox::square(700), 5).unwrap();
        let w = LatticeBox::square(30);
        let (tree, bus) = build_tree_and_busemann(&f, slope(1.0), w, &TreeParams::default()).unwrap();
        assert!(tree.coverage() > 0.9, "coverage {}", tree.coverage());
        assert_eq!(bus.between(w.lo(), w.lo()).unwrap(), 0.0);
        let p = pt(3, 4);
        let ray = tree.ray(p);
        for &q in ray.points() {
            if tree.ray_certified(p) && bus.is_pair_certified(p, q) {
                let g = passage_time(&f, p, q).unwrap();
                assert!((bus.between(p, q).unwrap() - g).abs() < 1e-9);
            }
        }
        // direct evaluation agrees with the window field
        let q = pt(20, 11);
        let direct = busemann_value(&f, slope(1.0), p, q, 480).unwrap();
        assert!((direct - bus.between(p, q).unwrap()).abs() < 1e-9);
        // degenerate variational check
        let r = variational_check(&f, &bus, p.level(), p.level(), p).unwrap();
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.argmax, p);
    }
}
