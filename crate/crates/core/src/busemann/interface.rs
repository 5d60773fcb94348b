use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, horizon_target, DirectionSlope, GeodesicTree, RaySide, TreeParams};
use crate::error::{Error, Result};
use crate::lpp::{LatticeBox, LatticePoint, WeightField};

/// Interface position on one level, as a transverse coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Boundary {
    MinusInfinity,
    Finite(i32),
    PlusInfinity,
}

impl Boundary {
    pub fn as_f64(self) -> f64 {
        match self {
            Boundary::MinusInfinity => f64::NEG_INFINITY,
            Boundary::Finite(x) => x as f64,
            Boundary::PlusInfinity => f64::INFINITY,
        }
    }
}

/// Per level below the apex, the largest transverse coordinate whose ray
/// passes weakly left of the apex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitionInterface {
    pub apex: LatticePoint,
    pub direction: DirectionSlope,
    /// `(level, boundary)` for increasing levels below `level(apex)`.
    pub levels: Vec<(i32, Boundary)>,
    /// Vertices skipped because their ray is not certified up to the apex level.
    pub unstable: usize,
}

impl CompetitionInterface {
    pub fn from_tree(tree: &GeodesicTree, q: LatticePoint) -> Result<Self> {
        let window = tree.window();
        if !window.contains(q) {
            return Err(Error::OutOfBox(q));
        }
        let target_level = q.level();
        let mut levels = Vec::new();
        let mut unstable = 0;
        for level in window.min_level()..target_level {
            let mut last_left: Option<i32> = None;
            let mut any_right = false;
            for v in window.level_points(level) {
                let left = match tree.ray_at_level(v, target_level) {
                    RaySide::At(r) => r.transverse() <= q.transverse(),
                    RaySide::ExitedLeft => true,
                    RaySide::ExitedRight => false,
                    RaySide::Unstable => {
                        unstable += 1;
                        continue;
                    }
                };
                if left {
                    last_left = Some(v.transverse());
                } else {
                    any_right = true;
                }
            }
            let b = match (last_left, any_right) {
                (None, _) => Boundary::MinusInfinity,
                (Some(_), false) => Boundary::PlusInfinity,
                (Some(x), true) => Boundary::Finite(x),
            };
            levels.push((level, b));
        }
        Ok(Self { apex: q, direction: tree.direction(), levels, unstable })
    }

    pub fn boundary(&self, level: i32) -> Option<Boundary> {
        self.levels.iter().find(|(l, _)| *l == level).map(|&(_, b)| b)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,boundary\n");
        for (level, b) in &self.levels {
            let cell = match b {
                Boundary::MinusInfinity => "-inf".to_string(),
                Boundary::Finite(x) => x.to_string(),
                Boundary::PlusInfinity => "+inf".to_string(),
            };
            out.push_str(&format!("{level},{cell}\n"));
        }
        out
    }
}

pub fn competition_interface(
    field: &WeightField,
    d: DirectionSlope,
    q: LatticePoint,
    window: LatticeBox,
    params: &TreeParams,
) -> Result<CompetitionInterface> {
    let tree = build_tree(field, d, window, params)?;
    CompetitionInterface::from_tree(&tree, q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub d: f64,
    /// Median over seeds of the interface supremum relative to `transverse(q)`.
    pub median: f64,
    pub seeds: usize,
    pub unstable_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeStudy {
    pub window_side: i32,
    pub depths: (i32, i32),
    pub rows: Vec<EscapeRow>,
}

impl EscapeStudy {
    /// Whether medians strictly decrease along the slope list.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median < w[0].median)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else if xs[n / 2 - 1] == xs[n / 2] {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// For each slope, the median over seeds of the supremum of the interface from
/// `q = (0, 0)` over levels `depth_lo..=depth_hi` below `q`, using the window
/// `[q - (side, side), q]`.
pub fn interface_escape_stat(
    seeds: &[u64],
    side: i32,
    d_list: &[f64],
    depths: (i32, i32),
) -> Result<EscapeStudy> {
    if seeds.is_empty() {
        return Err(Error::Precondition("no seeds".into()));
    }
    if d_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("slopes must be increasing".into()));
    }
    let (lo, hi) = depths;
    if lo < 1 || hi < lo || hi > side {
        return Err(Error::Precondition(format!("depth window {depths:?} outside 1..={side}")));
    }
    let q = LatticePoint::new(0, 0);
    let window = LatticeBox::spanning(LatticePoint::new(-side, -side), q);
    let horizon = 16 * (side + 1);
    let params = TreeParams::fixed(horizon);
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let d = DirectionSlope::new(d)?;
        let far = horizon_target(&window, d, 2 * horizon)?;
        let bounds = LatticeBox::spanning(window.lo(), far);
        let per_seed: Vec<(f64, usize)> = seeds
            .par_iter()
            .map(|&seed| -> Result<(f64, usize)> {
                let field = WeightField::exponential(bounds, seed)?;
                let tree = build_tree(&field, d, window, &params)?;
                let iface = CompetitionInterface::from_tree(&tree, q)?;
                let sup = iface
                    .levels
                    .iter()
                    .filter(|(l, _)| (-hi..=-lo).contains(l))
                    .map(|(_, b)| b.as_f64())
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok((sup - q.transverse() as f64, iface.unstable))
            })
            .collect::<Result<_>>()?;
        let unstable: usize = per_seed.iter().map(|p| p.1).sum();
        let total = seeds.len() * window.area();
        rows.push(EscapeRow {
            d: d.value(),
            median: median(per_seed.iter().map(|p| p.0).collect()),
            seeds: seeds.len(),
            unstable_fraction: unstable as f64 / total as f64,
        });
    }
    Ok(EscapeStudy { window_side: side, depths, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slope(d: f64) -> DirectionSlope {
        DirectionSlope::new(d).unwrap()
    }

    fn setup(seed: u64, d: f64) -> (GeodesicTree, LatticePoint) {
        let q = LatticePoint::new(0, 0);
        let window = LatticeBox::spanning(LatticePoint::new(-24, -24), q);
        let far = horizon_target(&window, slope(d), 2 * 400).unwrap();
        let field = WeightField::exponential(LatticeBox::spanning(window.lo(), far), seed).unwrap();
        (build_tree(&field, slope(d), window, &TreeParams::fixed(400)).unwrap(), q)
    }

    /// The same parent pointers with every vertex marked stabilized.
    fn trusted(tree: &GeodesicTree) -> GeodesicTree {
        let w = tree.window();
        let parent = w.points().map(|v| tree.parent_step(v)).collect();
        GeodesicTree::from_parts(tree.direction(), w, tree.horizon(), tree.seed(), parent, vec![true; w.area()]).unwrap()
    }

    #[test]
    fn local_case_separates_parents() {
        let (tree, q) = setup(1, 1.0);
        let iface = CompetitionInterface::from_tree(&tree, q).unwrap();
        let b = iface.boundary(q.level() - 1).unwrap();
        // the two possible parents of q sit at transverse -1 and +1
        let left_parent = LatticePoint::new(q.i, q.j - 1);
        let right_parent = LatticePoint::new(q.i - 1, q.j);
        assert_eq!(left_parent.transverse(), -1);
        match b {
            Boundary::Finite(x) => assert!(x == -1),
            Boundary::PlusInfinity => assert_eq!(tree.parent(right_parent), q),
            Boundary::MinusInfinity => panic!("the left parent can only reach q or pass left of it"),
        }
    }

    #[test]
    fn boundaries_form_a_lattice_path() {
        for seed in 0..5 {
            let (tree, q) = setup(seed, 1.0);
            let iface = CompetitionInterface::from_tree(&trusted(&tree), q).unwrap();
            assert_eq!(iface.unstable, 0);
            let depth = |l: i32| q.level() - l;
            for w in iface.levels.windows(2) {
                let ((l0, b0), (l1, b1)) = (w[0], w[1]);
                if depth(l1) >= 20 {
                    continue;
                }
                if let (Boundary::Finite(x0), Boundary::Finite(x1)) = (b0, b1) {
                    assert!((x0 - x1).abs() == 1, "levels {l0},{l1}: {x0} vs {x1}");
                }
            }
        }
    }

    #[test]
    fn boundary_moves_left_as_slope_grows() {
        for seed in 0..4 {
            let a = setup(seed, 1.0);
            let b = setup(seed, 3.0);
            let ia = CompetitionInterface::from_tree(&trusted(&a.0), a.1).unwrap();
            let ib = CompetitionInterface::from_tree(&trusted(&b.0), b.1).unwrap();
            for ((l, x), (_, y)) in ia.levels.iter().zip(&ib.levels) {
                assert!(y <= x, "seed {seed} level {l}: {y:?} > {x:?}");
            }
        }
    }

    #[test]
    fn single_slope_gives_finite_median() {
        let s = interface_escape_stat(&[1, 2, 3], 12, &[1.0], (6, 12)).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!(s.rows[0].median.is_finite());
        assert!(s.strictly_decreasing());
    }

    #[test]
    fn single_level_window_is_that_levels_boundary() {
        let seeds = [5, 6, 7];
        let s = interface_escape_stat(&seeds, 12, &[2.0], (8, 8)).unwrap();
        let q = LatticePoint::new(0, 0);
        let window = LatticeBox::spanning(LatticePoint::new(-12, -12), q);
        let d = slope(2.0);
        let far = horizon_target(&window, d, 2 * 16 * 13).unwrap();
        let mut xs = Vec::new();
        for seed in seeds {
            let field = WeightField::exponential(LatticeBox::spanning(window.lo(), far), seed).unwrap();
            let tree = build_tree(&field, d, window, &TreeParams::fixed(16 * 13)).unwrap();
            xs.push(CompetitionInterface::from_tree(&tree, q).unwrap().boundary(-8).unwrap().as_f64());
        }
        assert_eq!(s.rows[0].median, median(xs));
    }

    #[test]
    fn csv_export() {
        let (tree, q) = setup(3, 1.0);
        let csv = CompetitionInterface::from_tree(&tree, q).unwrap().to_csv();
        assert!(csv.starts_with("level,boundary\n"));
        assert_eq!(csv.lines().count(), 1 + (q.level() - tree.window().min_level()) as usize);
    }
}
