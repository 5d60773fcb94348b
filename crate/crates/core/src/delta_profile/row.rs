use serde::{Deserialize, Serialize};

use crate::busemann::BusemannField;
use crate::error::{Error, Result};
use crate::lpp::LatticePoint;

/// Two `Δ` values closer than this are equal.
pub const DELTA_TOLERANCE: f64 = 1e-9;

/// `Δ(v) = W_{d2}(v; ref) - W_{d1}(v; ref)` along one level of the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaProfile {
    pub level: i32,
    /// Row vertices by increasing transverse coordinate.
    pub columns: Vec<LatticePoint>,
    pub values: Vec<f64>,
    /// Both fields certified against the reference point.
    pub anchored: Vec<bool>,
    /// `links[k]`: the pair `(columns[k], columns[k + 1])` is certified in both fields.
    pub links: Vec<bool>,
}

impl DeltaProfile {
    /// A fully certified profile from explicit values.
    pub fn from_values(level: i32, columns: Vec<LatticePoint>, values: Vec<f64>) -> Result<Self> {
        if columns.len() != values.len() || columns.is_empty() {
            return Err(Error::Mismatch("profile columns and values differ in length".into()));
        }
        let n = columns.len();
        let p = Self { level, columns, values, anchored: vec![true; n], links: vec![true; n - 1] };
        p.check_monotone()?;
        Ok(p)
    }

    fn check_monotone(&self) -> Result<()> {
        for k in 0..self.links.len() {
            if self.links[k] && self.values[k + 1] < self.values[k] - DELTA_TOLERANCE {
                return Err(Error::NotMonotone {
                    left: self.columns[k].transverse(),
                    right: self.columns[k + 1].transverse(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn value_at(&self, v: LatticePoint) -> Option<f64> {
        self.columns.iter().position(|&c| c == v).map(|k| self.values[k])
    }

    /// Increments `Δ(columns[k + lag]) - Δ(columns[k])` over fully certified stretches.
    pub fn increments(&self, lag: usize, stride: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        while k + lag < self.columns.len() {
            if self.links[k..k + lag].iter().all(|&l| l) {
                out.push(self.values[k + lag] - self.values[k]);
            }
            k += stride.max(1);
        }
        out
    }
}

/// `Δ` on `level`; fails if a certified link decreases.
pub fn delta_row(b1: &BusemannField, b2: &BusemannField, level: i32) -> Result<DeltaProfile> {
    let window = b1.window();
    if b2.window() != window {
        return Err(Error::Mismatch("Busemann fields live on different windows".into()));
    }
    if b1.direction() >= b2.direction() {
        return Err(Error::Precondition("first field must have the smaller slope".into()));
    }
    let columns = window.level_points(level);
    if columns.is_empty() {
        return Err(Error::Precondition(format!("level {level} misses the window")));
    }
    let values = columns.iter().map(|&v| Ok(b2.raw(v)? - b1.raw(v)?)).collect::<Result<Vec<_>>>()?;
    let anchored = columns.iter().map(|&v| b1.is_certified(v) && b2.is_certified(v)).collect();
    let links = columns
        .windows(2)
        .map(|w| b1.is_pair_certified(w[0], w[1]) && b2.is_pair_certified(w[0], w[1]))
        .collect();
    let profile = DeltaProfile { level, columns, values, anchored, links };
    profile.check_monotone()?;
    Ok(profile)
}

/// Relation between neighbouring columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Same,
    Split,
    Unknown,
}

/// A maximal run of columns joined by `Same` links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// Transverse coordinates of the first and last column.
    pub lo: i32,
    pub hi: i32,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauPartition {
    pub level: i32,
    pub columns: Vec<i32>,
    pub links: Vec<Link>,
    /// Plateau values per column when known.
    pub values: Option<Vec<f64>>,
}

impl PlateauPartition {
    pub fn plateaus(&self) -> Vec<Plateau> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 0..self.columns.len() {
            let closes = k + 1 == self.columns.len() || self.links[k] != Link::Same;
            if closes {
                out.push(Plateau {
                    lo: self.columns[start],
                    hi: self.columns[k],
                    value: self.values.as_ref().map(|v| v[start]),
                });
                start = k + 1;
            }
        }
        out
    }

    pub fn unknown_links(&self) -> usize {
        self.links.iter().filter(|&&l| l == Link::Unknown).count()
    }

    /// `(agreeing, compared)` columns: a column is compared when every link
    /// touching it is decided in both partitions.
    pub fn agreement(&self, other: &PlateauPartition) -> Result<(usize, usize)> {
        if self.columns != other.columns {
            return Err(Error::Mismatch("partitions cover different columns".into()));
        }
        let n = self.columns.len();
        let (mut agree, mut total) = (0, 0);
        for k in 0..n {
            let touching = [k.checked_sub(1), (k + 1 < n).then_some(k)];
            let links: Vec<usize> = touching.into_iter().flatten().collect();
            if links.iter().any(|&l| self.links[l] == Link::Unknown || other.links[l] == Link::Unknown) {
                continue;
            }
            total += 1;
            agree += links.iter().all(|&l| self.links[l] == other.links[l]) as usize;
        }
        Ok((agree, total))
    }

    /// Plateaus separated by a decided split carry strictly increasing values.
    pub fn is_ordered(&self) -> bool {
        let Some(values) = &self.values else { return true };
        (0..self.links.len()).all(|k| match self.links[k] {
            Link::Split => values[k + 1] > values[k] + DELTA_TOLERANCE,
            Link::Same => (values[k + 1] - values[k]).abs() <= DELTA_TOLERANCE,
            Link::Unknown => true,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.plateaus())?)
    }
}

/// Maximal constancy runs of `profile`.
pub fn plateau_partition(profile: &DeltaProfile) -> PlateauPartition {
    let links = (0..profile.links.len())
        .map(|k| {
            if !profile.links[k] {
                Link::Unknown
            } else if (profile.values[k + 1] - profile.values[k]).abs() <= DELTA_TOLERANCE {
                Link::Same
            } else {
                Link::Split
            }
        })
        .collect();
    PlateauPartition {
        level: profile.level,
        columns: profile.columns.iter().map(|c| c.transverse()).collect(),
        links,
        values: Some(profile.values.clone()),
    }
}
