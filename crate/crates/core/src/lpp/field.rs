use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lattice::{LatticeBox, LatticePoint};
use crate::error::{Error, Result};

/// Largest admissible side length of a field box.
pub const MAX_SIDE: i64 = 1 << 15;
/// Boxes up to this many sites are held in memory; larger ones are regenerated
/// row by row from the counter-keyed stream.
pub const MATERIALIZE_LIMIT: usize = 1 << 24;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Exponential { mean: f64 },
    /// Number of Bernoulli(p) trials up to the first success, supported on 1, 2, ...
    Geometric { p: f64 },
    /// Every site carries `value`. Diagnostic fixtures only.
    Constant { value: f64 },
    /// Weights supplied by hand. Diagnostic fixtures only.
    Explicit,
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Exponential { mean: 1.0 }
    }
}

impl Distribution {
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "exponential" => Ok(Distribution::Exponential { mean: 1.0 }),
            "geometric" => Ok(Distribution::Geometric { p: 0.5 }),
            other => Err(Error::UnknownDistribution(other.to_string())),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Distribution::Exponential { .. } => "exponential",
            Distribution::Geometric { .. } => "geometric",
            Distribution::Constant { .. } => "constant",
            Distribution::Explicit => "explicit",
        }
    }

    fn transform(&self, bits: u64) -> f64 {
        // uniform on (0, 1]
        let u = ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        match *self {
            Distribution::Exponential { mean } => -mean * u.ln(),
            Distribution::Geometric { p } => 1.0 + (u.ln() / (1.0 - p).ln()).floor(),
            Distribution::Constant { value } => value,
            Distribution::Explicit => unreachable!("explicit fields are never regenerated"),
        }
    }
}

/// Persisted description of a field; weights are regenerated from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub seed: u64,
    #[serde(rename = "box")]
    pub bounds: LatticeBox,
    pub distribution: Distribution,
    pub format_version: u32,
}

/// Seeded i.i.d. positive weights on a finite box.
///
/// Site `(i, j)` draws its weight from the ChaCha8 stream `i` of `seed` at word
/// offset `2 (j - i32::MIN)`, so any two boxes sampled with the same seed agree
/// on their overlap.
#[derive(Clone, Debug)]
pub struct WeightField {
    seed: u64,
    bounds: LatticeBox,
    distribution: Distribution,
    weights: Option<Vec<f64>>,
}

fn row_stream(seed: u64, i: i32, j: i32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((i as i64 - i32::MIN as i64) as u64);
    rng.set_word_pos(2 * (j as i64 - i32::MIN as i64) as u128);
    rng
}

impl WeightField {
    pub fn sample(bounds: LatticeBox, seed: u64, distribution: Distribution) -> Result<Self> {
        if bounds.is_empty() || bounds.width() as i64 > MAX_SIDE || bounds.height() as i64 > MAX_SIDE {
            return Err(Error::BoxTooLarge { limit: MAX_SIDE });
        }
        if matches!(distribution, Distribution::Explicit) {
            return Err(Error::UnknownDistribution("explicit".into()));
        }
        let mut field = Self { seed, bounds, distribution, weights: None };
        if bounds.area() <= MATERIALIZE_LIMIT {
            let mut weights = Vec::with_capacity(bounds.area());
            let mut row = Vec::new();
            for i in bounds.i_min..=bounds.i_max {
                field.generate_row(i, bounds.j_min, bounds.j_max, &mut row);
                weights.extend_from_slice(&row);
            }
            field.weights = Some(weights);
        }
        Ok(field)
    }

    pub fn exponential(bounds: LatticeBox, seed: u64) -> Result<Self> {
        Self::sample(bounds, seed, Distribution::default())
    }

    pub fn from_header(header: &FieldHeader) -> Result<Self> {
        Self::sample(header.bounds, header.seed, header.distribution)
    }

    /// Every site carries `value`. Useful for tie diagnostics.
    pub fn constant(bounds: LatticeBox, value: f64) -> Self {
        Self {
            seed: 0,
            bounds,
            distribution: Distribution::Constant { value },
            weights: Some(vec![value; bounds.area()]),
        }
    }

    /// Hand-specified weights in row-major order (`i` slow).
    pub fn from_weights(bounds: LatticeBox, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != bounds.area() {
            return Err(Error::Precondition("weight count does not match box".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Precondition("weights must be positive".into()));
        }
        Ok(Self { seed: 0, bounds, distribution: Distribution::Explicit, weights: Some(weights) })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bounds(&self) -> LatticeBox {
        self.bounds
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    pub fn is_materialized(&self) -> bool {
        self.weights.is_some()
    }

    pub fn header(&self) -> FieldHeader {
        FieldHeader {
            seed: self.seed,
            bounds: self.bounds,
            distribution: self.distribution,
            format_version: FORMAT_VERSION,
        }
    }

    fn generate_row(&self, i: i32, j_lo: i32, j_hi: i32, out: &mut Vec<f64>) {
        out.clear();
        if j_hi < j_lo {
            return;
        }
        let mut rng = row_stream(self.seed, i, j_lo);
        out.extend((j_lo..=j_hi).map(|_| self.distribution.transform(rng.next_u64())));
    }

    pub fn weight(&self, p: LatticePoint) -> Result<f64> {
        if !self.bounds.contains(p) {
            return Err(Error::OutOfBox(p));
        }
        Ok(self.weight_unchecked(p))
    }

    pub(crate) fn weight_unchecked(&self, p: LatticePoint) -> f64 {
        match &self.weights {
            Some(w) => w[self.bounds.index(p)],
            None => self.distribution.transform(row_stream(self.seed, p.i, p.j).next_u64()),
        }
    }

    /// Weights of row `i` for `j` in `j_lo..=j_hi`, which must lie in the box.
    pub fn fill_row(&self, i: i32, j_lo: i32, j_hi: i32, out: &mut Vec<f64>) {
        debug_assert!(j_hi < j_lo || (self.bounds.contains(LatticePoint::new(i, j_lo)) && self.bounds.contains(LatticePoint::new(i, j_hi))));
        match &self.weights {
            Some(w) => {
                out.clear();
                if j_hi >= j_lo {
                    let start = self.bounds.index(LatticePoint::new(i, j_lo));
                    out.extend_from_slice(&w[start..start + (j_hi - j_lo + 1) as usize]);
                }
            }
            None => self.generate_row(i, j_lo, j_hi, out),
        }
    }

    /// Dense copy of the weights on `sub`, row-major.
    pub fn materialize(&self, sub: LatticeBox) -> Result<Vec<f64>> {
        if !self.bounds.contains_box(&sub) {
            return Err(Error::OutOfBox(sub.hi()));
        }
        let mut out = Vec::with_capacity(sub.area());
        let mut row = Vec::new();
        for i in sub.i_min..=sub.i_max {
            self.fill_row(i, sub.j_min, sub.j_max, &mut row);
            out.extend_from_slice(&row);
        }
        Ok(out)
    }

    /// Smallest gap between sorted weights of a materialized box.
    pub fn min_weight_gap(&self) -> Option<f64> {
        let mut w = self.weights.clone()?;
        w.sort_by(f64::total_cmp);
        w.windows(2).map(|p| p[1] - p[0]).min_by(f64::total_cmp)
    }

    /// JSON document with the header and, optionally, the weights.
    pub fn to_json(&self, include_weights: bool) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            header: FieldHeader,
            #[serde(skip_serializing_if = "Option::is_none")]
            weights: Option<&'a [f64]>,
        }
        let materialized;
        let weights = if include_weights {
            materialized = match &self.weights {
                Some(w) => w.clone(),
                None => self.materialize(self.bounds)?,
            };
            Some(materialized.as_slice())
        } else {
            None
        };
        Ok(serde_json::to_string(&Doc { header: self.header(), weights })?)
    }

    /// Reads a document written by [`WeightField::to_json`]. Stored weights win
    /// over regeneration when present.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            header: FieldHeader,
            weights: Option<Vec<f64>>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.header.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported field format {}", doc.header.format_version)));
        }
        match doc.weights {
            Some(w) => {
                let mut f = Self::from_weights(doc.header.bounds, w)?;
                f.seed = doc.header.seed;
                f.distribution = doc.header.distribution;
                Ok(f)
            }
            None => Self::from_header(&doc.header),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_resampling() {
        let b = LatticeBox::square(2);
        let a = WeightField::exponential(b, 7).unwrap();
        let c = WeightField::exponential(b, 7).unwrap();
        assert_eq!(a.materialize(b).unwrap(), c.materialize(b).unwrap());
    }

    #[test]
    fn sub_boxes_agree_on_overlap() {
        let small = WeightField::exponential(LatticeBox::square(4), 7).unwrap();
        let large = WeightField::exponential(LatticeBox::square(10), 7).unwrap();
        for p in LatticeBox::square(4).points() {
            assert_eq!(small.weight(p).unwrap().to_bits(), large.weight(p).unwrap().to_bits());
        }
    }

    #[test]
    fn lazy_and_materialized_agree() {
        let big = LatticeBox::new(0, 8191, 0, 8191);
        let lazy = WeightField::exponential(big, 3).unwrap();
        assert!(!lazy.is_materialized());
        let dense = WeightField::exponential(LatticeBox::square(16), 3).unwrap();
        let mut row = Vec::new();
        lazy.fill_row(5, 2, 15, &mut row);
        for (k, j) in (2..=15).enumerate() {
            assert_eq!(row[k].to_bits(), dense.weight(LatticePoint::new(5, j)).unwrap().to_bits());
            assert_eq!(row[k].to_bits(), lazy.weight(LatticePoint::new(5, j)).unwrap().to_bits());
        }
    }

    #[test]
    fn mean_within_three_standard_errors() {
        let b = LatticeBox::square(100);
        let f = WeightField::exponential(b, 1).unwrap();
        let w = f.materialize(b).unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        // Exp(1) has unit variance.
        assert!((mean - 1.0).abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!(w.iter().all(|&x| x > 0.0));
        assert!(f.min_weight_gap().unwrap() > 1e-12);
    }

    #[test]
    fn guards() {
        assert!(matches!(
            WeightField::exponential(LatticeBox::new(0, 1 << 16, 0, 3), 1),
            Err(Error::BoxTooLarge { .. })
        ));
        assert!(matches!(Distribution::from_tag("pareto"), Err(Error::UnknownDistribution(_))));
        assert_eq!(Distribution::from_tag("geometric").unwrap().tag(), "geometric");
    }

    #[test]
    fn geometric_weights_are_positive_integers() {
        let f = WeightField::sample(LatticeBox::square(20), 4, Distribution::Geometric { p: 0.5 }).unwrap();
        let w = f.materialize(LatticeBox::square(20)).unwrap();
        assert!(w.iter().all(|&x| x >= 1.0 && x.fract() == 0.0));
    }

    #[test]
    fn json_round_trip() {
        let f = WeightField::exponential(LatticeBox::new(-3, 4, 2, 6), 11).unwrap();
        let header_only = WeightField::from_json(&f.to_json(false).unwrap()).unwrap();
        let full = WeightField::from_json(&f.to_json(true).unwrap()).unwrap();
        let b = f.bounds();
        assert_eq!(header_only.materialize(b).unwrap(), f.materialize(b).unwrap());
        assert_eq!(full.materialize(b).unwrap(), f.materialize(b).unwrap());
        assert_eq!(full.header(), f.header());
    }
}
