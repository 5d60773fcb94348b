//! Weight fields and the exact discrete directed metric.

mod field;
mod lattice;
mod passage;

pub use field::{Distribution, FieldHeader, WeightField, FORMAT_VERSION, MATERIALIZE_LIMIT, MAX_SIDE};
pub use lattice::{LatticeBox, LatticePath, LatticePoint, Step};
pub use passage::{
    brute_force_passage, geodesic, passage_time, path_length, BackwardTable, ForwardTable, BRUTE_FORCE_LIMIT,
    MINUS_INFINITY, TIE_TOLERANCE,
};
