//! Switching walks over a pair of geodesic trees.
//!
//! A walk may follow either tree's parent step at every vertex, so the walks
//! from `p` to `q` are exactly the paths built from alternating tree segments.
//! The modified distance is the heaviest such walk.

mod alternating;
mod dag;

pub use alternating::{greedy_decompose, is_wedged, AlternatingPath, Segment};
pub use dag::{
    argmax_walk, build_switching_dag, longest_walk, longest_walk_within, modified_distance, ArgmaxWalk, DirTag, SwitchingDag, Tags, WalkTable,
};
