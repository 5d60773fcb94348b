//! Direction-indexed Busemann values, semi-infinite rays, geodesic trees and
//! competition interfaces on a finite window.
//!
//! Everything is computed by coalescence to far targets. A tree or Busemann
//! value is *certified* when the answer obtained with a target at horizon `N`
//! is identical to the one obtained at horizon `2N`.

mod interface;
mod tree;

pub use interface::{
    competition_interface, interface_escape_stat, Boundary, CompetitionInterface, EscapeRow, EscapeStudy,
};
pub use tree::{
    build_tree, build_tree_and_busemann, busemann_value, horizon_target, semi_infinite_ray, variational_check,
    BusemannField, CertifiedRay, DirectionSlope, GeodesicTree, RaySide, TreeParams, VariationalResult,
    BUSEMANN_TOLERANCE,
};
