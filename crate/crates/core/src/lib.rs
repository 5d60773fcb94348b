//! Reconstruction of exponential last-passage percolation from two
//! semi-infinite geodesic trees.

pub mod busemann;
pub mod delta_profile;
pub mod differential;
pub mod error;
pub mod gauge_recon;
pub mod lpp;
pub mod modified_distance;
pub mod recon_pipeline;
pub mod stats;

pub use error::{Error, Result};
