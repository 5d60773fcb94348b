//! From two geodesic trees and `Δ` to intermediate trees, the differential
//! distance and the shock measure, scored against directly computed truth.

mod delta;
mod distance;
mod report;
mod shock;
mod studies;
mod tree;

pub use delta::{assemble_delta, DeltaField};
pub use distance::{nested_directions, reconstruct_distance, DistanceTrace, DistanceWindow};
pub use report::{
    end_to_end, CoverageRow, DeltaScore, DirectionData, DistanceRow, DistanceScore, PartitionScore, PipelineConfig, Prepared,
    ReconstructionReport, ShockScore, StageTime, TreeScore, WindowData,
};
pub use shock::{additive_residual, rectangle_sum, shock_measure, ShockRectangle, ShockValue};
pub use studies::{delta_law, horizon_study, interface_study, DeltaLawConfig, DeltaLawRow, HorizonStudy, HorizonStudyConfig, InterfaceStudyConfig};
pub use tree::{exponential_tilt, reconstruct_tree, ReconParams, TreeReconstruction, WALK_TOLERANCE};
