//! The Busemann difference `Δ = W_{d2} - W_{d1}` along a level, its plateaus,
//! the tree equivalence whose classes are those plateaus, and a continuum
//! reference sampler for the two-direction Busemann process.

mod equivalence;
mod horizon;
mod row;

pub use equivalence::{cross_time_anchor, equivalent, partition_from_trees, shared_prefix, SharedPrefix};
pub use horizon::{
    coalescence_prob_closed_form, coalescence_prob_estimate, delta_increment_reference, horizon_marginals, horizon_sample, wilson_interval, CoalescenceRow,
    CoalescenceTable, HorizonGrid, HorizonSample, WalkParams,
};
pub use row::{delta_row, plateau_partition, DeltaProfile, Link, Plateau, PlateauPartition, DELTA_TOLERANCE};
