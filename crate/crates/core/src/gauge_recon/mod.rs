//! Running-maximum increments recovered from the record set via gauge covers.

mod gauge;
mod path;

pub use gauge::{
    gauge_measure, gauge_phi, gauge_study, local_time_crosscheck, reconstruct_increments, scale_guard, scale_trend,
    GaugeReconstruction, GaugeStudy, GaugeStudyConfig, IntervalEstimate, LocalTimeEstimate, ScaleTrend, TimeInterval,
};
pub use path::{simulate_bm, support_set, BrownianPath, RunningMaxProfile, SupportSet, MAX_STEPS};
