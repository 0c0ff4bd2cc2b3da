//! Engine for compiling clinical-guideline decision trees into validated
//! executable inspection plans, running them against 3D CT volumes with
//! deterministic base functions and a pluggable embedding labeler, and
//! scoring predicted recommendations against oracle decision paths.

pub mod basefn;
pub mod bench;
pub mod executor;
pub mod guideline;
pub mod planner;
pub mod volume;
