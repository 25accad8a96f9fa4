//! Problem representations, form transforms, and shared numerical plumbing.

pub mod linalg;
pub mod newton;
pub mod ode;
pub mod poly;

pub use linalg::{lu_factor, lu_solve, LuFactors};
pub use newton::{newton_solve, NewtonConfig, NewtonMode, NewtonOutcome};
pub use ode::{
    additive_to_partitioned, partitioned_to_additive, AdditiveOde, CostModel, EvalCounters,
    PartitionedOde, SplitState,
};
