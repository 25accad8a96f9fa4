//! Coefficient data model for Runge-Kutta and multirate GARK methods, the
//! method registry, classification, and order-condition residuals.

pub mod mrgark;
pub mod registry;
pub mod rk;

pub use mrgark::{
    assemble_gark, classify, classify_tableau, dense_output_coupling, internal_consistency_residual,
    order_residuals, sparsity_overlap, stage_interpolation_weights, GarkTableau, MethodClassification,
    MethodKind, MrGarkMethod, OrderReport, ResidualEntry, StageGroup,
};
pub use registry::{registry_get, registry_load, RegistryEntry, ValidationReport, ValidationStatus};
pub use rk::RkTableau;
