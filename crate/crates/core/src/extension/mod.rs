//! CP and CPTP extension of maps given on operator subspaces.

pub mod feasibility;
pub mod reduction;

pub use feasibility::{
    extend_cp, extend_cp_observed, verify_extension, ExtendOptions, ExtensionReport,
    FeasibilityResult, FeasibilityStatus, SubspaceMapSpec,
};
pub use reduction::{
    jencova_reduce, positively_generated_check, JencovaReduction, PositivityCertificate,
};
