//! Rank profiles, kernel/image tests, propagators, limit projectors and the
//! CP-divisibility verdict.

pub mod grid;
pub mod propagator;
pub mod rank;
pub mod verdict;

pub use grid::TimeGrid;
pub use propagator::{
    composite_propagator, is_divisible, is_image_nonincreasing, limit_projector, limit_projectors,
    propagator, ImageCheck, KernelCheck, LimitOptions, LimitProjector, PropagatorResult,
};
pub use rank::{image_basis, kernel_basis, rank_profile, Breakpoint, BreakpointKind, RankProfile};
pub use verdict::{cp_divisibility_verdict, DivisibilityVerdict, Tolerances, VerdictStatus};
