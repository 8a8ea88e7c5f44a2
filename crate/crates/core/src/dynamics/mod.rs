//! Dynamical map families, master-equation integration and generator analysis.

pub mod damping;
pub mod family;
pub mod generator;
pub mod integrate;
pub mod signal;

pub use damping::{damping_basis, DampingBasis};
pub use family::{
    preset_amplitude_damping, preset_equilibrium_relaxation, preset_pauli_channel, DampingFunction,
    FamilyKind, MapFamily, PauliEigenvalues,
};
pub use generator::{
    canonical_gkls, generator_from_family, gkls_generator, GklsChannel, GklsDecomposition, GklsSpec,
};
pub use integrate::{integrate_generator, GeneratorFn, IntegrationOptions};
pub use signal::ScalarSignal;
