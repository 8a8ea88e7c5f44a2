//! Divisibility, CP-divisibility and information-backflow analysis for
//! (possibly noninvertible) quantum dynamical maps.
//!
//! Superoperators are stored in the natural representation: a `d²×d²`
//! matrix acting on column-stacked operators, `vec(A)[i + d·j] = A[i, j]`.
//! Choi matrices use the unnormalized convention
//! `C = Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.

pub mod divisibility;
pub mod dynamics;
pub mod error;
pub mod extension;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod superop;
pub mod witness;

pub use error::{Error, Result};
pub use linalg::CMat;
pub use operator::{DensityMatrix, HermitianMatrix, SubspaceBasis};
pub use superop::{ChoiMatrix, Superoperator};
