//! Quantum Otto cycles whose working medium is the anisotropic quantum
//! Rabi-Stark model.
//!
//! The crate is layered bottom-up:
//!
//! * [`operators`] builds the truncated qubit⊗boson Hamiltonian and its
//!   parity and bath-coupling operators.
//! * [`spectrum`] diagonalizes with parity labels and locates critical couplings.
//! * [`otto_ideal`] evaluates the quasistatic cycle from Gibbs populations.
//! * [`lindblad`] builds dressed-state jump channels and propagates states.
//! * [`otto_finite`] runs finite-time cycles to their limit cycle.
//! * [`sweep`] evaluates any of the above over parameter grids.
//!
//! Units: ħ = k_B = 1 and all energies are in units of a reference boson
//! frequency.

pub mod error;
pub mod lindblad;
pub mod operators;
pub mod otto_finite;
pub mod otto_ideal;
pub mod spectrum;
pub mod state;
pub mod sweep;
pub mod table;

pub use error::{Error, Result};
pub use operators::{build_hamiltonian, coupling_operator, parity_operator, CouplingKind, OperatorMatrix, SystemParams};
pub use spectrum::{diagonalize, eigensystem, EigenSystem, Parity, TruncationCheck};
pub use state::DensityMatrix;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/ideal-cycle.md")]
    mod ideal_cycle {}
    #[doc = include_str!("../../../book/src/dissipation.md")]
    mod dissipation {}
    #[doc = include_str!("../../../book/src/finite-time.md")]
    mod finite_time {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
}
