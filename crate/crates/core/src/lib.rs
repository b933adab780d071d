//! Excited-state factorization of position-dependent-mass (PDM) Schrödinger
//! operators.
//!
//! The Hamiltonian is `H = -d/dx (1/m(x)) d/dx + V(x)` in units `ħ = 2m₀ = 1`.
//! Starting from a bound state `ψₙ` of a solvable model, [`factor`] builds the
//! singular superpotential `Wₙ`, deforms the ladder operators by a Riccati
//! solution `fₙ`, and produces a nonsingular partner `Ṽₙ⁻` whose spectrum is
//! that of `V₀ − Eₙ` shifted by `β`. Every spectral statement is checked by the
//! finite-difference eigensolver in [`spectra`], which shares no code path with
//! the construction.

pub mod cli;
pub mod error;
pub mod factor;
pub mod models;
pub mod numgrid;
pub mod specfun;
pub mod spectra;
pub mod verify;

pub use error::{Error, Result};
