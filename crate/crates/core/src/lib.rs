//! Numerical laboratory for the absence of macroscopic ground-state currents
//! in U(1)-charge-conserving lattice fermion systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: rings and tori, graph distance, half-torus and boundary strips.
//! * [`manybody`]: Fock bases, local terms in creation/annihilation operators,
//!   sparse realization with fermionic signs, charge projection.
//! * [`models`]: the concrete charge-conserving Hamiltonians used throughout.
//! * [`spectral`]: per-sector diagonalization, ground projectors, gaps, Gibbs states.
//! * [`observables`]: edge currents, current density, the twist family and the
//!   one-dimensional variational current bound.
//! * [`quasiadiabatic`]: the filtered operator `K`, its split `K_±` and the
//!   dressed charge that commutes with the ground projector.
//! * [`transport`]: drive protocols, unitary evolution and transported charge.
//! * [`freefermion`]: quadratic engine, flux-ring closed forms and pumps.
//! * [`experiments`]: presets, sweeps, CSV output, fits and the acceptance runner.

pub mod error;
pub mod experiments;
pub mod freefermion;
pub mod lattice;
pub mod linalg;
pub mod manybody;
pub mod models;
pub mod observables;
pub mod quasiadiabatic;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
