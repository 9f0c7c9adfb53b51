//! Drift of slow variables in slow-fast Hamiltonian systems.
//!
//! The crate follows the mechanism end to end:
//!
//! * [`model`] defines Hamiltonians `H(p, q, v, u; eps)` and their vector fields.
//! * [`flow`] integrates full and frozen systems and finds section crossings.
//! * [`orbit`] finds frozen periodic orbits, their multipliers and actions.
//! * [`slowdrive`] turns actions into slow Hamiltonian flows and plans
//!   accessible paths built from them.
//! * [`horseshoe`] solves the cross-form Poincaré maps along symbol codes.
//! * [`shadow`] iterates the slow drift along a planned code and measures how
//!   closely it follows an accessible path.

pub mod error;
pub mod flow;
pub mod horseshoe;
pub mod interp;
pub mod model;
pub mod orbit;
pub mod shadow;
pub mod slowdrive;

pub use error::{Error, Result};
pub use model::{Dims, Domain, FastPoint, FullState, HamiltonianModel, SlowField, SlowPoint};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/orbits.md")]
    pub struct Orbits;
    #[doc = include_str!("../../../book/src/slow_flow.md")]
    pub struct SlowFlow;
    #[doc = include_str!("../../../book/src/horseshoe.md")]
    pub struct Horseshoe;
    #[doc = include_str!("../../../book/src/shadowing.md")]
    pub struct Shadowing;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
