//! Moving-frame geometry of pseudohermitian submanifolds of the Heisenberg group.
//!
//! The crate computes the invariants of a parametrized submanifold `M ⊂ H_n`
//! (fundamental vector field ν, second fundamental form, normal connection,
//! Tanaka–Webster connection, torsion and curvature), checks the structure and
//! integrability identities they satisfy, rebuilds submanifolds from invariant
//! data and runs the flat and sphere rigidity classifiers.

pub mod cli;
pub mod cx;
pub mod darboux;
pub mod dsl;
pub mod error;
pub mod heis;
pub mod invariants;
pub mod jet;
pub mod mat;
pub mod psh;
pub mod reconstruct;
pub mod report;
pub mod rigidity;
pub mod surface;

pub use cx::{Cx, C64};
pub use error::{Error, Result};
pub use jet::{Jet, Scalar};
