//! Reduced linearized-von-Karman magnetoelastic plate model.
//!
//! The crate provides, on uniform rectangular grids:
//!
//! * the reduced plate energy (membrane, bending, exchange, magnetostatic)
//!   with time-dependent loads and its analytic first variation,
//! * a block-alternating minimizer over clamped states with a
//!   sphere-constrained director field,
//! * rate-independent quasistatic evolution by approximate incremental
//!   minimization with an L1 dissipation distance,
//! * explicit 3D recovery deformations whose scaled bulk energies converge
//!   to the reduced energy, and
//! * a spectral thin-film stray-field kernel with a brute-force Poisson
//!   oracle for verification.

pub mod bulk;
pub(crate) mod dd;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod magnetostatics;
pub mod material;
pub mod quasistatic;
pub mod reduced;
pub mod static_solver;

pub use error::{Error, Result};
pub use fields::{DirectorField2, Field2, Field3, Grid2, Grid3};
pub use material::Material;
pub use reduced::{EnergyBreakdown, LoadSchedule, Loads, ReducedState};
pub use static_solver::{SolveOptions, SolveReport};


