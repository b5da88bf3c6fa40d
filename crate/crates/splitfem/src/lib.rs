//! Operator-splitting finite element solver for constrained parabolic
//! PDEs on the unit square.
//!
//! The state is discretized with quadratic Lagrange elements and the
//! constraint multipliers with linear elements. Each time step first
//! advances the PDE with an explicit right side stabilized by a
//! gradient-jump penalty and a mesh-scaled diffusion term, then
//! enforces the constraint through a Newton-solved coupled system.
//! The [`harness`] module turns the scheme's structural properties
//! (consistency, stability, monotonicity, convergence rate) into
//! executable checks.

pub mod assembly;
pub mod config;
pub mod error;
pub mod harness;
pub mod linsolve;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod scheme;
pub mod sparse;
pub mod spaces;
pub mod vtk;

pub use error::{Error, Result};
pub use mesh::{build_unit_square_mesh, Mesh};
pub use problems::ProblemSpec;
pub use scheme::{run, SchemeParams};
pub use spaces::{interpolate, FeFunction, FeSpace};
