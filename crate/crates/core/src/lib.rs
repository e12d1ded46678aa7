//! Numerical laboratory for vortex dynamics in inhomogeneous condensates.

pub mod assignment;
pub mod background;
pub mod error;
pub mod geometry;
pub mod gp_solver;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod ode_dynamics;
pub mod renormalized_energy;
pub mod vortex_config;
pub mod vortex_tracking;

pub use error::{Error, Result};
pub use geometry::Vec2;
