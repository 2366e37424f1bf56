//! Desk-scale laboratory for the isentropic Euler system on the flat torus
//! `T^N = [-1,1]^N`, `N = 1, 2`.
//!
//! The crate has three layers:
//!
//! - field machinery: periodic grids, spectral calculus, state variables,
//!   pressure laws and energy functionals ([`grid`], [`state`]);
//! - trajectory generation: a hyperviscosity-regularized solver producing
//!   families of approximate dissipative solutions, packaged as time-sampled
//!   trajectories with BV energy profiles and defect ledgers
//!   ([`solver`], [`trajectory`]);
//! - analysis: iterated functional minimization over finite trajectory
//!   ensembles (semiflow selection), admissibility and semigroup checks,
//!   and relative-energy comparisons against smooth references
//!   ([`selection`], [`relative_energy`]).

pub mod grid;
pub mod relative_energy;
pub mod selection;
pub mod solver;
pub mod state;
pub mod trajectory;

pub use grid::{ScalarField, TorusGrid, VectorField};
pub use state::{FluidState, PressureLaw};
pub use trajectory::{EnergyProfile, Trajectory};
