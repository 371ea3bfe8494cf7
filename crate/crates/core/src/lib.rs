//! Ergodic coverage trajectories on point-cloud surfaces, optimized over
//! SE(3) with Gauss–Newton and with preconditioned Stein variational
//! particle flows.
//!
//! - [`liegroup`]: SE(3) maps, adjoints, Jacobians and parallel transport.
//! - [`surface`]: point clouds, k-NN graphs, the spectral basis, coverage
//!   targets and signed distance fields.
//! - [`energy`]: the trajectory objective (smoothness, alignment,
//!   attachment, ergodic) with analytic Jacobians.
//! - [`solvers`]: GN, Batch GN, SE, TSVEC and PGD.
//! - [`bench`]: TOML scenarios, seeded benchmark runs, tables and exports.

pub mod liegroup;
pub mod surface;
pub mod energy;
pub mod solvers;
pub mod bench;

pub type Pose64 = liegroup::Pose<f64>;
pub type Pose32 = liegroup::Pose<f32>;
pub type Twist64 = liegroup::Twist<f64>;
pub type Twist32 = liegroup::Twist<f32>;

#[cfg(test)]
pub(crate) mod testutil;
