//! SE(3) / se(3) algebra: group operations, exp/log, adjoints, right-perturbation
//! gradients and parallel transport.
//!
//! Everything here is generic over [`Real`] so the same code runs in `f32`
//! and `f64`; the planner itself uses `f64` (see the aliases at the crate root).

mod mat;
mod real;
mod se3;

pub use mat::{Mat3, Mat4, Mat6, Vec3};
pub use real::Real;
pub use se3::{
    left_jacobian, left_jacobian_inv, parallel_transport, quaternion_to_rotation, right_jacobian,
    right_jacobian_inv, rotation_to_quaternion, so3_left_jacobian, so3_left_jacobian_inv, so3_log,
    Pose, Twist,
};

#[cfg(test)]
use mat::{eye6, matmul6, matvec6, norm3};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("matrix is not in se(3): structural defect {defect:e}")]
    NotInAlgebra { defect: f64 },
    #[error("rotation angle {angle} is outside the principal log branch (must be < π − 1e-6)")]
    OutOfBranch { angle: f64 },
    #[error("not a rotation matrix: ‖RᵀR − I‖ = {defect:e}, det = {det}")]
    NotARotation { defect: f64, det: f64 },
    #[error("homogeneous matrix bottom row must be [0, 0, 0, 1]")]
    BadBottomRow,
    #[error("non-finite pose entries")]
    NonFinite,
}
