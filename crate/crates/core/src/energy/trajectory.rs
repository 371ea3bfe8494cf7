use nalgebra::DVector;

use super::EnergyError;
use crate::liegroup::{Pose, Twist};

/// Flattened per-step twists, timestep-major: `[ω_0, v_0, ω_1, v_1, ...]`.
pub type TangentField = DVector<f64>;

/// Twist of step `t` in a tangent field.
pub fn twist_at(field: &[f64], t: usize) -> Twist {
    Twist::from_slice(&field[6 * t..6 * t + 6])
}

pub fn set_twist(field: &mut [f64], t: usize, twist: &Twist) {
    field[6 * t..6 * t + 6].copy_from_slice(&twist.to_array());
}

/// Ordered sequence of poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, EnergyError> {
        if poses.is_empty() {
            return Err(EnergyError::EmptyTrajectory);
        }
        if let Some(t) = poses.iter().position(|p| !p.is_finite()) {
            return Err(EnergyError::NonFinite { step: t, what: "pose" });
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dim(&self) -> usize {
        6 * self.poses.len()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.poses.iter().map(|p| *p.translation()).collect()
    }

    /// `x_t ⊕ (scale · δ_t)` for every step.
    pub fn retract(&self, field: &[f64], scale: f64) -> Self {
        debug_assert_eq!(field.len(), self.dim());
        Self {
            poses: self
                .poses
                .iter()
                .enumerate()
                .map(|(t, p)| p.oplus(&twist_at(field, t).scale(scale)))
                .collect(),
        }
    }

    /// Replaces one pose.
    pub fn with_pose(&self, t: usize, pose: Pose) -> Self {
        let mut poses = self.poses.clone();
        poses[t] = pose;
        Self { poses }
    }

    /// Applies `g · x_t` to every pose.
    pub fn left_multiplied(&self, g: &Pose) -> Self {
        Self {
            poses: self.poses.iter().map(|p| g.compose(p)).collect(),
        }
    }

    /// Largest orthogonality defect over the poses.
    pub fn max_orthogonality_defect(&self) -> f64 {
        self.poses.iter().map(|p| p.orthogonality_defect()).fold(0.0, f64::max)
    }

    /// Row-major homogeneous matrices, one per step.
    pub fn to_matrices(&self) -> Vec<[[f64; 4]; 4]> {
        self.poses.iter().map(|p| p.to_homogeneous()).collect()
    }

    pub fn from_matrices(mats: &[[[f64; 4]; 4]]) -> Result<Self, EnergyError> {
        let poses = mats
            .iter()
            .enumerate()
            .map(|(t, m)| Pose::from_homogeneous(m).map_err(|source| EnergyError::Lie { step: t, source }))
            .collect::<Result<_, _>>()?;
        Self::new(poses)
    }
}
