//! Shared fixtures for unit tests.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::Trajectory;
use crate::liegroup::{Pose, Twist};
use crate::surface::generate::{paint_roi, torus, RoiPatch};
use crate::surface::{PointCloud, Surface, SurfaceParams, TorusSdf};

pub const MAJOR: f64 = 1.0;
pub const MINOR: f64 = 0.35;

/// Small torus scene with two opposite ROI patches.
pub fn small_torus() -> Surface {
    let pts = torus(MAJOR, MINOR, 500, 1);
    let roi = paint_roi(
        &pts,
        &[
            RoiPatch { center: [MAJOR + MINOR, 0.0, 0.0], radius: 0.35, weight: 1.0 },
            RoiPatch { center: [-MAJOR - MINOR, 0.0, 0.0], radius: 0.35, weight: 1.0 },
        ],
    );
    let cloud = PointCloud::new(pts, roi).unwrap();
    let sdf = Arc::new(TorusSdf { center: [0.0; 3], major: MAJOR, minor: MINOR });
    let params = SurfaceParams {
        n_modes: 24,
        deposit_k: 30,
        tau_d: 0.05,
        ..SurfaceParams::default()
    };
    Surface::build(cloud, sdf, &params, None).unwrap().0
}

/// Point on the torus and its outward normal.
pub fn torus_point(phi: f64, theta: f64) -> ([f64; 3], [f64; 3]) {
    let n = [theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin()];
    let rho = MAJOR + MINOR * theta.cos();
    ([rho * phi.cos(), rho * phi.sin(), MINOR * theta.sin()], n)
}

/// Rotation whose third column is `z`.
pub fn frame_with_z(z: [f64; 3]) -> [[f64; 3]; 3] {
    let helper = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = helper[0] * z[0] + helper[1] * z[1] + helper[2] * z[2];
    let mut x = [helper[0] - d * z[0], helper[1] - d * z[1], helper[2] - d * z[2]];
    let nx = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let y = [z[1] * x[2] - z[2] * x[1], z[2] * x[0] - z[0] * x[2], z[0] * x[1] - z[1] * x[0]];
    [[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]]
}

/// Random trajectory hugging the small torus: perturbed positions and
/// rotations around the surface-aligned frame.
pub fn random_torus_trajectory(rng: &mut ChaCha8Rng, n_t: usize) -> Trajectory {
    let phi0: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let theta0: f64 = rng.random_range(-1.0..1.0);
    let poses = (0..n_t)
        .map(|t| {
            let phi = phi0 + 0.08 * t as f64 + rng.random_range(-0.02..0.02);
            let theta = theta0 + rng.random_range(-0.1..0.1);
            let (p, n) = torus_point(phi, theta);
            let off = rng.random_range(-0.05..0.05);
            let base = Pose::new(frame_with_z(n), [p[0] + off * n[0], p[1] + off * n[1], p[2] + off * n[2]]).unwrap();
            let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
            base.oplus(&Twist::new(w, [0.0; 3]))
        })
        .collect();
    Trajectory::new(poses).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
