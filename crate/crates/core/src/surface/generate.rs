//! Built-in clouds sampled uniformly by surface area.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::f64::consts::{PI, TAU};

/// Torus around the z-axis.
pub fn torus(major: f64, minor: f64, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    // Area element ∝ (R + r cos θ): rejection-sample θ.
    while out.len() < n {
        let theta: f64 = rng.random_range(0.0..TAU);
        let accept: f64 = rng.random_range(0.0..(major + minor));
        let phi: f64 = rng.random_range(0.0..TAU);
        if accept > major + minor * theta.cos() {
            continue;
        }
        let rho = major + minor * theta.cos();
        out.push([rho * phi.cos(), rho * phi.sin(), minor * theta.sin()]);
    }
    out
}

/// Sphere centered at the origin, on a Fibonacci lattice.
pub fn sphere(radius: f64, n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [radius * r * a.cos(), radius * r * a.sin(), radius * z]
        })
        .collect()
}

/// Open cylinder side around the z-axis, `z ∈ [-height/2, height/2]`.
pub fn cylinder(radius: f64, height: f64, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..TAU);
            let z: f64 = rng.random_range(-0.5 * height..0.5 * height);
            [radius * a.cos(), radius * a.sin(), z]
        })
        .collect()
}

/// Rectangle in the z = 0 plane centered at the origin.
pub fn plane(width: f64, depth: f64, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.random_range(-0.5 * width..0.5 * width),
                rng.random_range(-0.5 * depth..0.5 * depth),
                0.0,
            ]
        })
        .collect()
}

/// Ball-shaped region of interest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiPatch {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Per-node weight: the largest weight among patches containing the node.
pub fn paint_roi(points: &[[f64; 3]], patches: &[RoiPatch]) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            patches
                .iter()
                .filter(|patch| {
                    let d2: f64 = (0..3).map(|i| (p[i] - patch.center[i]).powi(2)).sum();
                    d2 <= patch.radius * patch.radius
                })
                .map(|patch| patch.weight)
                .fold(0.0, f64::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_their_surfaces() {
        for p in torus(1.0, 0.3, 500, 1) {
            let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((((rho - 1.0).powi(2) + p[2] * p[2]).sqrt() - 0.3).abs() < 1e-12);
        }
        for p in sphere(0.7, 300) {
            assert!(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.7).abs() < 1e-12);
        }
        for p in cylinder(0.4, 2.0, 300, 2) {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 0.4).abs() < 1e-12);
            assert!(p[2].abs() <= 1.0);
        }
        assert!(plane(2.0, 1.0, 100, 3).iter().all(|p| p[2] == 0.0 && p[0].abs() <= 1.0));
    }

    #[test]
    fn torus_sampling_is_area_uniform() {
        // Outer half (cos θ > 0) carries (π R + 2 r)/(2π R) of the area.
        let (major, minor) = (1.0, 0.5);
        let pts = torus(major, minor, 40_000, 7);
        let outer = pts
            .iter()
            .filter(|p| (p[0] * p[0] + p[1] * p[1]).sqrt() > major)
            .count() as f64
            / pts.len() as f64;
        let expected = (PI * major + 2.0 * minor) / (TAU * major);
        assert!((outer - expected).abs() < 0.01, "{outer} vs {expected}");
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(torus(1.0, 0.3, 50, 9), torus(1.0, 0.3, 50, 9));
        assert_ne!(torus(1.0, 0.3, 50, 9), torus(1.0, 0.3, 50, 10));
    }

    #[test]
    fn roi_painting() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]];
        let w = paint_roi(
            &pts,
            &[
                RoiPatch { center: [0.0; 3], radius: 1.0, weight: 0.5 },
                RoiPatch { center: [1.0, 0.0, 0.0], radius: 0.1, weight: 2.0 },
            ],
        );
        assert_eq!(w, vec![0.5, 2.0, 0.0]);
    }
}
