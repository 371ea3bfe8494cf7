use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::SolverError;
use crate::energy::Trajectory;
use crate::liegroup::{Pose, Twist};
use crate::surface::Surface;

/// Trajectory particles sharing one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Trajectory>,
    pub seed: u64,
}

impl ParticleSet {
    pub fn single(traj: Trajectory) -> Self {
        Self {
            particles: vec![traj],
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.particles[0].len()
    }

    /// SHA-256 over every pose matrix, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.particles {
            for m in p.to_matrices() {
                for row in &m {
                    for v in row {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
        crate::surface::hex(&h.finalize())
    }
}

/// Straight line between the two most distant ROI nodes, identity rotations.
pub fn init_straight_line(surface: &Surface, n_t: usize) -> Result<Trajectory, SolverError> {
    if n_t == 0 {
        return Err(SolverError::InvalidConfig("trajectory length must be >= 1".into()));
    }
    let pts = surface.cloud().points();
    let roi: Vec<usize> = (0..pts.len()).filter(|&i| surface.cloud().roi()[i] > 0.0).collect();
    if roi.len() < 2 {
        return Err(SolverError::InvalidConfig(format!(
            "straight-line initialization needs at least 2 ROI nodes, found {}",
            roi.len()
        )));
    }
    let mut best = (roi[0], roi[1], -1.0);
    for (a, &i) in roi.iter().enumerate() {
        for &j in &roi[a + 1..] {
            let d: f64 = (0..3).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (p, q) = (pts[best.0], pts[best.1]);
    let poses = (0..n_t)
        .map(|t| {
            if t + 1 == n_t && n_t > 1 {
                return Pose::from_translation(q);
            }
            let s = if n_t == 1 { 0.0 } else { t as f64 / (n_t - 1) as f64 };
            Pose::from_translation(std::array::from_fn(|k| p[k] + s * (q[k] - p[k])))
        })
        .collect();
    Ok(Trajectory::new(poses)?)
}

/// `n_particles` copies of `traj`, all but the first perturbed per step by
/// twists drawn from `N(0, noise_var·I₆)`. Each `(seed, particle, step)`
/// triple owns its own ChaCha8 stream.
pub fn perturb_particles(
    traj: &Trajectory,
    n_particles: usize,
    noise_var: f64,
    seed: u64,
) -> Result<ParticleSet, SolverError> {
    if n_particles == 0 {
        return Err(SolverError::InvalidConfig("n_particles must be >= 1".into()));
    }
    if n_particles > 1 && !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "noise_var must be > 0 for {n_particles} particles, got {noise_var}"
        )));
    }
    let particles = (0..n_particles)
        .map(|i| {
            if i == 0 {
                return Ok(traj.clone());
            }
            let poses = traj
                .poses()
                .iter()
                .enumerate()
                .map(|(t, p)| p.oplus(&noise_twist(seed, i, t, noise_var)))
                .collect();
            Trajectory::new(poses).map_err(SolverError::from)
        })
        .collect::<Result<_, _>>()?;
    Ok(ParticleSet { particles, seed })
}

pub(crate) fn noise_twist(seed: u64, particle: usize, step: usize, var: f64) -> Twist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((particle as u64) << 32) ^ step as u64);
    let normal = Normal::new(0.0, var.sqrt()).expect("finite variance");
    Twist::from_array(std::array::from_fn(|_| normal.sample(&mut rng)))
}
