//! Trajectory optimizers: manifold Gauss–Newton, a batch of independent
//! Gauss–Newton runs, SE(3) Stein variational gradient descent with and
//! without Gauss–Newton preconditioning, and a projected-gradient baseline on
//! a translation/quaternion parameterization.
//!
//! Every solver works on an [`Objective`]; the particle methods share one
//! [`ParticleSet`] so that all methods start from identical particles.

mod gn;
mod init;
mod kernel;
mod pgd;
mod stein;

pub use gn::{run_batch_gn, run_gn};
pub use init::{init_straight_line, perturb_particles, ParticleSet};
pub use kernel::{
    kernel_grad1, precondition, preconditioner_matrix, step_kernel, svgd_direction, traj_kernel, KernelMode,
};
pub use pgd::run_pgd;
pub use stein::{run_se, run_tsvec, se_directions, tsvec_directions};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyReport, Objective, TangentField, Trajectory};
use crate::liegroup::LieError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "particles {i} and {j} coincide at timestep {step}; the kernel gradient is undefined, re-noise the particle set"
    )]
    Overlap { i: usize, j: usize, step: usize },
    #[error("particle {particle}, timestep {step}: {source}")]
    Lie {
        particle: usize,
        step: usize,
        #[source]
        source: LieError,
    },
    #[error("preconditioner is not positive definite even after a 10x ridge")]
    Factorization,
    #[error("non-finite energy at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gn,
    BatchGn,
    Se,
    Tsvec,
    Pgd,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gn, Method::BatchGn, Method::Se, Method::Tsvec, Method::Pgd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gn => "gn",
            Method::BatchGn => "batch_gn",
            Method::Se => "se",
            Method::Tsvec => "tsvec",
            Method::Pgd => "pgd",
        }
    }

    /// Label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Gn => "GN",
            Method::BatchGn => "Batch GN",
            Method::Se => "SE",
            Method::Tsvec => "TSVEC",
            Method::Pgd => "PGD",
        }
    }

    pub fn uses_particles(self) -> bool {
        matches!(self, Method::BatchGn | Method::Se | Method::Tsvec)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown method `{s}` (expected one of gn, batch_gn, se, tsvec, pgd)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub step_size: f64,
    pub max_iters: usize,
    /// GN/PGD stop when `|ΔV| < stop_tol · max(1, V₀)`.
    pub stop_tol: f64,
    pub kernel_length: f64,
    pub n_particles: usize,
    pub noise_var: f64,
    pub seed: u64,
    pub damping_init: f64,
    /// Damping multiplier after an accepted full step.
    pub damping_decrease: f64,
    /// Damping multiplier after the full step is rejected.
    pub damping_increase: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub kernel_mode: KernelMode,
    /// Per-step rotation magnitude cap applied to every proposed update.
    pub max_rotation_step: f64,
    pub record_timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_method(Method::Tsvec)
    }
}

impl SolverConfig {
    /// Desk-scale defaults for a method.
    pub fn for_method(method: Method) -> Self {
        let (step_size, max_iters) = match method {
            Method::Gn | Method::BatchGn => (1.0, 200),
            Method::Se => (0.02, 2000),
            Method::Tsvec => (0.1, 200),
            Method::Pgd => (1.0, 1000),
        };
        Self {
            method,
            step_size,
            max_iters,
            stop_tol: 1e-4,
            kernel_length: 0.05,
            n_particles: if method.uses_particles() { 16 } else { 1 },
            noise_var: 0.005,
            seed: 0,
            damping_init: 1e-3,
            damping_decrease: 0.5,
            damping_increase: 4.0,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 20,
            kernel_mode: KernelMode::PerStep,
            max_rotation_step: std::f64::consts::FRAC_PI_2,
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be > 0, got {}", self.step_size));
        }
        if !(self.kernel_length > 0.0 && self.kernel_length.is_finite()) {
            return bad(format!("kernel_length must be > 0, got {}", self.kernel_length));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if self.n_particles == 0 {
            return bad("n_particles must be >= 1".into());
        }
        if !(self.noise_var >= 0.0) {
            return bad(format!("noise_var must be >= 0, got {}", self.noise_var));
        }
        if self.n_particles > 1 && self.noise_var == 0.0 {
            return bad("noise_var must be > 0 when n_particles > 1".into());
        }
        if !(self.stop_tol >= 0.0) || !(self.damping_init >= 0.0) {
            return bad("stop_tol and damping_init must be >= 0".into());
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("backtrack and armijo must lie in (0, 1)".into());
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease <= 1.0) || !(self.damping_increase >= 1.0) {
            return bad("damping_decrease must lie in (0, 1] and damping_increase must be >= 1".into());
        }
        if !(self.max_rotation_step > 0.0) {
            return bad("max_rotation_step must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Stopping tolerance met.
    Converged,
    /// Ran the full iteration budget.
    MaxIters,
    /// The line search found no decrease.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub status: Status,
    /// Energy of the unperturbed initial trajectory.
    pub initial: EnergyReport,
    /// Best-particle `V` after each iteration.
    pub trace: Vec<f64>,
    /// Final energies, one per particle.
    pub finals: Vec<EnergyReport>,
    pub best: usize,
    pub iterations: usize,
    pub seconds: f64,
    /// Final poses of the best particle as row-major homogeneous matrices.
    pub trajectory: Vec<[[f64; 4]; 4]>,
}

impl SolveReport {
    pub fn best_energy(&self) -> &EnergyReport {
        &self.finals[self.best]
    }

    pub fn best_trajectory(&self) -> Result<Trajectory, EnergyError> {
        Trajectory::from_matrices(&self.trajectory)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs `config.method` from a shared particle set. Single-trajectory methods
/// start from particle 0.
pub fn solve(obj: &dyn Objective, set: &ParticleSet, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    match config.method {
        Method::Gn => run_gn(obj, &set.particles[0], config),
        Method::Pgd => run_pgd(obj, &set.particles[0], config),
        Method::BatchGn => run_batch_gn(obj, set, config),
        Method::Se => run_se(obj, set, config),
        Method::Tsvec => run_tsvec(obj, set, config),
    }
}

/// Scales every per-step twist whose rotation exceeds `max_rot` back onto
/// that bound.
pub(crate) fn clip_rotation(field: &mut TangentField, max_rot: f64) {
    for step in field.as_mut_slice().chunks_exact_mut(6) {
        let w = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        if w > max_rot {
            let s = max_rot / w;
            step.iter_mut().for_each(|v| *v *= s);
        }
    }
}

pub(crate) fn finite_energy(rep: EnergyReport, iteration: usize) -> Result<EnergyReport, SolverError> {
    if rep.is_finite() {
        Ok(rep)
    } else {
        Err(SolverError::NonFinite { iteration })
    }
}

pub(crate) struct Clock {
    start: Option<Instant>,
}

impl Clock {
    pub(crate) fn start(record: bool) -> Self {
        Self {
            start: record.then(Instant::now),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.start.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}

pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub(crate) fn log_progress(method: Method, iter: usize, values: &[f64], step: f64) {
    if !log::log_enabled!(target: "ergostein::progress", log::Level::Info) {
        return;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    log::info!(
        target: "ergostein::progress",
        "{method} iter={iter} V_min={min:.6e} V_mean={mean:.6e} V_max={max:.6e} step={step:.3e}"
    );
}

#[cfg(test)]
mod tests;
