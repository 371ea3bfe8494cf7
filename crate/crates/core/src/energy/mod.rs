//! Trajectory energies: smoothness, normal alignment, surface attachment and
//! spectral ergodic coverage, in sum-of-squares form.
//!
//! Every term is `½‖r‖²` of a residual block that already carries the square
//! root of its weight, so one residual vector yields the energy, the
//! gradient `Jᵀr` and the Gauss–Newton matrix `JᵀJ`.

mod objective;
mod trajectory;

pub use objective::{fd_jacobian, JacobianMode, Linearization, Objective, Residuals, SceneObjective, FD_STEP};
pub use trajectory::{set_twist, twist_at, TangentField, Trajectory};

pub(crate) use objective::step_twists;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::LieError;
use crate::surface::{deposit_trajectory, Sdf, Surface, SurfaceError};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("trajectory has no poses")]
    EmptyTrajectory,
    #[error("{what} needs at least {needed} poses, trajectory has {got}")]
    TooShort { what: &'static str, needed: usize, got: usize },
    #[error("non-finite {what} at timestep {step}")]
    NonFinite { step: usize, what: &'static str },
    #[error("timestep {step}: {source}")]
    Lie {
        step: usize,
        #[source]
        source: LieError,
    },
    #[error("timestep {step}: {source}")]
    SurfaceAt {
        step: usize,
        #[source]
        source: SurfaceError,
    },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("invalid energy parameter: {0}")]
    Invalid(String),
}

impl EnergyError {
    pub(crate) fn at_step(step: usize, source: SurfaceError) -> Self {
        Self::SurfaceAt { step, source }
    }
}

/// Non-negative weights of the four terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    pub smooth: f64,
    pub align: f64,
    pub attach: f64,
    pub ergodic: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            smooth: 5.0,
            align: 3.0,
            attach: 3.0,
            ergodic: 0.1,
        }
    }
}

impl EnergyWeights {
    pub const ZERO: Self = Self {
        smooth: 0.0,
        align: 0.0,
        attach: 0.0,
        ergodic: 0.0,
    };

    pub fn validate(&self) -> Result<(), EnergyError> {
        for (name, w) in [
            ("smooth", self.smooth),
            ("align", self.align),
            ("attach", self.attach),
            ("ergodic", self.ergodic),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(EnergyError::Invalid(format!("weight {name} = {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Per-term energies and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "V_s")]
    pub smooth: f64,
    #[serde(rename = "V_a")]
    pub align: f64,
    #[serde(rename = "V_f")]
    pub attach: f64,
    #[serde(rename = "V_e")]
    pub ergodic: f64,
    #[serde(rename = "V")]
    pub total: f64,
}

impl EnergyReport {
    pub fn from_terms(smooth: f64, align: f64, attach: f64, ergodic: f64) -> Self {
        Self {
            smooth,
            align,
            attach,
            ergodic,
            total: smooth + align + attach + ergodic,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.smooth, self.align, self.attach, self.ergodic, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// One table row: a run's final energies with its bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    #[serde(rename = "V_s")]
    pub smooth: f64,
    #[serde(rename = "V_a")]
    pub align: f64,
    #[serde(rename = "V_f")]
    pub attach: f64,
    #[serde(rename = "V_e")]
    pub ergodic: f64,
    #[serde(rename = "V")]
    pub total: f64,
    pub iterations: usize,
    pub seconds: f64,
}

impl RunRecord {
    pub fn new(scenario: &str, method: &str, seed: u64, report: &EnergyReport, iterations: usize, seconds: f64) -> Self {
        Self {
            scenario: scenario.to_string(),
            method: method.to_string(),
            seed,
            smooth: report.smooth,
            align: report.align,
            attach: report.attach,
            ergodic: report.ergodic,
            total: report.total,
            iterations,
            seconds,
        }
    }

    /// The record as one CSV line (no header, no trailing newline).
    pub fn to_csv_row(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(self).expect("record serializes");
        let bytes = w.into_inner().expect("in-memory writer");
        String::from_utf8(bytes).expect("csv is utf-8").trim_end().to_string()
    }
}

/// `(w_s/2) Σ_t ‖(x_{t+1} ⊖ x_t) − (x_t ⊖ x_{t−1})‖²` over interior steps.
pub fn eval_smoothness(traj: &Trajectory, w_s: f64) -> Result<f64, EnergyError> {
    if traj.len() < 3 {
        return Err(EnergyError::TooShort {
            what: "smoothness",
            needed: 3,
            got: traj.len(),
        });
    }
    let u = step_twists(traj)?;
    Ok(0.5 * w_s * u.windows(2).map(|p| (p[1] - p[0]).norm_squared()).sum::<f64>())
}

/// `(w_a/2) Σ_t (z_t · n(r_t) − 1)²`.
pub fn eval_align(traj: &Trajectory, sdf: &dyn Sdf, w_a: f64) -> Result<f64, EnergyError> {
    let mut sum = 0.0;
    for (t, pose) in traj.poses().iter().enumerate() {
        let n = sdf.normal(pose.translation()).map_err(|e| EnergyError::at_step(t, e))?;
        let z = pose.z_axis();
        sum += (z[0] * n[0] + z[1] * n[1] + z[2] * n[2] - 1.0).powi(2);
    }
    Ok(0.5 * w_a * sum)
}

/// `(w_f/2) Σ_t f(r_t)²`.
pub fn eval_attach(traj: &Trajectory, sdf: &dyn Sdf, w_f: f64) -> f64 {
    0.5 * w_f * traj.poses().iter().map(|p| sdf.value(p.translation()).powi(2)).sum::<f64>()
}

/// `(w_e/2) Σ_i Λ_i (c_i(X) − c_i)²` with `c(X)` the coefficients of the
/// trajectory's deposit.
pub fn eval_ergodic(traj: &Trajectory, surface: &Surface, w_e: f64) -> Result<f64, EnergyError> {
    let dist = deposit_trajectory(surface.cloud().tree(), &traj.positions(), &surface.deposit_params())?;
    let basis = surface.basis();
    let c = basis.target_coeffs(&dist);
    let target = surface.target_coeffs();
    Ok(0.5
        * w_e
        * (0..basis.n_modes())
            .map(|i| basis.lambda_weights[i] * (c[i] - target[i]).powi(2))
            .sum::<f64>())
}

/// All four terms. Trajectories shorter than three poses have no smoothness term.
pub fn total_energy(traj: &Trajectory, surface: &Surface, weights: &EnergyWeights) -> Result<EnergyReport, EnergyError> {
    weights.validate()?;
    SceneObjective::new(surface, *weights).energy(traj)
}

/// Stacked per-step Riemannian gradient of the total energy.
pub fn grad_energy(traj: &Trajectory, surface: &Surface, weights: &EnergyWeights) -> Result<TangentField, EnergyError> {
    weights.validate()?;
    let g = SceneObjective::new(surface, *weights).linearize(traj)?.gradient();
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(EnergyError::NonFinite { step: i / 6, what: "gradient" });
    }
    Ok(g)
}

/// `JᵀJ + ρI` of the stacked residual.
pub fn gn_hessian(traj: &Trajectory, surface: &Surface, weights: &EnergyWeights) -> Result<DMatrix<f64>, EnergyError> {
    weights.validate()?;
    Ok(SceneObjective::new(surface, *weights).linearize(traj)?.gn_hessian())
}
