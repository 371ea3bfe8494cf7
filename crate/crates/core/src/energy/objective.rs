//! Stacked residuals, their Jacobians, and the Gauss–Newton quantities built
//! from them.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::trajectory::{TangentField, Trajectory};
use super::{EnergyError, EnergyReport, EnergyWeights};
use crate::liegroup::{left_jacobian_inv, right_jacobian_inv, Mat3, Twist};
use crate::surface::{weigh_steps, StepDeposit, Surface};

/// Central-difference step on tangent coordinates.
pub const FD_STEP: f64 = 1e-6;

/// Residual vector `r` with `V = ½‖r‖²`, split into the smoothness,
/// alignment, attachment and ergodic blocks (in that order).
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub values: DVector<f64>,
    pub blocks: [Range<usize>; 4],
}

impl Residuals {
    /// A single unlabelled block, for objectives outside the four terms.
    pub fn single(values: DVector<f64>) -> Self {
        let n = values.len();
        Self {
            values,
            blocks: [0..n, n..n, n..n, n..n],
        }
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.values.norm_squared()
    }

    pub fn report(&self) -> EnergyReport {
        let half = |r: &Range<usize>| 0.5 * self.values.rows(r.start, r.len()).norm_squared();
        EnergyReport::from_terms(
            half(&self.blocks[0]),
            half(&self.blocks[1]),
            half(&self.blocks[2]),
            half(&self.blocks[3]),
        )
    }
}

/// Residuals and their Jacobian with respect to right perturbations of each
/// pose (`6·N_t` columns, timestep-major).
#[derive(Clone, Debug)]
pub struct Linearization {
    pub residuals: Residuals,
    pub jacobian: DMatrix<f64>,
}

impl Linearization {
    /// `Jᵀ r`: the per-step Riemannian gradient of `V`.
    pub fn gradient(&self) -> TangentField {
        self.jacobian.tr_mul(&self.residuals.values)
    }

    /// Ridge added to `JᵀJ`: `1e-8 · tr(JᵀJ) / dim`, floored at 1e-12.
    pub fn ridge(jtj: &DMatrix<f64>) -> f64 {
        (1e-8 * jtj.trace() / jtj.nrows().max(1) as f64).max(1e-12)
    }

    /// `JᵀJ + ρI`.
    pub fn gn_hessian(&self) -> DMatrix<f64> {
        let mut h = sparse_gram(&self.jacobian);
        let rho = Self::ridge(&h);
        for i in 0..h.nrows() {
            h[(i, i)] += rho;
        }
        h
    }

    pub fn check_finite(&self) -> Result<(), EnergyError> {
        if let Some(i) = self.residuals.values.iter().position(|v| !v.is_finite()) {
            return Err(EnergyError::NonFinite { step: i, what: "residual entry" });
        }
        for (c, col) in self.jacobian.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(EnergyError::NonFinite { step: c / 6, what: "Jacobian column" });
            }
        }
        Ok(())
    }
}

/// `JᵀJ` accumulated row by row over the nonzero entries only; residual rows
/// of trajectory objectives touch few columns apart from the ergodic block.
fn sparse_gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = j.shape();
    let mut h = DMatrix::<f64>::zeros(cols, cols);
    let mut idx = Vec::with_capacity(cols);
    let mut val = Vec::with_capacity(cols);
    for r in 0..rows {
        idx.clear();
        val.clear();
        for c in 0..cols {
            let v = j[(r, c)];
            if v != 0.0 {
                idx.push(c);
                val.push(v);
            }
        }
        let data = h.as_mut_slice();
        for (b, &cb) in idx.iter().enumerate() {
            let vb = val[b];
            let col = &mut data[cb * cols..(cb + 1) * cols];
            for (&ca, &va) in idx[..=b].iter().zip(&val) {
                col[ca] += va * vb;
            }
        }
    }
    // Mirror the upper triangle.
    for c in 0..cols {
        for r in c + 1..cols {
            h[(r, c)] = h[(c, r)];
        }
    }
    h
}

/// A sum-of-squares trajectory objective.
pub trait Objective: Sync {
    fn residuals(&self, traj: &Trajectory) -> Result<Residuals, EnergyError>;

    /// Defaults to central differences of [`Objective::residuals`].
    fn linearize(&self, traj: &Trajectory) -> Result<Linearization, EnergyError> {
        let residuals = self.residuals(traj)?;
        let jacobian = fd_jacobian(traj, residuals.values.len(), |t| Ok(self.residuals(t)?.values))?;
        Ok(Linearization { residuals, jacobian })
    }

    fn energy(&self, traj: &Trajectory) -> Result<EnergyReport, EnergyError> {
        Ok(self.residuals(traj)?.report())
    }
}

/// Central differences of `f` along `x_t ⊕ ±h·e_k` for every coordinate.
pub fn fd_jacobian<F>(traj: &Trajectory, rows: usize, f: F) -> Result<DMatrix<f64>, EnergyError>
where
    F: Fn(&Trajectory) -> Result<DVector<f64>, EnergyError>,
{
    let mut jac = DMatrix::zeros(rows, traj.dim());
    for t in 0..traj.len() {
        for k in 0..6 {
            let mut e = [0.0; 6];
            e[k] = FD_STEP;
            let plus = traj.with_pose(t, traj.poses()[t].oplus(&Twist::from_array(e)));
            e[k] = -FD_STEP;
            let minus = traj.with_pose(t, traj.poses()[t].oplus(&Twist::from_array(e)));
            let d = (f(&plus)? - f(&minus)?) / (2.0 * FD_STEP);
            jac.set_column(6 * t + k, &d);
        }
    }
    Ok(jac)
}

/// How [`SceneObjective`] differentiates its residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Closed-form Lie-group chain rule.
    #[default]
    Analytic,
    /// Central differences with the deposition neighbor sets frozen.
    FiniteDifference,
}

/// The four-term coverage objective over a [`Surface`].
#[derive(Clone, Copy, Debug)]
pub struct SceneObjective<'a> {
    pub surface: &'a Surface,
    pub weights: EnergyWeights,
    pub mode: JacobianMode,
}

struct ErgodicState {
    steps: Vec<StepDeposit>,
    total: f64,
    coeffs: DVector<f64>,
}

impl<'a> SceneObjective<'a> {
    pub fn new(surface: &'a Surface, weights: EnergyWeights) -> Self {
        Self {
            surface,
            weights,
            mode: JacobianMode::Analytic,
        }
    }

    pub fn with_mode(mut self, mode: JacobianMode) -> Self {
        self.mode = mode;
        self
    }

    fn n_residuals(&self, n_t: usize) -> [Range<usize>; 4] {
        let s = 6 * n_t.saturating_sub(2);
        let a = s + n_t;
        let f = a + n_t;
        let e = f + self.surface.basis().n_modes();
        [0..s, s..a, a..f, f..e]
    }

    fn ergodic_state(&self, traj: &Trajectory, frozen: Option<&[Vec<usize>]>) -> Result<ErgodicState, EnergyError> {
        let positions = traj.positions();
        let params = self.surface.deposit_params();
        let steps = match frozen {
            Some(nodes) => weigh_steps(self.surface.cloud().points(), &positions, nodes.to_vec(), params.sigma_a),
            None => crate::surface::deposit_steps(self.surface.cloud().tree(), &positions, &params),
        };
        let s = self.surface.basis().n_modes();
        let mut raw = DVector::zeros(s);
        let mut total = 0.0;
        for step in &steps {
            for (&n, &g) in step.nodes.iter().zip(&step.weights) {
                total += g;
                for (acc, f) in raw.iter_mut().zip(self.surface.modes_at(n)) {
                    *acc += g * f;
                }
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(EnergyError::NonFinite { step: 0, what: "deposition mass" });
        }
        Ok(ErgodicState {
            steps,
            total,
            coeffs: raw / total,
        })
    }

    fn residuals_with(&self, traj: &Trajectory, frozen: Option<&[Vec<usize>]>) -> Result<Residuals, EnergyError> {
        let n_t = traj.len();
        let blocks = self.n_residuals(n_t);
        let mut r = DVector::zeros(blocks[3].end);
        let w = &self.weights;
        let sdf = self.surface.sdf();

        if n_t >= 3 && w.smooth > 0.0 {
            let sw = w.smooth.sqrt();
            let u = step_twists(traj)?;
            for t in 1..n_t - 1 {
                let d = (u[t] - u[t - 1]).to_array();
                for k in 0..6 {
                    r[6 * (t - 1) + k] = sw * d[k];
                }
            }
        }
        let (sa, sf) = (w.align.sqrt(), w.attach.sqrt());
        for (t, pose) in traj.poses().iter().enumerate() {
            let x = pose.translation();
            if w.align > 0.0 {
                let n = sdf.normal(x).map_err(|e| EnergyError::at_step(t, e))?;
                let z = pose.z_axis();
                r[blocks[1].start + t] = sa * (dot(&z, &n) - 1.0);
            }
            if w.attach > 0.0 {
                r[blocks[2].start + t] = sf * sdf.value(x);
            }
        }
        if w.ergodic > 0.0 {
            let state = self.ergodic_state(traj, frozen)?;
            let basis = self.surface.basis();
            let target = self.surface.target_coeffs();
            for i in 0..basis.n_modes() {
                r[blocks[3].start + i] = (w.ergodic * basis.lambda_weights[i]).sqrt() * (state.coeffs[i] - target[i]);
            }
        }
        Ok(Residuals { values: r, blocks })
    }

    fn frozen_nodes(&self, traj: &Trajectory) -> Vec<Vec<usize>> {
        let k = self.surface.deposit_params().k;
        traj.positions()
            .iter()
            .map(|r| self.surface.cloud().tree().knn(r, k).into_iter().map(|n| n.index).collect())
            .collect()
    }

    fn analytic(&self, traj: &Trajectory) -> Result<Linearization, EnergyError> {
        let n_t = traj.len();
        let residuals = self.residuals_with(traj, None)?;
        let blocks = residuals.blocks.clone();
        let mut jac = DMatrix::zeros(blocks[3].end, 6 * n_t);
        let w = &self.weights;
        let sdf = self.surface.sdf();

        if n_t >= 3 && w.smooth > 0.0 {
            let sw = w.smooth.sqrt();
            let u = step_twists(traj)?;
            // du_k/dε_k = −Jl⁻¹(u_k), du_k/dε_{k+1} = Jr⁻¹(u_k).
            let jl: Vec<_> = u.iter().map(left_jacobian_inv).collect();
            let jr: Vec<_> = u.iter().map(right_jacobian_inv).collect();
            for t in 1..n_t - 1 {
                let row = 6 * (t - 1);
                for i in 0..6 {
                    for j in 0..6 {
                        // r = u_t − u_{t−1}
                        jac[(row + i, 6 * (t + 1) + j)] += sw * jr[t][i][j];
                        jac[(row + i, 6 * t + j)] += sw * (-jl[t][i][j] - jr[t - 1][i][j]);
                        jac[(row + i, 6 * (t - 1) + j)] += sw * jl[t - 1][i][j];
                    }
                }
            }
        }
        let (sa, sf) = (w.align.sqrt(), w.attach.sqrt());
        for (t, pose) in traj.poses().iter().enumerate() {
            let x = pose.translation();
            let rot = pose.rotation();
            if w.align > 0.0 {
                let n = sdf.normal(x).map_err(|e| EnergyError::at_step(t, e))?;
                let jn = sdf.normal_jacobian(x).map_err(|e| EnergyError::at_step(t, e))?;
                let a = mat_t_vec(rot, &n);
                let z = pose.z_axis();
                let u = mat_t_vec(&jn, &z);
                let dv = mat_t_vec(rot, &u);
                let row = blocks[1].start + t;
                let d_omega = [-a[1], a[0], 0.0];
                for k in 0..3 {
                    jac[(row, 6 * t + k)] = sa * d_omega[k];
                    jac[(row, 6 * t + 3 + k)] = sa * dv[k];
                }
            }
            if w.attach > 0.0 {
                let g = sdf.gradient(x);
                let dv = mat_t_vec(rot, &g);
                let row = blocks[2].start + t;
                for k in 0..3 {
                    jac[(row, 6 * t + 3 + k)] = sf * dv[k];
                }
            }
        }
        if w.ergodic > 0.0 {
            let state = self.ergodic_state(traj, None)?;
            let basis = self.surface.basis();
            let s = basis.n_modes();
            let points = self.surface.cloud().points();
            let inv_s2 = 1.0 / self.surface.deposit_params().sigma_a.powi(2);
            let scale: Vec<f64> = (0..s).map(|i| (w.ergodic * basis.lambda_weights[i]).sqrt()).collect();
            let mut dc = vec![[0.0; 3]; s];
            for (t, pose) in traj.poses().iter().enumerate() {
                let r = pose.translation();
                dc.iter_mut().for_each(|d| *d = [0.0; 3]);
                for (&node, &g) in state.steps[t].nodes.iter().zip(&state.steps[t].weights) {
                    let p = points[node];
                    let dg = [-g * (r[0] - p[0]) * inv_s2, -g * (r[1] - p[1]) * inv_s2, -g * (r[2] - p[2]) * inv_s2];
                    for ((d, f), c) in dc.iter_mut().zip(self.surface.modes_at(node)).zip(state.coeffs.iter()) {
                        let coef = (f - c) / state.total;
                        for k in 0..3 {
                            d[k] += coef * dg[k];
                        }
                    }
                }
                let rot = pose.rotation();
                for (i, d) in dc.iter().enumerate() {
                    for j in 0..3 {
                        let v = d[0] * rot[0][j] + d[1] * rot[1][j] + d[2] * rot[2][j];
                        jac[(blocks[3].start + i, 6 * t + 3 + j)] = scale[i] * v;
                    }
                }
            }
        }
        let lin = Linearization {
            residuals,
            jacobian: jac,
        };
        lin.check_finite()?;
        Ok(lin)
    }

    fn finite_difference(&self, traj: &Trajectory) -> Result<Linearization, EnergyError> {
        let frozen = self.frozen_nodes(traj);
        let residuals = self.residuals_with(traj, Some(&frozen))?;
        let jacobian = fd_jacobian(traj, residuals.values.len(), |t| {
            Ok(self.residuals_with(t, Some(&frozen))?.values)
        })?;
        let lin = Linearization { residuals, jacobian };
        lin.check_finite()?;
        Ok(lin)
    }
}

impl Objective for SceneObjective<'_> {
    fn residuals(&self, traj: &Trajectory) -> Result<Residuals, EnergyError> {
        self.residuals_with(traj, None)
    }

    fn linearize(&self, traj: &Trajectory) -> Result<Linearization, EnergyError> {
        match self.mode {
            JacobianMode::Analytic => self.analytic(traj),
            JacobianMode::FiniteDifference => self.finite_difference(traj),
        }
    }
}

/// `u_k = x_{k+1} ⊖ x_k` for consecutive steps.
pub(crate) fn step_twists(traj: &Trajectory) -> Result<Vec<Twist>, EnergyError> {
    traj.poses()
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            w[1].ominus(&w[0])
                .map_err(|source| EnergyError::Lie { step: k, source })
        })
        .collect()
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn mat_t_vec(m: &Mat3<f64>, v: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|j| m[0][j] * v[0] + m[1][j] * v[1] + m[2][j] * v[2])
}

