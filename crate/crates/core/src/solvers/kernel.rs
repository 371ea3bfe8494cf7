use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::energy::{twist_at, Linearization, TangentField, Trajectory};
use crate::liegroup::{parallel_transport, right_jacobian_inv, LieError, Pose, Twist};

/// How the trajectory kernel weighs each timestep's contribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Step `t` of a particle interacts through `exp(−‖x_t ⊖ x′_t‖²/l)` only.
    #[default]
    PerStep,
    /// Every step is weighted by the summed trajectory kernel.
    Scalar,
}

/// `exp(−‖a ⊖ b‖²/l)` and its gradient with respect to right perturbations
/// of `a`.
pub fn step_kernel(a: &Pose, b: &Pose, l: f64) -> Result<(f64, Twist), LieError> {
    let d = a.ominus(b)?;
    let k = (-d.norm_squared() / l).exp();
    // ∂/∂ε ‖log(b⁻¹ a exp ε)‖² = 2 J_r⁻¹(d)ᵀ d
    let jinv = right_jacobian_inv(&d);
    let da = d.to_array();
    let g: [f64; 6] = std::array::from_fn(|c| (0..6).map(|r| jinv[r][c] * da[r]).sum::<f64>() * (-2.0 * k / l));
    Ok((k, Twist::from_array(g)))
}

/// `Σ_t exp(−‖x_t ⊖ x′_t‖²/l)`.
pub fn traj_kernel(x: &Trajectory, y: &Trajectory, l: f64) -> Result<f64, SolverError> {
    check_horizon(x, y)?;
    let mut sum = 0.0;
    for (t, (a, b)) in x.poses().iter().zip(y.poses()).enumerate() {
        sum += step_kernel(a, b, l).map_err(|source| lie(0, t, source))?.0;
    }
    Ok(sum)
}

/// Gradient of [`traj_kernel`] in its first argument, one twist per step in
/// the tangent space of `x`.
pub fn kernel_grad1(x: &Trajectory, y: &Trajectory, l: f64) -> Result<TangentField, SolverError> {
    check_horizon(x, y)?;
    let mut g = TangentField::zeros(x.dim());
    for (t, (a, b)) in x.poses().iter().zip(y.poses()).enumerate() {
        let (_, gt) = step_kernel(a, b, l).map_err(|source| lie(0, t, source))?;
        g.rows_mut(6 * t, 6).copy_from_slice(&gt.to_array());
    }
    Ok(g)
}

/// SE(3) Stein variational direction at every particle. `grads[i]` is the
/// gradient of `log p` at particle `i`; contributions of other particles are
/// carried into the target's tangent spaces by the adjoint.
pub fn svgd_direction(
    particles: &[Trajectory],
    grads: &[TangentField],
    l: f64,
    mode: KernelMode,
) -> Result<Vec<TangentField>, SolverError> {
    let inter = Interactions::compute(particles, l, true)?;
    Ok(inter.directions(particles, grads, mode))
}

/// Kernel-averaged Gauss–Newton metric at particle `target`:
/// `(1/N) Σ_i D_i H_i D_i + g̃_i g̃_iᵀ`, where `D_i` carries the kernel
/// weights and `g̃_i` is the transported kernel gradient.
pub fn preconditioner_matrix(
    target: usize,
    particles: &[Trajectory],
    hessians: &[DMatrix<f64>],
    l: f64,
    mode: KernelMode,
) -> Result<DMatrix<f64>, SolverError> {
    let inter = Interactions::compute(particles, l, true)?;
    Ok(inter.metric(target, hessians, mode))
}

/// Solves the preconditioning system at `target` for the update `α`.
pub fn precondition(
    direction: &TangentField,
    target: usize,
    particles: &[Trajectory],
    hessians: &[DMatrix<f64>],
    l: f64,
    mode: KernelMode,
) -> Result<TangentField, SolverError> {
    let a = preconditioner_matrix(target, particles, hessians, l, mode)?;
    spd_solve(a, direction)
}

/// Cholesky solve; on failure retries once with ten times the usual ridge.
pub(crate) fn spd_solve(mut a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch.solve(b));
    }
    let rho = 10.0 * Linearization::ridge(&a);
    for i in 0..a.nrows() {
        a[(i, i)] += rho;
    }
    Cholesky::new(a).map(|ch| ch.solve(b)).ok_or(SolverError::Factorization)
}

fn check_horizon(x: &Trajectory, y: &Trajectory) -> Result<(), SolverError> {
    if x.len() != y.len() {
        return Err(SolverError::InvalidConfig(format!(
            "trajectory kernel needs equal horizons, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

fn lie(particle: usize, step: usize, source: LieError) -> SolverError {
    SolverError::Lie { particle, step, source }
}

/// Pairwise per-step kernel values and transported kernel gradients.
pub(crate) struct Interactions {
    n: usize,
    n_t: usize,
    transport: bool,
    /// `k[(i·n + j)·n_t + t] = k_t(x_i, x_j)`.
    k: Vec<f64>,
    /// Gradient in `x_i`, carried to the tangent space of `x_j`.
    grad: Vec<Twist>,
}

impl Interactions {
    pub(crate) fn compute(particles: &[Trajectory], l: f64, transport: bool) -> Result<Self, SolverError> {
        let n = particles.len();
        let n_t = particles.first().map_or(0, |p| p.len());
        if let Some(p) = particles.iter().find(|p| p.len() != n_t) {
            return Err(SolverError::InvalidConfig(format!(
                "particles have different horizons ({} and {})",
                n_t,
                p.len()
            )));
        }
        let mut k = vec![0.0; n * n * n_t];
        let mut grad = vec![Twist::zero(); n * n * n_t];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    k[(i * n + j) * n_t..(i * n + j + 1) * n_t].fill(1.0);
                    continue;
                }
                for t in 0..n_t {
                    let (a, b) = (&particles[i].poses()[t], &particles[j].poses()[t]);
                    // Poses a half-turn apart sit on the cut locus of log; the
                    // kernel there is below exp(−π²/l) and is taken as zero.
                    let (kt, g) = match step_kernel(a, b, l) {
                        Ok(v) => v,
                        Err(LieError::OutOfBranch { .. }) => continue,
                        Err(source) => return Err(lie(i, t, source)),
                    };
                    if kt == 1.0 && g.norm_squared() == 0.0 {
                        return Err(SolverError::Overlap { i, j, step: t });
                    }
                    let idx = (i * n + j) * n_t + t;
                    k[idx] = kt;
                    grad[idx] = if transport { parallel_transport(a, b, &g) } else { g };
                }
            }
        }
        Ok(Self {
            n,
            n_t,
            transport,
            k,
            grad,
        })
    }

    fn at(&self, i: usize, j: usize, t: usize) -> usize {
        (i * self.n + j) * self.n_t + t
    }

    /// Per-step kernel factors used to weigh particle `i`'s contribution at `j`.
    fn weights(&self, i: usize, j: usize, mode: KernelMode) -> Vec<f64> {
        let row = &self.k[self.at(i, j, 0)..self.at(i, j, 0) + self.n_t];
        match mode {
            KernelMode::PerStep => row.to_vec(),
            KernelMode::Scalar => vec![row.iter().sum(); self.n_t],
        }
    }

    pub(crate) fn directions(&self, particles: &[Trajectory], grads: &[TangentField], mode: KernelMode) -> Vec<TangentField> {
        let inv_n = 1.0 / self.n as f64;
        (0..self.n)
            .map(|j| {
                if self.n == 1 {
                    return match mode {
                        KernelMode::PerStep => grads[0].clone(),
                        KernelMode::Scalar => &grads[0] * self.n_t as f64,
                    };
                }
                let mut out = TangentField::zeros(6 * self.n_t);
                for i in 0..self.n {
                    let w = self.weights(i, j, mode);
                    for t in 0..self.n_t {
                        let g = twist_at(grads[i].as_slice(), t).scale(w[t]);
                        let g = if i == j || !self.transport {
                            g
                        } else {
                            parallel_transport(&particles[i].poses()[t], &particles[j].poses()[t], &g)
                        };
                        let total = (g + self.grad[self.at(i, j, t)]).to_array();
                        for (c, v) in total.iter().enumerate() {
                            out[6 * t + c] += v;
                        }
                    }
                }
                out * inv_n
            })
            .collect()
    }

    pub(crate) fn metric(&self, j: usize, hessians: &[DMatrix<f64>], mode: KernelMode) -> DMatrix<f64> {
        let dim = 6 * self.n_t;
        let mut a = DMatrix::zeros(dim, dim);
        for i in 0..self.n {
            let w = self.weights(i, j, mode);
            if w.iter().all(|&v| v < 1e-300) {
                continue;
            }
            let h = hessians[i].as_slice();
            let wr: Vec<f64> = (0..dim).map(|r| w[r / 6]).collect();
            let out = a.as_mut_slice();
            for c in 0..dim {
                let wc = wr[c];
                if wc == 0.0 {
                    continue;
                }
                let hc = &h[c * dim..(c + 1) * dim];
                for ((o, &hv), &wv) in out[c * dim..(c + 1) * dim].iter_mut().zip(hc).zip(&wr) {
                    *o += hv * (wv * wc);
                }
            }
            if i != j {
                let g = DVector::from_iterator(
                    dim,
                    (0..self.n_t).flat_map(|t| self.grad[self.at(i, j, t)].to_array()),
                );
                a.ger(1.0, &g, &g, 1.0);
            }
        }
        a / self.n as f64
    }
}
