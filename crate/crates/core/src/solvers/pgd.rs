use super::{finite_energy, log_progress, Clock, Method, SolveReport, SolverConfig, SolverError, Status};
use crate::energy::{EnergyError, Objective, TangentField, Trajectory};
use crate::liegroup::Pose;

/// Per-pose `(t, q)` parameters, quaternion `(w, x, y, z)`.
pub(crate) type Params = Vec<[f64; 7]>;

pub(crate) fn to_params(traj: &Trajectory) -> Params {
    traj.poses().iter().map(|p| p.to_tq()).collect()
}

pub(crate) fn from_params(params: &Params) -> Result<Trajectory, EnergyError> {
    let poses = params
        .iter()
        .enumerate()
        .map(|(t, p)| {
            Pose::from_quaternion([p[0], p[1], p[2]], [p[3], p[4], p[5], p[6]])
                .map_err(|source| EnergyError::Lie { step: t, source })
        })
        .collect::<Result<_, _>>()?;
    Trajectory::new(poses)
}

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Euclidean gradient in `(t, q)` from the tangent gradient: `∂V/∂t = R g_v`
/// and `∂V/∂q = 2 q ⊗ (0, g_ω)`.
pub(crate) fn euclidean_gradient(traj: &Trajectory, params: &Params, twist_grad: &TangentField) -> Params {
    traj.poses()
        .iter()
        .zip(params)
        .enumerate()
        .map(|(t, (pose, p))| {
            let g = &twist_grad.as_slice()[6 * t..6 * t + 6];
            let r = pose.rotation();
            let q = [p[3], p[4], p[5], p[6]];
            let dq = quat_mul(&q, &[0.0, g[0], g[1], g[2]]);
            let mut out = [0.0; 7];
            for i in 0..3 {
                out[i] = r[i][0] * g[3] + r[i][1] * g[4] + r[i][2] * g[5];
            }
            for i in 0..4 {
                out[3 + i] = 2.0 * dq[i];
            }
            out
        })
        .collect()
}

/// `params − τ·grad` with each quaternion projected back to the unit sphere.
pub(crate) fn projected_step(params: &Params, grad: &Params, tau: f64) -> Params {
    params
        .iter()
        .zip(grad)
        .map(|(p, g)| {
            let mut n: [f64; 7] = std::array::from_fn(|i| p[i] - tau * g[i]);
            let norm = (n[3] * n[3] + n[4] * n[4] + n[5] * n[5] + n[6] * n[6]).sqrt();
            n[3..].iter_mut().for_each(|v| *v /= norm);
            n
        })
        .collect()
}

/// Projected gradient descent with backtracking on a translation/quaternion
/// parameterization, blind to the group structure.
pub fn run_pgd(obj: &dyn Objective, init: &Trajectory, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let clock = Clock::start(config.record_timing);
    let mut params = to_params(init);
    let mut traj = from_params(&params)?;
    let mut lin = obj.linearize(&traj)?;
    let initial = finite_energy(lin.residuals.report(), 0)?;
    let tol = config.stop_tol * initial.total.max(1.0);
    let mut last = initial;
    let mut v = initial.total;
    let mut trace = Vec::new();
    let mut status = Status::MaxIters;
    let mut tau0 = config.step_size;

    for iter in 1..=config.max_iters {
        let grad = euclidean_gradient(&traj, &params, &lin.gradient());
        let g2: f64 = grad.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
        if g2 == 0.0 {
            trace.push(v);
            status = Status::Converged;
            break;
        }
        let mut tau = tau0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let cand = projected_step(&params, &grad, tau);
            let trial = from_params(&cand)
                .ok()
                .and_then(|ct| obj.residuals(&ct).ok().map(|r| (ct, r.report())))
                .filter(|(_, rep)| rep.is_finite());
            match trial {
                Some((ct, rep)) if rep.total <= v - config.armijo * tau * g2 => {
                    accepted = Some((cand, ct, rep));
                    break;
                }
                // Minimizer of the quadratic through V(0), V'(0) and V(τ),
                // kept within [0.1τ, backtrack·τ].
                Some((_, rep)) => {
                    let curv = rep.total - v + tau * g2;
                    let quad = if curv > 0.0 { 0.5 * g2 * tau * tau / curv } else { tau };
                    tau = quad.clamp(0.1 * tau, config.backtrack * tau);
                }
                None => tau *= config.backtrack,
            }
        }
        let Some((cand, ct, rep)) = accepted else {
            status = Status::Stalled;
            break;
        };
        // Start the next search a little beyond the accepted step.
        tau0 = (2.0 * tau).min(1e6);
        let dv = v - rep.total;
        params = cand;
        traj = ct;
        v = rep.total;
        last = rep;
        trace.push(v);
        log_progress(Method::Pgd, iter, &[v], tau);
        if dv.abs() < tol {
            status = Status::Converged;
            break;
        }
        if iter < config.max_iters {
            lin = obj.linearize(&traj)?;
        }
    }
    Ok(SolveReport {
        method: Method::Pgd,
        status,
        initial,
        iterations: trace.len(),
        trace,
        finals: vec![last],
        best: 0,
        seconds: clock.seconds(),
        trajectory: traj.to_matrices(),
    })
}
