use nalgebra::DVector;
use rayon::prelude::*;

use super::kernel::spd_solve;
use super::{
    argmin, clip_rotation, finite_energy, log_progress, Clock, Method, ParticleSet, SolveReport, SolverConfig,
    SolverError, Status,
};
use crate::energy::{EnergyReport, Objective, Trajectory};

pub(crate) struct GnOutcome {
    pub traj: Trajectory,
    pub initial: EnergyReport,
    pub last: EnergyReport,
    pub trace: Vec<f64>,
    pub status: Status,
}

const MIN_DAMPING: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e12;

/// Damped Gauss–Newton with backtracking Armijo search on the retraction.
pub(crate) fn gauss_newton(obj: &dyn Objective, init: &Trajectory, cfg: &SolverConfig) -> Result<GnOutcome, SolverError> {
    let mut x = init.clone();
    let mut lin = obj.linearize(&x)?;
    let initial = finite_energy(lin.residuals.report(), 0)?;
    let mut v = initial.total;
    let mut last = initial;
    let tol = cfg.stop_tol * initial.total.max(1.0);
    let mut mu = cfg.damping_init;
    let mut trace = Vec::new();
    let mut status = Status::MaxIters;

    for iter in 1..=cfg.max_iters {
        let g = lin.gradient();
        let mut h = lin.gn_hessian();
        for i in 0..h.nrows() {
            h[(i, i)] += mu;
        }
        let mut delta: DVector<f64> = -spd_solve(h, &g)?;
        clip_rotation(&mut delta, cfg.max_rotation_step);
        let slope = g.dot(&delta);

        let mut tau = 1.0;
        let mut accepted = None;
        if slope <= 0.0 {
            for _ in 0..=cfg.max_backtracks {
                let cand = x.retract(delta.as_slice(), tau);
                if let Ok(r) = obj.residuals(&cand) {
                    let rep = r.report();
                    if rep.is_finite() && rep.total <= v + cfg.armijo * tau * slope {
                        accepted = Some((cand, rep));
                        break;
                    }
                }
                tau *= cfg.backtrack;
            }
        }
        let Some((cand, rep)) = accepted else {
            if slope > 0.0 && mu < MAX_DAMPING {
                mu = (mu * cfg.damping_increase).max(MIN_DAMPING);
                trace.push(v);
                continue;
            }
            status = Status::Stalled;
            break;
        };
        mu = if tau == 1.0 {
            (mu * cfg.damping_decrease).max(MIN_DAMPING)
        } else {
            (mu * cfg.damping_increase).clamp(MIN_DAMPING, MAX_DAMPING)
        };
        let dv = v - rep.total;
        x = cand;
        v = rep.total;
        last = rep;
        trace.push(v);
        log_progress(Method::Gn, iter, &[v], tau);
        if dv.abs() < tol {
            status = Status::Converged;
            break;
        }
        if iter < cfg.max_iters {
            lin = obj.linearize(&x)?;
        }
    }
    Ok(GnOutcome {
        traj: x,
        initial,
        last,
        trace,
        status,
    })
}

pub fn run_gn(obj: &dyn Objective, init: &Trajectory, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let clock = Clock::start(config.record_timing);
    let out = gauss_newton(obj, init, config)?;
    Ok(SolveReport {
        method: Method::Gn,
        status: out.status,
        initial: out.initial,
        iterations: out.trace.len(),
        trace: out.trace,
        finals: vec![out.last],
        best: 0,
        seconds: clock.seconds(),
        trajectory: out.traj.to_matrices(),
    })
}

/// Independent Gauss–Newton runs from every particle; reports the best.
pub fn run_batch_gn(obj: &dyn Objective, set: &ParticleSet, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let clock = Clock::start(config.record_timing);
    let outs = set
        .particles
        .par_iter()
        .map(|p| gauss_newton(obj, p, config))
        .collect::<Result<Vec<_>, _>>()?;
    let iterations = outs.iter().map(|o| o.trace.len()).max().unwrap_or(0);
    // Runs that stopped early hold their final value.
    let trace = (0..iterations)
        .map(|k| {
            outs.iter()
                .map(|o| o.trace.get(k).or(o.trace.last()).copied().unwrap_or(o.initial.total))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let finals: Vec<EnergyReport> = outs.iter().map(|o| o.last).collect();
    let best = argmin(finals.iter().map(|r| r.total));
    let status = if outs.iter().all(|o| o.status == Status::Converged) {
        Status::Converged
    } else if outs.iter().any(|o| o.status == Status::MaxIters) {
        Status::MaxIters
    } else {
        Status::Stalled
    };
    Ok(SolveReport {
        method: Method::BatchGn,
        status,
        initial: outs[0].initial,
        trace,
        finals,
        best,
        iterations,
        seconds: clock.seconds(),
        trajectory: outs[best].traj.to_matrices(),
    })
}
