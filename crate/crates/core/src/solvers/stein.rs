use rayon::prelude::*;

use super::kernel::{spd_solve, Interactions};
use super::{
    argmin, clip_rotation, finite_energy, log_progress, Clock, Method, ParticleSet, SolveReport, SolverConfig,
    SolverError, Status,
};
use crate::energy::{EnergyReport, Objective, TangentField, Trajectory};

/// Energies at the particles and the unpreconditioned Stein direction
/// (gradients of `log p = −V` combined with kernel repulsion).
pub fn se_directions(
    obj: &dyn Objective,
    particles: &[Trajectory],
    config: &SolverConfig,
) -> Result<(Vec<TangentField>, Vec<EnergyReport>), SolverError> {
    let lins = particles
        .par_iter()
        .map(|p| obj.linearize(p))
        .collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<EnergyReport> = lins.iter().map(|l| l.residuals.report()).collect();
    let scores: Vec<TangentField> = lins.iter().map(|l| -l.gradient()).collect();
    let inter = Interactions::compute(particles, config.kernel_length, true)?;
    Ok((inter.directions(particles, &scores, config.kernel_mode), reports))
}

/// Energies at the particles and the preconditioned Stein updates `α`.
pub fn tsvec_directions(
    obj: &dyn Objective,
    particles: &[Trajectory],
    config: &SolverConfig,
) -> Result<(Vec<TangentField>, Vec<EnergyReport>), SolverError> {
    let lins = particles
        .par_iter()
        .map(|p| obj.linearize(p))
        .collect::<Result<Vec<_>, _>>()?;
    let (scores, hessians): (Vec<_>, Vec<_>) = lins.par_iter().map(|l| (-l.gradient(), l.gn_hessian())).unzip();
    let reports: Vec<EnergyReport> = lins.iter().map(|l| l.residuals.report()).collect();
    let inter = Interactions::compute(particles, config.kernel_length, true)?;
    let phi = inter.directions(particles, &scores, config.kernel_mode);
    let alpha = (0..particles.len())
        .into_par_iter()
        .map(|j| spd_solve(inter.metric(j, &hessians, config.kernel_mode), &phi[j]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((alpha, reports))
}

type DirectionFn = fn(&dyn Objective, &[Trajectory], &SolverConfig) -> Result<(Vec<TangentField>, Vec<EnergyReport>), SolverError>;

/// Fixed-step particle flow `x ← x ⊕ step·direction` for `max_iters`
/// iterations.
fn particle_flow(
    obj: &dyn Objective,
    set: &ParticleSet,
    config: &SolverConfig,
    method: Method,
    direction: DirectionFn,
) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let clock = Clock::start(config.record_timing);
    let mut particles = set.particles.clone();
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut initial = None;
    for iter in 1..=config.max_iters {
        let (dirs, reports) = direction(obj, &particles, config)?;
        let values: Vec<f64> = reports.iter().map(|r| r.total).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { iteration: iter - 1 });
        }
        match initial {
            None => initial = Some(reports[0]),
            Some(_) => trace.push(values.iter().copied().fold(f64::INFINITY, f64::min)),
        }
        let mut max_step: f64 = 0.0;
        particles = particles
            .iter()
            .zip(dirs)
            .map(|(p, d)| {
                let mut step = d * config.step_size;
                clip_rotation(&mut step, config.max_rotation_step);
                max_step = max_step.max(step.amax());
                p.retract(step.as_slice(), 1.0)
            })
            .collect();
        log_progress(method, iter, &values, max_step);
    }
    let finals = particles
        .par_iter()
        .map(|p| obj.energy(p).map_err(SolverError::from).and_then(|r| finite_energy(r, config.max_iters)))
        .collect::<Result<Vec<_>, _>>()?;
    let best = argmin(finals.iter().map(|r| r.total));
    trace.push(finals[best].total);
    Ok(SolveReport {
        method,
        status: Status::MaxIters,
        initial: initial.expect("at least one iteration"),
        trace,
        finals,
        best,
        iterations: config.max_iters,
        seconds: clock.seconds(),
        trajectory: particles[best].to_matrices(),
    })
}

/// Vanilla SE(3) Stein variational gradient descent.
pub fn run_se(obj: &dyn Objective, set: &ParticleSet, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    particle_flow(obj, set, config, Method::Se, se_directions)
}

/// Gauss–Newton preconditioned SE(3) Stein variational gradient descent.
pub fn run_tsvec(obj: &dyn Objective, set: &ParticleSet, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    particle_flow(obj, set, config, Method::Tsvec, tsvec_directions)
}
