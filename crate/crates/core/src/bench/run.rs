use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::energy::{EnergyReport, SceneObjective};
use crate::solvers::{init_straight_line, perturb_particles, solve, Method, ParticleSet, SolveReport, SolverError};
use crate::surface::Surface;

/// One (method, seed) cell of a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    /// Hash of the particle set every method started from for this seed.
    pub init_hash: String,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok { report: SolveReport },
    Failed { error: String },
}

impl Cell {
    pub fn report(&self) -> Option<&SolveReport> {
        match &self.outcome {
            Outcome::Ok { report } => Some(report),
            Outcome::Failed { .. } => None,
        }
    }

    /// File stem used for per-run artifacts.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.scenario, self.method.name(), self.seed)
    }
}

/// Every cell of one scenario, method-major in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub scenario: String,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
}

/// Seed-averaged results of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub scenario: String,
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    /// `None` when every seed failed.
    pub mean: Option<(EnergyReport, f64, f64)>,
}

impl BenchRun {
    pub fn cells_of(&self, method: Method) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.method == method)
    }

    /// Mean best-particle energies, iterations and seconds over the seeds
    /// that succeeded.
    pub fn aggregate(&self) -> Vec<Aggregate> {
        self.methods
            .iter()
            .map(|&method| {
                let reports: Vec<&SolveReport> = self.cells_of(method).filter_map(Cell::report).collect();
                let failed = self.cells_of(method).count() - reports.len();
                let mean = (!reports.is_empty()).then(|| {
                    let n = reports.len() as f64;
                    let avg = |f: &dyn Fn(&SolveReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
                    let energy = EnergyReport::from_terms(
                        avg(&|r| r.best_energy().smooth),
                        avg(&|r| r.best_energy().align),
                        avg(&|r| r.best_energy().attach),
                        avg(&|r| r.best_energy().ergodic),
                    );
                    (energy, avg(&|r| r.iterations as f64), avg(&|r| r.seconds))
                });
                Aggregate {
                    scenario: self.scenario.clone(),
                    method,
                    succeeded: reports.len(),
                    failed,
                    mean,
                }
            })
            .collect()
    }

    /// Median best-particle `V` of a method over its successful seeds.
    pub fn median_best(&self, method: Method) -> Option<f64> {
        let mut v: Vec<f64> = self
            .cells_of(method)
            .filter_map(Cell::report)
            .map(|r| r.best_energy().total)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }
}

/// The particle set shared by every method for `seed`.
pub fn initial_particles(scenario: &Scenario, surface: &Surface, seed: u64) -> Result<ParticleSet, SolverError> {
    let init = init_straight_line(surface, scenario.trajectory.n_steps)?;
    perturb_particles(&init, scenario.solver.n_particles, scenario.solver.noise_var, seed)
}

/// Runs `scenario.bench.methods × scenario.bench.seeds`. Cells run
/// concurrently; a failing solver becomes a failed cell.
pub fn run_bench(scenario: &Scenario, surface: &Surface) -> BenchRun {
    let objective = SceneObjective::new(surface, scenario.weights);
    let methods = scenario.bench.methods.clone();
    let seeds = scenario.bench.seeds.clone();
    let sets: Vec<Result<ParticleSet, String>> = seeds
        .iter()
        .map(|&s| initial_particles(scenario, surface, s).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(Method, usize)> = methods
        .iter()
        .flat_map(|&m| (0..seeds.len()).map(move |k| (m, k)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(method, k)| {
            let seed = seeds[k];
            let (init_hash, outcome) = match &sets[k] {
                Ok(set) => {
                    let config = scenario.solver_config(method, seed);
                    let outcome = match solve(&objective, set, &config) {
                        Ok(report) => Outcome::Ok { report },
                        Err(e) => Outcome::Failed { error: e.to_string() },
                    };
                    (set.hash(), outcome)
                }
                Err(e) => (String::new(), Outcome::Failed { error: e.clone() }),
            };
            match &outcome {
                Outcome::Ok { report } => log::info!(
                    "{} {} seed {}: V = {:.4e} after {} iterations",
                    scenario.name,
                    method,
                    seed,
                    report.best_energy().total,
                    report.iterations
                ),
                Outcome::Failed { error } => log::warn!("{} {} seed {} failed: {error}", scenario.name, method, seed),
            }
            Cell {
                scenario: scenario.name.clone(),
                method,
                seed,
                init_hash,
                outcome,
            }
        })
        .collect();
    BenchRun {
        scenario: scenario.name.clone(),
        methods,
        seeds,
        cells,
    }
}
