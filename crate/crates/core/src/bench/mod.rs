//! Benchmark scenarios, seeded runs of every solver from shared particle
//! sets, result tables and plot-data export.
//!
//! A scenario is a versioned TOML document (see [`Scenario`]). Profiles and
//! command-line overrides are dotted-key assignments applied to the parsed
//! document before it is checked against the schema, so every variation
//! ends up in the echoed config.

mod export;
mod run;
mod scenario;
mod table;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use export::{export_trajectory, read_trajectory_csv, trajectory_rows, write_cloud, CloudRow, PoseRow};
pub use run::{initial_particles, run_bench, Aggregate, BenchRun, Cell, Outcome};
pub use scenario::{
    apply_override, load_scenario, read_scenario, BenchSpec, CloudSpec, DepositSpec, MethodSpec, Profile, RoiSpec,
    Scenario, SdfSpec, SolverSection, SpectralSpec, TrajectorySpec, SCHEMA_VERSION,
};
pub use table::{emit_table, sci, COLUMNS, FAILED};

use crate::surface::{Surface, SurfaceError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config field `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("bad override: {0}")]
    Override(String),
    #[error("{file}: {source}")]
    InFile {
        file: PathBuf,
        #[source]
        source: Box<BenchError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

impl BenchError {
    pub(crate) fn in_file(self, file: &Path) -> Self {
        Self::InFile {
            file: file.to_path_buf(),
            source: Box::new(self),
        }
    }

    /// True for problems with the config itself rather than the scene data.
    pub fn is_config(&self) -> bool {
        match self {
            Self::Syntax(_) | Self::Schema { .. } | Self::Override(_) => true,
            Self::InFile { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| BenchError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `table.csv`, `table.txt`, one JSON report and one trajectory
/// export per cell under `per_run/`, a cloud export per scenario and the
/// config echo `<scenario>.toml`.
pub fn write_outputs(dir: &Path, runs: &[(Scenario, Surface, BenchRun)]) -> Result<(), BenchError> {
    let all: Vec<BenchRun> = runs.iter().map(|(_, _, r)| r.clone()).collect();
    let (csv, text) = emit_table(&all);
    write_file(&dir.join("table.csv"), &csv)?;
    write_file(&dir.join("table.txt"), &text)?;
    let per_run = dir.join("per_run");
    for (scenario, surface, run) in runs {
        write_file(&dir.join(format!("{}.toml", scenario.name)), &scenario.to_toml())?;
        write_cloud(surface, &dir.join(format!("{}_cloud.csv", scenario.name)))?;
        for cell in &run.cells {
            let json = serde_json::to_string_pretty(cell).expect("cell serializes");
            write_file(&per_run.join(format!("{}.json", cell.stem())), &json)?;
            if let Some(traj) = cell.report().and_then(|r| r.best_trajectory().ok()) {
                let path = per_run.join(format!("{}_trajectory.csv", cell.stem()));
                fs::create_dir_all(&per_run).map_err(|source| BenchError::Io {
                    path: per_run.clone(),
                    source,
                })?;
                let rows = trajectory_rows(&traj, surface);
                export::write_rows(&path, rows)?;
            }
        }
    }
    Ok(())
}
