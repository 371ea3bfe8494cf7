use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::energy::Trajectory;
use crate::liegroup::Pose;
use crate::surface::Surface;

/// One trajectory step: position, unit quaternion `(w, x, y, z)`, tool z-axis
/// and the SDF value at the position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub zx: f64,
    pub zy: f64,
    pub zz: f64,
    pub sdf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Normalized ROI weight.
    pub roi: f64,
    /// Diffused coverage target.
    pub target: f64,
}

fn io_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), BenchError> {
    let file = File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(io_err(path))?;
    }
    w.flush().map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn trajectory_rows(traj: &Trajectory, surface: &Surface) -> Vec<PoseRow> {
    traj.poses()
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let [x, y, z, qw, qx, qy, qz] = pose.to_tq();
            let r = pose.rotation();
            PoseRow {
                t,
                x,
                y,
                z,
                qw,
                qx,
                qy,
                qz,
                zx: r[0][2],
                zy: r[1][2],
                zz: r[2][2],
                sdf: surface.sdf().value(&[x, y, z]),
            }
        })
        .collect()
}

/// Writes `<stem>_trajectory.csv` and `<stem>_cloud.csv` into `dir` and
/// returns their paths.
pub fn export_trajectory(
    traj: &Trajectory,
    surface: &Surface,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf), BenchError> {
    std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let traj_path = dir.join(format!("{stem}_trajectory.csv"));
    write_rows(&traj_path, trajectory_rows(traj, surface))?;
    let cloud_path = dir.join(format!("{stem}_cloud.csv"));
    write_cloud(surface, &cloud_path)?;
    Ok((traj_path, cloud_path))
}

pub fn write_cloud(surface: &Surface, path: &Path) -> Result<(), BenchError> {
    let cloud = surface.cloud();
    let rows = cloud
        .points()
        .iter()
        .zip(cloud.roi())
        .zip(surface.target())
        .map(|((p, &roi), &target)| CloudRow {
            x: p[0],
            y: p[1],
            z: p[2],
            roi,
            target,
        });
    write_rows(path, rows)
}

/// Reads a trajectory written by [`export_trajectory`].
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(io_err(path))?;
    let mut poses = Vec::new();
    for row in r.deserialize::<PoseRow>() {
        let row = row.map_err(io_err(path))?;
        let pose = Pose::from_quaternion([row.x, row.y, row.z], [row.qw, row.qx, row.qy, row.qz]).map_err(|e| {
            BenchError::Csv {
                path: path.to_path_buf(),
                message: format!("step {}: {e}", row.t),
            }
        })?;
        poses.push(pose);
    }
    Trajectory::new(poses).map_err(|e| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
