//! Scene model: point cloud with region-of-interest weights, nearest-neighbor
//! index, graph Fourier basis, diffused coverage target, and signed distance
//! field.

pub mod deposit;
pub mod generate;
pub mod graph;
pub mod io;
pub mod kdtree;
pub mod sdf;
pub mod spectral;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use deposit::{deposit_steps, deposit_trajectory, weigh_steps, DepositParams, StepDeposit};
pub use graph::{build_graph_laplacian, GraphLaplacian, SparseMatrix};
pub use kdtree::{KdTree, Neighbor};
pub use sdf::{CylinderSdf, GridSdf, PlaneSdf, RoundedBoxSdf, Sdf, SdfSample, SphereSdf, TorusSdf};
pub use spectral::{spectral_basis, SpectralBasis, SpectralOptions};

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("k-NN graph is disconnected ({components} components); increase k_graph or densify the cloud")]
    Disconnected { components: usize },
    #[error("eigensolver did not converge (worst eigenpair residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("SDF gradient vanishes at {point:?} (medial axis)")]
    MedialAxis { point: [f64; 3] },
    #[error("region-of-interest weights are all zero")]
    EmptyRoi,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("cache file {0}")]
    Cache(String),
}

impl SurfaceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

/// Points plus normalized ROI weights and a KD-tree over the points.
#[derive(Clone, Debug)]
pub struct PointCloud {
    roi: Vec<f64>,
    tree: KdTree,
}

impl PointCloud {
    /// `roi` may be unnormalized; it is scaled to sum to one.
    pub fn new(points: Vec<[f64; 3]>, roi: Vec<f64>) -> Result<Self, SurfaceError> {
        if points.len() != roi.len() {
            return Err(SurfaceError::InvalidParameter(format!(
                "{} points but {} ROI weights",
                points.len(),
                roi.len()
            )));
        }
        if points.is_empty() {
            return Err(SurfaceError::InvalidParameter("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(SurfaceError::InvalidParameter(format!("point {i} is not finite")));
        }
        if let Some(i) = roi.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(SurfaceError::InvalidParameter(format!(
                "ROI weight {i} = {} must be finite and >= 0",
                roi[i]
            )));
        }
        let roi = spectral::normalized(&roi).ok_or(SurfaceError::EmptyRoi)?;
        Ok(Self {
            tree: KdTree::new(&points),
            roi,
        })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        self.tree.points()
    }

    pub fn roi(&self) -> &[f64] {
        &self.roi
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.roi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roi.is_empty()
    }

    /// Median distance from each point to its nearest other point.
    pub fn median_spacing(&self) -> f64 {
        graph::median_knn_distance(&self.tree, 1)
    }

    /// SHA-256 over the positions (little-endian f64).
    pub fn points_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in self.points() {
            for x in p {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Everything needed to turn a cloud into a [`Surface`].
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceParams {
    pub n_modes: usize,
    pub k_graph: usize,
    /// `None`: median k-NN distance.
    pub sigma_g: Option<f64>,
    pub weight_exponent: f64,
    pub tau_d: f64,
    pub beta: f64,
    pub deposit_k: usize,
    /// `None`: twice the median nearest-neighbor spacing.
    pub sigma_a: Option<f64>,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            n_modes: 100,
            k_graph: 8,
            sigma_g: None,
            weight_exponent: 2.0,
            tau_d: 0.0,
            beta: 0.5,
            deposit_k: 60,
            sigma_a: None,
        }
    }
}

/// Immutable scene: cloud, basis, coverage target and SDF.
#[derive(Clone, Debug)]
pub struct Surface {
    cloud: PointCloud,
    basis: SpectralBasis,
    sdf: Arc<dyn Sdf>,
    target: Vec<f64>,
    coeffs: DVector<f64>,
    deposit: DepositParams,
    /// `eigvecsᵀ`: column `n` holds node `n`'s basis values contiguously.
    node_modes: DMatrix<f64>,
}

/// Whether [`Surface::build`] reused a cached basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisSource {
    Computed,
    Cache,
}

impl Surface {
    /// Builds the Laplacian and basis (or loads the basis from `cache_dir`),
    /// diffuses the ROI weights and computes the target coefficients.
    pub fn build(
        cloud: PointCloud,
        sdf: Arc<dyn Sdf>,
        params: &SurfaceParams,
        cache_dir: Option<&Path>,
    ) -> Result<(Self, BasisSource), SurfaceError> {
        let n = cloud.len();
        if params.n_modes == 0 || params.n_modes >= n {
            return Err(SurfaceError::InvalidParameter(format!(
                "basis size must satisfy 0 < S < N, got S = {}, N = {n}",
                params.n_modes
            )));
        }
        let key = spectral::cache_key(
            cloud.points(),
            params.n_modes,
            params.k_graph,
            params.sigma_g,
            params.weight_exponent,
        );
        let cache_path = cache_dir.map(|d| d.join(format!("spectral-{}.bin", hex(&key[..12]))));
        let cached = match &cache_path {
            Some(p) => spectral::load_basis(p, &key)?,
            None => None,
        };
        let (basis, source) = match cached {
            Some(b) => {
                log::info!("spectral basis loaded from cache {}", cache_path.as_ref().map_or(String::new(), |p| p.display().to_string()));
                (b, BasisSource::Cache)
            }
            None => {
                let lap = build_graph_laplacian(cloud.tree(), params.k_graph, params.sigma_g)?;
                let opts = SpectralOptions {
                    weight_exponent: params.weight_exponent,
                    ..SpectralOptions::default()
                };
                let basis = spectral_basis(&lap, params.n_modes, &opts)?;
                log::info!("spectral basis computed: N = {n}, S = {}", params.n_modes);
                if let Some(p) = &cache_path {
                    spectral::save_basis(p, &key, &basis)?;
                }
                (basis, BasisSource::Computed)
            }
        };
        let target = basis.diffuse(cloud.roi(), params.tau_d, params.beta)?;
        let sigma_a = match params.sigma_a {
            Some(s) => s,
            None => 2.0 * cloud.median_spacing(),
        };
        let deposit = DepositParams {
            k: params.deposit_k.min(n),
            sigma_a,
        };
        Ok((Self::from_parts(cloud, basis, sdf, target, deposit)?, source))
    }

    /// Assembles a surface from precomputed pieces; `target` is normalized.
    pub fn from_parts(
        cloud: PointCloud,
        basis: SpectralBasis,
        sdf: Arc<dyn Sdf>,
        target: Vec<f64>,
        deposit: DepositParams,
    ) -> Result<Self, SurfaceError> {
        if basis.n_nodes() != cloud.len() || target.len() != cloud.len() {
            return Err(SurfaceError::InvalidParameter(
                "cloud, basis and target sizes disagree".into(),
            ));
        }
        deposit.validate(cloud.len())?;
        let target = spectral::normalized(&target).ok_or(SurfaceError::EmptyRoi)?;
        let coeffs = basis.target_coeffs(&target);
        let node_modes = basis.eigvecs.transpose();
        Ok(Self {
            node_modes,
            cloud,
            basis,
            sdf,
            target,
            coeffs,
            deposit,
        })
    }

    /// Replaces the coverage target coefficients directly.
    pub fn with_target_coeffs(mut self, coeffs: DVector<f64>) -> Result<Self, SurfaceError> {
        if coeffs.len() != self.basis.n_modes() {
            return Err(SurfaceError::InvalidParameter("coefficient count differs from basis size".into()));
        }
        self.coeffs = coeffs;
        Ok(self)
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn sdf(&self) -> &dyn Sdf {
        self.sdf.as_ref()
    }

    pub fn sdf_arc(&self) -> Arc<dyn Sdf> {
        Arc::clone(&self.sdf)
    }

    /// Diffused target distribution over the nodes.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// Basis values at node `n`, one per mode.
    pub fn modes_at(&self, n: usize) -> &[f64] {
        let s = self.node_modes.nrows();
        &self.node_modes.as_slice()[n * s..(n + 1) * s]
    }

    pub fn deposit_params(&self) -> DepositParams {
        self.deposit
    }

    /// Spectral coefficients of the deposit of `positions`.
    pub fn trajectory_coeffs(&self, positions: &[[f64; 3]]) -> Result<DVector<f64>, SurfaceError> {
        let dist = deposit_trajectory(self.cloud.tree(), positions, &self.deposit)?;
        Ok(self.basis.target_coeffs(&dist))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
