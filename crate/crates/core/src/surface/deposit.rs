//! Gaussian deposition of trajectory positions onto the cloud nodes.

use super::kdtree::KdTree;
use super::SurfaceError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepositParams {
    /// Nodes touched per trajectory position.
    pub k: usize,
    /// Gaussian radius.
    pub sigma_a: f64,
}

impl DepositParams {
    pub fn validate(&self, n_nodes: usize) -> Result<(), SurfaceError> {
        if self.k == 0 || self.k > n_nodes {
            return Err(SurfaceError::InvalidParameter(format!(
                "deposition K must be in [1, {n_nodes}], got {}",
                self.k
            )));
        }
        if !(self.sigma_a > 0.0) || !self.sigma_a.is_finite() {
            return Err(SurfaceError::InvalidParameter(format!(
                "sigma_a must be positive, got {}",
                self.sigma_a
            )));
        }
        Ok(())
    }
}

/// Neighbor set and (unnormalized) kernel weights of one trajectory position.
///
/// Weights carry a common scale factor shared by every step of the same
/// trajectory (see [`deposit_steps`]); only ratios are meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDeposit {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Per-step neighbor sets and weights `exp(-(‖r − p‖² − d0)/2σ²)`.
///
/// `d0` is the smallest squared distance over the whole trajectory; the shift
/// cancels in every normalized quantity and keeps far-away trajectories from
/// underflowing to an all-zero deposit.
pub fn deposit_steps(tree: &KdTree, positions: &[[f64; 3]], params: &DepositParams) -> Vec<StepDeposit> {
    let nodes: Vec<Vec<usize>> = positions
        .iter()
        .map(|r| tree.knn(r, params.k).into_iter().map(|n| n.index).collect())
        .collect();
    weigh_steps(tree.points(), positions, nodes, params.sigma_a)
}

/// Like [`deposit_steps`] but with given (frozen) neighbor sets.
pub fn weigh_steps(
    points: &[[f64; 3]],
    positions: &[[f64; 3]],
    nodes: Vec<Vec<usize>>,
    sigma_a: f64,
) -> Vec<StepDeposit> {
    let dist2: Vec<Vec<f64>> = positions
        .iter()
        .zip(&nodes)
        .map(|(r, nb)| {
            nb.iter()
                .map(|&n| {
                    let p = &points[n];
                    (p[0] - r[0]).powi(2) + (p[1] - r[1]).powi(2) + (p[2] - r[2]).powi(2)
                })
                .collect()
        })
        .collect();
    let d0 = dist2.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let d0 = if d0.is_finite() { d0 } else { 0.0 };
    let inv = 1.0 / (2.0 * sigma_a * sigma_a);
    nodes
        .into_iter()
        .zip(dist2)
        .map(|(nodes, d2)| StepDeposit {
            nodes,
            weights: d2.iter().map(|d| (-(d - d0) * inv).exp()).collect(),
        })
        .collect()
}

/// Normalized empirical distribution of the trajectory over the cloud nodes.
pub fn deposit_trajectory(
    tree: &KdTree,
    positions: &[[f64; 3]],
    params: &DepositParams,
) -> Result<Vec<f64>, SurfaceError> {
    params.validate(tree.len())?;
    let mut out = vec![0.0; tree.len()];
    for step in deposit_steps(tree, positions, params) {
        for (&n, &w) in step.nodes.iter().zip(&step.weights) {
            out[n] += w;
        }
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SurfaceError::InvalidParameter("trajectory deposits no mass on the cloud".into()));
    }
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}
