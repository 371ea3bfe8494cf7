use nalgebra::DMatrix;

use super::kdtree::KdTree;
use super::SurfaceError;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists; columns need not be sorted.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n_rows) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *o = s;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Symmetric normalized graph Laplacian `L = I − D^{-1/2} W D^{-1/2}` of a
/// symmetrized k-NN graph with Gaussian edge weights.
#[derive(Clone, Debug)]
pub struct GraphLaplacian {
    pub matrix: SparseMatrix,
    /// Weighted degrees `d_i = Σ_j W_ij`.
    pub degrees: Vec<f64>,
    pub k_graph: usize,
    pub sigma_g: f64,
}

/// Median distance over all directed k-NN edges.
pub fn median_knn_distance(tree: &KdTree, k: usize) -> f64 {
    let mut d: Vec<f64> = tree
        .points()
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            tree.knn(p, k + 1)
                .into_iter()
                .filter(move |nb| nb.index != i)
                .take(k)
                .map(|nb| nb.dist2.sqrt())
        })
        .collect();
    median(&mut d)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Builds the normalized Laplacian; `sigma_g = None` uses the median k-NN distance.
pub fn build_graph_laplacian(
    tree: &KdTree,
    k_graph: usize,
    sigma_g: Option<f64>,
) -> Result<GraphLaplacian, SurfaceError> {
    let n = tree.len();
    if k_graph == 0 || k_graph >= n {
        return Err(SurfaceError::InvalidParameter(format!(
            "k_graph must be in [1, {}), got {k_graph}",
            n
        )));
    }
    let sigma = match sigma_g {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(SurfaceError::InvalidParameter(format!(
                "sigma_g must be positive, got {s}"
            )))
        }
        None => {
            let m = median_knn_distance(tree, k_graph);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let two_s2 = 2.0 * sigma * sigma;

    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, p) in tree.points().iter().enumerate() {
        for nb in tree.knn(p, k_graph + 1).into_iter().filter(|nb| nb.index != i).take(k_graph) {
            let w = (-nb.dist2 / two_s2).exp();
            adj[i].push((nb.index, w));
            adj[nb.index].push((i, w));
        }
    }
    for row in adj.iter_mut() {
        row.sort_by_key(|e| e.0);
        row.dedup_by_key(|e| e.0);
    }

    let components = count_components(&adj);
    if components != 1 {
        return Err(SurfaceError::Disconnected { components });
    }

    let degrees: Vec<f64> = adj.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(SurfaceError::InvalidParameter(format!(
            "node {i} has zero weighted degree (sigma_g too small for the point spacing)"
        )));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let rows = adj
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut out = Vec::with_capacity(row.len() + 1);
            out.push((i, 1.0));
            out.extend(row.iter().map(|&(j, w)| (j, -w * (inv_sqrt[i] * inv_sqrt[j]))));
            out
        })
        .collect();
    Ok(GraphLaplacian {
        matrix: SparseMatrix::from_rows(n, rows),
        degrees,
        k_graph,
        sigma_g: sigma,
    })
}

fn count_components(adj: &[Vec<(usize, f64)>]) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}
