//! Signed distance fields: closed-form primitives and a trilinear grid built
//! from an oriented point cloud.

use std::fmt::Debug;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};

use super::kdtree::KdTree;
use super::SurfaceError;

type V3 = [f64; 3];

const MEDIAL_EPS: f64 = 1e-8;
const NORMAL_FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    /// Unit outward normal.
    pub normal: V3,
    /// The query lay outside the field's domain and was clamped onto it.
    pub clamped: bool,
}

pub trait Sdf: Debug + Send + Sync {
    fn value(&self, x: &V3) -> f64;

    /// Exact derivative of [`Sdf::value`].
    fn gradient(&self, x: &V3) -> V3;

    /// Direction field normalized into the unit normal. Defaults to the
    /// gradient; grids override it with a smoother estimate.
    fn normal_direction(&self, x: &V3) -> V3 {
        self.gradient(x)
    }

    fn is_clamped(&self, _x: &V3) -> bool {
        false
    }

    fn eval(&self, x: &V3) -> Result<SdfSample, SurfaceError> {
        Ok(SdfSample {
            value: self.value(x),
            normal: self.normal(x)?,
            clamped: self.is_clamped(x),
        })
    }

    fn normal(&self, x: &V3) -> Result<V3, SurfaceError> {
        let g = self.normal_direction(x);
        let n = norm(&g);
        if !(n >= MEDIAL_EPS) || !n.is_finite() {
            return Err(SurfaceError::MedialAxis { point: *x });
        }
        Ok([g[0] / n, g[1] / n, g[2] / n])
    }

    /// `∂n/∂x` with `J[i][j] = ∂n_i/∂x_j`, by central differences.
    fn normal_jacobian(&self, x: &V3) -> Result<[[f64; 3]; 3], SurfaceError> {
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += NORMAL_FD_STEP;
            xm[j] -= NORMAL_FD_STEP;
            let np = self.normal(&xp)?;
            let nm = self.normal(&xm)?;
            for i in 0..3 {
                jac[i][j] = (np[i] - nm[i]) / (2.0 * NORMAL_FD_STEP);
            }
        }
        Ok(jac)
    }
}

fn norm(v: &V3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub(a: &V3, b: &V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(v: V3) -> Result<V3, SurfaceError> {
    let n = norm(&v);
    if !(n > 0.0) {
        return Err(SurfaceError::InvalidParameter("direction must be nonzero".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereSdf {
    pub center: V3,
    pub radius: f64,
}

impl Sdf for SphereSdf {
    fn value(&self, x: &V3) -> f64 {
        norm(&sub(x, &self.center)) - self.radius
    }

    fn gradient(&self, x: &V3) -> V3 {
        let d = sub(x, &self.center);
        let n = norm(&d);
        if n == 0.0 {
            return [0.0; 3];
        }
        [d[0] / n, d[1] / n, d[2] / n]
    }
}

/// Torus around the z-axis through `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusSdf {
    pub center: V3,
    pub major: f64,
    pub minor: f64,
}

impl TorusSdf {
    fn parts(&self, x: &V3) -> (V3, f64, f64) {
        let d = sub(x, &self.center);
        let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let q = ((rho - self.major).powi(2) + d[2] * d[2]).sqrt();
        (d, rho, q)
    }
}

impl Sdf for TorusSdf {
    fn value(&self, x: &V3) -> f64 {
        self.parts(x).2 - self.minor
    }

    fn gradient(&self, x: &V3) -> V3 {
        let (d, rho, q) = self.parts(x);
        if rho == 0.0 || q == 0.0 {
            return [0.0; 3];
        }
        let radial = (rho - self.major) / q;
        [radial * d[0] / rho, radial * d[1] / rho, d[2] / q]
    }
}

/// Infinite cylinder with the given axis line.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderSdf {
    pub point: V3,
    axis: V3,
    pub radius: f64,
}

impl CylinderSdf {
    pub fn new(point: V3, axis: V3, radius: f64) -> Result<Self, SurfaceError> {
        Ok(Self {
            point,
            axis: unit(axis)?,
            radius,
        })
    }

    pub fn axis(&self) -> V3 {
        self.axis
    }

    fn radial(&self, x: &V3) -> V3 {
        let d = sub(x, &self.point);
        let a = dot(&d, &self.axis);
        [d[0] - a * self.axis[0], d[1] - a * self.axis[1], d[2] - a * self.axis[2]]
    }
}

impl Sdf for CylinderSdf {
    fn value(&self, x: &V3) -> f64 {
        norm(&self.radial(x)) - self.radius
    }

    fn gradient(&self, x: &V3) -> V3 {
        let r = self.radial(x);
        let n = norm(&r);
        if n == 0.0 {
            return [0.0; 3];
        }
        [r[0] / n, r[1] / n, r[2] / n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSdf {
    pub point: V3,
    normal: V3,
}

impl PlaneSdf {
    pub fn new(point: V3, normal: V3) -> Result<Self, SurfaceError> {
        Ok(Self {
            point,
            normal: unit(normal)?,
        })
    }
}

impl Sdf for PlaneSdf {
    fn value(&self, x: &V3) -> f64 {
        dot(&sub(x, &self.point), &self.normal)
    }

    fn gradient(&self, _x: &V3) -> V3 {
        self.normal
    }
}

/// Axis-aligned box with edges rounded by `radius`; the surface sits at
/// `half_extents + radius` along each face normal.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundedBoxSdf {
    pub center: V3,
    pub half_extents: V3,
    pub radius: f64,
}

impl Sdf for RoundedBoxSdf {
    fn value(&self, x: &V3) -> f64 {
        let q: V3 = std::array::from_fn(|i| (x[i] - self.center[i]).abs() - self.half_extents[i]);
        let outside = norm(&q.map(|v| v.max(0.0)));
        let inside = q[0].max(q[1]).max(q[2]).min(0.0);
        outside + inside - self.radius
    }

    fn gradient(&self, x: &V3) -> V3 {
        let p = sub(x, &self.center);
        let q: V3 = std::array::from_fn(|i| p[i].abs() - self.half_extents[i]);
        let sign = p.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
        let pos = q.map(|v| v.max(0.0));
        let n = norm(&pos);
        if n > 0.0 {
            return std::array::from_fn(|i| sign[i] * pos[i] / n);
        }
        let mut k = 0;
        for i in 1..3 {
            if q[i] > q[k] {
                k = i;
            }
        }
        let mut g = [0.0; 3];
        g[k] = sign[k];
        g
    }
}

/// Regular-grid field with trilinear interpolation.
///
/// Values are stored x-major, z fastest: `values[(i * ny + j) * nz + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSdf {
    min: V3,
    max: V3,
    dims: [usize; 3],
    spacing: V3,
    values: Vec<f64>,
    normals: Vec<V3>,
}

impl GridSdf {
    pub fn from_values(min: V3, max: V3, dims: [usize; 3], values: Vec<f64>) -> Result<Self, SurfaceError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(SurfaceError::InvalidParameter("grid needs at least 2 nodes per axis".into()));
        }
        if (0..3).any(|i| !(max[i] > min[i])) {
            return Err(SurfaceError::InvalidParameter("grid bounds must have max > min".into()));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(SurfaceError::InvalidParameter(format!(
                "grid of {:?} needs {} values, got {}",
                dims,
                dims[0] * dims[1] * dims[2],
                values.len()
            )));
        }
        let spacing = std::array::from_fn(|i| (max[i] - min[i]) / (dims[i] - 1) as f64);
        let mut grid = Self {
            min,
            max,
            dims,
            spacing,
            values,
            normals: Vec::new(),
        };
        grid.normals = grid.nodal_differences();
        Ok(grid)
    }

    /// Builds the field from an unoriented cloud: PCA normals over `k_normal`
    /// neighbors, oriented outward, and each grid node signed by projection
    /// onto the tangent plane of its nearest sample.
    pub fn from_cloud(
        points: &[[f64; 3]],
        tree: &KdTree,
        resolution: usize,
        padding: f64,
        k_normal: usize,
    ) -> Result<Self, SurfaceError> {
        if points.len() < 4 {
            return Err(SurfaceError::InvalidParameter("grid SDF needs at least 4 points".into()));
        }
        let normals = estimate_normals(points, tree, k_normal);
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        let diag = norm(&sub(&max, &min));
        let pad = padding * diag;
        for i in 0..3 {
            min[i] -= pad;
            max[i] += pad;
        }
        let dims = [resolution; 3];
        let spacing: V3 = std::array::from_fn(|i| (max[i] - min[i]) / (resolution - 1) as f64);
        let mut values = Vec::with_capacity(resolution.pow(3));
        for i in 0..resolution {
            for j in 0..resolution {
                for k in 0..resolution {
                    let x = [
                        min[0] + i as f64 * spacing[0],
                        min[1] + j as f64 * spacing[1],
                        min[2] + k as f64 * spacing[2],
                    ];
                    let nb = tree.nearest(&x).expect("cloud is non-empty");
                    values.push(dot(&sub(&x, &points[nb.index]), &normals[nb.index]));
                }
            }
        }
        Self::from_values(min, max, dims, values)
    }

    pub fn bounds(&self) -> (V3, V3) {
        (self.min, self.max)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> V3 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    fn nodal_differences(&self) -> Vec<V3> {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let c = [i, j, k];
                    let g: V3 = std::array::from_fn(|ax| {
                        let lo = c[ax].saturating_sub(1);
                        let hi = (c[ax] + 1).min(self.dims[ax] - 1);
                        let mut a = c;
                        let mut b = c;
                        a[ax] = lo;
                        b[ax] = hi;
                        (self.values[self.idx(b[0], b[1], b[2])] - self.values[self.idx(a[0], a[1], a[2])])
                            / ((hi - lo) as f64 * self.spacing[ax])
                    });
                    out.push(g);
                }
            }
        }
        out
    }

    /// Cell index and local coordinates of a (clamped) query.
    fn locate(&self, x: &V3) -> ([usize; 3], V3) {
        let mut cell = [0; 3];
        let mut frac = [0.0; 3];
        for ax in 0..3 {
            let u = ((x[ax].clamp(self.min[ax], self.max[ax]) - self.min[ax]) / self.spacing[ax]).max(0.0);
            let c = (u.floor() as usize).min(self.dims[ax] - 2);
            cell[ax] = c;
            frac[ax] = u - c as f64;
        }
        (cell, frac)
    }

    fn corners(&self, cell: [usize; 3]) -> [usize; 8] {
        let [i, j, k] = cell;
        std::array::from_fn(|c| self.idx(i + (c >> 2 & 1), j + (c >> 1 & 1), k + (c & 1)))
    }
}

impl Sdf for GridSdf {
    fn value(&self, x: &V3) -> f64 {
        let (cell, f) = self.locate(x);
        let ids = self.corners(cell);
        let mut v = 0.0;
        for (c, &id) in ids.iter().enumerate() {
            let wx = if c >> 2 & 1 == 1 { f[0] } else { 1.0 - f[0] };
            let wy = if c >> 1 & 1 == 1 { f[1] } else { 1.0 - f[1] };
            let wz = if c & 1 == 1 { f[2] } else { 1.0 - f[2] };
            v += wx * wy * wz * self.values[id];
        }
        v
    }

    fn gradient(&self, x: &V3) -> V3 {
        let (cell, f) = self.locate(x);
        let ids = self.corners(cell);
        let mut g = [0.0; 3];
        for (c, &id) in ids.iter().enumerate() {
            let bits = [c >> 2 & 1, c >> 1 & 1, c & 1];
            let w: V3 = std::array::from_fn(|ax| if bits[ax] == 1 { f[ax] } else { 1.0 - f[ax] });
            let dw: V3 = std::array::from_fn(|ax| if bits[ax] == 1 { 1.0 } else { -1.0 });
            let v = self.values[id];
            g[0] += dw[0] * w[1] * w[2] * v;
            g[1] += w[0] * dw[1] * w[2] * v;
            g[2] += w[0] * w[1] * dw[2] * v;
        }
        // Outside the box the clamped value is constant along clamped axes.
        for ax in 0..3 {
            g[ax] /= self.spacing[ax];
            if x[ax] < self.min[ax] || x[ax] > self.max[ax] {
                g[ax] = 0.0;
            }
        }
        g
    }

    fn normal_direction(&self, x: &V3) -> V3 {
        let (cell, f) = self.locate(x);
        let ids = self.corners(cell);
        let mut g = [0.0; 3];
        for (c, &id) in ids.iter().enumerate() {
            let wx = if c >> 2 & 1 == 1 { f[0] } else { 1.0 - f[0] };
            let wy = if c >> 1 & 1 == 1 { f[1] } else { 1.0 - f[1] };
            let wz = if c & 1 == 1 { f[2] } else { 1.0 - f[2] };
            let w = wx * wy * wz;
            for ax in 0..3 {
                g[ax] += w * self.normals[id][ax];
            }
        }
        g
    }

    fn is_clamped(&self, x: &V3) -> bool {
        (0..3).any(|ax| x[ax] < self.min[ax] || x[ax] > self.max[ax])
    }
}

/// PCA normals oriented away from the centroid, then smoothed by a
/// neighbor majority vote. Flat clouds orient along the global normal.
pub fn estimate_normals(points: &[[f64; 3]], tree: &KdTree, k: usize) -> Vec<V3> {
    let k = k.clamp(3, points.len());
    let centroid = mean(points.iter());
    let global = pca_normal(points.iter(), &centroid);
    let extent = points.iter().map(|p| norm(&sub(p, &centroid))).fold(0.0, f64::max);

    let neighborhoods: Vec<Vec<usize>> = points
        .iter()
        .map(|p| tree.knn(p, k).into_iter().map(|n| n.index).collect())
        .collect();
    let mut normals: Vec<V3> = points
        .iter()
        .zip(&neighborhoods)
        .map(|(p, nb)| {
            let local: Vec<&V3> = nb.iter().map(|&i| &points[i]).collect();
            let c = mean(local.iter().copied());
            let mut n = pca_normal(local.into_iter(), &c);
            let outward = dot(&n, &sub(p, &centroid));
            let reference = if outward.abs() > 1e-3 * extent { outward } else { dot(&n, &global) };
            if reference < 0.0 {
                n = n.map(|v| -v);
            }
            n
        })
        .collect();
    for _ in 0..3 {
        let flips: Vec<bool> = (0..points.len())
            .map(|i| {
                let disagree = neighborhoods[i]
                    .iter()
                    .filter(|&&j| j != i && dot(&normals[i], &normals[j]) < 0.0)
                    .count();
                2 * disagree > neighborhoods[i].len().saturating_sub(1)
            })
            .collect();
        if !flips.iter().any(|&f| f) {
            break;
        }
        for (n, f) in normals.iter_mut().zip(flips) {
            if f {
                *n = n.map(|v| -v);
            }
        }
    }
    normals
}

fn mean<'a>(pts: impl Iterator<Item = &'a V3>) -> V3 {
    let mut s = [0.0; 3];
    let mut n = 0usize;
    for p in pts {
        for i in 0..3 {
            s[i] += p[i];
        }
        n += 1;
    }
    s.map(|v| v / n.max(1) as f64)
}

fn pca_normal<'a>(pts: impl Iterator<Item = &'a V3>, c: &V3) -> V3 {
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = nalgebra::Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut k = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[k] {
            k = i;
        }
    }
    let v = eig.eigenvectors.column(k);
    [v[0], v[1], v[2]]
}

const GRID_MAGIC: &[u8; 8] = b"ERGSDF\0\0";
const GRID_VERSION: u32 = 1;

/// Writes the grid as little-endian binary:
///
/// ```text
/// magic "ERGSDF\0\0" | u32 version | f64[3] min | f64[3] max | u64[3] dims
/// f64[nx*ny*nz] values (x slowest, z fastest)
/// ```
pub fn save_grid(path: &Path, grid: &GridSdf) -> Result<(), SurfaceError> {
    let mut buf = Vec::with_capacity(96 + 8 * grid.values.len());
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&GRID_VERSION.to_le_bytes());
    for x in grid.min.iter().chain(&grid.max) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for d in grid.dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &grid.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SurfaceError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| SurfaceError::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| SurfaceError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| SurfaceError::io(path, e))
}

/// Reads a grid written by [`save_grid`]; `Ok(None)` if the file is absent.
pub fn load_grid(path: &Path) -> Result<Option<GridSdf>, SurfaceError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(SurfaceError::io(path, e)),
    };
    let bad = |msg: &str| SurfaceError::Cache(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 + 48 + 24 || &bytes[..8] != GRID_MAGIC {
        return Err(bad("not a grid SDF file"));
    }
    if u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) != GRID_VERSION {
        return Ok(None);
    }
    let f = |i: usize| f64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().expect("8 bytes"));
    let u = |i: usize| u64::from_le_bytes(bytes[60 + 8 * i..68 + 8 * i].try_into().expect("8 bytes")) as usize;
    let min = [f(0), f(1), f(2)];
    let max = [f(3), f(4), f(5)];
    let dims = [u(0), u(1), u(2)];
    let count = dims[0].checked_mul(dims[1]).and_then(|v| v.checked_mul(dims[2]));
    if count.map(|c| c * 8 + 84) != Some(bytes.len()) {
        return Err(bad("payload length mismatch"));
    }
    let values = bytes[84..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridSdf::from_values(min, max, dims, values).map(Some)
}
