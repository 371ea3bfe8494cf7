//! Graph Fourier basis: the lowest eigenpairs of the normalized Laplacian,
//! rescaled so the basis is orthonormal under the degree mass matrix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::graph::{GraphLaplacian, SparseMatrix};
use super::SurfaceError;

/// Tunables for [`spectral_basis`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOptions {
    /// Exponent `p` in the frequency weights `(1 + λ)^-p`.
    pub weight_exponent: f64,
    /// Required eigenpair residual `‖L g − λ g‖₂` for unit `g`.
    pub tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            weight_exponent: 2.0,
            tol: 1e-9,
        }
    }
}

/// The `S` lowest graph Fourier modes sampled at the cloud nodes.
///
/// Columns of `eigvecs` are `F_i = g_i / sqrt(m)` where `g_i` are unit
/// eigenvectors of the normalized Laplacian and `m = d / Σd` is the node
/// mass. Hence `Fᵀ diag(m) F = I` and `F_0 ≡ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
    pub lambda_weights: DVector<f64>,
    pub mass: DVector<f64>,
    pub weight_exponent: f64,
}

impl SpectralBasis {
    pub fn n_nodes(&self) -> usize {
        self.eigvecs.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.eigvecs.ncols()
    }

    /// Unit eigenvectors of the normalized Laplacian (`sqrt(m)·F`).
    pub fn laplacian_eigvecs(&self) -> DMatrix<f64> {
        let mut g = self.eigvecs.clone();
        for (i, mut row) in g.row_iter_mut().enumerate() {
            row *= self.mass[i].sqrt();
        }
        g
    }

    /// `c_i = Σ_n φ[n]·F_i[n]`.
    pub fn target_coeffs(&self, phi: &[f64]) -> DVector<f64> {
        self.eigvecs.tr_mul(&DVector::from_column_slice(phi))
    }

    /// Heat-diffused, ROI-blended target distribution.
    ///
    /// The smooth part is the mass-weighted spectral projection of `w` damped
    /// by `exp(-λ τ)`, clipped at zero and normalized; it is mixed with the raw
    /// weights as `β·smooth + (1 − β)·w` and normalized again.
    pub fn diffuse(&self, w: &[f64], tau: f64, beta: f64) -> Result<Vec<f64>, SurfaceError> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(SurfaceError::InvalidParameter(format!("tau_d must be >= 0, got {tau}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(SurfaceError::InvalidParameter(format!("beta must be in [0, 1], got {beta}")));
        }
        if w.len() != self.n_nodes() {
            return Err(SurfaceError::InvalidParameter(format!(
                "weight vector has {} entries, basis has {} nodes",
                w.len(),
                self.n_nodes()
            )));
        }
        let w_norm = normalized(w).ok_or(SurfaceError::EmptyRoi)?;
        if beta == 0.0 {
            return Ok(w_norm);
        }
        let mw = DVector::from_iterator(w_norm.len(), w_norm.iter().zip(self.mass.iter()).map(|(a, m)| a * m));
        let mut coeffs = self.eigvecs.tr_mul(&mw);
        for (c, l) in coeffs.iter_mut().zip(self.eigvals.iter()) {
            *c *= (-l * tau).exp();
        }
        let smooth = &self.eigvecs * coeffs;
        let clipped: Vec<f64> = smooth.iter().map(|v| v.max(0.0)).collect();
        let smooth = normalized(&clipped).ok_or_else(|| {
            SurfaceError::InvalidParameter("diffused distribution vanished after clipping".into())
        })?;
        let mixed: Vec<f64> = smooth
            .iter()
            .zip(&w_norm)
            .map(|(s, r)| beta * s + (1.0 - beta) * r)
            .collect();
        normalized(&mixed).ok_or(SurfaceError::EmptyRoi)
    }
}

pub(crate) fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| x / s).collect())
}

/// Computes the `s` smallest eigenpairs of `lap` and assembles the basis.
pub fn spectral_basis(
    lap: &GraphLaplacian,
    s: usize,
    opts: &SpectralOptions,
) -> Result<SpectralBasis, SurfaceError> {
    let n = lap.matrix.n_rows();
    if s == 0 || s >= n {
        return Err(SurfaceError::InvalidParameter(format!(
            "basis size must satisfy 0 < S < N, got S = {s}, N = {n}"
        )));
    }
    let (vals, mut vecs) = smallest_eigenpairs(&lap.matrix, s, opts.tol)?;

    let total: f64 = lap.degrees.iter().sum();
    let mass = DVector::from_iterator(n, lap.degrees.iter().map(|d| d / total));
    for mut col in vecs.column_iter_mut() {
        fix_sign(col.as_mut_slice());
    }
    // The constant mode is known in closed form; use it exactly.
    let sqrt_d: f64 = lap.degrees.iter().sum::<f64>().sqrt();
    for (i, d) in lap.degrees.iter().enumerate() {
        vecs[(i, 0)] = d.sqrt() / sqrt_d;
    }
    let mut eigvals = DVector::from_vec(vals);
    eigvals[0] = 0.0;
    for (i, mut row) in vecs.row_iter_mut().enumerate() {
        row /= mass[i].sqrt();
    }
    let lambda_weights = eigvals.map(|l| (1.0 + l).powf(-opts.weight_exponent));
    Ok(SpectralBasis {
        eigvals,
        eigvecs: vecs,
        lambda_weights,
        mass,
        weight_exponent: opts.weight_exponent,
    })
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lanczos with full (twice-applied Gram–Schmidt) reorthogonalization.
///
/// Returns the `s` smallest eigenvalues ascending and unit eigenvectors as
/// columns. Exact breakdowns (invariant subspaces, e.g. from repeated
/// eigenvalues on symmetric clouds) restart with a fresh random direction, so
/// running to `m = n` always recovers the full spectrum.
pub(crate) fn smallest_eigenpairs(
    a: &SparseMatrix,
    s: usize,
    tol: f64,
) -> Result<(Vec<f64>, DMatrix<f64>), SurfaceError> {
    let n = a.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_3e4f);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let mut start = random_unit(&mut rng, n, &basis).expect("empty basis always admits a direction");
    let mut target_m = n.min((3 * s + 40).max(s + 20));
    let mut w = vec![0.0; n];
    let mut worst: f64;

    loop {
        while basis.len() < target_m {
            let j = basis.len();
            basis.push(std::mem::take(&mut start));
            a.matvec(&basis[j], &mut w);
            let aj = dot(&basis[j], &w);
            alpha.push(aj);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let bj = dot(&w, &w).sqrt();
            if basis.len() == n {
                break;
            }
            if bj > 1e-10 {
                beta.push(bj);
                start = w.iter().map(|x| x / bj).collect();
            } else {
                beta.push(0.0);
                match random_unit(&mut rng, n, &basis) {
                    Some(v) => start = v,
                    None => break,
                }
            }
        }
        let m = basis.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
        let take = s.min(m);
        let mut vals = Vec::with_capacity(take);
        let mut vecs = DMatrix::zeros(n, take);
        for (c, &k) in order.iter().take(take).enumerate() {
            vals.push(eig.eigenvalues[k]);
            for (j, q) in basis.iter().enumerate() {
                let y = eig.eigenvectors[(j, k)];
                if y != 0.0 {
                    for (i, qi) in q.iter().enumerate() {
                        vecs[(i, c)] += y * qi;
                    }
                }
            }
            let norm = vecs.column(c).norm();
            vecs.column_mut(c).unscale_mut(norm);
        }
        worst = 0.0;
        let mut av = vec![0.0; n];
        for c in 0..take {
            let col: Vec<f64> = vecs.column(c).iter().copied().collect();
            a.matvec(&col, &mut av);
            let r: f64 = av
                .iter()
                .zip(&col)
                .map(|(x, y)| (x - vals[c] * y).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        log::debug!("lanczos m = {m}: worst residual {worst:.3e}");
        if take == s && worst <= tol {
            return Ok((vals, vecs));
        }
        if m >= n || target_m >= n {
            break;
        }
        target_m = n.min(target_m + target_m / 2);
        if start.is_empty() {
            match random_unit(&mut rng, n, &basis) {
                Some(v) => start = v,
                None => break,
            }
        }
    }
    Err(SurfaceError::NoConvergence { residual: worst })
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for q in basis {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Some(v);
        }
    }
    None
}

const CACHE_MAGIC: &[u8; 8] = b"ERGSPEC\0";
const CACHE_VERSION: u32 = 1;

/// Cache key over everything the basis depends on.
pub fn cache_key(points: &[[f64; 3]], s: usize, k_graph: usize, sigma_g: Option<f64>, exponent: f64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"spectral-v1");
    h.update((points.len() as u64).to_le_bytes());
    for p in points {
        for x in p {
            h.update(x.to_le_bytes());
        }
    }
    h.update((s as u64).to_le_bytes());
    h.update((k_graph as u64).to_le_bytes());
    h.update(sigma_g.unwrap_or(-1.0).to_le_bytes());
    h.update(exponent.to_le_bytes());
    h.finalize().into()
}

/// Writes the basis as little-endian binary:
///
/// ```text
/// magic "ERGSPEC\0" | u32 version | [u8; 32] key | u64 N | u64 S | f64 exponent
/// f64[S] eigvals | f64[S] lambda_weights | f64[N] mass | f64[N*S] eigvecs (column-major)
/// ```
pub fn save_basis(path: &Path, key: &[u8; 32], basis: &SpectralBasis) -> Result<(), SurfaceError> {
    let mut buf = Vec::with_capacity(64 + 8 * (basis.n_nodes() + 2) * (basis.n_modes() + 1));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(key);
    buf.extend_from_slice(&(basis.n_nodes() as u64).to_le_bytes());
    buf.extend_from_slice(&(basis.n_modes() as u64).to_le_bytes());
    buf.extend_from_slice(&basis.weight_exponent.to_le_bytes());
    for x in basis
        .eigvals
        .iter()
        .chain(basis.lambda_weights.iter())
        .chain(basis.mass.iter())
        .chain(basis.eigvecs.iter())
    {
        buf.extend_from_slice(&x.to_le_bytes());
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

/// Loads a cached basis; `Ok(None)` when the file is missing or was built
/// for a different key.
pub fn load_basis(path: &Path, key: &[u8; 32]) -> Result<Option<SpectralBasis>, SurfaceError> {
    let mut bytes = Vec::new();
    match fs::File::open(path) {
        Ok(mut f) => f.read_to_end(&mut bytes).map_err(|e| SurfaceError::io(path, e))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(SurfaceError::io(path, e)),
    };
    let bad = |msg: &str| SurfaceError::Cache(format!("{}: {msg}", path.display()));
    let mut r = ByteReader { bytes: &bytes, pos: 0 };
    if r.take(8).ok_or_else(|| bad("truncated header"))? != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?);
    if version != CACHE_VERSION {
        return Ok(None);
    }
    if r.take(32).ok_or_else(|| bad("truncated header"))? != key {
        return Ok(None);
    }
    let n = u64::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?) as usize;
    let s = u64::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?) as usize;
    let exponent = r.f64().ok_or_else(|| bad("truncated header"))?;
    let expected = 8 * (2 * s + n + n * s);
    if bytes.len() - r.pos != expected {
        return Err(bad("payload length mismatch"));
    }
    let mut read = |len: usize| -> Vec<f64> { (0..len).map(|_| r.f64().unwrap_or(f64::NAN)).collect() };
    let eigvals = DVector::from_vec(read(s));
    let lambda_weights = DVector::from_vec(read(s));
    let mass = DVector::from_vec(read(n));
    let eigvecs = DMatrix::from_vec(n, s, read(n * s));
    Ok(Some(SpectralBasis {
        eigvals,
        eigvecs,
        lambda_weights,
        mass,
        weight_exponent: exponent,
    }))
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, len: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + len)?;
        self.pos += len;
        Some(out)
    }

    fn array<const L: usize>(&mut self) -> Option<[u8; L]> {
        self.take(L).map(|b| b.try_into().expect("slice length checked"))
    }

    fn f64(&mut self) -> Option<f64> {
        self.array().map(f64::from_le_bytes)
    }
}
