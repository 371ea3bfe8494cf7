//! Fixed-size matrix helpers over plain arrays.
//!
//! Matrices are row-major `[[T; C]; R]`.

use super::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Mat4<T> = [[T; 4]; 4];
pub type Mat6<T> = [[T; 6]; 6];

#[inline]
pub fn zeros3<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

#[inline]
pub fn eye3<T: Real>() -> Mat3<T> {
    let mut m = zeros3();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

#[inline]
#[cfg(test)]
pub fn eye6<T: Real>() -> Mat6<T> {
    let mut m = [[T::zero(); 6]; 6];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

/// Skew-symmetric cross-product matrix `[w]x`.
#[inline]
pub fn skew<T: Real>(w: &Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    [[z, -w[2], w[1]], [w[2], z, -w[0]], [-w[1], w[0], z]]
}

/// Inverse of [`skew`] on the antisymmetric part `(M - Mᵀ)/2`.
#[inline]
pub fn unskew<T: Real>(m: &Mat3<T>) -> Vec3<T> {
    let h = T::lit(0.5);
    [
        (m[2][1] - m[1][2]) * h,
        (m[0][2] - m[2][0]) * h,
        (m[1][0] - m[0][1]) * h,
    ]
}

#[inline]
pub fn matmul3<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = zeros3();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

#[inline]
pub fn matvec3<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

#[inline]
pub fn transpose3<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = zeros3();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

#[inline]
pub fn add3<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = out[i][j] + b[i][j];
        }
    }
    out
}

#[inline]
pub fn scale3<T: Real>(a: &Mat3<T>, s: T) -> Mat3<T> {
    let mut out = *a;
    for row in out.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * s;
        }
    }
    out
}

/// `a + s·b`
#[inline]
pub fn axpy3<T: Real>(a: &Mat3<T>, s: T, b: &Mat3<T>) -> Mat3<T> {
    add3(a, &scale3(b, s))
}

#[inline]
pub fn det3<T: Real>(a: &Mat3<T>) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Inverse by cofactors; caller guarantees non-singularity.
pub fn inv3<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let d = det3(a);
    let inv_d = T::one() / d;
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    [
        [c(1, 1, 2, 2) * inv_d, -c(0, 1, 2, 2) * inv_d, c(0, 1, 1, 2) * inv_d],
        [-c(1, 0, 2, 2) * inv_d, c(0, 0, 2, 2) * inv_d, -c(0, 0, 1, 2) * inv_d],
        [c(1, 0, 2, 1) * inv_d, -c(0, 0, 2, 1) * inv_d, c(0, 0, 1, 1) * inv_d],
    ]
}

#[inline]
pub fn frobenius3<T: Real>(a: &Mat3<T>) -> T {
    a.iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, &x| acc + x * x)
        .sqrt()
}

#[inline]
pub fn dot3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: &Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

#[inline]
pub fn sub3v<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3v<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3v<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[cfg(test)]
pub fn matmul6<T: Real>(a: &Mat6<T>, b: &Mat6<T>) -> Mat6<T> {
    let mut out = [[T::zero(); 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let mut s = T::zero();
            for k in 0..6 {
                s = s + a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn matvec6<T: Real>(a: &Mat6<T>, v: &[T; 6]) -> [T; 6] {
    let mut out = [T::zero(); 6];
    for (o, row) in out.iter_mut().zip(a.iter()) {
        let mut s = T::zero();
        for k in 0..6 {
            s = s + row[k] * v[k];
        }
        *o = s;
    }
    out
}

/// Assemble a 6×6 from 3×3 blocks `[[a, b], [c, d]]`.
pub fn blocks6<T: Real>(a: &Mat3<T>, b: &Mat3<T>, c: &Mat3<T>, d: &Mat3<T>) -> Mat6<T> {
    let mut out = [[T::zero(); 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j];
            out[i][j + 3] = b[i][j];
            out[i + 3][j] = c[i][j];
            out[i + 3][j + 3] = d[i][j];
        }
    }
    out
}
