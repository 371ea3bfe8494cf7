use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use super::mat::*;
use super::{LieError, Real};

/// Tangent coordinates of se(3).
///
/// The flat layout used everywhere (`to_array`, 6×6 operators, stacked
/// trajectory fields) is `[ωx, ωy, ωz, vx, vy, vz]`: rotation first, then
/// translation.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist<T = f64> {
    pub omega: Vec3<T>,
    pub v: Vec3<T>,
}

impl<T: Real> Twist<T> {
    pub fn new(omega: Vec3<T>, v: Vec3<T>) -> Self {
        Self { omega, v }
    }

    pub fn zero() -> Self {
        Self {
            omega: [T::zero(); 3],
            v: [T::zero(); 3],
        }
    }

    pub fn from_array(a: [T; 6]) -> Self {
        Self {
            omega: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
        }
    }

    pub fn from_slice(a: &[T]) -> Self {
        Self {
            omega: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
        }
    }

    pub fn to_array(&self) -> [T; 6] {
        [
            self.omega[0],
            self.omega[1],
            self.omega[2],
            self.v[0],
            self.v[1],
            self.v[2],
        ]
    }

    pub fn dot(&self, other: &Self) -> T {
        dot3(&self.omega, &other.omega) + dot3(&self.v, &other.v)
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn norm_inf(&self) -> T {
        self.to_array()
            .iter()
            .fold(T::zero(), |acc, x| acc.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            omega: scale3v(&self.omega, s),
            v: scale3v(&self.v, s),
        }
    }

    /// The 4×4 se(3) matrix `[[ω]x, v; 0, 0]`.
    pub fn hat(&self) -> Mat4<T> {
        let w = skew(&self.omega);
        let z = T::zero();
        [
            [w[0][0], w[0][1], w[0][2], self.v[0]],
            [w[1][0], w[1][1], w[1][2], self.v[1]],
            [w[2][0], w[2][1], w[2][2], self.v[2]],
            [z, z, z, z],
        ]
    }

    /// Inverse of [`Twist::hat`]; rejects matrices that are not in se(3).
    pub fn vee(m: &Mat4<T>) -> Result<Self, LieError> {
        let tol = T::lit(1e-9);
        let mut defect = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                defect = defect.max((m[i][j] + m[j][i]).abs());
            }
        }
        for j in 0..4 {
            defect = defect.max(m[3][j].abs());
        }
        if defect > tol {
            return Err(LieError::NotInAlgebra {
                defect: defect.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            omega: [m[2][1], m[0][2], m[1][0]],
            v: [m[0][3], m[1][3], m[2][3]],
        })
    }

    /// Algebra adjoint `ad(t)`, so that `ad(t)·s = [t, s]`.
    pub fn ad(&self) -> Mat6<T> {
        let w = skew(&self.omega);
        let v = skew(&self.v);
        blocks6(&w, &zeros3(), &v, &w)
    }

    /// Group exponential (closed-form Rodrigues + V-matrix).
    pub fn exp(&self) -> Pose<T> {
        let c = SmallAngle::new(&self.omega);
        let w = skew(&self.omega);
        let w2 = matmul3(&w, &w);
        let rotation = axpy3(&axpy3(&eye3(), c.a, &w), c.b, &w2);
        let v_mat = axpy3(&axpy3(&eye3(), c.b, &w), c.c, &w2);
        Pose {
            rotation,
            translation: matvec3(&v_mat, &self.v),
        }
    }
}

impl<T: Real> Add for Twist<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            omega: add3v(&self.omega, &o.omega),
            v: add3v(&self.v, &o.v),
        }
    }
}

impl<T: Real> AddAssign for Twist<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Twist<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            omega: sub3v(&self.omega, &o.omega),
            v: sub3v(&self.v, &o.v),
        }
    }
}

impl<T: Real> Neg for Twist<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul<T> for Twist<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

/// Coefficients of the Rodrigues series
/// `a = sinθ/θ`, `b = (1-cosθ)/θ²`, `c = (θ-sinθ)/θ³`.
struct SmallAngle<T> {
    a: T,
    b: T,
    c: T,
}

impl<T: Real> SmallAngle<T> {
    fn new(omega: &Vec3<T>) -> Self {
        let t2 = dot3(omega, omega);
        let theta = t2.sqrt();
        if theta < T::lit(1e-8) {
            let t4 = t2 * t2;
            Self {
                a: T::one() - t2 / T::lit(6.0) + t4 / T::lit(120.0),
                b: T::lit(0.5) - t2 / T::lit(24.0) + t4 / T::lit(720.0),
                c: T::one() / T::lit(6.0) - t2 / T::lit(120.0) + t4 / T::lit(5040.0),
            }
        } else {
            let s = theta.sin();
            let half = (theta * T::lit(0.5)).sin();
            Self {
                a: s / theta,
                b: T::lit(2.0) * half * half / t2,
                c: (theta - s) / (t2 * theta),
            }
        }
    }
}

/// Threshold below which higher-order Jacobian coefficients use their series.
fn series_cutoff<T: Real>() -> T {
    T::lit(1e-2)
}

/// `(1 - (θ/2)·cot(θ/2)) / θ²`, the `[ω]x²` coefficient of the inverse V-matrix.
fn inv_v_coeff<T: Real>(theta: T) -> T {
    let t2 = theta * theta;
    if theta < series_cutoff() {
        T::one() / T::lit(12.0) + t2 / T::lit(720.0) + t2 * t2 / T::lit(30240.0)
    } else {
        let half = theta * T::lit(0.5);
        (T::one() - half / half.tan()) / t2
    }
}

/// Rigid transform in SE(3): rotation `R ∈ SO(3)` and translation `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T = f64> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: eye3(),
            translation: [T::zero(); 3],
        }
    }

    /// Validated constructor: `RᵀR = I` and `det R = +1` within 1e-9.
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self, LieError> {
        if !rotation.iter().flatten().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(LieError::NonFinite);
        }
        let p = Self {
            rotation,
            translation,
        };
        let defect = p.orthogonality_defect();
        let det = det3(&rotation);
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
        if defect > tol || (det - T::one()).abs() > tol {
            return Err(LieError::NotARotation {
                defect: defect.to_f64().unwrap_or(f64::NAN),
                det: det.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(p)
    }

    /// Builds a pose and projects the rotation onto SO(3).
    pub fn new_projected(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self, LieError> {
        if det3(&rotation) <= T::zero() {
            return Err(LieError::NotARotation {
                defect: f64::NAN,
                det: det3(&rotation).to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            rotation: polar_orthonormalize(&rotation),
            translation,
        })
    }

    pub fn from_translation(translation: Vec3<T>) -> Self {
        Self {
            rotation: eye3(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3<T> {
        &self.translation
    }

    /// Third column of the rotation (the tool z-axis).
    pub fn z_axis(&self) -> Vec3<T> {
        [self.rotation[0][2], self.rotation[1][2], self.rotation[2][2]]
    }

    pub fn to_homogeneous(&self) -> Mat4<T> {
        let r = &self.rotation;
        let t = &self.translation;
        let (z, o) = (T::zero(), T::one());
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [z, z, z, o],
        ]
    }

    pub fn from_homogeneous(m: &Mat4<T>) -> Result<Self, LieError> {
        let bottom = [T::zero(), T::zero(), T::zero(), T::one()];
        let tol = T::lit(1e-9);
        if m[3].iter().zip(bottom.iter()).any(|(a, b)| (*a - *b).abs() > tol) {
            return Err(LieError::BadBottomRow);
        }
        let rotation = [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ];
        Self::new(rotation, [m[0][3], m[1][3], m[2][3]])
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: matmul3(&self.rotation, &other.rotation),
            translation: add3v(&matvec3(&self.rotation, &other.translation), &self.translation),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose3(&self.rotation);
        Self {
            translation: scale3v(&matvec3(&rt, &self.translation), -T::one()),
            rotation: rt,
        }
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        add3v(&matvec3(&self.rotation, p), &self.translation)
    }

    /// `‖RᵀR − I‖_F`
    pub fn orthogonality_defect(&self) -> T {
        let rtr = matmul3(&transpose3(&self.rotation), &self.rotation);
        frobenius3(&axpy3(&rtr, -T::one(), &eye3()))
    }

    /// Project the rotation back onto SO(3) if its defect exceeds 1e-9.
    pub fn reorthonormalized(mut self) -> Self {
        if self.orthogonality_defect() > T::lit(1e-9) {
            self.rotation = polar_orthonormalize(&self.rotation);
        }
        self
    }

    /// Group logarithm on the principal branch.
    pub fn log(&self) -> Result<Twist<T>, LieError> {
        let omega = so3_log(&self.rotation)?;
        let theta = norm3(&omega);
        let w = skew(&omega);
        let w2 = matmul3(&w, &w);
        let v_inv = axpy3(&axpy3(&eye3(), -T::lit(0.5), &w), inv_v_coeff(theta), &w2);
        Ok(Twist {
            omega,
            v: matvec3(&v_inv, &self.translation),
        })
    }

    /// Right retraction `P ⊕ t = P·exp(t)`.
    pub fn oplus(&self, t: &Twist<T>) -> Self {
        self.compose(&t.exp()).reorthonormalized()
    }

    /// `self ⊖ base = log(base⁻¹·self)`.
    pub fn ominus(&self, base: &Self) -> Result<Twist<T>, LieError> {
        base.inverse().compose(self).log()
    }

    /// Group adjoint `Ad(P)`, so that `Ad(P)·t = vee(P·hat(t)·P⁻¹)`.
    pub fn adjoint(&self) -> Mat6<T> {
        let r = &self.rotation;
        let tr = matmul3(&skew(&self.translation), r);
        blocks6(r, &zeros3(), &tr, r)
    }

    /// Tangent-space gradient under right perturbations.
    ///
    /// `euclid_grad` is `∂f/∂P` as a 4×4 (bottom row ignored). The returned
    /// twist `g` satisfies `d/dτ f(P ⊕ τε)|₀ = g·ε` with the plain dot product.
    pub fn riem_grad(&self, euclid_grad: &Mat4<T>) -> Twist<T> {
        let g_rot = [
            [euclid_grad[0][0], euclid_grad[0][1], euclid_grad[0][2]],
            [euclid_grad[1][0], euclid_grad[1][1], euclid_grad[1][2]],
            [euclid_grad[2][0], euclid_grad[2][1], euclid_grad[2][2]],
        ];
        let g_tr = [euclid_grad[0][3], euclid_grad[1][3], euclid_grad[2][3]];
        let rt = transpose3(&self.rotation);
        let m = matmul3(&rt, &g_rot);
        // Ω = RᵀG − GᵀR is skew; its vee is twice unskew(M).
        let omega = scale3v(&unskew(&m), T::lit(2.0));
        Twist {
            omega,
            v: matvec3(&rt, &g_tr),
        }
    }

    /// Unit quaternion `(w, x, y, z)` with `w ≥ 0`.
    pub fn quaternion(&self) -> [T; 4] {
        rotation_to_quaternion(&self.rotation)
    }

    pub fn from_quaternion(translation: Vec3<T>, q: [T; 4]) -> Result<Self, LieError> {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(LieError::NonFinite);
        }
        let q = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        Ok(Self {
            rotation: quaternion_to_rotation(&q),
            translation,
        })
    }

    /// Flat `(tx, ty, tz, qw, qx, qy, qz)`.
    pub fn to_tq(&self) -> [T; 7] {
        let q = self.quaternion();
        let t = self.translation;
        [t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.rotation
            .iter()
            .flatten()
            .chain(self.translation.iter())
            .all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        let c = |x: T| U::lit(x.to_f64().unwrap_or(f64::NAN));
        let mut rotation = [[U::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = c(self.rotation[i][j]);
            }
        }
        Pose {
            rotation,
            translation: [c(self.translation[0]), c(self.translation[1]), c(self.translation[2])],
        }
    }
}

impl<T: Real> Mul for Pose<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.compose(&o)
    }
}

/// Parallel transport of a tangent vector between tangent spaces:
/// `Ad(to⁻¹·from)·t`.
pub fn parallel_transport<T: Real>(from: &Pose<T>, to: &Pose<T>, t: &Twist<T>) -> Twist<T> {
    let rel = to.inverse().compose(from);
    Twist::from_array(matvec6(&rel.adjoint(), &t.to_array()))
}

/// SO(3) logarithm as a rotation vector; rejects angles within 1e-6 of π.
pub fn so3_log<T: Real>(r: &Mat3<T>) -> Result<Vec3<T>, LieError> {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let c = ((tr - T::one()) * T::lit(0.5)).max(-T::one()).min(T::one());
    let s_vec = unskew(r);
    let s = norm3(&s_vec);
    let theta = s.atan2(c);
    if theta >= T::PI() - T::lit(1e-6) {
        return Err(LieError::OutOfBranch {
            angle: theta.to_f64().unwrap_or(f64::NAN),
        });
    }
    if theta < T::lit(1e-8) {
        let t2 = theta * theta;
        let k = T::one() + t2 / T::lit(6.0) + T::lit(7.0) * t2 * t2 / T::lit(360.0);
        return Ok(scale3v(&s_vec, k));
    }
    if c > -T::lit(0.5) {
        return Ok(scale3v(&s_vec, theta / s));
    }
    // Close to π the antisymmetric part is small; read the axis from the
    // symmetric part (R + Rᵀ)/2 − c·I = (1 − c)·a·aᵀ instead.
    let one_minus_c = T::one() - c;
    let mut sym = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sym[i][j] = (r[i][j] + r[j][i]) * T::lit(0.5);
        }
        sym[i][i] = sym[i][i] - c;
    }
    let k = (0..3)
        .max_by(|&a, &b| sym[a][a].partial_cmp(&sym[b][b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let denom = (sym[k][k] * one_minus_c).sqrt();
    let mut axis = [sym[0][k] / denom, sym[1][k] / denom, sym[2][k] / denom];
    if dot3(&axis, &s_vec) < T::zero() {
        axis = scale3v(&axis, -T::one());
    }
    let n = norm3(&axis);
    Ok(scale3v(&axis, theta / n))
}

/// SO(3) left Jacobian `Jl(ω) = I + b[ω]x + c[ω]x²`.
pub fn so3_left_jacobian<T: Real>(omega: &Vec3<T>) -> Mat3<T> {
    let c = SmallAngle::new(omega);
    let w = skew(omega);
    axpy3(&axpy3(&eye3(), c.b, &w), c.c, &matmul3(&w, &w))
}

pub fn so3_left_jacobian_inv<T: Real>(omega: &Vec3<T>) -> Mat3<T> {
    let theta = norm3(omega);
    let w = skew(omega);
    axpy3(&axpy3(&eye3(), -T::lit(0.5), &w), inv_v_coeff(theta), &matmul3(&w, &w))
}

/// Translational coupling block of the SE(3) left Jacobian.
fn se3_q_block<T: Real>(omega: &Vec3<T>, v: &Vec3<T>) -> Mat3<T> {
    let theta = norm3(omega);
    let t2 = theta * theta;
    let (c1, c2, c3) = if theta < series_cutoff() {
        let t4 = t2 * t2;
        (
            T::one() / T::lit(6.0) - t2 / T::lit(120.0) + t4 / T::lit(5040.0),
            T::one() / T::lit(24.0) - t2 / T::lit(720.0) + t4 / T::lit(40320.0),
            T::one() / T::lit(120.0) - t2 / T::lit(2520.0) + t4 / T::lit(120960.0),
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = t2 * theta;
        let t4 = t2 * t2;
        (
            (theta - s) / t3,
            (t2 + T::lit(2.0) * c - T::lit(2.0)) / (T::lit(2.0) * t4),
            (T::lit(2.0) * theta - T::lit(3.0) * s + theta * c) / (T::lit(2.0) * t4 * theta),
        )
    };
    let w = skew(omega);
    let p = skew(v);
    let wp = matmul3(&w, &p);
    let pw = matmul3(&p, &w);
    let wpw = matmul3(&wp, &w);
    let wwp = matmul3(&w, &wp);
    let pww = matmul3(&pw, &w);
    let wpww = matmul3(&wpw, &w);
    let wwpw = matmul3(&w, &wpw);

    let mut q = scale3(&p, T::lit(0.5));
    q = axpy3(&q, c1, &add3(&add3(&wp, &pw), &wpw));
    q = axpy3(&q, c2, &axpy3(&add3(&wwp, &pww), -T::lit(3.0), &wpw));
    q = axpy3(&q, c3, &add3(&wpww, &wwpw));
    q
}

/// SE(3) left Jacobian: `log(exp(δ)·exp(t)) ≈ t + Jl(t)⁻¹·δ`.
pub fn left_jacobian<T: Real>(t: &Twist<T>) -> Mat6<T> {
    let j = so3_left_jacobian(&t.omega);
    let q = se3_q_block(&t.omega, &t.v);
    blocks6(&j, &zeros3(), &q, &j)
}

pub fn left_jacobian_inv<T: Real>(t: &Twist<T>) -> Mat6<T> {
    let ji = so3_left_jacobian_inv(&t.omega);
    let q = se3_q_block(&t.omega, &t.v);
    let lower = scale3(&matmul3(&matmul3(&ji, &q), &ji), -T::one());
    blocks6(&ji, &zeros3(), &lower, &ji)
}

/// SE(3) right Jacobian: `log(exp(t)·exp(δ)) ≈ t + Jr(t)⁻¹·δ`.
pub fn right_jacobian<T: Real>(t: &Twist<T>) -> Mat6<T> {
    left_jacobian(&-*t)
}

pub fn right_jacobian_inv<T: Real>(t: &Twist<T>) -> Mat6<T> {
    left_jacobian_inv(&-*t)
}

fn polar_orthonormalize<T: Real>(r: &Mat3<T>) -> Mat3<T> {
    // Newton iteration for the orthogonal polar factor: R ← (R + R⁻ᵀ)/2.
    let mut x = *r;
    for _ in 0..8 {
        let inv_t = transpose3(&inv3(&x));
        let next = scale3(&add3(&x, &inv_t), T::lit(0.5));
        let delta = frobenius3(&axpy3(&next, -T::one(), &x));
        x = next;
        if delta <= T::epsilon() * T::lit(4.0) {
            break;
        }
    }
    x
}

pub fn rotation_to_quaternion<T: Real>(r: &Mat3<T>) -> [T; 4] {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let one = T::one();
    let quarter = T::lit(0.25);
    let q = if tr > T::zero() {
        let s = (tr + one).sqrt() * T::lit(2.0);
        [
            quarter * s,
            (r[2][1] - r[1][2]) / s,
            (r[0][2] - r[2][0]) / s,
            (r[1][0] - r[0][1]) / s,
        ]
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (one + r[0][0] - r[1][1] - r[2][2]).sqrt() * T::lit(2.0);
        [
            (r[2][1] - r[1][2]) / s,
            quarter * s,
            (r[0][1] + r[1][0]) / s,
            (r[0][2] + r[2][0]) / s,
        ]
    } else if r[1][1] > r[2][2] {
        let s = (one + r[1][1] - r[0][0] - r[2][2]).sqrt() * T::lit(2.0);
        [
            (r[0][2] - r[2][0]) / s,
            (r[0][1] + r[1][0]) / s,
            quarter * s,
            (r[1][2] + r[2][1]) / s,
        ]
    } else {
        let s = (one + r[2][2] - r[0][0] - r[1][1]).sqrt() * T::lit(2.0);
        [
            (r[1][0] - r[0][1]) / s,
            (r[0][2] + r[2][0]) / s,
            (r[1][2] + r[2][1]) / s,
            quarter * s,
        ]
    };
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let sign = if q[0] < T::zero() { -one } else { one };
    [q[0] * sign / n, q[1] * sign / n, q[2] * sign / n, q[3] * sign / n]
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quaternion_to_rotation<T: Real>(q: &[T; 4]) -> Mat3<T> {
    let [w, x, y, z] = *q;
    let two = T::lit(2.0);
    let one = T::one();
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}
