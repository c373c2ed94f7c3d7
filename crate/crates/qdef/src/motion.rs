//! Rigid motions of the plane and of space.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::scalar::Real;

/// Orientation-preserving isometry `p ↦ R p + t` of three-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidMotion<T> {
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    /// Image of a point.
    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Image of a free vector.
    pub fn apply_vector(&self, w: &Vector3<T>) -> Vector3<T> {
        self.rotation * w
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthogonality_defect(&self) -> T {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn determinant(&self) -> T {
        self.rotation.determinant()
    }

    /// Largest deviation between two motions, rotation and translation parts combined.
    pub fn distance(&self, other: &Self) -> T {
        let dr = (self.rotation - other.rotation).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }
}

/// Nearest rotation to `m` in the Frobenius norm (polar factor).
pub fn project_to_rotation<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut r = u * vt;
    if r.determinant() < T::zero() {
        let mut fix = Matrix3::identity();
        fix[(2, 2)] = -T::one();
        r = u * fix * vt;
    }
    r
}

/// Skew matrix `[w]×` with `[w]× y = w × y`.
pub fn hat<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -w.z,
        w.y,
        w.z,
        T::zero(),
        -w.x,
        -w.y,
        w.x,
        T::zero(),
    )
}

/// Axial vector of the skew part of `m`.
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    Vector3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    )
}

/// Planar rigid motion, rotation tracked by its (unwrapped) angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion2 {
    pub angle: f64,
    pub translation: Vector2<f64>,
}

impl RigidMotion2 {
    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.angle.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation
    }
}
