//! Confocal families of doubly ruled real quadrics.
//!
//! Two real types carry two real ruling families: the central hyperboloid of
//! one sheet (`Central`) and the hyperbolic paraboloid (`Paraboloid`). A family
//! is the pencil `Q_z(x) = 0` of quadrics sharing focal conics, parametrized by
//! the spectral parameter `z`. Members are linked by the Ivory affinity
//! `x_z = √(I − zA) x_0 (+ z/2 e₃)`, which preserves distances between
//! corresponding point pairs.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::motion::RigidMotion;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Central,
    Paraboloid,
}

/// Selects one of the two ruling families through a point.
///
/// `U` lines have `v` fixed (tangent `x_u`), `V` lines have `u` fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ruling {
    U,
    V,
}

impl Ruling {
    pub fn other(self) -> Self {
        match self {
            Ruling::U => Ruling::V,
            Ruling::V => Ruling::U,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadricError {
    #[error("invalid sign pattern for {kind:?}: need {expected}")]
    InvalidSignature { kind: FamilyKind, expected: &'static str },
    #[error("semi-axis parameters coincide")]
    DegenerateAxes,
    #[error("spectral parameter {z} outside the admissible range ({lo}, {hi})")]
    OutOfRange { z: f64, lo: f64, hi: f64 },
    #[error("ruling parameters too close: |u - v| = {gap}")]
    SingularRuling { gap: f64 },
    #[error("point is off the quadric (residual {residual})")]
    OffQuadric { residual: f64 },
    #[error("elliptic coordinates collide at the point")]
    DegeneratePoint,
    #[error("elliptic coordinate root could not be bracketed")]
    ComplexRoots,
    #[error("frame triple is degenerate (normalized determinant {det})")]
    DegenerateFrame { det: f64 },
    #[error("tangency equation has no isolated solution")]
    DegenerateHomography,
}

/// Numerical thresholds; all are overridable per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T: Real> {
    /// Minimum `|u − v|` on the central chart.
    pub sing: T,
    /// Minimum gap between elliptic coordinates.
    pub deg: T,
    /// Target residual for exact identities on unit-scale data.
    pub residual: T,
    /// Admission test for "point lies on the quadric".
    pub on_quadric: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            sing: T::lit(1e-6),
            deg: T::lit(1e-8),
            residual: T::lit(1e-10),
            on_quadric: T::lit(1e-8),
        }
    }
}

/// A doubly ruled real quadric together with its confocal family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfocalFamily<T: Real> {
    kind: FamilyKind,
    a: [T; 3],
    tol: Tolerances<T>,
}

/// Linear-fractional form of a ruling: `x(s) = (m0 + s m1) / (d0 + s d1)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RulingPencil<T: Real> {
    pub m0: Vector3<T>,
    pub m1: Vector3<T>,
    pub d0: T,
    pub d1: T,
}

impl<T: Real> ConfocalFamily<T> {
    /// Validates the parameters for `kind`; `a3` is ignored for paraboloids.
    pub fn new(kind: FamilyKind, a1: T, a2: T, a3: Option<T>) -> Result<Self, QuadricError> {
        let eps = T::lit(1e-12);
        match kind {
            FamilyKind::Central => {
                let a3 = a3.ok_or(QuadricError::InvalidSignature {
                    kind,
                    expected: "three parameters a1 > 0, a2 < 0, a3 > 0",
                })?;
                if (a1 - a2).abs() <= eps || (a1 - a3).abs() <= eps || (a2 - a3).abs() <= eps {
                    return Err(QuadricError::DegenerateAxes);
                }
                if !(a1 > T::zero() && a2 < T::zero() && a3 > T::zero()) {
                    return Err(QuadricError::InvalidSignature {
                        kind,
                        expected: "a1 > 0, a2 < 0, a3 > 0",
                    });
                }
                Ok(Self { kind, a: [a1, a2, a3], tol: Tolerances::default() })
            }
            FamilyKind::Paraboloid => {
                if (a1 - a2).abs() <= eps {
                    return Err(QuadricError::DegenerateAxes);
                }
                if !(a1 > T::zero() && a2 < T::zero()) {
                    return Err(QuadricError::InvalidSignature { kind, expected: "a1 > 0 > a2" });
                }
                Ok(Self { kind, a: [a1, a2, T::zero()], tol: Tolerances::default() })
            }
        }
    }

    pub fn central(a1: T, a2: T, a3: T) -> Result<Self, QuadricError> {
        Self::new(FamilyKind::Central, a1, a2, Some(a3))
    }

    pub fn paraboloid(a1: T, a2: T) -> Result<Self, QuadricError> {
        Self::new(FamilyKind::Paraboloid, a1, a2, None)
    }

    pub fn with_tolerances(mut self, tol: Tolerances<T>) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerances(&self) -> &Tolerances<T> {
        &self.tol
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// The parameters `a₁, a₂` and, for central families, `a₃`.
    pub fn params(&self) -> Vec<T> {
        match self.kind {
            FamilyKind::Central => self.a.to_vec(),
            FamilyKind::Paraboloid => self.a[..2].to_vec(),
        }
    }

    /// Diagonal shape matrix `A` of the reference member.
    pub fn shape_matrix(&self) -> Matrix3<T> {
        let inv = |x: T| T::one() / x;
        match self.kind {
            FamilyKind::Central => {
                Matrix3::from_diagonal(&Vector3::new(inv(self.a[0]), inv(self.a[1]), inv(self.a[2])))
            }
            FamilyKind::Paraboloid => {
                Matrix3::from_diagonal(&Vector3::new(inv(self.a[0]), inv(self.a[1]), T::zero()))
            }
        }
    }

    /// Linear term `B` (zero for central families, `−e₃` for paraboloids).
    pub fn linear_term(&self) -> Vector3<T> {
        match self.kind {
            FamilyKind::Central => Vector3::zeros(),
            FamilyKind::Paraboloid => -Vector3::z(),
        }
    }

    /// Open interval of spectral parameters whose members are ruled by the same chart.
    pub fn z_range(&self) -> (T, T) {
        match self.kind {
            FamilyKind::Central => (self.a[1], self.a[0].min(self.a[2])),
            FamilyKind::Paraboloid => (self.a[1], self.a[0]),
        }
    }

    pub fn check_z(&self, z: T) -> Result<(), QuadricError> {
        let (lo, hi) = self.z_range();
        if z > lo && z < hi {
            Ok(())
        } else {
            Err(QuadricError::OutOfRange { z: z.to_f64_lossy(), lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() })
        }
    }

    /// `√(a₁−z), √(z−a₂), √(a₃−z)` (the third is unused for paraboloids).
    pub(crate) fn roots(&self, z: T) -> [T; 3] {
        let [a1, a2, a3] = self.a;
        match self.kind {
            FamilyKind::Central => [(a1 - z).sqrt(), (z - a2).sqrt(), (a3 - z).sqrt()],
            FamilyKind::Paraboloid => [(a1 - z).sqrt(), (z - a2).sqrt(), T::zero()],
        }
    }

    fn diag_count(&self) -> usize {
        match self.kind {
            FamilyKind::Central => 3,
            FamilyKind::Paraboloid => 2,
        }
    }

    /// `Q_z(p)`; the member `x_z` is its zero set.
    pub fn quadric_value(&self, z: T, p: &Vector3<T>) -> T {
        let mut s = T::zero();
        for i in 0..self.diag_count() {
            s += p[i] * p[i] / (self.a[i] - z);
        }
        match self.kind {
            FamilyKind::Central => s - T::one(),
            FamilyKind::Paraboloid => s - T::lit(2.0) * p[2] + z,
        }
    }

    /// Scale-aware residual used by the "point lies on the member" checks.
    pub fn relative_residual(&self, z: T, p: &Vector3<T>) -> T {
        self.quadric_value(z, p).abs() / (T::one() + p.norm_squared())
    }

    fn require_on(&self, z: T, p: &Vector3<T>) -> Result<(), QuadricError> {
        let r = self.relative_residual(z, p);
        if r <= self.tol.on_quadric {
            Ok(())
        } else {
            Err(QuadricError::OffQuadric { residual: r.to_f64_lossy() })
        }
    }

    fn require_chart(&self, u: T, v: T) -> Result<(), QuadricError> {
        if self.kind == FamilyKind::Central && (u - v).abs() <= self.tol.sing {
            return Err(QuadricError::SingularRuling { gap: (u - v).abs().to_f64_lossy() });
        }
        Ok(())
    }

    /// Ruling normalization factor `𝓑`: `(u − v)²` (central) or `1`.
    pub fn ruling_factor(&self, u: T, v: T) -> T {
        match self.kind {
            FamilyKind::Central => (u - v) * (u - v),
            FamilyKind::Paraboloid => T::one(),
        }
    }

    /// Point `x_z(u, v)` on the member `z` of the family.
    pub fn evaluate(&self, z: T, u: T, v: T) -> Result<Vector3<T>, QuadricError> {
        self.check_z(z)?;
        self.require_chart(u, v)?;
        Ok(self.point(z, u, v))
    }

    /// Unchecked ruling parametrization.
    pub fn point(&self, z: T, u: T, v: T) -> Vector3<T> {
        let [r1, r2, r3] = self.roots(z);
        let one = T::one();
        match self.kind {
            FamilyKind::Central => {
                Vector3::new(r1 * (one - u * v), r2 * (one + u * v), r3 * (u + v)) / (u - v)
            }
            FamilyKind::Paraboloid => {
                Vector3::new(r1 * (u + v), r2 * (u - v), T::lit(2.0) * u * v + z * T::lit(0.5))
            }
        }
    }

    /// Coefficients `[c00, c10, c01, c11]` of the plane section
    /// `w(u, v)·nᵀ(x_z(u, v) − p) = c00 + c10 u + c01 v + c11 uv` with `w = u − v`
    /// (central) or `1`.
    pub fn plane_section(&self, z: T, p: &Vector3<T>, n: &Vector3<T>) -> [T; 4] {
        let [r1, r2, r3] = self.roots(z);
        let pn = p.dot(n);
        match self.kind {
            FamilyKind::Central => {
                let c = r3 * n[2];
                [r1 * n[0] + r2 * n[1], c - pn, c + pn, r2 * n[1] - r1 * n[0]]
            }
            FamilyKind::Paraboloid => [
                z * T::lit(0.5) * n[2] - pn,
                r1 * n[0] + r2 * n[1],
                r1 * n[0] - r2 * n[1],
                T::lit(2.0) * n[2],
            ],
        }
    }

    /// `𝓑·∂_u x_z`; depends on `v` only.
    pub fn scaled_du(&self, z: T, v: T) -> Vector3<T> {
        let [r1, r2, r3] = self.roots(z);
        let one = T::one();
        let two = T::lit(2.0);
        match self.kind {
            FamilyKind::Central => Vector3::new(r1 * (v * v - one), -r2 * (one + v * v), -two * r3 * v),
            FamilyKind::Paraboloid => Vector3::new(r1, r2, two * v),
        }
    }

    /// `𝓑·∂_v x_z`; depends on `u` only.
    pub fn scaled_dv(&self, z: T, u: T) -> Vector3<T> {
        let [r1, r2, r3] = self.roots(z);
        let one = T::one();
        let two = T::lit(2.0);
        match self.kind {
            FamilyKind::Central => Vector3::new(r1 * (one - u * u), r2 * (one + u * u), two * r3 * u),
            FamilyKind::Paraboloid => Vector3::new(r1, -r2, two * u),
        }
    }

    /// Plain partial `∂_u x_z(u, v)`.
    pub fn du(&self, z: T, u: T, v: T) -> Vector3<T> {
        self.scaled_du(z, v) / self.ruling_factor(u, v)
    }

    /// Plain partial `∂_v x_z(u, v)`.
    pub fn dv(&self, z: T, u: T, v: T) -> Vector3<T> {
        self.scaled_dv(z, u) / self.ruling_factor(u, v)
    }

    /// Scaled tangent of the requested ruling family at `(u, v)`.
    pub fn ruling_direction(&self, z: T, u: T, v: T, ruling: Ruling) -> Vector3<T> {
        match ruling {
            Ruling::U => self.scaled_du(z, v),
            Ruling::V => self.scaled_dv(z, u),
        }
    }

    /// A point of the `U` ruling `v = const` that does not depend on `u`
    /// (its point at `u = ∞` for central families, `u = 0` for paraboloids).
    pub fn u_ruling_anchor(&self, z: T, v: T) -> Vector3<T> {
        let [r1, r2, r3] = self.roots(z);
        match self.kind {
            FamilyKind::Central => Vector3::new(-r1 * v, r2 * v, r3),
            FamilyKind::Paraboloid => Vector3::new(r1 * v, -r2 * v, z * T::lit(0.5)),
        }
    }

    /// A point of the `V` ruling `u = const` that does not depend on `v`.
    pub fn v_ruling_anchor(&self, z: T, u: T) -> Vector3<T> {
        let [r1, r2, r3] = self.roots(z);
        match self.kind {
            FamilyKind::Central => Vector3::new(r1 * u, -r2 * u, -r3),
            FamilyKind::Paraboloid => Vector3::new(r1 * u, r2 * u, z * T::lit(0.5)),
        }
    }

    /// The ruling through the fixed parameter as a linear-fractional pencil
    /// in the free parameter.
    pub(crate) fn pencil(&self, z: T, fixed: T, free: Ruling) -> RulingPencil<T> {
        let [r1, r2, r3] = self.roots(z);
        let one = T::one();
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let w = fixed;
        match (self.kind, free) {
            (FamilyKind::Central, Ruling::U) => RulingPencil {
                m0: Vector3::new(r1, r2, r3 * w),
                m1: Vector3::new(-r1 * w, r2 * w, r3),
                d0: -w,
                d1: one,
            },
            (FamilyKind::Central, Ruling::V) => RulingPencil {
                m0: Vector3::new(r1, r2, r3 * w),
                m1: Vector3::new(-r1 * w, r2 * w, r3),
                d0: w,
                d1: -one,
            },
            (FamilyKind::Paraboloid, Ruling::U) => RulingPencil {
                m0: Vector3::new(r1 * w, -r2 * w, z * half),
                m1: Vector3::new(r1, r2, two * w),
                d0: one,
                d1: T::zero(),
            },
            (FamilyKind::Paraboloid, Ruling::V) => RulingPencil {
                m0: Vector3::new(r1 * w, r2 * w, z * half),
                m1: Vector3::new(r1, -r2, two * w),
                d0: one,
                d1: T::zero(),
            },
        }
    }

    /// Ivory affinity from the reference member to `x_z`.
    pub fn ivory_map(&self, z: T, p: &Vector3<T>) -> Result<Vector3<T>, QuadricError> {
        self.check_z(z)?;
        self.require_on(T::zero(), p)?;
        Ok(self.ivory_unchecked(T::zero(), z, p))
    }

    /// Ivory affinity between two members of the same type (`z_from` to `z_to`).
    pub fn ivory_between(&self, z_from: T, z_to: T, p: &Vector3<T>) -> Result<Vector3<T>, QuadricError> {
        for i in 0..self.diag_count() {
            let ratio = (self.a[i] - z_to) / (self.a[i] - z_from);
            if !(ratio > T::zero()) {
                let (lo, hi) = self.z_range();
                return Err(QuadricError::OutOfRange {
                    z: z_to.to_f64_lossy(),
                    lo: lo.to_f64_lossy(),
                    hi: hi.to_f64_lossy(),
                });
            }
        }
        self.require_on(z_from, p)?;
        Ok(self.ivory_unchecked(z_from, z_to, p))
    }

    pub(crate) fn ivory_unchecked(&self, z_from: T, z_to: T, p: &Vector3<T>) -> Vector3<T> {
        let mut q = *p;
        for i in 0..self.diag_count() {
            q[i] *= ((self.a[i] - z_to) / (self.a[i] - z_from)).sqrt();
        }
        if self.kind == FamilyKind::Paraboloid {
            q[2] += (z_to - z_from) * T::lit(0.5);
        }
        q
    }

    /// Projective normal `N̂_z = R_z⁻¹(Ap + B)` of the member through `p`.
    pub fn normal_hat(&self, z: T, p: &Vector3<T>) -> Result<Vector3<T>, QuadricError> {
        self.require_on(z, p)?;
        Ok(self.normal_hat_unchecked(z, p))
    }

    pub fn normal_hat_unchecked(&self, z: T, p: &Vector3<T>) -> Vector3<T> {
        match self.kind {
            FamilyKind::Central => Vector3::new(
                p[0] / (self.a[0] - z),
                p[1] / (self.a[1] - z),
                p[2] / (self.a[2] - z),
            ),
            FamilyKind::Paraboloid => {
                Vector3::new(p[0] / (self.a[0] - z), p[1] / (self.a[1] - z), -T::one())
            }
        }
    }

    /// `𝓐 > 0` with `𝓐² = −a₁a₂a₃` (central) or `−a₁a₂` (paraboloid).
    pub fn area_constant(&self) -> T {
        match self.kind {
            FamilyKind::Central => (-(self.a[0] * self.a[1] * self.a[2])).sqrt(),
            FamilyKind::Paraboloid => (-(self.a[0] * self.a[1])).sqrt(),
        }
    }

    /// Orientation of the ruling chart: the sign `κ` in `𝓑 x_u × x_v = −2κ𝓐 N̂`.
    pub fn chart_orientation(&self) -> T {
        match self.kind {
            FamilyKind::Central => T::one(),
            FamilyKind::Paraboloid => -T::one(),
        }
    }

    /// Gauss curvature of the member `z` at `p`: `−1/(𝓐_z²|N̂_z|⁴)`.
    pub fn gauss_curvature(&self, z: T, p: &Vector3<T>) -> T {
        let mut a2 = -T::one();
        for i in 0..self.diag_count() {
            a2 *= self.a[i] - z;
        }
        let n2 = self.normal_hat_unchecked(z, p).norm_squared();
        -T::one() / (a2 * n2 * n2)
    }

    /// Elliptic coordinates of `q`: all spectral parameters whose member passes through `q`.
    pub fn elliptic_coords(&self, q: &Vector3<T>) -> Result<EllipticCoords<T>, QuadricError> {
        let n = self.diag_count();
        let mut poles: Vec<T> = self.a[..n].to_vec();
        poles.sort_by(|x, y| x.partial_cmp(y).expect("finite parameters"));
        let poly = |z: T| self.cleared_value(z, q);
        let scale = T::one() + q.norm_squared() + poles.iter().fold(T::zero(), |m, p| m.max(p.abs()));
        let mut brackets: Vec<(T, T)> = Vec::new();
        // Below the smallest pole the cleared value has the sign of -1 far away.
        let mut lo = poles[0] - T::one();
        let mut steps = 0;
        while poly(lo) * poly(poles[0]) > T::zero() {
            lo = poles[0] - (poles[0] - lo) * T::lit(2.0);
            steps += 1;
            if steps > 200 {
                return Err(QuadricError::ComplexRoots);
            }
        }
        brackets.push((lo, poles[0]));
        for w in poles.windows(2) {
            brackets.push((w[0], w[1]));
        }
        if self.kind == FamilyKind::Paraboloid {
            let top = poles[n - 1];
            let mut hi = top + T::one();
            let mut steps = 0;
            while poly(hi) * poly(top) > T::zero() {
                hi = top + (hi - top) * T::lit(2.0);
                steps += 1;
                if steps > 200 {
                    return Err(QuadricError::ComplexRoots);
                }
            }
            brackets.push((top, hi));
        }
        let mut roots = Vec::with_capacity(brackets.len());
        for (a, b) in brackets {
            let (fa, fb) = (poly(a), poly(b));
            if fa == T::zero() || fb == T::zero() {
                return Err(QuadricError::DegeneratePoint);
            }
            if fa * fb > T::zero() {
                return Err(QuadricError::ComplexRoots);
            }
            roots.push(bisect(&poly, a, b, fa));
        }
        for w in roots.windows(2) {
            if (w[1] - w[0]).abs() <= self.tol.deg * scale {
                return Err(QuadricError::DegeneratePoint);
            }
        }
        for r in &roots {
            for p in &poles {
                if (*r - *p).abs() <= self.tol.deg * scale {
                    return Err(QuadricError::DegeneratePoint);
                }
            }
        }
        Ok(EllipticCoords { roots })
    }

    /// `Q_z(q)` multiplied by the product of the pole factors; a cubic in `z`.
    fn cleared_value(&self, z: T, q: &Vector3<T>) -> T {
        let [a1, a2, a3] = self.a;
        match self.kind {
            FamilyKind::Central => {
                q[0] * q[0] * (a2 - z) * (a3 - z) + q[1] * q[1] * (a1 - z) * (a3 - z)
                    + q[2] * q[2] * (a1 - z) * (a2 - z)
                    - (a1 - z) * (a2 - z) * (a3 - z)
            }
            FamilyKind::Paraboloid => {
                q[0] * q[0] * (a2 - z) + q[1] * q[1] * (a1 - z)
                    + (z - T::lit(2.0) * q[2]) * (a1 - z) * (a2 - z)
            }
        }
    }

    /// Solves the tangency configuration for the free parameter of the partner
    /// point on `x_z`: the point `x_z` on the ruling with `fixed` held constant
    /// lies in the tangent plane of the reference member at `x_0(u0, v0)`.
    ///
    /// With `free = Ruling::U` this is the map `(u0, v0, v1) ↦ u1`.
    pub fn tc_solve(&self, z: T, u0v0: (T, T), fixed: T, free: Ruling) -> Result<T, QuadricError> {
        self.check_z(z)?;
        let (u0, v0) = u0v0;
        self.require_chart(u0, v0)?;
        let x0 = self.point(T::zero(), u0, v0);
        let n = self.normal_hat_unchecked(T::zero(), &x0);
        let pen = self.pencil(z, fixed, free);
        let coef = (pen.m1 - x0 * pen.d1).dot(&n);
        let cons = (pen.m0 - x0 * pen.d0).dot(&n);
        let scale = (pen.m0.norm() + pen.m1.norm() + x0.norm() * (pen.d0.abs() + pen.d1.abs())) * n.norm();
        let small = T::lit(1e-12) * (T::one() + scale);
        if coef.abs() <= small {
            return Err(QuadricError::DegenerateHomography);
        }
        let s = -cons / coef;
        match free {
            Ruling::U => self.require_chart(s, fixed)?,
            Ruling::V => self.require_chart(fixed, s)?,
        }
        Ok(s)
    }

    /// `u1` with `x_z(u1, v1)` in the tangent plane at `x_0(u0, v0)`.
    pub fn tc_solve_u1(&self, z: T, u0v0: (T, T), v1: T) -> Result<T, QuadricError> {
        self.tc_solve(z, u0v0, v1, Ruling::U)
    }

    /// Rigid motion provided by the Ivory affinity between `x_0` and `x_z`.
    ///
    /// It maps `x_0(p0) ↦ x_z(p0)`, `x_z(p1) ↦ x_0(p1)` and the corresponding ruling
    /// tangents. Mixed ruling choices compose with the reflection in the tangent
    /// plane at `x_0(p0)`.
    pub fn rmpia(
        &self,
        z: T,
        p0: (T, T),
        p1: (T, T),
        ruling0: Ruling,
        ruling1: Ruling,
    ) -> Result<RigidMotion<T>, QuadricError> {
        self.check_z(z)?;
        let m = self.rmpia_between(T::zero(), z, p0, p1, ruling0)?;
        if ruling0 == ruling1 {
            return Ok(m);
        }
        let x00 = self.point(T::zero(), p0.0, p0.1);
        let n = self.normal_hat_unchecked(T::zero(), &x00).normalize();
        let refl = Matrix3::identity() - n * n.transpose() * T::lit(2.0);
        let rot = m.rotation * refl;
        let xz0 = self.point(z, p0.0, p0.1);
        Ok(RigidMotion::new(rot, xz0 - rot * x00))
    }

    /// Ivory rigid motion between arbitrary members `za`, `zb`:
    /// `x_za(p) ↦ x_zb(p)` and `x_zb(q) ↦ x_za(q)`.
    pub fn rmpia_between(
        &self,
        za: T,
        zb: T,
        p: (T, T),
        q: (T, T),
        ruling: Ruling,
    ) -> Result<RigidMotion<T>, QuadricError> {
        self.require_chart(p.0, p.1)?;
        self.require_chart(q.0, q.1)?;
        let (s, t) = self.ivory_frames(za, zb, p, q, ruling);
        let det = normalized_det(&s);
        if det.abs() <= T::lit(1e-8) {
            return Err(QuadricError::DegenerateFrame { det: det.to_f64_lossy() });
        }
        let rot = gram_schmidt(&t) * gram_schmidt(&s).transpose();
        let xa = self.point(za, p.0, p.1);
        let xb = self.point(zb, p.0, p.1);
        Ok(RigidMotion::new(rot, xb - rot * xa))
    }

    /// Source and target triples `[V, w_a(p), w_b(q)]`, `[−W, w_b(p), w_a(q)]`.
    pub fn ivory_frames(
        &self,
        za: T,
        zb: T,
        p: (T, T),
        q: (T, T),
        ruling: Ruling,
    ) -> (Matrix3<T>, Matrix3<T>) {
        let v = self.point(zb, q.0, q.1) - self.point(za, p.0, p.1);
        let w = self.point(zb, p.0, p.1) - self.point(za, q.0, q.1);
        let wa_p = self.ruling_direction(za, p.0, p.1, ruling);
        let wb_p = self.ruling_direction(zb, p.0, p.1, ruling);
        let wa_q = self.ruling_direction(za, q.0, q.1, ruling);
        let wb_q = self.ruling_direction(zb, q.0, q.1, ruling);
        (Matrix3::from_columns(&[v, wa_p, wb_q]), Matrix3::from_columns(&[-w, wb_p, wa_q]))
    }
}

/// Ascending spectral coordinates of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticCoords<T: Real> {
    pub roots: Vec<T>,
}

impl<T: Real> EllipticCoords<T> {
    /// Largest `|N̂_i · N̂_j| / (|N̂_i||N̂_j|)` over pairs of members through `q`.
    pub fn lame_defect(&self, family: &ConfocalFamily<T>, q: &Vector3<T>) -> T {
        let normals: Vec<Vector3<T>> =
            self.roots.iter().map(|z| family.normal_hat_unchecked(*z, q).normalize()).collect();
        let mut worst = T::zero();
        for i in 0..normals.len() {
            for j in i + 1..normals.len() {
                worst = worst.max(normals[i].dot(&normals[j]).abs());
            }
        }
        worst
    }

    /// Largest relative residual `|Q_{z_i}(q)|`.
    pub fn max_residual(&self, family: &ConfocalFamily<T>, q: &Vector3<T>) -> T {
        self.roots.iter().fold(T::zero(), |m, z| m.max(family.relative_residual(*z, q)))
    }
}

fn bisect<T: Real>(f: &impl Fn(T) -> T, mut a: T, mut b: T, mut fa: T) -> T {
    for _ in 0..200 {
        let m = (a + b) * T::lit(0.5);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == T::zero() {
            return m;
        }
        if fm * fa < T::zero() {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    (a + b) * T::lit(0.5)
}

/// Columns orthonormalized in order (classical Gram–Schmidt, re-orthogonalized once).
pub fn gram_schmidt<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let mut q = Matrix3::zeros();
    for j in 0..3 {
        let mut w = m.column(j).into_owned();
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.column(k).into_owned();
                w -= qk * qk.dot(&w);
            }
        }
        q.set_column(j, &w.normalize());
    }
    q
}

fn normalized_det<T: Real>(m: &Matrix3<T>) -> T {
    let mut n = *m;
    for j in 0..3 {
        let c = n.column(j).norm();
        if c == T::zero() {
            return T::zero();
        }
        n.set_column(j, &(m.column(j) / c));
    }
    n.determinant()
}
