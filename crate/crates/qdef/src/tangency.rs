//! Tangency configuration and its Δ-quantities.
//!
//! Two points `x_0(u0, v0)` on the reference member and `x_z(u1, v1)` on the
//! member `z` are *in tangency* when `x_z(u1, v1)` lies in the tangent plane of
//! `x_0` at `x_0(u0, v0)`. The relation is symmetric under the Ivory
//! correspondence and induces a homography between the four ruling parameters.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::quadric::{ConfocalFamily, QuadricError, Ruling};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TangencyError {
    #[error(transparent)]
    Quadric(#[from] QuadricError),
    #[error("points are not in tangency (residual {residual})")]
    NotInTangency { residual: f64 },
}

/// Tangency normal `m = 𝓑₁ x_{z,u}(v1) × V₀¹` and its partner
/// `m′ = 𝓑₁ x_{z,v}(u1) × V₀¹`, with the solved `u1`.
///
/// Both are formed against a ruling anchor instead of `x_z(u1, v1)` itself;
/// the difference lies along the ruling and drops out of the cross product.
pub fn m_field<T: Real>(
    family: &ConfocalFamily<T>,
    z: T,
    p0: (T, T),
    v1: T,
) -> Result<(Vector3<T>, Vector3<T>, T), QuadricError> {
    let u1 = family.tc_solve_u1(z, p0, v1)?;
    let x0 = family.point(T::zero(), p0.0, p0.1);
    let m = family.scaled_du(z, v1).cross(&(family.u_ruling_anchor(z, v1) - x0));
    let mp = family.scaled_dv(z, u1).cross(&(family.v_ruling_anchor(z, u1) - x0));
    Ok((m, mp, u1))
}

/// Coefficients `[c0, c1, c2]` of `m(v1) = c0 + c1 v1 + c2 v1²` at fixed `(z, u0, v0)`.
pub fn m_poly<T: Real>(family: &ConfocalFamily<T>, z: T, p0: (T, T)) -> [Vector3<T>; 3] {
    let x0 = family.point(T::zero(), p0.0, p0.1);
    let one = T::one();
    let half = T::lit(0.5);
    // Ruling tangent is quadratic and the anchor affine in v1; the cubic term cancels.
    let (fm, f0, fp) = (family.scaled_du(z, -one), family.scaled_du(z, T::zero()), family.scaled_du(z, one));
    let d0 = f0;
    let d1 = (fp - fm) * half;
    let d2 = (fp + fm) * half - f0;
    let a0 = family.u_ruling_anchor(z, T::zero()) - x0;
    let a1 = family.u_ruling_anchor(z, one) - family.u_ruling_anchor(z, T::zero());
    [d0.cross(&a0), d0.cross(&a1) + d1.cross(&a0), d1.cross(&a1) + d2.cross(&a0)]
}

/// `m` evaluated from its quadratic coefficients.
pub fn poly_eval<T: Real>(c: &[Vector3<T>; 3], v: T) -> Vector3<T> {
    c[0] + (c[1] + c[2] * v) * v
}

/// Analytic `∂_{v1} m`.
pub fn poly_derivative<T: Real>(c: &[Vector3<T>; 3], v: T) -> Vector3<T> {
    c[1] + c[2] * (T::lit(2.0) * v)
}

/// `Δ⁻` for a pair of `U` rulings `v = va` on `x_0` and `v = vb` on `x_z`.
///
/// It does not depend on where along either ruling the points sit.
pub fn delta_minus<T: Real>(family: &ConfocalFamily<T>, z: T, va: T, vb: T) -> T {
    let m = family.scaled_du(z, vb).cross(&(family.u_ruling_anchor(z, vb) - family.u_ruling_anchor(T::zero(), va)));
    -m.dot(&family.scaled_du(T::zero(), va))
}

/// `Δ′⁻` for the `U` ruling `v = v0` on `x_0` and the `V` ruling `u = u1` on `x_z`.
pub fn delta_prime_minus<T: Real>(family: &ConfocalFamily<T>, z: T, v0: T, u1: T) -> T {
    let mp = family.scaled_dv(z, u1).cross(&(family.v_ruling_anchor(z, u1) - family.u_ruling_anchor(T::zero(), v0)));
    -mp.dot(&family.scaled_du(T::zero(), v0))
}

/// Full tangency state of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcState<T: Real> {
    pub z: T,
    pub u0: T,
    pub v0: T,
    pub u1: T,
    pub v1: T,
    pub m: Vector3<T>,
    pub m_prime: Vector3<T>,
    pub delta_minus: T,
    pub delta_plus: T,
    pub delta_prime_minus: T,
    pub delta_prime_plus: T,
    /// `𝓝₀ = κ/(𝓐𝓑₀|N̂₀⁰|²)`.
    pub n0: T,
    /// `𝓝₁ = κ/(𝓐𝓑₁|N̂₀¹|²)`.
    pub n1: T,
    pub area: T,
}

impl<T: Real> TcState<T> {
    /// Solves for `u1` and populates the state.
    pub fn solve(family: &ConfocalFamily<T>, z: T, p0: (T, T), v1: T) -> Result<Self, QuadricError> {
        let u1 = family.tc_solve_u1(z, p0, v1)?;
        Ok(Self::assemble(family, z, p0.0, p0.1, u1, v1))
    }

    /// `ρ₀ = 𝓐|N̂₀⁰|²`.
    pub fn rho0(&self, family: &ConfocalFamily<T>) -> T {
        let x = family.point(T::zero(), self.u0, self.v0);
        self.area * family.normal_hat_unchecked(T::zero(), &x).norm_squared()
    }

    fn assemble(family: &ConfocalFamily<T>, z: T, u0: T, v0: T, u1: T, v1: T) -> Self {
        let zero = T::zero();
        let x0 = family.point(zero, u0, v0);
        let m = family.scaled_du(z, v1).cross(&(family.u_ruling_anchor(z, v1) - x0));
        let mp = family.scaled_dv(z, u1).cross(&(family.v_ruling_anchor(z, u1) - x0));
        let du0 = family.scaled_du(zero, v0);
        let dv0 = family.scaled_dv(zero, u0);
        let area = family.area_constant();
        let kappa = family.chart_orientation();
        let n_hat0 = family.normal_hat_unchecked(zero, &x0).norm_squared();
        let x01 = family.point(zero, u1, v1);
        let n_hat1 = family.normal_hat_unchecked(zero, &x01).norm_squared();
        Self {
            z,
            u0,
            v0,
            u1,
            v1,
            m,
            m_prime: mp,
            delta_minus: -m.dot(&du0),
            delta_plus: m.dot(&dv0),
            delta_prime_minus: -mp.dot(&du0),
            delta_prime_plus: mp.dot(&dv0),
            n0: kappa / (area * family.ruling_factor(u0, v0) * n_hat0),
            n1: kappa / (area * family.ruling_factor(u1, v1) * n_hat1),
            area,
        }
    }

    /// Coefficients of `du1 = a du0 + b dv0 + c dv1` for the map `(u0, v0, v1) ↦ u1`.
    pub fn du1_coefficients(&self) -> (T, T, T) {
        let k = -self.n0 / self.z;
        (k * self.delta_prime_minus, k * self.delta_prime_plus, -self.delta_prime_plus / self.delta_plus)
    }

    /// Relative residuals of `Δ⁻Δ′⁺ = z²/(𝓝₀𝓝₁) = Δ⁺Δ′⁻`.
    pub fn product_identity_residual(&self) -> T {
        let target = self.z * self.z / (self.n0 * self.n1);
        let a = (self.delta_minus * self.delta_prime_plus - target).abs();
        let b = (self.delta_plus * self.delta_prime_minus - target).abs();
        a.max(b) / target.abs()
    }
}

/// Tangency state for a given pair; fails when the pair is not in tangency.
pub fn deltas<T: Real>(
    family: &ConfocalFamily<T>,
    z: T,
    u0: T,
    v0: T,
    u1: T,
    v1: T,
) -> Result<TcState<T>, TangencyError> {
    family.check_z(z)?;
    family.evaluate(T::zero(), u0, v0)?;
    family.evaluate(z, u1, v1)?;
    let r = tc_residual(family, z, (u0, v0), (u1, v1));
    if r > T::lit(1e-9) {
        return Err(TangencyError::NotInTangency { residual: r.to_f64_lossy() });
    }
    Ok(TcState::assemble(family, z, u0, v0, u1, v1))
}

/// Scale-free `(V₀¹)ᵀN̂₀⁰`: zero exactly in tangency.
pub fn tc_residual<T: Real>(family: &ConfocalFamily<T>, z: T, p0: (T, T), p1: (T, T)) -> T {
    let x0 = family.point(T::zero(), p0.0, p0.1);
    let v = family.point(z, p1.0, p1.1) - x0;
    let n = family.normal_hat_unchecked(T::zero(), &x0);
    v.dot(&n).abs() / (n.norm() * T::one().max(v.norm()))
}

/// `(V₀¹)ᵀN̂₀⁰ − (V₁⁰)ᵀN̂₀¹` for an arbitrary pair.
pub fn tc_symmetry_defect<T: Real>(family: &ConfocalFamily<T>, z: T, p0: (T, T), p1: (T, T)) -> T {
    let zero = T::zero();
    let x00 = family.point(zero, p0.0, p0.1);
    let x01 = family.point(zero, p1.0, p1.1);
    let a = (family.point(z, p1.0, p1.1) - x00).dot(&family.normal_hat_unchecked(zero, &x00));
    let b = (family.point(z, p0.0, p0.1) - x01).dot(&family.normal_hat_unchecked(zero, &x01));
    a - b
}

/// `|V₀¹|² − |V₁⁰|²`, relative to `max(1, |V₀¹|²)`.
pub fn length_defect<T: Real>(family: &ConfocalFamily<T>, z: T, p0: (T, T), p1: (T, T)) -> T {
    let zero = T::zero();
    let a = (family.point(z, p1.0, p1.1) - family.point(zero, p0.0, p0.1)).norm_squared();
    let b = (family.point(z, p0.0, p0.1) - family.point(zero, p1.0, p1.1)).norm_squared();
    (a - b).abs() / T::one().max(a)
}

fn unit_normal0<T: Real>(family: &ConfocalFamily<T>, u0: T, v0: T) -> Vector3<T> {
    let x0 = family.point(T::zero(), u0, v0);
    family.normal_hat_unchecked(T::zero(), &x0).normalize()
}

/// `x_{z,v}(u1, v1)ᵀ (I − 2NNᵀ) m`, relative to `|x_{z,v}||m|`.
pub fn reflection_residual<T: Real>(family: &ConfocalFamily<T>, s: &TcState<T>) -> T {
    let n = unit_normal0(family, s.u0, s.v0);
    let refl = Matrix3::identity() - n * n.transpose() * T::lit(2.0);
    let xv = family.dv(s.z, s.u1, s.v1);
    xv.dot(&(refl * s.m)).abs() / (xv.norm() * s.m.norm())
}

/// `𝓑₁ (x_{z,u}·N)(N·x_{z,v}) + z` with unit `N` at `x_0(u0, v0)`, relative to `max(1, |z|)`.
pub fn projection_residual<T: Real>(family: &ConfocalFamily<T>, s: &TcState<T>) -> T {
    let n = unit_normal0(family, s.u0, s.v0);
    let b1 = family.ruling_factor(s.u1, s.v1);
    let val = b1 * family.du(s.z, s.u1, s.v1).dot(&n) * n.dot(&family.dv(s.z, s.u1, s.v1));
    (val + s.z).abs() / T::one().max(s.z.abs())
}

/// `Nᵀ(2z m + m × ∂_{v1} m)`, relative to `|m|(2|z||m| + |∂m|)`.
pub fn integrability_residual<T: Real>(family: &ConfocalFamily<T>, s: &TcState<T>) -> T {
    let c = m_poly(family, s.z, (s.u0, s.v0));
    let m = poly_eval(&c, s.v1);
    let dm = poly_derivative(&c, s.v1);
    let n = unit_normal0(family, s.u0, s.v0);
    let val = n.dot(&(m * (T::lit(2.0) * s.z) + m.cross(&dm)));
    let scale = m.norm() * (T::lit(2.0) * s.z.abs() * m.norm() + dm.norm());
    val.abs() / scale
}

/// The tangency state with the roles of the two points exchanged.
pub fn exchanged<T: Real>(family: &ConfocalFamily<T>, s: &TcState<T>) -> TcState<T> {
    TcState::assemble(family, s.z, s.u1, s.v1, s.u0, s.v0)
}

/// Free parameter on the ruling of the given family through `fixed` on `x_z`
/// in tangency with `p0`; thin wrapper re-exported for the `V` family.
pub fn tc_solve_v1<T: Real>(family: &ConfocalFamily<T>, z: T, p0: (T, T), u1: T) -> Result<T, QuadricError> {
    family.tc_solve(z, p0, u1, Ruling::V)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<ConfocalFamily<f64>> {
        vec![
            ConfocalFamily::central(4.0, -1.0, 1.0).unwrap(),
            ConfocalFamily::paraboloid(2.0, -3.0).unwrap(),
        ]
    }

    fn samples(f: &ConfocalFamily<f64>, n: usize, seed: u64) -> Vec<TcState<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let z: f64 = rng.random_range(-0.5..0.8);
            let (u0, v0, v1): (f64, f64, f64) =
                (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if z.abs() < 0.05 || (u0 - v0).abs() < 0.3 {
                continue;
            }
            let Ok(s) = TcState::solve(f, z, (u0, v0), v1) else { continue };
            if (s.u1 - s.v1).abs() < 0.3 || s.u1.abs() > 20.0 {
                continue;
            }
            out.push(s);
        }
        out
    }

    #[test]
    fn m_is_orthogonal_to_spanning_vectors() {
        for f in families() {
            for s in samples(&f, 50, 3) {
                let v = f.point(s.z, s.u1, s.v1) - f.point(0.0, s.u0, s.v0);
                let w = f.scaled_du(s.z, s.v1);
                let m = s.m;
                assert!(m.dot(&v).abs() <= 1e-12 * m.norm() * v.norm() * 10.0);
                assert!(m.dot(&w).abs() <= 1e-12 * m.norm() * w.norm());
                let direct = w.cross(&v);
                assert!((direct - m).norm() <= 1e-12 * (1.0 + m.norm()) * 10.0);
            }
        }
    }

    #[test]
    fn m_is_quadratic_in_v1() {
        for f in families() {
            let (z, p0) = (0.4, (1.3, -0.7));
            let c = m_poly(&f, z, p0);
            for k in 0..7 {
                let v1 = -1.5 + 0.5 * k as f64;
                let (m, _, _) = m_field(&f, z, p0, v1).unwrap();
                assert!((poly_eval(&c, v1) - m).norm() <= 1e-9 * (1.0 + m.norm()));
            }
        }
    }

    #[test]
    fn static_identities() {
        for f in families() {
            for s in samples(&f, 100, 7) {
                let p0 = (s.u0, s.v0);
                let p1 = (s.u1, s.v1);
                assert!(tc_residual(&f, s.z, p0, p1) <= 1e-10);
                assert!(tc_symmetry_defect(&f, s.z, p0, p1).abs() <= 1e-10 * (1.0 + s.u1.abs()));
                assert!(length_defect(&f, s.z, p0, p1) <= 1e-10);
                assert!(reflection_residual(&f, &s) <= 1e-9);
                assert!(projection_residual(&f, &s) <= 1e-9);
                assert!(integrability_residual(&f, &s) <= 1e-9);
                assert!(s.product_identity_residual() <= 1e-9);
            }
        }
    }

    #[test]
    fn tc_symmetry_off_tangency() {
        for f in families() {
            let d = tc_symmetry_defect(&f, 0.3, (1.1, -0.4), (-0.6, 0.9));
            assert!(d.abs() <= 1e-12);
        }
    }

    #[test]
    fn exchange_symmetry() {
        for f in families() {
            for s in samples(&f, 30, 11) {
                let e = exchanged(&f, &s);
                let scale = 1.0 + s.delta_minus.abs() + s.delta_plus.abs() + s.delta_prime_minus.abs();
                assert!((e.delta_minus - s.delta_minus).abs() <= 1e-9 * scale);
                assert!((e.delta_plus - s.delta_prime_minus).abs() <= 1e-9 * scale);
                assert!((e.delta_prime_minus - s.delta_plus).abs() <= 1e-9 * scale);
                assert!((e.delta_prime_plus - s.delta_prime_plus).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn delta_minus_is_ruling_invariant() {
        for f in families() {
            for s in samples(&f, 20, 5) {
                let d = delta_minus(&f, s.z, s.v0, s.v1);
                assert!((d - s.delta_minus).abs() <= 1e-10 * (1.0 + d.abs()));
            }
        }
    }

    #[test]
    fn delta_prime_minus_is_ruling_invariant() {
        for f in families() {
            for s in samples(&f, 20, 6) {
                let d = delta_prime_minus(&f, s.z, s.v0, s.u1);
                assert!((d - s.delta_prime_minus).abs() <= 1e-10 * (1.0 + d.abs()));
            }
        }
    }

    #[test]
    fn du1_partials_converge() {
        for f in families() {
            for s in samples(&f, 20, 13) {
                let (a, b, c) = s.du1_coefficients();
                let solve = |u0: f64, v0: f64, v1: f64| f.tc_solve_u1(s.z, (u0, v0), v1).unwrap();
                let fd = |h: f64| {
                    (
                        (solve(s.u0 + h, s.v0, s.v1) - solve(s.u0 - h, s.v0, s.v1)) / (2.0 * h),
                        (solve(s.u0, s.v0 + h, s.v1) - solve(s.u0, s.v0 - h, s.v1)) / (2.0 * h),
                        (solve(s.u0, s.v0, s.v1 + h) - solve(s.u0, s.v0, s.v1 - h)) / (2.0 * h),
                    )
                };
                let err = |h: f64| {
                    let (x, y, w) = fd(h);
                    (x - a).abs().max((y - b).abs()).max((w - c).abs())
                };
                let (e1, e2) = (err(2e-4), err(1e-4));
                let scale = 1.0 + a.abs() + b.abs() + c.abs();
                assert!(e2 <= 1e-5 * scale, "{e2}");
                if e1 > 1e-9 * scale {
                    assert!(e1 / e2 > 3.0, "{}", e1 / e2);
                }
            }
        }
    }

    #[test]
    fn gauss_curvature_law() {
        for f in families() {
            let (u, v) = (1.4, -0.3);
            let h = 1e-4;
            let x = |u: f64, v: f64| f.point(0.0, u, v);
            let xu = (x(u + h, v) - x(u - h, v)) / (2.0 * h);
            let xv = (x(u, v + h) - x(u, v - h)) / (2.0 * h);
            let xuu = (x(u + h, v) - x(u, v) * 2.0 + x(u - h, v)) / (h * h);
            let xvv = (x(u, v + h) - x(u, v) * 2.0 + x(u, v - h)) / (h * h);
            let xuv = (x(u + h, v + h) - x(u + h, v - h) - x(u - h, v + h) + x(u - h, v - h)) / (4.0 * h * h);
            let n = xu.cross(&xv).normalize();
            let (e, ff, g) = (xu.dot(&xu), xu.dot(&xv), xv.dot(&xv));
            let (l, mm, nn) = (xuu.dot(&n), xuv.dot(&n), xvv.dot(&n));
            let k = (l * nn - mm * mm) / (e * g - ff * ff);
            let exact = f.gauss_curvature(0.0, &x(u, v));
            assert!((k - exact).abs() <= 1e-5 * exact.abs(), "{k} {exact}");
        }
    }

    #[test]
    fn deltas_rejects_non_tangent_pairs() {
        let f = &families()[0];
        assert!(matches!(deltas(f, 0.3, 1.2, -0.5, 0.4, 0.9), Err(TangencyError::NotInTangency { .. })));
        let s = TcState::solve(f, 0.3, (1.2, -0.5), 0.9).unwrap();
        let d = deltas(f, 0.3, 1.2, -0.5, s.u1, 0.9).unwrap();
        assert!((d.delta_minus - s.delta_minus).abs() <= 1e-12 * (1.0 + s.delta_minus.abs()));
    }

    #[test]
    fn v_family_solve_is_tangent() {
        for f in families() {
            let v1 = tc_solve_v1(&f, 0.35, (1.2, -0.5), 0.8).unwrap();
            assert!(tc_residual(&f, 0.35, (1.2, -0.5), (0.8, v1)) <= 1e-10);
        }
    }
}
