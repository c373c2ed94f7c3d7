//! Geodesics on the reference member, Jacobi's caustic invariant, Chasles'
//! orthogonality of normals along common tangents, and confocal billiards.
//!
//! A line `x + s v` meets the member `z` where
//! `Q_z(x + s v) = α s² + 2β s + γ` vanishes; it is tangent iff `β² = αγ`.
//! Clearing the pole factors turns `β² − αγ` into a quadratic `P(z)` whose
//! two roots are the two confocal members the line touches.

use nalgebra::Vector3;
use thiserror::Error;

use crate::quadric::{ConfocalFamily, FamilyKind, QuadricError};

type Family = ConfocalFamily<f64>;

/// Largest relative normal component accepted for an initial direction.
const TANGENT_TOL: f64 = 1e-8;
/// Geodesic samples must stay this close to the member after projection.
const SURFACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Quadric(#[from] QuadricError),
    #[error("direction is not tangent (relative normal component {defect})")]
    NotTangent { defect: f64 },
    #[error("direction vanishes")]
    ZeroDirection,
    #[error("step {h} too large (surface residual {residual})")]
    StepTooLarge { h: f64, residual: f64 },
    #[error("caustic root collides with the reference member (z_c = {z})")]
    RootCollision { z: f64 },
    #[error("chord escapes the table at bounce {bounce}")]
    NoIntersection { bounce: usize },
}

/// Coefficients `(α, β, γ)` of `Q_z(x + s v) = α s² + 2β s + γ`.
pub fn line_section(f: &Family, z: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> (f64, f64, f64) {
    let n = f.normal_hat_unchecked(z, x);
    let alpha = pole_quadratic(f, z, v);
    (alpha, v.dot(&n), f.quadric_value(z, x))
}

/// `vᵀ R_z⁻¹A v`.
fn pole_quadratic(f: &Family, z: f64, v: &Vector3<f64>) -> f64 {
    let a = f.params();
    a.iter().enumerate().map(|(i, ai)| v[i] * v[i] / (ai - z)).sum()
}

/// Relative tangency defect `|β² − αγ| / (β² + |αγ|)` of a line to the member `z`.
pub fn tangency_residual(f: &Family, z: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let (al, be, ga) = line_section(f, z, x, v);
    let scale = be * be + (al * ga).abs();
    if scale == 0.0 {
        return 0.0;
    }
    (be * be - al * ga).abs() / scale
}

/// `P(z)`: the tangency discriminant `β² − αγ` times the pole factors.
fn caustic_poly(f: &Family, z: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let a = f.params();
    let d: Vec<f64> = a.iter().map(|ai| ai - z).collect();
    let w = |i: usize, j: usize| x[i] * v[j] - x[j] * v[i];
    match f.kind() {
        FamilyKind::Central => {
            let pairs = -(w(0, 1).powi(2) * d[2] + w(0, 2).powi(2) * d[1] + w(1, 2).powi(2) * d[0]);
            pairs + v[0] * v[0] * d[1] * d[2] + v[1] * v[1] * d[0] * d[2] + v[2] * v[2] * d[0] * d[1]
        }
        FamilyKind::Paraboloid => {
            let lin = x[0] * v[0] * d[1] + x[1] * v[1] * d[0];
            let tang = v[0] * v[0] * d[1] + v[1] * v[1] * d[0];
            -w(0, 1).powi(2) - 2.0 * v[2] * lin + v[2] * v[2] * d[0] * d[1] + (2.0 * x[2] - z) * tang
        }
    }
}

/// Coefficients `[c0, c1, c2]` of `P(z)`; `c2 = |v|²`.
pub fn caustic_coefficients(f: &Family, x: &Vector3<f64>, v: &Vector3<f64>) -> [f64; 3] {
    let (p0, p1, m1) = (caustic_poly(f, 0.0, x, v), caustic_poly(f, 1.0, x, v), caustic_poly(f, -1.0, x, v));
    [p0, 0.5 * (p1 - m1), 0.5 * (p1 + m1) - p0]
}

/// Spectral parameters of the two confocal members the line touches, ascending.
///
/// `None` when the line touches no real pair.
pub fn line_caustics(f: &Family, x: &Vector3<f64>, v: &Vector3<f64>) -> Option<[f64; 2]> {
    let [c0, c1, c2] = caustic_coefficients(f, x, v);
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 || c2 == 0.0 {
        return None;
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let (r1, r2) = (q / c2, if q != 0.0 { c0 / q } else { 0.0 });
    Some([r1.min(r2), r1.max(r2)])
}

/// Point and velocity of a geodesic in affine parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicState {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub family: Family,
    pub h: f64,
    pub states: Vec<GeodesicState>,
}

/// `ẍ = −(ẋᵀAẋ / |N̂|²) N̂` on the reference member, where `dN̂/dt = Aẋ`.
fn acceleration(f: &Family, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let n = f.normal_hat_unchecked(0.0, x);
    n * (-pole_quadratic(f, 0.0, v) / n.norm_squared())
}

/// One Newton step along the normal back onto the member, then drop the
/// normal velocity component.
fn project(f: &Family, s: GeodesicState) -> GeodesicState {
    let n = f.normal_hat_unchecked(0.0, &s.x);
    let x = s.x - n * (f.quadric_value(0.0, &s.x) / (2.0 * n.norm_squared()));
    let n = f.normal_hat_unchecked(0.0, &x);
    GeodesicState { x, v: s.v - n * (s.v.dot(&n) / n.norm_squared()) }
}

fn rk4(f: &Family, s: GeodesicState, h: f64) -> GeodesicState {
    let deriv = |s: GeodesicState| (s.v, acceleration(f, &s.x, &s.v));
    let shift = |s: GeodesicState, d: (Vector3<f64>, Vector3<f64>), t: f64| GeodesicState {
        x: s.x + d.0 * t,
        v: s.v + d.1 * t,
    };
    let k1 = deriv(s);
    let k2 = deriv(shift(s, k1, 0.5 * h));
    let k3 = deriv(shift(s, k2, 0.5 * h));
    let k4 = deriv(shift(s, k3, h));
    GeodesicState {
        x: s.x + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0),
        v: s.v + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (h / 6.0),
    }
}

/// Integrates the geodesic from `x0` along `dir` for affine time `t_end`
/// with RK4 steps of size `h`, projecting back onto the member after each step.
pub fn geodesic_integrate(
    f: &Family,
    x0: Vector3<f64>,
    dir: Vector3<f64>,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, GeodesicError> {
    let n = f.normal_hat(0.0, &x0)?;
    if dir.norm() == 0.0 {
        return Err(GeodesicError::ZeroDirection);
    }
    let defect = dir.dot(&n).abs() / (dir.norm() * n.norm());
    if defect > TANGENT_TOL {
        return Err(GeodesicError::NotTangent { defect });
    }
    let reach = f.params().iter().fold(f64::INFINITY, |m, a| m.min(a.abs().sqrt()));
    if !(h > 0.0 && h * dir.norm() <= 0.1 * reach) {
        return Err(GeodesicError::StepTooLarge { h, residual: f64::NAN });
    }
    let steps = (t_end / h).round() as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let mut s = GeodesicState { x: x0, v: dir };
    states.push(s);
    for _ in 0..steps {
        s = project(f, rk4(f, s, h));
        let residual = f.relative_residual(0.0, &s.x);
        if !(residual <= SURFACE_TOL) {
            return Err(GeodesicError::StepTooLarge { h, residual });
        }
        states.push(s);
    }
    Ok(Trajectory { family: *f, h, states })
}

impl Trajectory {
    pub fn end(&self) -> GeodesicState {
        *self.states.last().expect("trajectory holds its start")
    }

    /// Largest relative change of `|ẋ|`.
    pub fn speed_drift(&self) -> f64 {
        let s0 = self.states[0].v.norm();
        self.states.iter().map(|s| (s.v.norm() - s0).abs() / s0).fold(0.0, f64::max)
    }

    pub fn surface_residual(&self) -> f64 {
        self.states.iter().map(|s| self.family.relative_residual(0.0, &s.x)).fold(0.0, f64::max)
    }

    /// Largest normal component of the velocity, relative.
    pub fn tangency_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| {
                let n = self.family.normal_hat_unchecked(0.0, &s.x);
                s.v.dot(&n).abs() / (s.v.norm() * n.norm())
            })
            .fold(0.0, f64::max)
    }

    /// Largest space curvature `|ẍ|/|ẋ|²`.
    pub fn max_curvature(&self) -> f64 {
        self.states
            .iter()
            .map(|s| acceleration(&self.family, &s.x, &s.v).norm() / s.v.norm_squared())
            .fold(0.0, f64::max)
    }
}

/// Caustic parameter along a geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct CausticSeries {
    pub z_c: Vec<f64>,
    /// `max |z_c(t) − z_c(0)| / |z_c(0)|`.
    pub drift: f64,
}

/// Nonzero root of `P` for a tangent line of the reference member.
pub fn caustic_of(f: &Family, x: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64, GeodesicError> {
    let [_, c1, c2] = caustic_coefficients(f, x, v);
    let z = -c1 / c2;
    let scale = 1.0 + f.params().iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if !(z.abs() > 1e-9 * scale) {
        return Err(GeodesicError::RootCollision { z });
    }
    Ok(z)
}

/// The confocal member every tangent line of the geodesic touches.
///
/// Rulings make the root collapse onto `0` and are rejected.
pub fn jacobi_caustic(traj: &Trajectory) -> Result<CausticSeries, GeodesicError> {
    let z_c = traj
        .states
        .iter()
        .map(|s| caustic_of(&traj.family, &s.x, &s.v))
        .collect::<Result<Vec<_>, _>>()?;
    let z0 = z_c[0];
    let drift = z_c.iter().map(|z| (z - z0).abs() / z0.abs()).fold(0.0, f64::max);
    Ok(CausticSeries { z_c, drift })
}

/// Largest pairwise cosine among the line direction and the unit normals of the
/// two members it touches, taken at the points of tangency.
pub fn chasles_defect(f: &Family, x: &Vector3<f64>, v: &Vector3<f64>) -> Option<f64> {
    let zs = line_caustics(f, x, v)?;
    let e = v.normalize();
    let normals = zs.map(|z| {
        let (al, be, _) = line_section(f, z, x, v);
        f.normal_hat_unchecked(z, &(x + v * (-be / al))).normalize()
    });
    Some(e.dot(&normals[0]).abs().max(e.dot(&normals[1]).abs()).max(normals[0].dot(&normals[1]).abs()))
}

/// Nearest forward intersection `s > 0` of `x + s v` with the member `z`.
fn forward_hit(f: &Family, z: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Option<f64> {
    let (al, be, ga) = line_section(f, z, x, v);
    let disc = be * be - al * ga;
    if disc < 0.0 || al == 0.0 {
        return None;
    }
    let q = -(be + be.signum() * disc.sqrt());
    let roots = [q / al, if q != 0.0 { ga / q } else { 0.0 }];
    let eps = 1e-9 * (1.0 + x.norm()) / v.norm();
    roots.into_iter().filter(|&s| s > eps).min_by(f64::total_cmp)
}

/// Billiard inside the member `z_table`, reflecting by `v ↦ v − 2(vᵀN)N/|N|²`.
#[derive(Debug, Clone)]
pub struct Billiard {
    pub z_table: f64,
    /// `impacts[k]` starts chord `k` with direction `directions[k]`.
    pub impacts: Vec<Vector3<f64>>,
    pub directions: Vec<Vector3<f64>>,
}

/// Chord through `contact` on the member `z_caustic` along the tangent direction
/// `dir`, started where it leaves the table backwards.
pub fn tangent_chord(
    f: &Family,
    z_table: f64,
    z_caustic: f64,
    contact: Vector3<f64>,
    dir: Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>), GeodesicError> {
    let n = f.normal_hat(z_caustic, &contact)?;
    let defect = dir.dot(&n).abs() / (dir.norm() * n.norm());
    if defect > TANGENT_TOL {
        return Err(GeodesicError::NotTangent { defect });
    }
    let back = forward_hit(f, z_table, &contact, &-dir).ok_or(GeodesicError::NoIntersection { bounce: 0 })?;
    Ok((contact - dir * back, dir))
}

/// Runs `n_bounces` reflections from `start` on the table along `dir`.
pub fn billiard_trace(
    f: &Family,
    z_table: f64,
    start: Vector3<f64>,
    dir: Vector3<f64>,
    n_bounces: usize,
) -> Result<Billiard, GeodesicError> {
    let residual = f.relative_residual(z_table, &start);
    if residual > f.tolerances().on_quadric {
        return Err(QuadricError::OffQuadric { residual }.into());
    }
    let mut impacts = vec![start];
    let mut directions = vec![dir];
    let (mut x, mut v) = (start, dir);
    for bounce in 0..n_bounces {
        let s = forward_hit(f, z_table, &x, &v).ok_or(GeodesicError::NoIntersection { bounce })?;
        x += v * s;
        let n = f.normal_hat_unchecked(z_table, &x);
        v -= n * (2.0 * v.dot(&n) / n.norm_squared());
        impacts.push(x);
        directions.push(v);
    }
    Ok(Billiard { z_table, impacts, directions })
}

/// [`billiard_trace`] for a start chord tangent to the member `z_caustic`.
pub fn billiard_run(
    f: &Family,
    z_table: f64,
    z_caustic: f64,
    start: Vector3<f64>,
    dir: Vector3<f64>,
    n_bounces: usize,
) -> Result<Billiard, GeodesicError> {
    let defect = tangency_residual(f, z_caustic, &start, &dir);
    if defect > TANGENT_TOL {
        return Err(GeodesicError::NotTangent { defect });
    }
    billiard_trace(f, z_table, start, dir, n_bounces)
}

impl Billiard {
    /// Largest tangency defect of the chords to the member `z`.
    pub fn tangency_drift(&self, f: &Family, z: f64) -> f64 {
        self.impacts.iter().zip(&self.directions).map(|(x, v)| tangency_residual(f, z, x, v)).fold(0.0, f64::max)
    }

    /// Largest [`chasles_defect`] over the chords.
    pub fn chasles_defect(&self, f: &Family) -> f64 {
        self.impacts
            .iter()
            .zip(&self.directions)
            .map(|(x, v)| chasles_defect(f, x, v).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// Ivory dual of the half chord from `contact` on `x_{z_caustic}` to `impact`
/// on `x_{z_table}`: the segment from `I(impact)` on the caustic to `I(contact)`
/// on the table. Both members must have the same type.
pub fn ivory_dual(
    f: &Family,
    z_caustic: f64,
    z_table: f64,
    contact: &Vector3<f64>,
    impact: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>), GeodesicError> {
    Ok((f.ivory_between(z_table, z_caustic, impact)?, f.ivory_between(z_caustic, z_table, contact)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn families() -> [Family; 2] {
        [Family::central(4.0, -1.0, 1.0).unwrap(), Family::paraboloid(1.0, -1.0).unwrap()]
    }

    fn start(f: &Family) -> (Vector3<f64>, Vector3<f64>) {
        let (u, v) = (1.8, -0.2);
        let x = f.point(0.0, u, v);
        let d = f.du(0.0, u, v).normalize() * 0.6 + f.dv(0.0, u, v).normalize() * 0.8;
        (x, d.normalize())
    }

    #[test]
    fn rulings_are_straight() {
        let f = families()[0];
        let x = f.point(0.0, 1.8, -0.2);
        let d = f.du(0.0, 1.8, -0.2).normalize();
        let t = geodesic_integrate(&f, x, d, 1.0, 1e-3).unwrap();
        assert!(t.max_curvature() <= 1e-9);
        let e = t.end();
        assert!((e.x - (x + d * 1.0)).norm() <= 1e-9);
        assert!(matches!(jacobi_caustic(&t), Err(GeodesicError::RootCollision { .. })));
    }

    #[test]
    fn geodesic_invariants() {
        for f in families() {
            let (x, d) = start(&f);
            let t = geodesic_integrate(&f, x, d, 10.0, 1e-3).unwrap();
            assert_eq!(t.states.len(), 10_001);
            assert!(t.speed_drift() <= 1e-7, "{}", t.speed_drift());
            assert!(t.surface_residual() <= 1e-9 && t.tangency_defect() <= 1e-9);
            let c = jacobi_caustic(&t).unwrap();
            assert!(c.drift <= 1e-6, "{}", c.drift);
            // Initial data alone fixes the caustic, and every tangent line touches it.
            assert_eq!(c.z_c[0], caustic_of(&f, &x, &d).unwrap());
            for s in t.states.iter().step_by(500) {
                assert!(tangency_residual(&f, c.z_c[0], &s.x, &s.v) <= 1e-6);
            }
        }
    }

    #[test]
    fn geodesics_reverse() {
        for f in families() {
            let (x, d) = start(&f);
            let fwd = geodesic_integrate(&f, x, d, 5.0, 1e-3).unwrap().end();
            let back = geodesic_integrate(&f, fwd.x, -fwd.v, 5.0, 1e-3).unwrap().end();
            assert!((back.x - x).norm() <= 1e-6 && (back.v + d).norm() <= 1e-6);
        }
    }

    #[test]
    fn bad_starts() {
        let f = families()[0];
        let (x, d) = start(&f);
        let n = f.normal_hat_unchecked(0.0, &x);
        assert!(matches!(geodesic_integrate(&f, x, d + n, 1.0, 1e-3), Err(GeodesicError::NotTangent { .. })));
        assert!(matches!(geodesic_integrate(&f, x, d, 1.0, 10.0), Err(GeodesicError::StepTooLarge { .. })));
        assert_eq!(geodesic_integrate(&f, x, Vector3::zeros(), 1.0, 1e-3).unwrap_err(), GeodesicError::ZeroDirection);
        assert!(matches!(geodesic_integrate(&f, x * 2.0, d, 1.0, 1e-3), Err(GeodesicError::Quadric(_))));
    }

    /// Point on the ellipsoid member `z` above the unit vector `s`, with a unit tangent.
    fn ellipsoid_contact(f: &Family, z: f64, rng: &mut ChaCha8Rng) -> (Vector3<f64>, Vector3<f64>) {
        let a = f.params();
        let s = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
        let x = Vector3::from_fn(|i, _| (a[i] - z).sqrt() * s[i]);
        let n = f.normal_hat_unchecked(z, &x);
        let w = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        (x, (w - n * (w.dot(&n) / n.norm_squared())).normalize())
    }

    #[test]
    fn confocal_billiard() {
        let f = families()[0];
        let (zt, zc) = (-3.0, -1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let (c, w) = ellipsoid_contact(&f, zc, &mut rng);
            let (x, v) = tangent_chord(&f, zt, zc, c, w).unwrap();
            let other = line_caustics(&f, &x, &v).unwrap();
            let z2 = if (other[0] - zc).abs() < (other[1] - zc).abs() { other[1] } else { other[0] };
            let b = billiard_run(&f, zt, zc, x, v, 100).unwrap();
            assert!(b.tangency_drift(&f, zc) <= 1e-6, "{}", b.tangency_drift(&f, zc));
            assert!(b.tangency_drift(&f, z2) <= 1e-6);
            assert!(b.chasles_defect(&f) <= 1e-8, "{}", b.chasles_defect(&f));
        }
    }

    #[test]
    fn normal_incidence_retraces() {
        let f = families()[0];
        let r = (4.0f64 + 3.0).sqrt();
        let b = billiard_trace(&f, -3.0, Vector3::new(r, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 4).unwrap();
        for (k, x) in b.impacts.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((x - Vector3::new(sign * r, 0.0, 0.0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn ivory_dual_chord() {
        let f = families()[0];
        let (zt, zc) = (-3.0, -1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (c, w) = ellipsoid_contact(&f, zc, &mut rng);
            let impact = c + w * forward_hit(&f, zt, &c, &w).unwrap();
            let (c2, q2) = ivory_dual(&f, zc, zt, &c, &impact).unwrap();
            let d = q2 - c2;
            assert!(((impact - c).norm() - d.norm()).abs() <= 1e-8);
            let n = f.normal_hat_unchecked(zc, &c2);
            assert!(d.dot(&n).abs() / (d.norm() * n.norm()) <= 1e-8);
            assert!(f.relative_residual(zt, &q2) <= 1e-12);
        }
    }

    #[test]
    fn caustic_polynomial_matches_section() {
        // P(z) / Π(a_i − z) is the tangency discriminant β² − αγ.
        for f in families() {
            let x = Vector3::new(0.3, -0.7, 1.1);
            let v = Vector3::new(0.2, 0.5, -0.4);
            for z in [-0.5, 0.2, 0.7] {
                let (al, be, ga) = line_section(&f, z, &x, &v);
                let poles: f64 = f.params().iter().map(|a| a - z).product();
                assert!((caustic_poly(&f, z, &x, &v) / poles - (be * be - al * ga)).abs() <= 1e-12);
            }
            assert!((caustic_coefficients(&f, &x, &v)[2] - v.norm_squared()).abs() <= 1e-12);
        }
    }
}
