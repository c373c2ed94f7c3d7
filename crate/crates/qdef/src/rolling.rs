//! Rolling of applicable surfaces and curves.
//!
//! A rolling of `x` on `x_0` is a field of rigid motions `(R, t)` with
//! `(x, dx) = (R, t)(x_0, dx_0)`. Its rotation part is encoded by the
//! tangential connection form `ω` with `R⁻¹dR = [ω]×`, which must be flat:
//! `∂_u ω_v − ∂_v ω_u = ω_u × ω_v`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::grid::{Grid2, Stencil};
use crate::motion::{hat, project_to_rotation, RigidMotion, RigidMotion2};
use crate::quadric::{ConfocalFamily, FamilyKind, QuadricError};

type Family = ConfocalFamily<f64>;
type Motion = RigidMotion<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RollingError {
    #[error("grid too coarse: need at least {need} nodes per direction")]
    GridTooCoarse { need: usize },
    #[error("orthogonality drift {drift} exceeded the step tolerance")]
    StepTooLarge { drift: f64 },
    #[error("curves are not parametrized with equal speed (gap {gap} at s = {s})")]
    ArcLengthMismatch { s: f64, gap: f64 },
    #[error(transparent)]
    Quadric(#[from] QuadricError),
}

/// Re-projection cadence of integrated rotations.
pub const PROJECT_EVERY: usize = 64;
/// Orthogonality drift tolerated between re-projections.
pub const MAX_DRIFT: f64 = 1e-4;

/// Ruling profile `φ(v0)` of a ruled seed.
#[derive(Clone)]
pub struct Profile(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Profile {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    /// `Σ c_k v^k`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(move |v| coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c))
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        (self.0)(v)
    }
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Profile(..)")
    }
}

/// Tangential connection form on a grid, in the ruling basis:
/// `ω/𝓑 = (uu·x_u − uv·x_v) du + (vu·x_u − uu·x_v) dv`.
#[derive(Debug, Clone)]
pub struct ConnectionForm {
    pub family: Family,
    pub grid: Grid2,
    pub uu: Vec<f64>,
    pub uv: Vec<f64>,
    pub vu: Vec<f64>,
}

impl ConnectionForm {
    pub fn zero(family: Family, grid: Grid2) -> Self {
        let n = grid.len();
        Self { family, grid, uu: vec![0.0; n], uv: vec![0.0; n], vu: vec![0.0; n] }
    }

    /// Exact form `ω = φ(v)·𝓑x_u dv` of the ruled seed with profile `φ`.
    pub fn ruled(family: Family, grid: Grid2, profile: &Profile) -> Self {
        let mut form = Self::zero(family, grid);
        for (i, j) in grid.nodes() {
            form.vu[grid.idx(i, j)] = profile.eval(grid.v(j));
        }
        form
    }

    /// `(ω_u, ω_v)` at a node; non-finite where the form is undefined.
    pub fn vectors(&self, i: usize, j: usize) -> (Vector3<f64>, Vector3<f64>) {
        let k = self.grid.idx(i, j);
        let (u, v) = (self.grid.u(i), self.grid.v(j));
        let su = self.family.scaled_du(0.0, v);
        let sv = self.family.scaled_dv(0.0, u);
        (su * self.uu[k] - sv * self.uv[k], su * self.vu[k] - sv * self.uu[k])
    }
}

/// Reconstructs `ω` from the difference of second fundamental forms of the
/// seed and the quadric; defined at interior nodes, `NaN` on the boundary.
pub fn connection_from_shapes(seed: &Seed) -> Result<ConnectionForm, RollingError> {
    let grid = seed.grid;
    if grid.nu < 3 || grid.nv < 3 {
        return Err(RollingError::GridTooCoarse { need: 3 });
    }
    let f = &seed.family;
    let quad = grid.sample(|u, v| f.point(0.0, u, v));
    let sx = Stencil::new(&grid, &seed.points);
    let sq = Stencil::new(&grid, &quad);
    let mut form = ConnectionForm::zero(*f, grid);
    for val in form.uu.iter_mut().chain(form.uv.iter_mut()).chain(form.vu.iter_mut()) {
        *val = f64::NAN;
    }
    for (i, j) in grid.interior(1) {
        let (u, v) = (grid.u(i), grid.v(j));
        let k = grid.idx(i, j);
        let rinv = seed.motion(j).rotation.transpose();
        let xu = f.du(0.0, u, v);
        let xv = f.dv(0.0, u, v);
        let cross = xu.cross(&xv);
        let sqrt_g = cross.norm();
        let n = cross / sqrt_g;
        let s11 = n.dot(&(rinv * sx.duu(i, j) - sq.duu(i, j)));
        let s12 = n.dot(&(rinv * sx.duv(i, j) - sq.duv(i, j)));
        let s22 = n.dot(&(rinv * sx.dvv(i, j) - sq.dvv(i, j)));
        let scale = sqrt_g * f.ruling_factor(u, v);
        form.uu[k] = s12 / scale;
        form.uv[k] = s11 / scale;
        form.vu[k] = s22 / scale;
    }
    Ok(form)
}

/// Pointwise `|∂_u ω_v − ∂_v ω_u − ω_u × ω_v|`; `NaN` where the stencil leaves the domain.
pub fn flatness_residual(form: &ConnectionForm) -> Vec<f64> {
    let grid = form.grid;
    let mut wu = Vec::with_capacity(grid.len());
    let mut wv = Vec::with_capacity(grid.len());
    for (i, j) in grid.nodes() {
        let (a, b) = form.vectors(i, j);
        wu.push(a);
        wv.push(b);
    }
    let su = Stencil::new(&grid, &wu);
    let sv = Stencil::new(&grid, &wv);
    let mut out = vec![f64::NAN; grid.len()];
    for (i, j) in grid.interior(1) {
        let k = grid.idx(i, j);
        let r = sv.du(i, j) - su.dv(i, j) - wu[k].cross(&wv[k]);
        out[k] = r.norm();
    }
    out
}

/// Largest finite entry.
pub fn max_finite(values: &[f64]) -> f64 {
    values.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

/// Right-hand side of the frame equations `R′ = R[ω]×`, `t′ = −R(ω × x_0)` along a path.
fn frame_rhs(r: &Matrix3<f64>, w: &Vector3<f64>, x0: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    (r * hat(w), -(r * w.cross(x0)))
}

/// Integrates `R⁻¹R′ = [ω(s)]×`, `t′ = −R′x_0(s)` with classical RK4, one step
/// per consecutive pair of `nodes`. `drive(s)` returns `(ω(s), x_0(s))`.
pub fn integrate_frame(
    drive: impl Fn(f64) -> (Vector3<f64>, Vector3<f64>),
    nodes: &[f64],
    init: Motion,
) -> Result<Vec<Motion>, RollingError> {
    let mut out = Vec::with_capacity(nodes.len());
    let (mut r, mut t) = (init.rotation, init.translation);
    out.push(init);
    for (step, w) in nodes.windows(2).enumerate() {
        let (s, h) = (w[0], w[1] - w[0]);
        let (w1, x1) = drive(s);
        let (wm, xm) = drive(s + 0.5 * h);
        let (w4, x4) = drive(s + h);
        let (k1r, k1t) = frame_rhs(&r, &w1, &x1);
        let r2 = r + k1r * (0.5 * h);
        let (k2r, k2t) = frame_rhs(&r2, &wm, &xm);
        let r3 = r + k2r * (0.5 * h);
        let (k3r, k3t) = frame_rhs(&r3, &wm, &xm);
        let r4 = r + k3r * h;
        let (k4r, k4t) = frame_rhs(&r4, &w4, &x4);
        r += (k1r + (k2r + k3r) * 2.0 + k4r) * (h / 6.0);
        t += (k1t + (k2t + k3t) * 2.0 + k4t) * (h / 6.0);
        if (step + 1) % PROJECT_EVERY == 0 {
            let drift = (r.transpose() * r - Matrix3::identity()).norm();
            if drift > MAX_DRIFT {
                return Err(RollingError::StepTooLarge { drift });
            }
            r = project_to_rotation(&r);
        }
        out.push(Motion::new(r, t));
    }
    Ok(out)
}

/// Integrates the frame along a polyline in the `(u, v)` chart, `steps` RK4
/// steps per segment; returns the motion at the end of the path.
pub fn integrate_path(
    omega: impl Fn(f64, f64) -> (Vector3<f64>, Vector3<f64>),
    anchor: impl Fn(f64, f64) -> Vector3<f64>,
    path: &[(f64, f64)],
    steps: usize,
    init: Motion,
) -> Result<Motion, RollingError> {
    let mut m = init;
    let nodes: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    for seg in path.windows(2) {
        let ((u0, v0), (u1, v1)) = (seg[0], seg[1]);
        let (du, dv) = (u1 - u0, v1 - v0);
        let drive = |s: f64| {
            let (u, v) = (u0 + s * du, v0 + s * dv);
            let (wu, wv) = omega(u, v);
            (wu * du + wv * dv, anchor(u, v))
        };
        m = *integrate_frame(drive, &nodes, m)?.last().expect("nonempty");
    }
    Ok(m)
}

/// A bending of a quadric patch together with its rolling onto the reference member.
#[derive(Debug, Clone)]
pub struct Seed {
    pub family: Family,
    pub grid: Grid2,
    /// `None` for seeds that are not ruled deformations.
    pub profile: Option<Profile>,
    /// `x⁰` at every node.
    pub points: Vec<Vector3<f64>>,
    /// `(R₀, t₀)` per `v0` node; ruled seeds roll rigidly along each ruling.
    pub motions: Vec<Motion>,
}

impl Seed {
    pub fn motion(&self, j: usize) -> &Motion {
        &self.motions[j]
    }

    pub fn point(&self, i: usize, j: usize) -> Vector3<f64> {
        self.points[self.grid.idx(i, j)]
    }

    /// The undeformed quadric patch itself.
    pub fn quadric(family: Family, grid: Grid2) -> Result<Self, RollingError> {
        ruled_seed(family, Profile::constant(0.0), grid)
    }

    /// Ruling-parameter point of the `t` integration anchor on the `v` ruling.
    pub fn anchor_u(family: &Family, v: f64) -> f64 {
        match family.kind() {
            FamilyKind::Central => v + 1.0,
            FamilyKind::Paraboloid => 0.0,
        }
    }
}

/// Ruled deformation `x⁰ = (R₀(v0), t₀(v0)) x_0` driven by `ω = φ(v0)·𝓑x_u dv0`.
///
/// Flatness holds because `𝓑x_u` does not depend on `u`.
pub fn ruled_seed(family: Family, profile: Profile, grid: Grid2) -> Result<Seed, RollingError> {
    if grid.nu < 3 || grid.nv < 3 {
        return Err(RollingError::GridTooCoarse { need: 3 });
    }
    for (i, j) in grid.nodes() {
        family.evaluate(0.0, grid.u(i), grid.v(j))?;
    }
    let vs: Vec<f64> = (0..grid.nv).map(|j| grid.v(j)).collect();
    let drive = |v: f64| {
        let w = family.scaled_du(0.0, v) * profile.eval(v);
        (w, family.point(0.0, Seed::anchor_u(&family, v), v))
    };
    let motions = integrate_frame(drive, &vs, Motion::identity())?;
    let points = grid
        .nodes()
        .map(|(i, j)| motions[j].apply(&family.point(0.0, grid.u(i), grid.v(j))))
        .collect();
    Ok(Seed { family, grid, profile: Some(profile), points, motions })
}

/// Rolls `c0` on `c1`. Each closure returns `(point, tangent)` at `s`, with
/// equal speeds; the motion maps `c0(s) ↦ c1(s)` and `c0′(s) ↦ c1′(s)`.
pub fn roll_curves(
    c0: impl Fn(f64) -> (Vector2<f64>, Vector2<f64>),
    c1: impl Fn(f64) -> (Vector2<f64>, Vector2<f64>),
    samples: &[f64],
) -> Result<Vec<RigidMotion2>, RollingError> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev: Option<f64> = None;
    for &s in samples {
        let (p0, d0) = c0(s);
        let (p1, d1) = c1(s);
        let gap = (d0.norm() - d1.norm()).abs();
        if gap > 1e-8 * (1.0 + d0.norm()) {
            return Err(RollingError::ArcLengthMismatch { s, gap });
        }
        let mut angle = d1.y.atan2(d1.x) - d0.y.atan2(d0.x);
        if let Some(a) = prev {
            let tau = std::f64::consts::TAU;
            angle += ((a - angle) / tau).round() * tau;
        }
        prev = Some(angle);
        let mut m = RigidMotion2 { angle, translation: Vector2::zeros() };
        m.translation = p1 - m.rotation() * p0;
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{metric_gap, observed_order as grid_order};

    fn central() -> Family {
        Family::central(4.0, -1.0, 1.0).unwrap()
    }

    fn grid(h: f64) -> Grid2 {
        let cells = (1.0 / h).round() as usize;
        Grid2::with_step((1.5, -0.5), h, cells)
    }

    #[test]
    fn zero_profile_is_the_quadric() {
        let f = central();
        let s = Seed::quadric(f, grid(1.0 / 8.0)).unwrap();
        for m in &s.motions {
            assert!(m.distance(&Motion::identity()) == 0.0);
        }
        let form = connection_from_shapes(&s).unwrap();
        assert!(max_finite(&form.vu) == 0.0 && max_finite(&form.uv) == 0.0);
        assert_eq!(max_finite(&flatness_residual(&ConnectionForm::zero(f, s.grid))), 0.0);
    }

    #[test]
    fn ruled_direction_is_u_independent() {
        let f = central();
        let g = grid(1.0 / 16.0);
        let mut worst: f64 = 0.0;
        for (i, j) in g.nodes() {
            let (u, v) = (g.u(i), g.v(j));
            let a = f.du(0.0, u, v) * f.ruling_factor(u, v);
            worst = worst.max((a - f.scaled_du(0.0, v)).norm());
        }
        assert!(worst <= 1e-12);
    }

    #[test]
    fn reconstructed_connection_recovers_profile() {
        let f = central();
        let errs: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&h| {
                let s = ruled_seed(f, Profile::constant(0.3), grid(h)).unwrap();
                let form = connection_from_shapes(&s).unwrap();
                let mut e: f64 = 0.0;
                for (i, j) in s.grid.interior(1) {
                    let k = s.grid.idx(i, j);
                    e = e.max(form.uu[k].abs()).max(form.uv[k].abs()).max((form.vu[k] - 0.3).abs());
                }
                e
            })
            .collect();
        assert!(errs[1] < 1e-3);
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn ruled_seed_is_applicable() {
        let f = central();
        let gaps: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&h| {
                let s = ruled_seed(f, Profile::constant(0.3), grid(h)).unwrap();
                let q = s.grid.sample(|u, v| f.point(0.0, u, v));
                metric_gap(&s.grid, &s.points, &q)
            })
            .collect();
        assert!(gaps[1] < 1e-3, "{gaps:?}");
        assert!(grid_order(gaps[0], gaps[1]) > 1.8, "{gaps:?}");
    }

    #[test]
    fn kinematic_conjugacy() {
        let f = central();
        let s = ruled_seed(f, Profile::constant(0.3), grid(1.0 / 16.0)).unwrap();
        for j in 0..s.grid.nv {
            let v = s.grid.v(j);
            let w = f.scaled_du(0.0, v) * 0.3;
            let rdot = s.motions[j].rotation * hat(&w);
            assert!((rdot * f.scaled_du(0.0, v)).norm() <= 1e-9);
        }
    }

    #[test]
    fn non_flat_form_is_detected() {
        let f = central();
        let g = grid(1.0 / 16.0);
        let mut form = ConnectionForm::zero(f, g);
        for (i, j) in g.nodes() {
            let k = g.idx(i, j);
            form.uu[k] = (g.u(i) * g.v(j)).sin();
            form.vu[k] = g.u(i);
        }
        assert!(max_finite(&flatness_residual(&form)) > 0.1);
    }

    #[test]
    fn loop_holonomy_of_flat_form() {
        // ω from R = exp(u A) exp(v B): flat, not tangential, so only the rotation closes.
        let a = Vector3::new(0.3, -0.2, 0.5);
        let b = Vector3::new(-0.1, 0.4, 0.2);
        let omega = |_u: f64, v: f64| {
            let ev = nalgebra::Rotation3::new(b * v);
            (ev.inverse() * a, b)
        };
        let anchor = |u: f64, v: f64| Vector3::new(u, v, 1.0);
        let path = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        let errs: Vec<f64> = [8, 16]
            .iter()
            .map(|&n| {
                let m = integrate_path(omega, anchor, &path, n, Motion::identity()).unwrap();
                (m.rotation - Matrix3::identity()).amax()
            })
            .collect();
        assert!(errs[1] < 1e-6, "{errs:?}");
        assert!(errs[0] / errs[1] > 4.0);
    }

    #[test]
    fn circle_rolls_on_line() {
        let r = 0.7;
        let wheel = |s: f64| {
            let th = s / r;
            (Vector2::new(r * th.sin(), r - r * th.cos()), Vector2::new(th.cos(), th.sin()))
        };
        let line = |s: f64| (Vector2::new(s, 0.0), Vector2::new(1.0, 0.0));
        let samples: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let ms = roll_curves(wheel, line, &samples).unwrap();
        for (m, s) in ms.iter().zip(&samples) {
            assert!((m.angle + s / r).abs() < 1e-12);
        }
        let same = roll_curves(line, line, &samples).unwrap();
        assert!(same.iter().all(|m| m.angle == 0.0 && m.translation.norm() == 0.0));
    }

    #[test]
    fn ellipse_on_mirror_image_traces_circles() {
        let (a, b) = (2.0f64, 1.0f64);
        let c = (a * a - b * b).sqrt();
        let e = |t: f64| Vector2::new(a * t.cos(), b * t.sin());
        let de = |t: f64| Vector2::new(-a * t.sin(), b * t.cos());
        let mirror = |p: Vector2<f64>| Vector2::new(p.x, 2.0 * b - p.y);
        let c0 = |s: f64| (e(std::f64::consts::FRAC_PI_2 + s), de(std::f64::consts::FRAC_PI_2 + s));
        let c1 = |s: f64| {
            let d = de(std::f64::consts::FRAC_PI_2 + s);
            (mirror(e(std::f64::consts::FRAC_PI_2 + s)), Vector2::new(d.x, -d.y))
        };
        let samples: Vec<f64> = (0..100).map(|k| -1.5 + 0.03 * k as f64).collect();
        let ms = roll_curves(c0, c1, &samples).unwrap();
        for m in ms {
            let f_plus = m.apply(&Vector2::new(c, 0.0));
            let f_minus = m.apply(&Vector2::new(-c, 0.0));
            assert!(((f_plus - mirror(Vector2::new(-c, 0.0))).norm() - 2.0 * a).abs() <= 1e-8);
            assert!(((f_minus - mirror(Vector2::new(c, 0.0))).norm() - 2.0 * a).abs() <= 1e-8);
        }
    }

    #[test]
    fn speed_mismatch_is_rejected() {
        let c0 = |s: f64| (Vector2::new(s, 0.0), Vector2::new(1.0, 0.0));
        let c1 = |s: f64| (Vector2::new(2.0 * s, 0.0), Vector2::new(2.0, 0.0));
        assert!(matches!(roll_curves(c0, c1, &[0.0]), Err(RollingError::ArcLengthMismatch { .. })));
    }
}
