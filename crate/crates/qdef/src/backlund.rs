//! Bäcklund transformation of ruled deformations of quadrics.
//!
//! Along a seed `x⁰` rolling on `x_0` with connection `ω`, the partner ruling
//! parameter obeys the Ricatti equation `mᵀω + 2z dv1 = 0`; the leaf is
//! `x¹ = (R₀, t₀) x_z(u1, v1)` with `u1` fixed by tangency. The leaf is
//! applicable to `x_0` through `(u1, v1)` and rolls on it by the Ivory motion.

use nalgebra::Vector3;
use thiserror::Error;

use crate::grid::{gauss_curvature_fd, metric_gap4, normal_fd, Grid2, Stencil};
use crate::motion::{vee, RigidMotion};
use crate::quadric::{ConfocalFamily, FamilyKind, QuadricError, Ruling};
use crate::rolling::{RollingError, Seed};
use crate::tangency::{delta_minus, delta_prime_minus, tc_solve_v1};

type Family = ConfocalFamily<f64>;
type Motion = RigidMotion<f64>;

/// Chart switch threshold for the projective Ricatti variable.
pub const CHART_LIMIT: f64 = 1.0;
/// A single step whose result exceeds this magnitude counts as a blowup.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BacklundError {
    #[error(transparent)]
    Quadric(#[from] QuadricError),
    #[error(transparent)]
    Rolling(#[from] RollingError),
    #[error("spectral parameter must be nonzero")]
    ZeroSpectral,
    #[error("seed carries no ruling profile")]
    NotRuled,
    #[error("Ricatti solution blew up in both charts near v0 = {v0}")]
    RicattiBlowup { v0: f64 },
    #[error("tangency denominator vanishes near v0 = {v0}")]
    SingularDelta { v0: f64 },
    #[error("grid too coarse: need at least {need} nodes per direction")]
    GridTooCoarse { need: usize },
    #[error("leaf is degenerate (a single ruling)")]
    DegenerateLeaf,
}

/// Projective value: `Direct(y)` is `y`, `Reciprocal(w)` is `1/w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chart {
    Direct(f64),
    Reciprocal(f64),
}

impl Chart {
    pub fn value(self) -> f64 {
        match self {
            Chart::Direct(y) => y,
            Chart::Reciprocal(w) => 1.0 / w,
        }
    }

    /// Homogeneous coordinates `[num : den]`.
    pub fn homogeneous(self) -> (f64, f64) {
        match self {
            Chart::Direct(y) => (y, 1.0),
            Chart::Reciprocal(w) => (1.0, w),
        }
    }

    fn flipped(self) -> Self {
        match self {
            Chart::Direct(y) => Chart::Reciprocal(1.0 / y),
            Chart::Reciprocal(w) => Chart::Direct(1.0 / w),
        }
    }

    fn raw(self) -> f64 {
        match self {
            Chart::Direct(y) | Chart::Reciprocal(y) => y,
        }
    }

    fn with_raw(self, x: f64) -> Self {
        match self {
            Chart::Direct(_) => Chart::Direct(x),
            Chart::Reciprocal(_) => Chart::Reciprocal(x),
        }
    }

    fn normalized(self) -> Self {
        if self.raw().abs() > CHART_LIMIT {
            self.flipped()
        } else {
            self
        }
    }
}

/// Scalar Ricatti equation `y′ = a(s) + b(s) y + c(s) y²`, integrated by RK4
/// across projective charts. `coeffs(s)` returns `(a, b, c)`.
pub fn integrate_ricatti(
    coeffs: impl Fn(f64) -> (f64, f64, f64),
    nodes: &[f64],
    init: f64,
) -> Result<Vec<Chart>, BacklundError> {
    let rhs = |s: f64, y: Chart| -> f64 {
        let (a, b, c) = coeffs(s);
        match y {
            Chart::Direct(y) => a + (b + c * y) * y,
            Chart::Reciprocal(w) => -(c + (b + a * w) * w),
        }
    };
    let step = |s: f64, h: f64, y: Chart| -> Chart {
        let y0 = y.raw();
        let k1 = rhs(s, y);
        let k2 = rhs(s + 0.5 * h, y.with_raw(y0 + 0.5 * h * k1));
        let k3 = rhs(s + 0.5 * h, y.with_raw(y0 + 0.5 * h * k2));
        let k4 = rhs(s + h, y.with_raw(y0 + h * k3));
        y.with_raw(y0 + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4))
    };
    let ok = |y: Chart| y.raw().is_finite() && y.raw().abs() <= BLOWUP_LIMIT;
    let mut y = Chart::Direct(init).normalized();
    let mut out = vec![y];
    for w in nodes.windows(2) {
        let (s, h) = (w[0], w[1] - w[0]);
        let mut next = step(s, h, y);
        if !ok(next) {
            next = step(s, h, y.flipped());
            if !ok(next) {
                return Err(BacklundError::RicattiBlowup { v0: s });
            }
        }
        y = next.normalized();
        out.push(y);
    }
    Ok(out)
}

/// Quadratic coefficients of `g(y)` from its values at `y = −1, 0, 1`.
fn quadratic_from(g: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let (gm, g0, gp) = (g(-1.0), g(0.0), g(1.0));
    (g0, 0.5 * (gp - gm), 0.5 * (gp + gm) - g0)
}

/// A Bäcklund transform of a ruled seed.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub z: f64,
    pub ruling: Ruling,
    pub grid: Grid2,
    /// The Ricatti variable per `v0` node (`v1` for `U`, `u1` for `V`).
    pub ricatti: Vec<Chart>,
    pub u1: Vec<f64>,
    pub v1: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
}

impl Leaf {
    pub fn point(&self, i: usize, j: usize) -> Vector3<f64> {
        self.points[self.grid.idx(i, j)]
    }

    /// Partner parameters `(u1, v1)` at a node.
    pub fn partner(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.grid.idx(i, j);
        (self.u1[k], self.v1[k])
    }

    /// Points `x_0(u1, v1)` the leaf is applicable to.
    pub fn reference_points(&self, family: &Family) -> Vec<Vector3<f64>> {
        self.u1.iter().zip(&self.v1).map(|(&u, &v)| family.point(0.0, u, v)).collect()
    }

    /// `true` when the leaf collapses onto a single ruling (constant Ricatti variable).
    pub fn is_degenerate(&self) -> bool {
        let first = self.ricatti[0].value();
        self.ricatti.iter().all(|c| c.value() == first)
    }
}

/// Integrates the Bäcklund Ricatti equation along a ruled seed.
///
/// With `Ruling::U` the leaf has `v1` constant along `u0`: `dv1/dv0 = φΔ⁻/(2z)`.
/// With `Ruling::V` the roles swap: `du1/dv0 = φΔ′⁻/(2z)`.
pub fn leaf_integrate(seed: &Seed, z: f64, init: f64, ruling: Ruling) -> Result<Leaf, BacklundError> {
    if z == 0.0 {
        return Err(BacklundError::ZeroSpectral);
    }
    let f = seed.family;
    f.check_z(z)?;
    let profile = seed.profile.as_ref().ok_or(BacklundError::NotRuled)?;
    let grid = seed.grid;
    let vs: Vec<f64> = (0..grid.nv).map(|j| grid.v(j)).collect();
    let coeffs = |v0: f64| {
        let k = profile.eval(v0) / (2.0 * z);
        let (a, b, c) = match ruling {
            Ruling::U => quadratic_from(|y| delta_minus(&f, z, v0, y)),
            Ruling::V => quadratic_from(|y| delta_prime_minus(&f, z, v0, y)),
        };
        (k * a, k * b, k * c)
    };
    let ricatti = integrate_ricatti(coeffs, &vs, init)?;
    let n = grid.len();
    let (mut u1, mut v1, mut points) = (vec![0.0; n], vec![0.0; n], Vec::with_capacity(n));
    for (i, j) in grid.nodes() {
        let k = grid.idx(i, j);
        let p0 = (grid.u(i), grid.v(j));
        let y = ricatti[j].value();
        let (a, b) = match ruling {
            Ruling::U => (f.tc_solve_u1(z, p0, y)?, y),
            Ruling::V => (y, tc_solve_v1(&f, z, p0, y)?),
        };
        u1[k] = a;
        v1[k] = b;
        points.push(seed.motion(j).apply(&f.point(z, a, b)));
    }
    Ok(Leaf { z, ruling, grid, ricatti, u1, v1, points })
}

/// Direct (non-Ricatti) form of the `V` equation at a seed node:
/// `du1/dv0 = −m′·(ω_v × V)/(m′·x_{z,u})` with `m′ = 𝓑x_{z,v} × V`.
pub fn direct_v_rate(family: &Family, z: f64, p0: (f64, f64), u1: f64, phi: f64) -> Result<f64, BacklundError> {
    let v1 = tc_solve_v1(family, z, p0, u1)?;
    let v = family.point(z, u1, v1) - family.point(0.0, p0.0, p0.1);
    let mp = family.scaled_dv(z, u1).cross(&v);
    let w = family.scaled_du(0.0, p0.1) * phi;
    let den = mp.dot(&family.du(z, u1, v1));
    if den.abs() <= 1e-14 * (1.0 + mp.norm()) {
        return Err(BacklundError::SingularDelta { v0: p0.1 });
    }
    Ok(-mp.dot(&w.cross(&v)) / den)
}

/// Largest relative gap between the first fundamental forms of the leaf and of
/// `x_0 ∘ (u1, v1)` on interior nodes.
pub fn acpia_check(family: &Family, leaf: &Leaf) -> Result<f64, BacklundError> {
    if leaf.grid.nu < 3 || leaf.grid.nv < 3 {
        return Err(BacklundError::GridTooCoarse { need: 3 });
    }
    Ok(metric_gap4(&leaf.grid, &leaf.points, &leaf.reference_points(family)))
}

/// The inverse rolling `(R₁, t₁) = (R₀, t₀)∘(R₀¹, t₀¹)⁻¹` of `x_0` on the leaf.
pub fn inversion_rolling(seed: &Seed, leaf: &Leaf) -> Result<Vec<Motion>, BacklundError> {
    let f = &seed.family;
    let grid = leaf.grid;
    let mut out = Vec::with_capacity(grid.len());
    for (i, j) in grid.nodes() {
        let ivory = f.rmpia(leaf.z, (grid.u(i), grid.v(j)), leaf.partner(i, j), leaf.ruling, leaf.ruling)?;
        out.push(seed.motion(j).compose(&ivory.inverse()));
    }
    Ok(out)
}

/// Largest `|(R₁, t₁)x_0(u1, v1) − x¹|` and relative `|R₁ dx_0¹ − dx¹|` over interior nodes.
pub fn rolling_residual(family: &Family, leaf: &Leaf, motions: &[Motion]) -> (f64, f64) {
    let grid = leaf.grid;
    let reference = leaf.reference_points(family);
    let mut pos: f64 = 0.0;
    for k in 0..grid.len() {
        pos = pos.max((motions[k].apply(&reference[k]) - leaf.points[k]).norm());
    }
    let sl = Stencil::new(&grid, &leaf.points);
    let sr = Stencil::new(&grid, &reference);
    let mut tan: f64 = 0.0;
    for (i, j) in grid.interior(1) {
        let r = motions[grid.idx(i, j)].rotation;
        let (a, b) = (sl.du(i, j), sl.dv(i, j));
        let du = (r * sr.du(i, j) - a).norm() / (a.norm() + b.norm());
        let dv = (r * sr.dv(i, j) - b).norm() / (a.norm() + b.norm());
        tan = tan.max(du).max(dv);
    }
    (pos, tan)
}

/// Largest `|n̂_leaf · R₀m̂|` from fourth-order leaf tangents, over nodes two away from the edge.
pub fn tangent_plane_defect(seed: &Seed, leaf: &Leaf) -> f64 {
    let f = &seed.family;
    let grid = leaf.grid;
    let st = Stencil::new(&grid, &leaf.points);
    let mut worst: f64 = 0.0;
    for (i, j) in grid.interior(2) {
        let (u1, v1) = leaf.partner(i, j);
        let x0 = f.point(0.0, grid.u(i), grid.v(j));
        let v = f.point(leaf.z, u1, v1) - x0;
        let w = match leaf.ruling {
            Ruling::U => f.scaled_du(leaf.z, v1),
            Ruling::V => f.scaled_dv(leaf.z, u1),
        };
        let m = seed.motion(j).rotation * w.cross(&v).normalize();
        let (a, b) = (st.du4(i, j), st.dv4(i, j));
        let d = (a.dot(&m) / a.norm()).abs().max((b.dot(&m) / b.norm()).abs());
        worst = worst.max(d);
    }
    worst
}

/// Largest distance of leaf nodes from the chord of their `u0` line, relative to its length.
pub fn ruling_collinearity(leaf: &Leaf) -> f64 {
    let grid = leaf.grid;
    let mut worst: f64 = 0.0;
    for j in 0..grid.nv {
        let a = leaf.point(0, j);
        let b = leaf.point(grid.nu - 1, j);
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        for i in 1..grid.nu - 1 {
            worst = worst.max((leaf.point(i, j) - a).cross(&d).norm() / (len * len));
        }
    }
    worst
}

/// Cross-ratio `((p1−p3)(p2−p4))/((p2−p3)(p1−p4))` of projective values.
pub fn cross_ratio(p: [Chart; 4]) -> f64 {
    let h = p.map(Chart::homogeneous);
    let det = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
    (det(h[0], h[2]) * det(h[1], h[3])) / (det(h[1], h[2]) * det(h[0], h[3]))
}

/// Cross-ratio of four leaves at every `v0` node.
pub fn leaf_cross_ratios(leaves: [&Leaf; 4]) -> Vec<f64> {
    (0..leaves[0].ricatti.len())
        .map(|j| cross_ratio([leaves[0].ricatti[j], leaves[1].ricatti[j], leaves[2].ricatti[j], leaves[3].ricatti[j]]))
        .collect()
}

/// `std/|mean|` of a sample.
pub fn relative_spread(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Transforms the leaf back: the Ricatti equation seeded on `x¹` with its
/// inverse rolling, integrated from the seed's first `v0`. Returns the largest
/// gap to the seed's `v0` values, sampled at every second node (odd nodes are
/// the RK4 midpoints).
pub fn round_trip_gap(seed: &Seed, leaf: &Leaf) -> Result<f64, BacklundError> {
    if leaf.ruling != Ruling::U {
        return Err(BacklundError::NotRuled);
    }
    let f = seed.family;
    let grid = leaf.grid;
    if grid.nv < 5 {
        return Err(BacklundError::GridTooCoarse { need: 5 });
    }
    let motions = inversion_rolling(seed, leaf)?;
    let i = grid.nu / 2;
    let rots: Vec<_> = (0..grid.nv).map(|j| motions[grid.idx(i, j)].rotation).collect();
    let h = grid.hv();
    // ω¹ along the grid parameter from fourth-order differences of R₁.
    let omega: Vec<Vector3<f64>> = (0..grid.nv)
        .map(|j| {
            let d = if j >= 2 && j + 2 < grid.nv {
                (rots[j + 1] - rots[j - 1]) * (8.0 / 12.0) - (rots[j + 2] - rots[j - 2]) * (1.0 / 12.0)
            } else if j < 2 {
                (rots[j] * -25.0 + rots[j + 1] * 48.0 - rots[j + 2] * 36.0 + rots[j + 3] * 16.0 - rots[j + 4] * 3.0)
                    * (1.0 / 12.0)
            } else {
                (rots[j] * 25.0 - rots[j - 1] * 48.0 + rots[j - 2] * 36.0 - rots[j - 3] * 16.0 + rots[j - 4] * 3.0)
                    * (1.0 / 12.0)
            };
            vee(&(rots[j].transpose() * d)) * (1.0 / h)
        })
        .collect();
    let base = |j: usize| leaf.partner(i, j);
    let rate = |j: usize, y: f64| {
        let (a, b) = base(j);
        let x = f.point(0.0, a, b);
        let m = f.scaled_du(leaf.z, y).cross(&(f.u_ruling_anchor(leaf.z, y) - x));
        -m.dot(&omega[j]) / (2.0 * leaf.z)
    };
    let mut y = grid.v(0);
    let mut worst: f64 = 0.0;
    let mut j = 0;
    while j + 2 < grid.nv {
        let hh = 2.0 * h;
        let k1 = rate(j, y);
        let k2 = rate(j + 1, y + 0.5 * hh * k1);
        let k3 = rate(j + 1, y + 0.5 * hh * k2);
        let k4 = rate(j + 2, y + hh * k3);
        y += hh / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
        j += 2;
        worst = worst.max((y - grid.v(j)).abs());
    }
    Ok(worst)
}

/// Result of the Ribaucour/Weingarten test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeingartenReport {
    /// Closed form `K⁰K¹ = sin⁴β/d⁴` at exact tangency data.
    pub closed_form: f64,
    /// The same criterion from fourth-order finite differences of both surfaces.
    pub finite_difference: f64,
}

/// Checks `K(x⁰)K(x¹) = sin⁴β/d⁴`, `β` the angle of the tangent planes and `d` the
/// focal distance, together with `K⁰K¹ = 1/(𝓐⁴|N̂₀⁰|⁴|N̂₀¹|⁴)`.
pub fn weingarten_check(seed: &Seed, leaf: &Leaf) -> Result<WeingartenReport, BacklundError> {
    if leaf.is_degenerate() {
        return Err(BacklundError::DegenerateLeaf);
    }
    let grid = leaf.grid;
    if grid.nu < 5 || grid.nv < 5 {
        return Err(BacklundError::GridTooCoarse { need: 5 });
    }
    let f = &seed.family;
    let area4 = f.area_constant().powi(4);
    let (mut closed, mut fd): (f64, f64) = (0.0, 0.0);
    for (i, j) in grid.interior(2) {
        let (u0, v0) = (grid.u(i), grid.v(j));
        let (u1, v1) = leaf.partner(i, j);
        let x00 = f.point(0.0, u0, v0);
        let x01 = f.point(0.0, u1, v1);
        let n0 = f.normal_hat_unchecked(0.0, &x00);
        let n1 = f.normal_hat_unchecked(0.0, &x01);
        let kk = f.gauss_curvature(0.0, &x00) * f.gauss_curvature(0.0, &x01);
        let target = 1.0 / (area4 * n0.norm_squared().powi(2) * n1.norm_squared().powi(2));
        let v = f.point(leaf.z, u1, v1) - x00;
        let w = match leaf.ruling {
            Ruling::U => f.scaled_du(leaf.z, v1),
            Ruling::V => f.scaled_dv(leaf.z, u1),
        };
        let sin_b = n0.normalize().cross(&w.cross(&v).normalize()).norm();
        let rib = sin_b.powi(4) / v.norm_squared().powi(2);
        closed = closed.max(((kk - target) / target).abs()).max(((rib - kk) / kk).abs());

        let k0 = gauss_curvature_fd(&grid, &seed.points, i, j);
        let k1 = gauss_curvature_fd(&grid, &leaf.points, i, j);
        let s = normal_fd(&grid, &seed.points, i, j).cross(&normal_fd(&grid, &leaf.points, i, j)).norm();
        let d = (leaf.point(i, j) - seed.point(i, j)).norm();
        let rib_fd = s.powi(4) / d.powi(4);
        fd = fd.max(((k0 * k1 - rib_fd) / rib_fd).abs());
    }
    Ok(WeingartenReport { closed_form: closed, finite_difference: fd })
}

/// Initial Ricatti value whose leaf over [`default_grid`] stays clear of chart
/// poles for the reference families `Central(4, −1, 1)` and `Paraboloid(1, −1)`.
pub fn regular_init(family: &Family, ruling: Ruling) -> f64 {
    match (family.kind(), ruling) {
        (FamilyKind::Central, Ruling::U) => -1.25,
        (FamilyKind::Central, Ruling::V) => 0.6,
        (FamilyKind::Paraboloid, Ruling::U) => 0.5,
        (FamilyKind::Paraboloid, Ruling::V) => 0.3,
    }
}

/// Side length of the default seed patch.
pub const SEED_SPAN: f64 = 0.5;

/// Default seed patch: a square of side [`SEED_SPAN`] away from the `u = v` pole.
pub fn default_grid(family: &Family, cells: usize) -> Grid2 {
    let h = SEED_SPAN / cells as f64;
    match family.kind() {
        FamilyKind::Central => Grid2::with_step((1.5, -0.5), h, cells),
        FamilyKind::Paraboloid => Grid2::with_step((0.0, -0.5), h, cells),
    }
}
