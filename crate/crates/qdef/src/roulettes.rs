//! Planar rolling: conics rolled on lines trace Delaunay meridians, the
//! elliptic Kepler roll, and the square-wheel road.
//!
//! Every roll is computed twice: from the closed-form rotation and by
//! [`roll_curves`] on arclength-matched curves.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::motion::RigidMotion2;
use crate::rolling::{roll_curves, RollingError};

type V2 = Vector2<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouletteError {
    #[error(transparent)]
    Rolling(#[from] RollingError),
    #[error("need z < a < b, got z = {z}, a = {a}, b = {b}")]
    OrderingViolation { z: f64, a: f64, b: f64 },
    #[error("need b > 1, got {b}")]
    BadEccentricity { b: f64 },
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("parameter {s} outside [0, π/4)")]
    OutOfRange { s: f64 },
}

/// A rolled curve: contact points on the road, the rolling motions and the
/// trace of the rigidly carried point.
#[derive(Debug, Clone)]
pub struct Roulette {
    pub params: Vec<f64>,
    pub contact: Vec<V2>,
    pub motions: Vec<RigidMotion2>,
    pub trace: Vec<V2>,
}

impl Roulette {
    /// Largest distance between the numeric trace and `other`.
    pub fn deviation(&self, other: &[V2]) -> f64 {
        self.trace.iter().zip(other).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    let h = (range.1 - range.0) / (n - 1) as f64;
    (0..n).map(|k| range.0 + h * k as f64).collect()
}

fn rotation(c: f64, s: f64) -> Matrix2<f64> {
    Matrix2::new(c, -s, s, c)
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `∫_{x₀}^{x_k} g` at every sample by five-point Gauss–Legendre per interval.
pub fn cumulative_integral(g: impl Fn(f64) -> f64, xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(xs.len());
    out.push(0.0);
    for w in xs.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        acc += half * GAUSS5.iter().map(|(x, wt)| wt * g(mid + half * x)).sum::<f64>();
        out.push(acc);
    }
    out
}

/// Fourth-order central first derivative of uniform samples; `None` within
/// two samples of either end.
fn fd1<T>(xs: &[T], h: f64, k: usize) -> Option<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    if k < 2 || k + 2 >= xs.len() {
        return None;
    }
    Some(((xs[k + 1] - xs[k - 1]) * 8.0 + (xs[k - 2] - xs[k + 2])) * (1.0 / (12.0 * h)))
}

fn cross(a: V2, b: V2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Velocity of the carried point: rolling without slip turns it about the
/// contact point at the rate `dθ/du` of the motion angle.
fn rolled_velocity(r: &Roulette, h: f64) -> Vec<Option<V2>> {
    let angles: Vec<f64> = r.motions.iter().map(|m| m.angle).collect();
    (0..angles.len())
        .map(|k| {
            let w = fd1(&angles, h, k)?;
            let arm = r.trace[k] - r.contact[k];
            Some(V2::new(-arm.y, arm.x) * w)
        })
        .collect()
}

/// Signed curvature of a meridian and the parallel-circle term of its surface
/// of revolution about the `y` axis, at interior samples.
fn revolution_curvatures(r: &Roulette, h: f64) -> Vec<Option<(f64, f64)>> {
    let vel = rolled_velocity(r, h);
    (0..vel.len())
        .map(|k| {
            let d1 = vel[k]?;
            let window: Option<Vec<V2>> = (k.checked_sub(2)?..=k + 2).map(|j| vel.get(j).copied().flatten()).collect();
            let d2 = fd1(&window?, h, 2)?;
            let speed = d1.norm();
            Some((cross(d1, d2) / speed.powi(3), d1.y / (speed * r.trace[k].x)))
        })
        .collect()
}

/// The focus of the parabola `(−2 sinh u, sinh² u)` rolled on the road
/// `(0, cosh u sinh u + u)`.
#[derive(Debug, Clone)]
pub struct CatenaryRun {
    pub roulette: Roulette,
    /// Closed-form trace `p + R(f − p₀)`.
    pub closed_form: Vec<V2>,
    /// Largest distance of the closed-form trace from `(cosh u, u)`.
    pub closed_deviation: f64,
    /// Largest distance of the numerically rolled trace from `(cosh u, u)`.
    pub rolled_deviation: f64,
}

pub fn parabola_catenary(u_range: (f64, f64), n: usize) -> Result<CatenaryRun, RouletteError> {
    if n < 16 {
        return Err(RouletteError::TooFewSamples { n, min: 16 });
    }
    let us = linspace(u_range, n);
    let focus = V2::new(0.0, 1.0);
    let wheel = |u: f64| {
        let (s, c) = (u.sinh(), u.cosh());
        (V2::new(-2.0 * s, s * s), V2::new(-2.0 * c, 2.0 * s * c))
    };
    let road = |u: f64| {
        let (s, c) = (u.sinh(), u.cosh());
        (V2::new(0.0, c * s + u), V2::new(0.0, 2.0 * c * c))
    };
    let motions = roll_curves(wheel, road, &us)?;
    let catenary: Vec<V2> = us.iter().map(|&u| V2::new(u.cosh(), u)).collect();
    let closed_form: Vec<V2> = us
        .iter()
        .map(|&u| {
            let r = rotation(u.tanh(), -1.0 / u.cosh());
            road(u).0 + r * (focus - wheel(u).0)
        })
        .collect();
    let roulette = Roulette {
        contact: us.iter().map(|&u| road(u).0).collect(),
        trace: motions.iter().map(|m| m.apply(&focus)).collect(),
        params: us,
        motions,
    };
    let gap = |a: &[V2]| a.iter().zip(&catenary).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok(CatenaryRun {
        closed_deviation: gap(&closed_form),
        rolled_deviation: gap(&roulette.trace),
        closed_form,
        roulette,
    })
}

/// Focus trace of the ellipse `(cos u, b sin u)` rolled on the `y` axis.
#[derive(Debug, Clone)]
pub struct DelaunayRun {
    pub b: f64,
    pub e: f64,
    pub roulette: Roulette,
    pub closed_form: Vec<V2>,
    /// Finite-difference meridian curvature at interior samples.
    pub curvature: Vec<Option<f64>>,
    /// Finite-difference sum of principal curvatures of the revolved trace.
    pub mean_curvature: Vec<Option<f64>>,
}

/// Closed-form meridian curvature `E sin u / (b(b − E sin u))`.
pub fn delaunay_curvature(b: f64, e: f64, u: f64) -> f64 {
    e * u.sin() / (b * (b - e * u.sin()))
}

pub fn ellipse_delaunay(b: f64, e: f64, u_range: (f64, f64), n: usize) -> Result<DelaunayRun, RouletteError> {
    if !(b >= 1.0) || (e * e - (b * b - 1.0)).abs() > 1e-12 * b * b {
        return Err(RouletteError::BadEccentricity { b });
    }
    if n < 16 {
        return Err(RouletteError::TooFewSamples { n, min: 16 });
    }
    let us = linspace(u_range, n);
    let h = us[1] - us[0];
    let speed = move |u: f64| (1.0 + e * e * u.cos().powi(2)).sqrt();
    let height = cumulative_integral(speed, &us);
    let focus = V2::new(0.0, e);
    let wheel = |u: f64| (V2::new(u.cos(), b * u.sin()), V2::new(-u.sin(), b * u.cos()));
    let index = |u: f64| (((u - us[0]) / h).round() as usize).min(us.len() - 1);
    let road = |u: f64| (V2::new(0.0, height[index(u)]), V2::new(0.0, speed(u)));
    let motions = roll_curves(wheel, road, &us)?;
    let closed_form: Vec<V2> = us
        .iter()
        .zip(&height)
        .map(|(&u, &y)| {
            let r = rotation(b * u.cos(), -u.sin()) / speed(u);
            V2::new(0.0, y) + r * (focus - wheel(u).0)
        })
        .collect();
    let roulette = Roulette {
        contact: height.iter().map(|&y| V2::new(0.0, y)).collect(),
        trace: motions.iter().map(|m| m.apply(&focus)).collect(),
        params: us,
        motions,
    };
    let curv = revolution_curvatures(&roulette, h);
    Ok(DelaunayRun {
        b,
        e,
        curvature: curv.iter().map(|c| c.map(|(k, _)| k)).collect(),
        mean_curvature: curv.iter().map(|c| c.map(|(k, p)| k + p)).collect(),
        closed_form,
        roulette,
    })
}

impl DelaunayRun {
    pub fn curvature_residual(&self) -> f64 {
        self.roulette
            .params
            .iter()
            .zip(&self.curvature)
            .filter_map(|(&u, k)| k.map(|k| (k - delaunay_curvature(self.b, self.e, u)).abs()))
            .fold(0.0, f64::max)
    }

    /// Largest `|H + 1/b|`.
    pub fn mean_curvature_residual(&self) -> f64 {
        self.mean_curvature.iter().flatten().map(|h| (h + 1.0 / self.b).abs()).fold(0.0, f64::max)
    }

    /// Defects of the polar identities `|dt| = k₀|c₀||dc₀|` and
    /// `k_t = 1/|c₀| + N₀ᵀc₀/(k₀|c₀|³)` linking the trace `t` to the conic
    /// `c₀ = e₀ − f` seen from its focus.
    pub fn polar_defect(&self) -> f64 {
        let (b, e) = (self.b, self.e);
        let h = self.roulette.params[1] - self.roulette.params[0];
        let vel = rolled_velocity(&self.roulette, h);
        let mut worst: f64 = 0.0;
        for (k, &u) in self.roulette.params.iter().enumerate() {
            let (Some(dt), Some(kt)) = (vel[k], self.curvature[k]) else { continue };
            let c0 = V2::new(u.cos(), b * u.sin() - e);
            let dc0 = V2::new(-u.sin(), b * u.cos());
            let k0 = b / dc0.norm().powi(3);
            let inward = -V2::new(b * u.cos(), u.sin()) / dc0.norm();
            let speed = k0 * c0.norm() * dc0.norm();
            let predicted = 1.0 / c0.norm() + inward.dot(&c0) / (k0 * c0.norm().powi(3));
            worst = worst.max((dt.norm() - speed).abs() / speed).max((kt.abs() - predicted.abs()).abs() * c0.norm());
        }
        worst
    }
}

/// Elliptic Kepler roll: the ellipse `(√(a−z) cos ŝ, √(b−z) sin ŝ)`,
/// `ŝ = s/√(a−z)`, rolls on the road `(s, −|G(s)|)` with its focus `F = √(b−a) e₂`
/// carried along the horizontal axis.
#[derive(Debug, Clone)]
pub struct KeplerRun {
    pub a: f64,
    pub b: f64,
    pub z: f64,
    pub roulette: Roulette,
    /// Time `t(s) = ½∫|G| ds` by quadrature.
    pub time: Vec<f64>,
    /// Polar angle of `E` seen from `F`, unwrapped.
    pub theta: Vec<f64>,
    /// Focal radius `|G|`.
    pub radius: Vec<f64>,
    /// `½|Ė|² − (4√(b−z)/(a−z))/|G|`.
    pub energy: Vec<f64>,
}

struct Ellipse {
    ra: f64,
    rb: f64,
    focus: f64,
}

impl Ellipse {
    fn point(&self, s: f64) -> V2 {
        let w = s / self.ra;
        V2::new(self.ra * w.cos(), self.rb * w.sin())
    }

    fn tangent(&self, s: f64) -> V2 {
        let w = s / self.ra;
        V2::new(-w.sin(), self.rb / self.ra * w.cos())
    }

    /// `|G| = √(b−z) − √(b−a) sin ŝ` and its `s` derivative.
    fn radius(&self, s: f64) -> (f64, f64) {
        let w = s / self.ra;
        (self.rb - self.focus * w.sin(), -self.focus / self.ra * w.cos())
    }
}

pub fn kepler_roll(a: f64, b: f64, z: f64, s_range: (f64, f64), n: usize) -> Result<KeplerRun, RouletteError> {
    if !(z < a && a <= b) {
        return Err(RouletteError::OrderingViolation { z, a, b });
    }
    if n < 16 {
        return Err(RouletteError::TooFewSamples { n, min: 16 });
    }
    let el = Ellipse { ra: (a - z).sqrt(), rb: (b - z).sqrt(), focus: (b - a).sqrt() };
    let ss = linspace(s_range, n);
    let f = V2::new(0.0, el.focus);
    let wheel = |s: f64| (el.point(s), el.tangent(s));
    let road = |s: f64| {
        let (g, dg) = el.radius(s);
        (V2::new(s, -g), V2::new(1.0, -dg))
    };
    let motions = roll_curves(wheel, road, &ss)?;
    let time = cumulative_integral(|s| 0.5 * el.radius(s).0, &ss);
    let mass = 4.0 * el.rb / (a - z);
    let mut theta: Vec<f64> = Vec::with_capacity(n);
    for &s in &ss {
        let g = el.point(s) - f;
        let mut th = g.y.atan2(g.x);
        if let Some(prev) = theta.last() {
            th += ((prev - th) / TAU).round() * TAU;
        }
        theta.push(th);
    }
    let radius: Vec<f64> = ss.iter().map(|&s| el.radius(s).0).collect();
    let energy = ss
        .iter()
        .zip(&radius)
        .map(|(&s, &g)| {
            let vel = el.tangent(s) * (2.0 / g);
            0.5 * vel.norm_squared() - mass / g
        })
        .collect();
    let roulette = Roulette {
        contact: ss.iter().map(|&s| road(s).0).collect(),
        trace: motions.iter().map(|m| m.apply(&f)).collect(),
        params: ss,
        motions,
    };
    Ok(KeplerRun { a, b, z, roulette, time, theta, radius, energy })
}

impl KeplerRun {
    /// Largest distance of the rolled focus from `s e₁`.
    pub fn focus_line_defect(&self) -> f64 {
        self.roulette.params.iter().zip(&self.roulette.trace).map(|(&s, p)| (p - V2::new(s, 0.0)).norm()).fold(0.0, f64::max)
    }

    /// Largest `| |G|² dθ/dt − 2 |`, with `dθ/ds` by finite differences and
    /// `dt/ds = |G|/2`.
    pub fn areal_speed_defect(&self) -> f64 {
        let h = self.roulette.params[1] - self.roulette.params[0];
        (0..self.theta.len())
            .filter_map(|k| {
                let dth = fd1(&self.theta, h, k)?;
                let g = self.radius[k];
                Some((g * g * dth / (0.5 * g) - 2.0).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).abs() / e0.abs()).fold(0.0, f64::max)
    }

    /// Largest relative gap between the finite-difference acceleration `d²E/dt²`
    /// and the inverse-square pull `(4√(b−z)/(a−z)) G/|G|³` toward the focus.
    pub fn inverse_square_defect(&self) -> f64 {
        let (a, b, z) = (self.a, self.b, self.z);
        let el = Ellipse { ra: (a - z).sqrt(), rb: (b - z).sqrt(), focus: (b - a).sqrt() };
        let ss = &self.roulette.params;
        let h = ss[1] - ss[0];
        let vel: Vec<V2> = ss.iter().zip(&self.radius).map(|(&s, &g)| el.tangent(s) * (2.0 / g)).collect();
        let mass = 4.0 * el.rb / (a - z);
        (0..ss.len())
            .filter_map(|k| {
                let dv = fd1(&vel, h, k)?;
                let acc = dv * (2.0 / self.radius[k]);
                let g = V2::new(0.0, el.focus) - el.point(ss[k]);
                let pull = g * (mass / g.norm().powi(3));
                Some((acc - pull).norm() / pull.norm())
            })
            .fold(0.0, f64::max)
    }
}

/// Time for one revolution, `½∫₀^{2π√(a−z)} |G| ds`, by quadrature.
pub fn kepler_period(a: f64, b: f64, z: f64, n: usize) -> Result<f64, RouletteError> {
    if !(z < a && a <= b) {
        return Err(RouletteError::OrderingViolation { z, a, b });
    }
    let el = Ellipse { ra: (a - z).sqrt(), rb: (b - z).sqrt(), focus: (b - a).sqrt() };
    let ss = linspace((0.0, TAU * el.ra), n.max(2));
    Ok(*cumulative_integral(|s| 0.5 * el.radius(s).0, &ss).last().expect("nonempty"))
}

/// Closed form `π√(a−z)√(b−z)`.
pub fn kepler_period_closed(a: f64, b: f64, z: f64) -> f64 {
    PI * (a - z).sqrt() * (b - z).sqrt()
}

/// A square wheel side (the line `y = −1` under the axle) rolled on the road
/// `(ln(sec s + tan s), −sec s)`.
#[derive(Debug, Clone)]
pub struct WheelRoad {
    pub roulette: Roulette,
    /// Largest `|axle height|`.
    pub height_drift: f64,
    /// Largest `|y + cosh x|` on the road.
    pub catenary_defect: f64,
}

pub fn wheel_road_demo(s_range: (f64, f64), n: usize) -> Result<WheelRoad, RouletteError> {
    for s in [s_range.0, s_range.1] {
        if !(0.0..PI / 4.0).contains(&s) {
            return Err(RouletteError::OutOfRange { s });
        }
    }
    if n < 2 {
        return Err(RouletteError::TooFewSamples { n, min: 2 });
    }
    let ss = linspace(s_range, n);
    let road = |s: f64| {
        let (sec, tan) = (1.0 / s.cos(), s.tan());
        (V2::new((sec + tan).ln(), -sec), V2::new(sec, -sec * tan))
    };
    let wheel = |s: f64| (V2::new(s.tan(), -1.0), V2::new(1.0 / s.cos().powi(2), 0.0));
    let motions = roll_curves(wheel, road, &ss)?;
    let trace: Vec<V2> = motions.iter().map(|m| m.apply(&V2::zeros())).collect();
    let contact: Vec<V2> = ss.iter().map(|&s| road(s).0).collect();
    Ok(WheelRoad {
        height_drift: trace.iter().map(|p| p.y.abs()).fold(0.0, f64::max),
        catenary_defect: contact.iter().map(|p| (p.y + p.x.cosh()).abs()).fold(0.0, f64::max),
        roulette: Roulette { params: ss, contact, motions, trace },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catenary_from_rolled_parabola() {
        let run = parabola_catenary((-2.0, 2.0), 401).unwrap();
        assert!(run.closed_deviation <= 1e-10 && run.rolled_deviation <= 1e-10, "{run:?}");
        let mid = run.roulette.trace[200];
        assert!((mid - V2::new(1.0, 0.0)).norm() <= 1e-12);
        let t = &run.roulette.trace;
        for k in 0..t.len() {
            assert!((t[k].x - t[t.len() - 1 - k].x).abs() <= 1e-12);
        }
        assert!(parabola_catenary((0.0, 1.0), 8).is_err());
    }

    #[test]
    fn delaunay_meridian_has_constant_mean_curvature() {
        let b: f64 = 2.0;
        let run = ellipse_delaunay(b, (b * b - 1.0).sqrt(), (0.0, TAU), 4097).unwrap();
        assert!(run.roulette.deviation(&run.closed_form) <= 1e-10);
        assert!(run.curvature_residual() <= 1e-9, "{}", run.curvature_residual());
        assert!(run.mean_curvature_residual() <= 1e-5, "{}", run.mean_curvature_residual());
        assert!(run.polar_defect() <= 1e-6, "{}", run.polar_defect());
    }

    #[test]
    fn circle_rolls_to_a_cylinder() {
        let run = ellipse_delaunay(1.0, 0.0, (0.0, TAU), 257).unwrap();
        assert!(run.roulette.trace.iter().all(|p| (p.x + 1.0).abs() <= 1e-14));
        assert!(run.mean_curvature_residual() <= 1e-12);
        assert!(matches!(ellipse_delaunay(2.0, 1.0, (0.0, 1.0), 64), Err(RouletteError::BadEccentricity { .. })));
    }

    #[test]
    fn kepler_laws() {
        let (a, b, z): (f64, f64, f64) = (2.0, 3.0, 0.0);
        let ra = (a - z).sqrt();
        let run = kepler_roll(a, b, z, (0.0, TAU * ra), 4097).unwrap();
        assert!(run.focus_line_defect() <= 1e-9, "{}", run.focus_line_defect());
        assert!(run.areal_speed_defect() <= 1e-8, "{}", run.areal_speed_defect());
        assert!(run.energy_drift() <= 1e-7);
        assert!((run.energy[0] + 2.0 / (a - z)).abs() <= 1e-12);
        assert!(run.inverse_square_defect() <= 1e-6, "{}", run.inverse_square_defect());
        let period = kepler_period(a, b, z, 64).unwrap();
        assert!((period - PI * 6f64.sqrt()).abs() <= 1e-6 * period);
        assert!((run.time.last().unwrap() - period).abs() <= 1e-9 * period);
    }

    #[test]
    fn circular_orbit() {
        let run = kepler_roll(2.0, 2.0, -1.0, (0.0, 3.0), 128).unwrap();
        assert!(run.radius.iter().all(|&g| (g - 3f64.sqrt()).abs() <= 1e-15));
        let w: Vec<f64> = run.theta.windows(2).zip(run.time.windows(2)).map(|(th, t)| (th[1] - th[0]) / (t[1] - t[0])).collect();
        assert!(w.iter().all(|x| (x - w[0]).abs() <= 1e-10));
        assert!(matches!(kepler_roll(2.0, 1.0, 0.0, (0.0, 1.0), 64), Err(RouletteError::OrderingViolation { .. })));
    }

    #[test]
    fn square_wheel_road() {
        let run = wheel_road_demo((0.0, PI / 4.0 - 1e-6), 1000).unwrap();
        assert!((run.roulette.contact[0] - V2::new(0.0, -1.0)).norm() == 0.0);
        assert!(run.roulette.trace[0].norm() <= 1e-15);
        assert!(run.height_drift <= 1e-8 && run.catenary_defect <= 1e-12, "{run:?}");
        assert!(wheel_road_demo((0.0, 1.0), 10).is_err());
    }
}
