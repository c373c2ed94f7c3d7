//! Bianchi permutability.
//!
//! A Bianchi quadrilateral closes two tangency configurations `(0, 1)` at `z1`
//! and `(0, 2)` at `z2` with a fourth vertex `3` tangent to `1` at `z2` and to
//! `2` at `z1`. Both conditions are bilinear in `(u3, v3)`; eliminating `u3`
//! leaves a quadratic in `v3` whose two roots are the two ruling choices.
//! The root on which the rulings cut the line `[x_{z1}⁰ x_{z2}³]` with cross
//! ratio `z1/z2` is [`Branch::Same`].

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::backlund::{inversion_rolling, BacklundError, Leaf};
use crate::grid::{metric_gap4, Grid2};
use crate::motion::RigidMotion;
use crate::quadric::{ConfocalFamily, QuadricError, Ruling};
use crate::rolling::Seed;
use crate::tangency::{delta_minus, tc_residual};

type Family = ConfocalFamily<f64>;
type Motion = RigidMotion<f64>;
/// Ruling parameters `(u, v)` of a point on the reference member.
pub type Param = (f64, f64);

/// Re-solves a closure by Newton polishing past this relative residual.
const POLISH_LIMIT: f64 = 1e-6;
/// Singular values below this fraction of the largest count as null.
const NULL_RATIO: f64 = 1e-9;
/// Lattice fills whose two routes disagree by more than this are rejected.
const LATTICE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PermutabilityError {
    #[error(transparent)]
    Quadric(#[from] QuadricError),
    #[error(transparent)]
    Backlund(#[from] BacklundError),
    #[error("no real closure (discriminant {discriminant})")]
    NoRealBranch { discriminant: f64 },
    #[error("closure polishing did not converge (residual {residual})")]
    NewtonDivergence { residual: f64 },
    #[error("closure samples leave a {nullity}-dimensional null space")]
    RankDeficientSamples { nullity: usize },
    #[error("lattice fill is path dependent at ({j}, {k}): gap {gap}")]
    LatticeConflict { j: usize, k: usize, gap: f64 },
    #[error("leaves must share the seed grid, the U ruling and distinct spectral parameters")]
    IncompatibleLeaves,
}

/// Ruling choice at the fourth vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Same,
    Flipped,
}

/// Ivory transfer `x_za(p) ↦ x_zb(p)`, `x_zb(q) ↦ x_za(q)` on the `U` rulings.
fn transfer(f: &Family, za: f64, zb: f64, p: Param, q: Param) -> Result<Motion, QuadricError> {
    f.rmpia_between(za, zb, p, q, Ruling::U)
}

/// Motion carrying the facet of vertex `b` into the frame of its neighbour `a`
/// across an edge labelled `z`.
fn facet_motion(f: &Family, z: f64, a: Param, b: Param) -> Result<Motion, QuadricError> {
    transfer(f, 0.0, z, b, a)
}

fn reference_normal(f: &Family, p: Param) -> Vector3<f64> {
    f.normal_hat_unchecked(0.0, &f.point(0.0, p.0, p.1))
}

fn bilinear(c: &[f64; 4], u: f64, v: f64) -> f64 {
    c[0] + c[1] * u + c[2] * v + c[3] * u * v
}

/// All real fourth vertices closing `(p1 at z1, p2 at z2)`; at most two.
pub fn sitc_roots(f: &Family, z1: f64, z2: f64, p1: Param, p2: Param) -> Result<Vec<Param>, PermutabilityError> {
    f.check_z(z1)?;
    f.check_z(z2)?;
    let (x1, x2) = (f.point(0.0, p1.0, p1.1), f.point(0.0, p2.0, p2.1));
    let a = f.plane_section(z2, &x1, &reference_normal(f, p1));
    let b = f.plane_section(z1, &x2, &reference_normal(f, p2));
    let c2 = b[2] * a[3] - b[3] * a[2];
    let c1 = b[0] * a[3] - b[1] * a[2] + b[2] * a[1] - b[3] * a[0];
    let c0 = b[0] * a[1] - b[1] * a[0];
    let scale = c0.abs().max(c1.abs()).max(c2.abs());
    let vs: Vec<f64> = if c2.abs() <= 1e-13 * scale {
        if c1.abs() <= 1e-13 * scale {
            return Err(PermutabilityError::NoRealBranch { discriminant: 0.0 });
        }
        vec![-c0 / c1]
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < -1e-13 * (c1 * c1 + (4.0 * c2 * c0).abs()) {
            return Err(PermutabilityError::NoRealBranch { discriminant: disc });
        }
        let q = -0.5 * (c1 + c1.signum() * disc.max(0.0).sqrt());
        if q == 0.0 {
            vec![0.0, 0.0]
        } else {
            vec![q / c2, c0 / q]
        }
    };
    vs.into_iter()
        .map(|v| {
            let (da, db) = (a[1] + a[3] * v, b[1] + b[3] * v);
            let u = if da.abs() >= db.abs() { -(a[0] + a[2] * v) / da } else { -(b[0] + b[2] * v) / db };
            polish(&a, &b, (u, v))
        })
        .collect()
}

/// Newton refinement of the bilinear pair; returns the better iterate.
fn polish(a: &[f64; 4], b: &[f64; 4], p: Param) -> Result<Param, PermutabilityError> {
    let scale = |p: Param| {
        let m = 1.0 + p.0.abs() + p.1.abs() + p.0.abs() * p.1.abs();
        m * a.iter().chain(b).fold(0.0f64, |s, c| s.max(c.abs()))
    };
    let res = |p: Param| bilinear(a, p.0, p.1).abs().max(bilinear(b, p.0, p.1).abs()) / scale(p);
    let mut best = (p, res(p));
    let mut cur = p;
    for _ in 0..3 {
        let (u, v) = cur;
        let (ga, gb) = (bilinear(a, u, v), bilinear(b, u, v));
        let (j11, j12, j21, j22) = (a[1] + a[3] * v, a[2] + a[3] * u, b[1] + b[3] * v, b[2] + b[3] * u);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        cur = (u - (ga * j22 - gb * j12) / det, v - (gb * j11 - ga * j21) / det);
        let r = res(cur);
        if r < best.1 {
            best = (cur, r);
        }
    }
    if !(best.1 <= POLISH_LIMIT) {
        return Err(PermutabilityError::NewtonDivergence { residual: best.1 });
    }
    Ok(best.0)
}

/// `φ₊`: the cross ratio of the `u` rulings at vertices 1 and 2 on the line
/// `[x_{z1}⁰ x_{z2}³]`, in its algebraic form.
pub fn phi_plus(f: &Family, z1: f64, z2: f64, p: [Param; 4]) -> f64 {
    let (n0, n3) = (reference_normal(f, p[0]), reference_normal(f, p[3]));
    let du = |z: f64, q: Param| f.scaled_du(z, q.1);
    du(z1, p[1]).dot(&n0) * du(z1, p[2]).dot(&n3) / (du(z2, p[1]).dot(&n3) * du(z2, p[2]).dot(&n0))
}

/// Closes a Bianchi quadrilateral.
pub fn sitc_complete(
    f: &Family,
    z1: f64,
    z2: f64,
    p0: Param,
    p1: Param,
    p2: Param,
    branch: Branch,
) -> Result<BianchiQuad, PermutabilityError> {
    if z1 == z2 && p1 == p2 {
        f.check_z(z1)?;
        return Ok(BianchiQuad { z1, z2, p: [p0, p1, p2, p0], branch });
    }
    let roots = sitc_roots(f, z1, z2, p1, p2)?;
    let target = z1 / z2;
    let mut ranked: Vec<(f64, Param)> = roots
        .into_iter()
        .map(|p3| ((phi_plus(f, z1, z2, [p0, p1, p2, p3]) / target - 1.0).abs(), p3))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let p3 = match (branch, ranked.len()) {
        (Branch::Same, _) => ranked[0].1,
        (Branch::Flipped, 2) => ranked[1].1,
        _ => return Err(PermutabilityError::NoRealBranch { discriminant: 0.0 }),
    };
    f.evaluate(0.0, p3.0, p3.1)?;
    Ok(BianchiQuad { z1, z2, p: [p0, p1, p2, p3], branch })
}

/// Closed Bianchi quadrilateral: vertex `0` is tangent to `1` at `z1` and to `2`
/// at `z2`; vertex `3` is tangent to `1` at `z2` and to `2` at `z1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BianchiQuad {
    pub z1: f64,
    pub z2: f64,
    pub p: [Param; 4],
    pub branch: Branch,
}

impl BianchiQuad {
    /// Edges `(a, b, z)` of the square.
    pub fn edges(&self) -> [(usize, usize, f64); 4] {
        [(0, 1, self.z1), (0, 2, self.z2), (1, 3, self.z2), (2, 3, self.z1)]
    }

    /// Largest of the eight tangency residuals.
    pub fn tangency_residual(&self, f: &Family) -> f64 {
        self.edges()
            .iter()
            .flat_map(|&(a, b, z)| [tc_residual(f, z, self.p[a], self.p[b]), tc_residual(f, z, self.p[b], self.p[a])])
            .fold(0.0, f64::max)
    }

    pub fn phi_plus(&self, f: &Family) -> f64 {
        phi_plus(f, self.z1, self.z2, self.p)
    }

    /// Geometric cross ratio of the points where the `u` rulings through
    /// `x_0¹` and through the transported `x_0²` cut the line `[x_{z1}⁰ x_{z2}³]`.
    pub fn cross_ratio(&self, f: &Family) -> Result<f64, PermutabilityError> {
        let [p0, p1, p2, p3] = self.p;
        let a = f.point(self.z1, p0.0, p0.1);
        let b = f.point(self.z2, p3.0, p3.1);
        let m = transfer(f, self.z2, self.z1, p0, p3)?;
        let x1 = f.point(0.0, p1.0, p1.1);
        let x2 = f.point(0.0, p2.0, p2.1);
        let s = line_parameter(a, b, x1, f.scaled_du(0.0, p1.1));
        let t = line_parameter(a, b, m.apply(&x2), m.apply_vector(&f.scaled_du(0.0, p2.1)));
        Ok((s / (s - 1.0)) * ((t - 1.0) / t))
    }

    /// Largest motion gap in the two co-cycles: facet 2 carried into frame 1
    /// via 0 or via 3 (the diagonal Ivory motion between 0 and 3), and facet 3
    /// carried into frame 0 via 1 or via 2 (the diagonal motion between 1 and 2).
    pub fn cocycle_residual(&self, f: &Family) -> Result<f64, PermutabilityError> {
        let [p0, p1, p2, p3] = self.p;
        let (z1, z2) = (self.z1, self.z2);
        // `into_a_b`: facet b expressed in the frame of a.
        let into_1_0 = facet_motion(f, z1, p1, p0)?;
        let into_0_1 = facet_motion(f, z1, p0, p1)?;
        let into_0_2 = facet_motion(f, z2, p0, p2)?;
        let into_1_3 = facet_motion(f, z2, p1, p3)?;
        let into_3_2 = facet_motion(f, z1, p3, p2)?;
        let into_2_3 = facet_motion(f, z1, p2, p3)?;
        let diag_03 = transfer(f, z2, z1, p0, p3)?;
        let diag_12 = transfer(f, z2, z1, p1, p2)?;
        Ok([
            into_1_0.compose(&into_0_2).distance(&diag_03),
            into_1_3.compose(&into_3_2).distance(&diag_03),
            into_0_1.compose(&into_1_3).distance(&diag_12),
            into_0_2.compose(&into_2_3).distance(&diag_12),
        ]
        .into_iter()
        .fold(0.0, f64::max))
    }

    /// Relative defect of
    /// `z2Δ⁻(z1, v0, v1)·z2Δ⁻(z1, v2, v3) = z1Δ⁻(z2, v1, v3)·z1Δ⁻(z2, v0, v2)`,
    /// the algebraic condition for permutability of ruled leaves.
    pub fn ruled_condition_residual(&self, f: &Family) -> f64 {
        let [v0, v1, v2, v3] = self.p.map(|p| p.1);
        let (z1, z2) = (self.z1, self.z2);
        let lhs = z2 * delta_minus(f, z1, v0, v1) * z2 * delta_minus(f, z1, v2, v3);
        let rhs = z1 * delta_minus(f, z2, v1, v3) * z1 * delta_minus(f, z2, v0, v2);
        (lhs - rhs).abs() / (lhs.abs() + rhs.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Parameter `s` of the point `a + s(b − a)` where the line through `p` along `d`
/// meets the line `[a b]` (least squares for nearly coplanar lines).
fn line_parameter(a: Vector3<f64>, b: Vector3<f64>, p: Vector3<f64>, d: Vector3<f64>) -> f64 {
    let e = b - a;
    let w = p - a;
    let (ee, ed, dd) = (e.dot(&e), e.dot(&d), d.dot(&d));
    let (we, wd) = (w.dot(&e), w.dot(&d));
    (we * dd - wd * ed) / (ee * dd - ed * ed)
}

/// Closure data `[v0, v1, v2, v3]` of a same-branch quadrilateral seeded by
/// `x_0(p0)` and the partner rulings `v1` (at `z1`) and `v2` (at `z2`).
pub fn closure_sample(f: &Family, z1: f64, z2: f64, p0: Param, v1: f64, v2: f64) -> Result<BianchiQuad, PermutabilityError> {
    let p1 = (f.tc_solve_u1(z1, p0, v1)?, v1);
    let p2 = (f.tc_solve_u1(z2, p0, v2)?, v2);
    sitc_complete(f, z1, z2, p0, p1, p2, Branch::Same)
}

/// Separately linear relation `Σ c_S Π_{k∈S} v_k = 0` between the `v` rulings of
/// a quadrilateral; coefficient `c_S` sits at the bit mask of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomographyCoeffs {
    pub z1: f64,
    pub z2: f64,
    /// Unit norm; the largest entry is positive.
    pub coeffs: [f64; 16],
    /// Largest normalized residual over the fitted samples.
    pub residual: f64,
}

/// Multilinear monomials of `v`, indexed by subset mask.
pub fn monomials(v: [f64; 4]) -> [f64; 16] {
    std::array::from_fn(|mask| (0..4).filter(|k| mask >> k & 1 == 1).map(|k| v[k]).product())
}

fn normalized_row(v: [f64; 4]) -> [f64; 16] {
    let m = monomials(v);
    let n = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    m.map(|x| x / n)
}

fn canonical(c: [f64; 16]) -> [f64; 16] {
    let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lead = c.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = lead.signum() / n;
    c.map(|x| x * s)
}

/// Applies a permutation of the variables to the coefficient masks.
fn permute(c: &[f64; 16], perm: [usize; 4]) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (mask, &x) in c.iter().enumerate() {
        let image: usize = (0..4).filter(|k| mask >> k & 1 == 1).map(|k| 1 << perm[k]).sum();
        out[image] = x;
    }
    out
}

fn sign_free_gap(a: &[f64; 16], b: &[f64; 16]) -> f64 {
    let plus = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let minus = a.iter().zip(b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

impl HomographyCoeffs {
    /// Normalized value at `v`.
    pub fn eval(&self, v: [f64; 4]) -> f64 {
        normalized_row(v).iter().zip(&self.coeffs).map(|(m, c)| m * c).sum()
    }

    /// Defect of the invariance under `(v0 ↔ v3, v1 ↔ v2)`.
    pub fn exchange_defect(&self) -> f64 {
        sign_free_gap(&self.coeffs, &permute(&self.coeffs, [3, 2, 1, 0]))
    }

    /// Coefficient gap to `other`, fitted with `z1 ↔ z2`, after `v1 ↔ v2`.
    pub fn swap_defect(&self, other: &HomographyCoeffs) -> f64 {
        sign_free_gap(&self.coeffs, &permute(&other.coeffs, [0, 2, 1, 3]))
    }
}

/// Least-squares null vector of the monomial matrix of closure samples.
pub fn homography_fit(z1: f64, z2: f64, samples: &[[f64; 4]]) -> Result<HomographyCoeffs, PermutabilityError> {
    if samples.len() < 16 {
        return Err(PermutabilityError::RankDeficientSamples { nullity: 16 - samples.len() });
    }
    let rows: Vec<[f64; 16]> = samples.iter().map(|&v| normalized_row(v)).collect();
    let a = DMatrix::from_fn(rows.len(), 16, |i, j| rows[i][j]);
    let svd = a.svd(false, true);
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let top = sv.max();
    let nullity = sv.iter().filter(|&&s| s <= NULL_RATIO * top).count();
    if nullity != 1 {
        return Err(PermutabilityError::RankDeficientSamples { nullity });
    }
    let k = sv.imin();
    let coeffs = canonical(std::array::from_fn(|j| vt[(k, j)]));
    let residual = rows
        .iter()
        .map(|r| r.iter().zip(&coeffs).map(|(m, c)| m * c).sum::<f64>().abs())
        .fold(0.0, f64::max);
    Ok(HomographyCoeffs { z1, z2, coeffs, residual })
}

/// Bianchi permutability applied to two leaves of one seed.
#[derive(Debug, Clone)]
pub struct BptLeaf {
    pub z1: f64,
    pub z2: f64,
    pub grid: Grid2,
    pub quads: Vec<BianchiQuad>,
    /// `x³ = (R₁, x¹)V₁³`.
    pub points: Vec<Vector3<f64>>,
    /// `x³ = (R₂, x²)V₂³`.
    pub alternate: Vec<Vector3<f64>>,
}

/// Builds `x³ = B_{z2}(x¹) = B_{z1}(x²)` algebraically from the seed and two leaves.
pub fn bpt_apply(seed: &Seed, leaf1: &Leaf, leaf2: &Leaf) -> Result<BptLeaf, PermutabilityError> {
    if leaf1.grid != seed.grid || leaf2.grid != seed.grid || leaf1.z == leaf2.z {
        return Err(PermutabilityError::IncompatibleLeaves);
    }
    if leaf1.ruling != Ruling::U || leaf2.ruling != Ruling::U {
        return Err(PermutabilityError::IncompatibleLeaves);
    }
    let f = &seed.family;
    let (z1, z2) = (leaf1.z, leaf2.z);
    let roll1 = inversion_rolling(seed, leaf1)?;
    let roll2 = inversion_rolling(seed, leaf2)?;
    let grid = seed.grid;
    let mut quads = Vec::with_capacity(grid.len());
    let (mut points, mut alternate) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
    for (i, j) in grid.nodes() {
        let k = grid.idx(i, j);
        let p0 = (grid.u(i), grid.v(j));
        let q = sitc_complete(f, z1, z2, p0, leaf1.partner(i, j), leaf2.partner(i, j), Branch::Same)?;
        let p3 = q.p[3];
        points.push(roll1[k].apply(&f.point(z2, p3.0, p3.1)));
        alternate.push(roll2[k].apply(&f.point(z1, p3.0, p3.1)));
        quads.push(q);
    }
    Ok(BptLeaf { z1, z2, grid, quads, points, alternate })
}

impl BptLeaf {
    /// Largest relative gap between the two constructions of `x³`.
    pub fn two_way_gap(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.alternate)
            .map(|(a, b)| (a - b).norm() / (1.0 + a.norm()))
            .fold(0.0, f64::max)
    }

    /// Points `x_0(u3, v3)` the new leaf is applicable to.
    pub fn reference_points(&self, f: &Family) -> Vec<Vector3<f64>> {
        self.quads.iter().map(|q| f.point(0.0, q.p[3].0, q.p[3].1)).collect()
    }

    /// Metric gap between `x³` and `x_0(u3, v3)`.
    pub fn acpia(&self, f: &Family) -> f64 {
        metric_gap4(&self.grid, &self.points, &self.reference_points(f))
    }

    pub fn max_over(&self, f: &Family, g: impl Fn(&Family, &BianchiQuad) -> f64) -> f64 {
        self.quads.iter().map(|q| g(f, q)).fold(0.0, f64::max)
    }
}

/// Möbius cube: vertex `k` carries the spectral parameters of its set bits
/// (`1 ↔ z1`, `2 ↔ z2`, `4 ↔ z3`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mobius3 {
    pub z: [f64; 3],
    pub vertices: [Param; 8],
    /// Vertex 7 closed over the faces at vertices 1, 2 and 4.
    pub vertex7_paths: [Param; 3],
}

/// Completes three pairwise quadrilaterals at `p0` and closes the cube.
pub fn mobius3(f: &Family, z: [f64; 3], p0: Param, v: [f64; 3], branch: Branch) -> Result<Mobius3, PermutabilityError> {
    let mut p = [p0; 8];
    for (bit, (&zk, &vk)) in z.iter().zip(&v).enumerate() {
        p[1 << bit] = (f.tc_solve_u1(zk, p0, vk)?, vk);
    }
    let close = |za: f64, zb: f64, base: Param, a: Param, b: Param| -> Result<Param, PermutabilityError> {
        Ok(sitc_complete(f, za, zb, base, a, b, branch)?.p[3])
    };
    p[3] = close(z[0], z[1], p[0], p[1], p[2])?;
    p[5] = close(z[0], z[2], p[0], p[1], p[4])?;
    p[6] = close(z[1], z[2], p[0], p[2], p[4])?;
    let paths = [
        close(z[1], z[2], p[1], p[3], p[5])?,
        close(z[0], z[2], p[2], p[3], p[6])?,
        close(z[0], z[1], p[4], p[5], p[6])?,
    ];
    p[7] = paths[0];
    Ok(Mobius3 { z, vertices: p, vertex7_paths: paths })
}

impl Mobius3 {
    /// Largest relative disagreement between the three closures of vertex 7.
    pub fn path_gap(&self) -> f64 {
        let [a, b, c] = self.vertex7_paths;
        let gap = |x: Param, y: Param| {
            ((x.0 - y.0).abs() / (1.0 + x.0.abs())).max((x.1 - y.1).abs() / (1.0 + x.1.abs()))
        };
        gap(a, b).max(gap(a, c)).max(gap(b, c))
    }

    /// Product of the three signed division ratios cut on the sides of the
    /// triangle `[3 5 6]` by the rulings through 1, 4 and 2.
    pub fn menelaus_product(&self, f: &Family) -> f64 {
        let p = &self.vertices;
        let [z1, z2, z3] = self.z;
        let n = |k: usize| reference_normal(f, p[k]);
        let du = |z: f64, k: usize| f.scaled_du(z, p[k].1);
        let r1 = du(z2, 1).dot(&n(3)) / du(z3, 1).dot(&n(5));
        let r4 = du(z1, 4).dot(&n(5)) / du(z2, 4).dot(&n(6));
        let r2 = du(z3, 2).dot(&n(6)) / du(z1, 2).dot(&n(3));
        r1 * r4 * r2
    }

    /// Smallest `|cos|` between a ruling tangent and a normal in
    /// [`Self::menelaus_product`]; the product loses digits as it vanishes.
    pub fn menelaus_conditioning(&self, f: &Family) -> f64 {
        let p = &self.vertices;
        let [z1, z2, z3] = self.z;
        let cos = |z: f64, k: usize, m: usize| {
            let (a, b) = (f.scaled_du(z, p[k].1), reference_normal(f, p[m]));
            a.dot(&b).abs() / (a.norm() * b.norm())
        };
        [cos(z2, 1, 3), cos(z3, 1, 5), cos(z1, 4, 5), cos(z2, 4, 6), cos(z3, 2, 6), cos(z1, 2, 3)]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Lattice of facets built from an initial cross by repeated closure.
///
/// Vertex `(j, k)` and `(j + 1, k)` are joined by `B_{z_row[j]}`, vertex `(j, k)`
/// and `(j, k + 1)` by `B_{z_col[k]}`.
#[derive(Debug, Clone)]
pub struct DdqLattice {
    pub family: Family,
    pub z_row: Vec<f64>,
    pub z_col: Vec<f64>,
    pub params: Vec<Param>,
    /// Discrete rolling `(R_(j,k), t_(j,k))` carrying `x_0` facets onto the lattice.
    pub rolling: Vec<Motion>,
    pub points: Vec<Vector3<f64>>,
}

/// Fills a lattice from the cross `x^(j,0)`, `x^(0,k)`; `row_v[j]` is the `v`
/// ruling of vertex `(j + 1, 0)` and `col_v[k]` that of `(0, k + 1)`.
pub fn ddq_build(
    f: &Family,
    z_row: &[f64],
    z_col: &[f64],
    base: Param,
    row_v: &[f64],
    col_v: &[f64],
) -> Result<DdqLattice, PermutabilityError> {
    assert_eq!(z_row.len(), row_v.len());
    assert_eq!(z_col.len(), col_v.len());
    f.evaluate(0.0, base.0, base.1)?;
    let (nj, nk) = (z_row.len() + 1, z_col.len() + 1);
    let idx = |j: usize, k: usize| j * nk + k;
    let mut params = vec![base; nj * nk];
    for j in 0..nj - 1 {
        let prev = params[idx(j, 0)];
        params[idx(j + 1, 0)] = (f.tc_solve_u1(z_row[j], prev, row_v[j])?, row_v[j]);
    }
    for k in 0..nk - 1 {
        let prev = params[idx(0, k)];
        params[idx(0, k + 1)] = (f.tc_solve_u1(z_col[k], prev, col_v[k])?, col_v[k]);
    }
    // Anti-diagonal order: every cell depends only on the previous diagonal.
    for d in 2..nj + nk - 1 {
        for j in 1..nj {
            if d < j + 1 || d - j >= nk {
                continue;
            }
            let k = d - j;
            let q = sitc_complete(
                f,
                z_row[j - 1],
                z_col[k - 1],
                params[idx(j - 1, k - 1)],
                params[idx(j, k - 1)],
                params[idx(j - 1, k)],
                Branch::Same,
            )?;
            params[idx(j, k)] = q.p[3];
        }
    }
    let mut rolling = vec![Motion::identity(); nj * nk];
    for j in 0..nj {
        for k in 0..nk {
            if j == 0 && k == 0 {
                continue;
            }
            let p = params[idx(j, k)];
            rolling[idx(j, k)] = if k == 0 {
                rolling[idx(j - 1, 0)].compose(&facet_motion(f, z_row[j - 1], params[idx(j - 1, 0)], p)?)
            } else {
                let down = rolling[idx(j, k - 1)].compose(&facet_motion(f, z_col[k - 1], params[idx(j, k - 1)], p)?);
                if j > 0 {
                    let left = rolling[idx(j - 1, k)].compose(&facet_motion(f, z_row[j - 1], params[idx(j - 1, k)], p)?);
                    let gap = down.distance(&left);
                    if !(gap <= LATTICE_TOL * (1.0 + down.translation.norm())) {
                        return Err(PermutabilityError::LatticeConflict { j, k, gap });
                    }
                }
                down
            };
        }
    }
    let points = params.iter().zip(&rolling).map(|(p, r)| r.apply(&f.point(0.0, p.0, p.1))).collect();
    Ok(DdqLattice { family: *f, z_row: z_row.to_vec(), z_col: z_col.to_vec(), params, rolling, points })
}

/// Per-cell identities of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellReport {
    /// `(R₂¹N̂₃ − N̂₀) × (R₁⁰N̂₁ − R₂⁰N̂₂)`, relative.
    pub planarity: f64,
    /// Discrete against smooth Gauss curvature, relative.
    pub gauss: f64,
    /// Edge co-cycle `R₁⁰R₃¹ = R₂⁰R₃²`.
    pub cocycle: f64,
    /// Neighbour points off the facet plane, relative to edge length.
    pub facet: f64,
}

impl CellReport {
    fn max(self, o: CellReport) -> CellReport {
        CellReport {
            planarity: self.planarity.max(o.planarity),
            gauss: self.gauss.max(o.gauss),
            cocycle: self.cocycle.max(o.cocycle),
            facet: self.facet.max(o.facet),
        }
    }
}

impl DdqLattice {
    pub fn dims(&self) -> (usize, usize) {
        (self.z_row.len() + 1, self.z_col.len() + 1)
    }

    pub fn param(&self, j: usize, k: usize) -> Param {
        self.params[j * self.dims().1 + k]
    }

    pub fn point(&self, j: usize, k: usize) -> Vector3<f64> {
        self.points[j * self.dims().1 + k]
    }

    fn motion(&self, j: usize, k: usize) -> &Motion {
        &self.rolling[j * self.dims().1 + k]
    }

    /// The quadrilateral with lower corner `(j, k)`.
    pub fn cell(&self, j: usize, k: usize) -> BianchiQuad {
        BianchiQuad {
            z1: self.z_row[j],
            z2: self.z_col[k],
            p: [self.param(j, k), self.param(j + 1, k), self.param(j, k + 1), self.param(j + 1, k + 1)],
            branch: Branch::Same,
        }
    }

    /// Discrete Gauss curvature at the lower corner of a cell with edges
    /// `e1 = x¹ − x⁰`, `e2 = x² − x⁰` and second form `−e1ᵀR₂⁰N̂₂/|N̂₀|`;
    /// returns `(discrete, smooth)`.
    pub fn discrete_gauss(&self, j: usize, k: usize) -> Result<(f64, f64), PermutabilityError> {
        let f = &self.family;
        let q = self.cell(j, k);
        let [p0, _, p2, _] = q.p;
        let n0 = reference_normal(f, p0);
        let r20 = facet_motion(f, q.z2, p0, p2)?;
        let e1 = self.point(j + 1, k) - self.point(j, k);
        let e2 = self.point(j, k + 1) - self.point(j, k);
        let frame = self.motion(j, k).rotation;
        let m = -e1.dot(&(frame * r20.rotation * reference_normal(f, p2))) / n0.norm();
        let discrete = -m * m / e1.cross(&e2).norm_squared();
        Ok((discrete, f.gauss_curvature(0.0, &f.point(0.0, p0.0, p0.1))))
    }

    pub fn cell_report(&self, j: usize, k: usize) -> Result<CellReport, PermutabilityError> {
        let f = &self.family;
        let q = self.cell(j, k);
        let [p0, p1, p2, p3] = q.p;
        let n = q.p.map(|p| reference_normal(f, p));
        let r10 = facet_motion(f, q.z1, p0, p1)?;
        let r20 = facet_motion(f, q.z2, p0, p2)?;
        let r31 = facet_motion(f, q.z2, p1, p3)?;
        let r32 = facet_motion(f, q.z1, p2, p3)?;
        let via1 = r10.compose(&r31);
        let via2 = r20.compose(&r32);
        let a = via1.rotation * n[3] - n[0];
        let b = r10.rotation * n[1] - r20.rotation * n[2];
        let planarity = a.cross(&b).norm() / (a.norm() * b.norm());
        let (kd, ks) = self.discrete_gauss(j, k)?;
        let gauss = (kd - ks).abs() / ks.abs();
        let cocycle = via1.distance(&via2) / (1.0 + via1.translation.norm());
        let x = self.point(j, k);
        let normal = self.motion(j, k).rotation * n[0].normalize();
        let facet = [self.point(j + 1, k), self.point(j, k + 1)]
            .iter()
            .map(|y| (y - x).dot(&normal).abs() / (y - x).norm())
            .fold(0.0, f64::max);
        Ok(CellReport { planarity, gauss, cocycle, facet })
    }

    /// Worst cell identities over the lattice.
    pub fn report(&self) -> Result<CellReport, PermutabilityError> {
        let (nj, nk) = self.dims();
        let mut worst = CellReport::default();
        for j in 0..nj - 1 {
            for k in 0..nk - 1 {
                worst = worst.max(self.cell_report(j, k)?);
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backlund::{default_grid, leaf_integrate, regular_init};
    use crate::grid::observed_order;
    use crate::rolling::{ruled_seed, Profile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn families() -> [Family; 2] {
        [Family::central(4.0, -1.0, 1.0).unwrap(), Family::paraboloid(1.0, -1.0).unwrap()]
    }

    /// Random admissible quadrilateral; `None` when the draw has no real closure.
    fn random_quad(f: &Family, rng: &mut ChaCha8Rng) -> Option<BianchiQuad> {
        let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
        let z1 = rng.random_range(0.1..0.6) * sign(rng);
        let z2 = rng.random_range(0.1..0.6) * sign(rng);
        let v0 = rng.random_range(-1.0..1.0);
        let u0 = v0 + rng.random_range(1.0..2.0);
        let v1 = v0 + rng.random_range(-0.4..0.4);
        let v2 = v0 + rng.random_range(-0.4..0.4);
        let q = closure_sample(f, z1, z2, (u0, v0), v1, v2).ok()?;
        let far = q.p.iter().all(|p| p.0.abs() < 50.0 && p.1.abs() < 50.0 && (p.0 - p.1).abs() > 0.05);
        far.then_some(q)
    }

    #[test]
    fn coincident_quadrilateral_returns_base() {
        let f = families()[0];
        let p0 = (2.0, 0.1);
        let p1 = (f.tc_solve_u1(0.3, p0, 0.4).unwrap(), 0.4);
        let q = sitc_complete(&f, 0.3, 0.3, p0, p1, p1, Branch::Same).unwrap();
        assert_eq!(q.p[3], p0);
    }

    #[test]
    fn equal_spectra_close_on_base() {
        // z1 = z2 with distinct partners: the same branch returns x³ = x⁰.
        for f in families() {
            let p0 = (1.8, -0.2);
            let q = closure_sample(&f, 0.3, 0.3, p0, 0.1, -0.5).unwrap();
            assert!((q.p[3].0 - p0.0).abs() < 1e-9 && (q.p[3].1 - p0.1).abs() < 1e-9, "{q:?}");
        }
    }

    #[test]
    fn random_closures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in families() {
            let mut seen = 0;
            while seen < 100 {
                let Some(q) = random_quad(&f, &mut rng) else { continue };
                seen += 1;
                let target = q.z1 / q.z2;
                assert!(q.tangency_residual(&f) <= 1e-9, "{q:?}");
                assert!((q.cross_ratio(&f).unwrap() - target).abs() <= 1e-8 * (1.0 + target.abs()), "{q:?}");
                assert!((q.phi_plus(&f) - target).abs() <= 1e-8 * (1.0 + target.abs()));
                assert!(q.cocycle_residual(&f).unwrap() <= 1e-8, "{q:?}");
                assert!(q.ruled_condition_residual(&f) <= 1e-8, "{q:?}");
            }
        }
    }

    #[test]
    fn flipped_branch_is_tangent_but_breaks_cross_ratio() {
        let f = families()[0];
        let p0 = (1.8, -0.2);
        let p1 = (f.tc_solve_u1(0.3, p0, 0.1).unwrap(), 0.1);
        let p2 = (f.tc_solve_u1(-0.4, p0, -0.5).unwrap(), -0.5);
        let q = sitc_complete(&f, 0.3, -0.4, p0, p1, p2, Branch::Flipped).unwrap();
        assert!(q.tangency_residual(&f) <= 1e-9);
        assert!((q.phi_plus(&f) - 0.3 / -0.4).abs() > 1e-3);
    }

    #[test]
    fn square_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in families() {
            let mut seen = 0;
            while seen < 20 {
                let Some(q) = random_quad(&f, &mut rng) else { continue };
                seen += 1;
                let [p0, p1, p2, p3] = q.p;
                // Flip (0 ↔ 1, 2 ↔ 3) and rotation (0 → 1 → 3 → 2 → 0, z1 ↔ z2).
                let flip = sitc_complete(&f, q.z1, q.z2, p1, p0, p3, Branch::Same).unwrap();
                let rot = sitc_complete(&f, q.z2, q.z1, p1, p3, p0, Branch::Same).unwrap();
                for r in [flip.p[3], rot.p[3]] {
                    assert!((r.0 - p2.0).abs() <= 1e-8 * (1.0 + p2.0.abs()), "{r:?} {p2:?}");
                    assert!((r.1 - p2.1).abs() <= 1e-8 * (1.0 + p2.1.abs()));
                }
            }
        }
    }

    fn samples(f: &Family, z1: f64, z2: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 4]> {
        let mut out = Vec::new();
        while out.len() < n {
            let v0: f64 = rng.random_range(-1.0..1.0);
            let p0 = (v0 + rng.random_range(1.0..2.0), v0);
            let (d1, d2): (f64, f64) = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
            if let Ok(q) = closure_sample(f, z1, z2, p0, v0 + d1, v0 + d2) {
                out.push(q.p.map(|p| p.1));
            }
        }
        out
    }

    #[test]
    fn homography_between_rulings() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in families() {
            let (z1, z2) = (0.3, -0.5);
            let fit = homography_fit(z1, z2, &samples(&f, z1, z2, 40, &mut rng)).unwrap();
            assert!(fit.residual <= 1e-7, "{fit:?}");
            for v in samples(&f, z1, z2, 50, &mut rng) {
                assert!(fit.eval(v).abs() <= 1e-7);
            }
            assert!(fit.exchange_defect() <= 1e-6, "{}", fit.exchange_defect());
            let swapped = homography_fit(z2, z1, &samples(&f, z2, z1, 40, &mut rng)).unwrap();
            assert!(fit.swap_defect(&swapped) <= 1e-6, "{}", fit.swap_defect(&swapped));
        }
    }

    #[test]
    fn equal_spectra_homography_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = families()[0];
        let s = samples(&f, 0.3, 0.3, 40, &mut rng);
        assert!(s.iter().all(|v| (v[3] - v[0]).abs() <= 1e-9));
        // The relation factors through v3 − v0, leaving a null space of (v3 − v0)·g(v1, v2).
        assert_eq!(homography_fit(0.3, 0.3, &s).unwrap_err(), PermutabilityError::RankDeficientSamples { nullity: 4 });
        assert!(matches!(homography_fit(0.3, 0.5, &s[..10]), Err(PermutabilityError::RankDeficientSamples { .. })));
    }

    #[test]
    fn mobius_cube_closes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for f in families() {
            let mut seen = 0;
            while seen < 40 {
                let z = [0.35, -0.25, 0.5].map(|z: f64| z * rng.random_range(0.5..1.0));
                let v0 = rng.random_range(-1.0..1.0);
                let p0 = (v0 + rng.random_range(1.0..2.0), v0);
                let v = [0, 1, 2].map(|_| v0 + rng.random_range(-0.4..0.4));
                let Ok(m) = mobius3(&f, z, p0, v, Branch::Same) else { continue };
                seen += 1;
                assert!(m.path_gap() <= 1e-8, "{m:?}");
                let cond = m.menelaus_conditioning(&f);
                assert!(cond > 0.0 && cond <= 1.0);
                assert!((m.menelaus_product(&f) - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn collapsed_cube() {
        let f = families()[0];
        let m = mobius3(&f, [0.3, -0.4, 0.3], (1.8, -0.2), [0.1, -0.5, 0.1], Branch::Same).unwrap();
        assert_eq!(m.vertices[5], m.vertices[0]);
        let (a, b) = (m.vertices[7], m.vertices[2]);
        assert!((a.0 - b.0).abs() <= 1e-8 && (a.1 - b.1).abs() <= 1e-8, "{a:?} {b:?}");
    }

    fn reference_lattice(n: usize) -> DdqLattice {
        let f = families()[0];
        let row: Vec<f64> = (1..n).map(|j| 1.5 + 0.05 * j as f64).collect();
        let col: Vec<f64> = (1..n).map(|k| 1.5 - 0.05 * k as f64).collect();
        ddq_build(&f, &vec![0.3; n - 1], &vec![0.6; n - 1], (-3.0, 1.5), &row, &col).unwrap()
    }

    #[test]
    fn lattice_identities() {
        let lat = reference_lattice(8);
        let r = lat.report().unwrap();
        assert!(r.planarity <= 1e-9 && r.cocycle <= 1e-9 && r.gauss <= 1e-8 && r.facet <= 1e-9, "{r:?}");
    }

    #[test]
    fn single_cell_lattice_is_a_quadrilateral() {
        let f = families()[0];
        let lat = reference_lattice(2);
        let q = closure_sample(&f, 0.3, 0.6, (-3.0, 1.5), 1.55, 1.45).unwrap();
        assert_eq!(lat.cell(0, 0).p, q.p);
    }

    #[test]
    fn leaves_permute() {
        for f in families() {
            let gaps: Vec<f64> = [16, 32]
                .iter()
                .map(|&n| {
                    let seed = ruled_seed(f, Profile::constant(0.3), default_grid(&f, n)).unwrap();
                    let init = regular_init(&f, Ruling::U);
                    let l1 = leaf_integrate(&seed, 0.4, init, Ruling::U).unwrap();
                    let l2 = leaf_integrate(&seed, 0.2, init, Ruling::U).unwrap();
                    let b = bpt_apply(&seed, &l1, &l2).unwrap();
                    assert!(b.two_way_gap() <= 1e-6, "{}", b.two_way_gap());
                    assert!(b.max_over(&f, |f, q| q.cocycle_residual(f).unwrap()) <= 1e-8);
                    assert!(b.max_over(&f, |f, q| q.ruled_condition_residual(f)) <= 1e-8);
                    b.acpia(&f)
                })
                .collect();
            assert!(observed_order(gaps[0], gaps[1]) >= 1.8, "{gaps:?}");
        }
    }
}
