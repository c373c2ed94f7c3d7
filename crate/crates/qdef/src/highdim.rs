//! Tenenblat–Terng transformation of curvature −1 manifolds `xⁿ ⊂ R^{2n−1}`.
//!
//! Such a manifold in Tchebyshev lines-of-curvature coordinates is encoded by
//! an orthogonal matrix field `A(u)`: the first row holds the metric
//! coefficients `|dx|² = Σ a_i² (du^i)²`, the remaining rows hold the
//! principal curvatures scaled by `a_i`. The field solves the generalized
//! sine-Gordon system (GSGE)
//!
//! ```text
//! dω′ + ω′∧ω′ = −ω∧ωᵀ,    δ∧ω′ + AᵀdA∧δ = 0,
//! ```
//!
//! with `ω = δAᵀe₁`, `δ = diag(du¹ … duⁿ)` and `ω′` the Levi-Civita form
//! obtained from the first row. A transform is a second field integrated
//! from an orthogonality-preserving Ricatti system; two transforms close
//! algebraically and three close on a cube.
//!
//! Matrix-valued one-forms are stored by coefficients: `form[k]` multiplies
//! `du^k`. Normal frames carry a leading zero column so that tangent and
//! normal blocks are both `N × n` with `N = 2n − 1`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Mat = DMatrix<f64>;
pub type Vect = DVector<f64>;

/// Smallest admissible first-row entry; below it the metric degenerates.
pub const FIRST_ROW_MIN: f64 = 1e-4;
/// Ricatti sweeps re-project onto the orthogonal group this often.
pub const REPROJECT_EVERY: usize = 64;
/// Largest condition number accepted for a closure inverse.
pub const CLOSURE_COND_MAX: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HighDimError {
    #[error("dimension {n} unsupported, need n ≥ 2")]
    BadDimension { n: usize },
    #[error("λ must have positive entries and unit norm")]
    BadLambda,
    #[error("chart needs v¹ > 0 on the whole grid, lowest is {v}")]
    BadChart { v: f64 },
    #[error("sin σ vanishes for σ = {sigma}")]
    BadAngle { sigma: f64 },
    #[error("grid needs at least {min} nodes per axis, got {got}")]
    GridTooCoarse { min: usize, got: usize },
    #[error("field is not a GSGE solution, residual {residual:e}")]
    NonSolution { residual: f64 },
    #[error("first-row entry {value:e} at node {node} is below the degeneracy bound")]
    FirstRowVanishing { node: usize, value: f64 },
    #[error("initial value is not orthogonal, defect {defect:e}")]
    NotOrthogonal { defect: f64 },
    #[error("closure matrix is singular, condition number {cond:e}")]
    SingularClosure { cond: f64 },
    #[error("fields differ in grid or dimension")]
    Mismatch,
}

/// Uniform tensor grid in `Rⁿ`; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridN {
    pub lo: Vec<f64>,
    pub step: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl GridN {
    pub fn new(lo: Vec<f64>, step: Vec<f64>, nodes: Vec<usize>) -> Self {
        assert!(lo.len() == step.len() && lo.len() == nodes.len());
        Self { lo, step, nodes }
    }

    /// Cube of side `span` with `cells` intervals per axis.
    pub fn cube(lo: &[f64], span: f64, cells: usize) -> Self {
        let n = lo.len();
        Self::new(lo.to_vec(), vec![span / cells as f64; n], vec![cells + 1; n])
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.nodes[axis + 1..].iter().product()
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.nodes).fold(0, |acc, (&ci, &ni)| acc * ni + ci)
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            c[axis] = idx % self.nodes[axis];
            idx /= self.nodes[axis];
        }
        c
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx).iter().enumerate().map(|(k, &c)| self.lo[k] + self.step[k] * c as f64).collect()
    }

    /// Nodes at least `margin` away from every face.
    pub fn interior(&self, margin: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.coords(i).iter().zip(&self.nodes).all(|(&c, &n)| c >= margin && c + margin < n))
            .collect()
    }

    fn require(&self, min: usize) -> Result<(), HighDimError> {
        match self.nodes.iter().min() {
            Some(&got) if got >= min => Ok(()),
            Some(&got) => Err(HighDimError::GridTooCoarse { min, got }),
            None => Err(HighDimError::BadDimension { n: 0 }),
        }
    }
}

/// Transform angle together with `D = diag[csc σ, cot σ, …, cot σ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtParams {
    sigma: f64,
    d: Mat,
}

impl TtParams {
    pub fn new(n: usize, sigma: f64) -> Result<Self, HighDimError> {
        if n < 2 {
            return Err(HighDimError::BadDimension { n });
        }
        let s = sigma.sin();
        if s.abs() < 1e-12 {
            return Err(HighDimError::BadAngle { sigma });
        }
        let mut diag = vec![sigma.cos() / s; n];
        diag[0] = 1.0 / s;
        Ok(Self { sigma, d: Mat::from_diagonal(&Vect::from_vec(diag)) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn d(&self) -> &Mat {
        &self.d
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    /// `‖D² − cot²σ I − e₁e₁ᵀ‖`, zero up to rounding.
    pub fn square_defect(&self) -> f64 {
        let n = self.dim();
        let cot = self.sigma.cos() / self.sigma.sin();
        let mut target = Mat::identity(n, n) * (cot * cot);
        target[(0, 0)] += 1.0;
        max_abs(&(&self.d * &self.d - target))
    }
}

/// `J = diag[−1, 1, …, 1]`.
pub fn sign_flip(n: usize) -> Mat {
    let mut j = Mat::identity(n, n);
    j[(0, 0)] = -1.0;
    j
}

/// `(J + I)/2`: zeroes the first column on the right, the first row on the left.
pub fn shape_projector(n: usize) -> Mat {
    let mut p = Mat::identity(n, n);
    p[(0, 0)] = 0.0;
    p
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

fn unit(n: usize, k: usize) -> Mat {
    let mut e = Mat::zeros(n, n);
    e[(k, k)] = 1.0;
    e
}

pub fn orthogonality_defect(a: &Mat) -> f64 {
    max_abs(&(a.transpose() * a - Mat::identity(a.ncols(), a.ncols())))
}

/// Nearest orthogonal matrix (polar factor).
pub fn polar(a: &Mat) -> Mat {
    let svd = a.clone().svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}

/// `scale / σ_min(m)`. With `scale` the size of the terms that were
/// combined into `m`, cancellation counts as singularity.
fn condition(m: &Mat, scale: f64) -> f64 {
    let lo = m.clone().singular_values().iter().fold(f64::INFINITY, |lo, &v| lo.min(v));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        scale / lo
    }
}

fn spectral(m: &Mat) -> f64 {
    m.clone().singular_values().iter().fold(0.0, |hi: f64, &v| hi.max(v))
}

fn inverse_checked(m: &Mat, scale: f64) -> Result<Mat, HighDimError> {
    let cond = condition(m, scale);
    if !(cond < CLOSURE_COND_MAX) {
        return Err(HighDimError::SingularClosure { cond });
    }
    m.clone().try_inverse().ok_or(HighDimError::SingularClosure { cond })
}

/// Field value and its partial derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameJet {
    pub a: Mat,
    pub da: Vec<Mat>,
}

/// Levi-Civita form `ω′ = X′ᵀdX′` of the Tchebyshev metric of `a`.
///
/// Entry `(k, b)` of `form[k]` is `∂_b a_k / a_b`; the form is skew.
pub fn connection(a: &Mat, da: &[Mat]) -> Vec<Mat> {
    let n = a.nrows();
    (0..n)
        .map(|k| {
            let mut w = Mat::zeros(n, n);
            for b in (0..n).filter(|&b| b != k) {
                let v = da[b][(0, k)] / a[(0, b)];
                w[(k, b)] = v;
                w[(b, k)] = -v;
            }
            w
        })
        .collect()
}

/// Right side of the Ricatti system along `du^k`:
/// `A₁ω′₀ + A₁E_kA₀ᵀDA₁ − DA₀E_k`.
pub fn ricatti_rhs(a1: &Mat, a0: &Mat, w0: &Mat, d: &Mat, k: usize) -> Mat {
    let e = unit(a0.nrows(), k);
    a1 * w0 + a1 * &e * a0.transpose() * d * a1 - d * a0 * e
}

/// A GSGE solution known at every point of its chart.
pub trait GsgeSource {
    fn dim(&self) -> usize;
    fn jet(&self, u: &[f64]) -> FrameJet;
}

/// Orthogonal field sampled on a grid, with its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoField {
    pub grid: GridN,
    pub a: Vec<Mat>,
    pub da: Vec<Vec<Mat>>,
}

impl OrthoField {
    pub fn sample(source: &impl GsgeSource, grid: &GridN) -> Self {
        let (a, da) = (0..grid.len())
            .map(|i| {
                let j = source.jet(&grid.point(i));
                (j.a, j.da)
            })
            .unzip();
        Self { grid: grid.clone(), a, da }
    }

    /// The same matrix at every node.
    pub fn constant(grid: &GridN, a: &Mat) -> Self {
        let n = a.nrows();
        Self {
            grid: grid.clone(),
            a: vec![a.clone(); grid.len()],
            da: vec![vec![Mat::zeros(n, n); n]; grid.len()],
        }
    }

    /// `A + εE` at every node, derivatives unchanged.
    pub fn perturbed(&self, eps: f64, e: &Mat) -> Self {
        Self {
            grid: self.grid.clone(),
            a: self.a.iter().map(|a| a + e * eps).collect(),
            da: self.da.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn connection(&self, node: usize) -> Vec<Mat> {
        connection(&self.a[node], &self.da[node])
    }

    pub fn jet(&self, node: usize) -> FrameJet {
        FrameJet { a: self.a[node].clone(), da: self.da[node].clone() }
    }

    pub fn orthogonality_drift(&self) -> f64 {
        self.a.iter().map(orthogonality_defect).fold(0.0, f64::max)
    }

    pub fn first_row_min(&self) -> f64 {
        self.a.iter().flat_map(|a| a.row(0).iter().map(|v| v.abs()).collect::<Vec<_>>()).fold(f64::INFINITY, f64::min)
    }

    /// Worst violation of `Σ_α b^i_α b^j_α = −1` (i ≠ j) and of
    /// `Σ_i b^i_α a_i² = 0`, with `b^i_α = a^α_i / a_i`.
    pub fn curvature_invariants(&self) -> (f64, f64) {
        let n = self.dim();
        let mut worst = (0.0_f64, 0.0_f64);
        for a in &self.a {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let s: f64 = (1..n).map(|al| a[(al, i)] * a[(al, j)] / (a[(0, i)] * a[(0, j)])).sum();
                    worst.0 = worst.0.max((s + 1.0).abs());
                }
            }
            for al in 1..n {
                let s: f64 = (0..n).map(|i| a[(al, i)] / a[(0, i)] * a[(0, i)].powi(2)).sum();
                worst.1 = worst.1.max(s.abs());
            }
        }
        worst
    }

    pub fn max_gap(&self, other: &Self) -> f64 {
        self.a.iter().zip(&other.a).map(|(x, y)| max_abs(&(x - y))).fold(0.0, f64::max)
    }

    fn check_same(&self, other: &Self) -> Result<(), HighDimError> {
        if self.grid == other.grid && self.dim() == other.dim() {
            Ok(())
        } else {
            Err(HighDimError::Mismatch)
        }
    }

    /// Central difference of the stored values along `axis`.
    fn central(&self, node: usize, axis: usize) -> Mat {
        let s = self.grid.stride(axis);
        (&self.a[node + s] - &self.a[node - s]) / (2.0 * self.grid.step[axis])
    }
}

/// Pseudosphere built by rotating the tractrix through Clifford tori,
/// in the Tchebyshev chart `u¹ = ln cosh v¹`, `u^i = λ^i w^i`.
///
/// With `s = sech v¹`, `c = tanh v¹` the field is
/// `[[c, sλ], [−s, cλ], [0, μ]]` where the rows of `μ` complete `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pseudosphere {
    lambda: Vec<f64>,
    complement: Mat,
}

impl Pseudosphere {
    pub fn new(lambda: &[f64]) -> Result<Self, HighDimError> {
        let norm2: f64 = lambda.iter().map(|l| l * l).sum();
        if lambda.is_empty() || lambda.iter().any(|&l| !(l > 0.0)) || (norm2 - 1.0).abs() > 1e-12 {
            return Err(HighDimError::BadLambda);
        }
        // Householder reflection sending λ to e₁; its other columns span λ⊥.
        let m = lambda.len();
        let l = Vect::from_column_slice(lambda);
        let mut w = l.clone();
        w[0] -= 1.0;
        let h = if w.norm() < 1e-14 {
            Mat::identity(m, m)
        } else {
            Mat::identity(m, m) - &w * w.transpose() * (2.0 / w.norm_squared())
        };
        Ok(Self { lambda: lambda.to_vec(), complement: h.columns(1, m - 1).into_owned() })
    }

    /// Tchebyshev weights of the chart.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.dim() - 1
    }

    fn check_grid(&self, grid: &GridN) -> Result<(), HighDimError> {
        if grid.dim() != self.dim() {
            return Err(HighDimError::Mismatch);
        }
        if !(grid.lo[0] > 0.0) {
            return Err(HighDimError::BadChart { v: grid.lo[0] });
        }
        Ok(())
    }

    /// The connection in the rotation chart, `ω′ⁱ₁ = −e^{−u¹}duⁱ`, pulled
    /// back to the Tchebyshev chart.
    pub fn closed_connection(&self, u: &[f64]) -> Vec<Mat> {
        let n = self.dim();
        let decay = 1.0 / u[0].cosh();
        let mut forms = vec![Mat::zeros(n, n); n];
        for (i, l) in self.lambda.iter().enumerate() {
            let k = i + 1;
            forms[k][(k, 0)] = -decay * l;
            forms[k][(0, k)] = decay * l;
        }
        forms
    }

    /// Point with its tangent and augmented normal frames.
    pub fn frame_point(&self, u: &[f64]) -> FramePoint {
        let (n, big) = (self.dim(), self.ambient_dim());
        let (s, c) = (1.0 / u[0].cosh(), u[0].tanh());
        let mut radial = Vec::with_capacity(n - 1);
        let mut angular = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let (sn, cs) = u[i + 1].sin_cos();
            let (mut r, mut t) = (Vect::zeros(big), Vect::zeros(big));
            r[1 + 2 * i] = cs;
            r[2 + 2 * i] = sn;
            t[1 + 2 * i] = -sn;
            t[2 + 2 * i] = cs;
            radial.push(r);
            angular.push(t);
        }
        let axis = {
            let mut e = Vect::zeros(big);
            e[0] = 1.0;
            e
        };
        let m: Vect = radial.iter().zip(&self.lambda).fold(Vect::zeros(big), |acc, (r, l)| acc + r * *l);
        let x = &axis * (u[0] - c) + &m * s;
        let mut tangent = Mat::zeros(big, n);
        tangent.set_column(0, &(&axis * c - &m * s));
        for (i, t) in angular.iter().enumerate() {
            tangent.set_column(i + 1, t);
        }
        let mut normal = Mat::zeros(big, n);
        normal.set_column(1, &(&axis * s + &m * c));
        for k in 0..n.saturating_sub(2) {
            let nu = radial.iter().enumerate().fold(Vect::zeros(big), |acc, (i, r)| acc + r * self.complement[(i, k)]);
            normal.set_column(k + 2, &nu);
        }
        FramePoint { x, tangent, normal }
    }

    pub fn immersion(&self, grid: &GridN) -> Result<Immersion, HighDimError> {
        self.check_grid(grid)?;
        Ok(Immersion { grid: grid.clone(), points: (0..grid.len()).map(|i| self.frame_point(&grid.point(i))).collect() })
    }
}

impl GsgeSource for Pseudosphere {
    fn dim(&self) -> usize {
        self.lambda.len() + 1
    }

    fn jet(&self, u: &[f64]) -> FrameJet {
        let n = self.dim();
        let (s, c) = (1.0 / u[0].cosh(), u[0].tanh());
        let (ds, dc) = (-s * c, s * s);
        let mut a = Mat::zeros(n, n);
        let mut dv = Mat::zeros(n, n);
        a[(0, 0)] = c;
        a[(1, 0)] = -s;
        dv[(0, 0)] = dc;
        dv[(1, 0)] = -ds;
        for (i, l) in self.lambda.iter().enumerate() {
            a[(0, i + 1)] = s * l;
            a[(1, i + 1)] = c * l;
            dv[(0, i + 1)] = ds * l;
            dv[(1, i + 1)] = dc * l;
            for k in 0..n - 2 {
                a[(k + 2, i + 1)] = self.complement[(i, k)];
            }
        }
        let mut da = vec![Mat::zeros(n, n); n];
        da[0] = dv;
        FrameJet { a, da }
    }
}

/// Pseudosphere field on `grid` together with its analytic immersion.
pub fn pseudosphere_field(lambda: &[f64], grid: &GridN) -> Result<(Pseudosphere, OrthoField, Immersion), HighDimError> {
    let p = Pseudosphere::new(lambda)?;
    let imm = p.immersion(grid)?;
    let field = OrthoField::sample(&p, grid);
    Ok((p, field, imm))
}

/// Both GSGE residual two-forms, as worst entries over the evaluation nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsgeResidual {
    pub gauss: f64,
    pub codazzi: f64,
}

impl GsgeResidual {
    pub fn max(&self) -> f64 {
        self.gauss.max(self.codazzi)
    }

    /// `NonSolution` unless both residuals are within `tol`.
    pub fn require(self, tol: f64) -> Result<Self, HighDimError> {
        if self.max() <= tol {
            Ok(self)
        } else {
            Err(HighDimError::NonSolution { residual: self.max() })
        }
    }
}

/// GSGE residual of the sampled values alone; every derivative is a
/// central difference, so smooth solutions give `O(h²)`.
pub fn gsge_residual(field: &OrthoField) -> Result<GsgeResidual, HighDimError> {
    let grid = &field.grid;
    let n = field.dim();
    grid.require(5)?;
    let fd = |node: usize| -> Vec<Mat> { (0..n).map(|k| field.central(node, k)).collect() };
    let mut forms = vec![None; grid.len()];
    for node in grid.interior(1) {
        forms[node] = Some(connection(&field.a[node], &fd(node)));
    }
    let mut out = GsgeResidual { gauss: 0.0, codazzi: 0.0 };
    for node in grid.interior(2) {
        let a = &field.a[node];
        let da = fd(node);
        let w = forms[node].as_ref().expect("interior nodes carry forms");
        for k in 0..n {
            for l in k + 1..n {
                let dw = |form: usize, axis: usize| {
                    let s = grid.stride(axis);
                    let (p, m) = (forms[node + s].as_ref(), forms[node - s].as_ref());
                    (&p.expect("interior")[form] - &m.expect("interior")[form]) / (2.0 * grid.step[axis])
                };
                let mut coframe = Mat::zeros(n, n);
                coframe[(k, l)] = a[(0, k)] * a[(0, l)];
                coframe[(l, k)] = -a[(0, k)] * a[(0, l)];
                let gauss = dw(l, k) - dw(k, l) + &w[k] * &w[l] - &w[l] * &w[k] + coframe;
                let (ek, el) = (unit(n, k), unit(n, l));
                let codazzi = &ek * &w[l] - &el * &w[k] + a.transpose() * &da[k] * &el - a.transpose() * &da[l] * &ek;
                out.gauss = out.gauss.max(max_abs(&gauss));
                out.codazzi = out.codazzi.max(max_abs(&codazzi));
            }
        }
    }
    Ok(out)
}

fn rk4_step(source: &impl GsgeSource, d: &Mat, u: &[f64], a1: &Mat, k: usize, h: f64) -> Mat {
    let f = |t: f64, a: &Mat| {
        let mut p = u.to_vec();
        p[k] += t;
        let j = source.jet(&p);
        ricatti_rhs(a, &j.a, &connection(&j.a, &j.da)[k], d, k)
    };
    let k1 = f(0.0, a1);
    let k2 = f(0.5 * h, &(a1 + &k1 * (0.5 * h)));
    let k3 = f(0.5 * h, &(a1 + &k2 * (0.5 * h)));
    let k4 = f(h, &(a1 + &k3 * h));
    a1 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Transform of `source` with angle `σ`, integrated from `init` at the
/// first grid node, sweeping the axes in their natural order.
pub fn tt_backlund(source: &impl GsgeSource, grid: &GridN, params: &TtParams, init: &Mat) -> Result<OrthoField, HighDimError> {
    let order: Vec<usize> = (0..grid.dim()).collect();
    tt_backlund_ordered(source, grid, params, init, &order)
}

/// As [`tt_backlund`] with the axes swept in `order`: the first axis from
/// the base node, each later axis from every node already filled.
pub fn tt_backlund_ordered(
    source: &impl GsgeSource,
    grid: &GridN,
    params: &TtParams,
    init: &Mat,
    order: &[usize],
) -> Result<OrthoField, HighDimError> {
    let n = source.dim();
    if grid.dim() != n || params.dim() != n || init.nrows() != n || order.len() != n {
        return Err(HighDimError::Mismatch);
    }
    grid.require(2)?;
    let defect = orthogonality_defect(init);
    if defect > 1e-12 {
        return Err(HighDimError::NotOrthogonal { defect });
    }
    let d = params.d();
    let mut values: Vec<Option<Mat>> = vec![None; grid.len()];
    values[0] = Some(init.clone());
    for (pos, &axis) in order.iter().enumerate() {
        let later = &order[pos + 1..];
        let starts: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let c = grid.coords(i);
                c[axis] == 0 && later.iter().all(|&l| c[l] == 0)
            })
            .collect();
        let stride = grid.stride(axis);
        for start in starts {
            let mut a = values[start].clone().expect("swept nodes are filled");
            for step in 1..grid.nodes[axis] {
                let from = start + (step - 1) * stride;
                a = rk4_step(source, d, &grid.point(from), &a, axis, grid.step[axis]);
                if step % REPROJECT_EVERY == 0 {
                    a = polar(&a);
                }
                values[from + stride] = Some(a.clone());
            }
        }
    }
    let mut a = Vec::with_capacity(grid.len());
    let mut da = Vec::with_capacity(grid.len());
    for (node, v) in values.into_iter().enumerate() {
        let v = v.expect("sweep covers the grid");
        if let Some(value) = v.row(0).iter().map(|x| x.abs()).find(|x| *x < FIRST_ROW_MIN) {
            return Err(HighDimError::FirstRowVanishing { node, value });
        }
        let j = source.jet(&grid.point(node));
        let w0 = connection(&j.a, &j.da);
        da.push((0..n).map(|k| ricatti_rhs(&v, &j.a, &w0[k], d, k)).collect());
        a.push(v);
    }
    Ok(OrthoField { grid: grid.clone(), a, da })
}

/// Worst central-difference residual of the Ricatti system taking `old`
/// to `new` with angle `σ`.
pub fn ricatti_residual(new: &OrthoField, old: &OrthoField, params: &TtParams) -> Result<f64, HighDimError> {
    new.check_same(old)?;
    new.grid.require(3)?;
    let mut worst = 0.0_f64;
    for node in new.grid.interior(1) {
        let w = old.connection(node);
        for (k, wk) in w.iter().enumerate() {
            let rhs = ricatti_rhs(&new.a[node], &old.a[node], wk, params.d(), k);
            worst = worst.max(max_abs(&(new.central(node, k) - rhs)));
        }
    }
    Ok(worst)
}

/// Point of an immersion with its tangent frame `X′` and augmented normal
/// frame `X″` (first column zero).
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoint {
    pub x: Vect,
    pub tangent: Mat,
    pub normal: Mat,
}

impl FramePoint {
    /// `[X′ | X″ without its zero column]`, square and orthogonal.
    pub fn full_frame(&self) -> Mat {
        let (big, n) = self.tangent.shape();
        let mut f = Mat::zeros(big, big);
        f.columns_mut(0, n).copy_from(&self.tangent);
        f.columns_mut(n, n - 1).copy_from(&self.normal.columns(1, n - 1));
        f
    }
}

/// Worst finite-difference mismatches of the structure equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureDefect {
    /// `X′ᵀdx` against `δAᵀe₁`.
    pub coframe: f64,
    /// `X′ᵀdX′` against `ω′`.
    pub connection: f64,
    /// `X′ᵀdX″` against `δAᵀ(J+I)/2`.
    pub shape: f64,
    /// `X″ᵀdX″`, which vanishes.
    pub normal_connection: f64,
}

impl StructureDefect {
    pub fn max(&self) -> f64 {
        self.coframe.max(self.connection).max(self.shape).max(self.normal_connection)
    }
}

/// Immersion sampled on a grid, with frames at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Immersion {
    pub grid: GridN,
    pub points: Vec<FramePoint>,
}

impl Immersion {
    fn diff<T>(&self, node: usize, axis: usize, get: impl Fn(&FramePoint) -> T) -> T
    where
        T: std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
    {
        let s = self.grid.stride(axis);
        (get(&self.points[node + s]) - get(&self.points[node - s])) / (2.0 * self.grid.step[axis])
    }

    pub fn frame_orthogonality(&self) -> f64 {
        self.points.iter().map(|p| orthogonality_defect(&p.full_frame())).fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.points.iter().zip(&other.points).map(|(p, q)| (&p.x - &q.x).norm()).fold(0.0, f64::max)
    }

    /// Structure equations against `field` by central differences.
    pub fn structure_defect(&self, field: &OrthoField) -> Result<StructureDefect, HighDimError> {
        if self.grid != field.grid {
            return Err(HighDimError::Mismatch);
        }
        self.grid.require(3)?;
        let n = field.dim();
        let proj = shape_projector(n);
        let mut out = StructureDefect { coframe: 0.0, connection: 0.0, shape: 0.0, normal_connection: 0.0 };
        for node in self.grid.interior(1) {
            let p = &self.points[node];
            let a = &field.a[node];
            let w = field.connection(node);
            for (k, wk) in w.iter().enumerate() {
                let dx = self.diff(node, k, |q| q.x.clone());
                let dt = self.diff(node, k, |q| q.tangent.clone());
                let dn = self.diff(node, k, |q| q.normal.clone());
                let mut coframe = p.tangent.transpose() * dx;
                coframe[k] -= a[(0, k)];
                let shape = p.tangent.transpose() * &dn - unit(n, k) * a.transpose() * &proj;
                out.coframe = out.coframe.max(coframe.amax());
                out.connection = out.connection.max(max_abs(&(p.tangent.transpose() * dt - wk)));
                out.shape = out.shape.max(max_abs(&shape));
                out.normal_connection = out.normal_connection.max(max_abs(&(p.normal.transpose() * dn)));
            }
        }
        Ok(out)
    }

    /// Intrinsic curvature residual `dω′ + ω′∧ω′ + ω∧ωᵀ` with every form
    /// read off the sampled frames; vanishes for curvature −1.
    pub fn gauss_defect(&self) -> Result<f64, HighDimError> {
        self.grid.require(5)?;
        let n = self.grid.dim();
        let mut forms: Vec<Option<(Vec<Mat>, Vec<Vect>)>> = vec![None; self.grid.len()];
        for node in self.grid.interior(1) {
            let t = &self.points[node].tangent;
            let w = (0..n).map(|k| t.transpose() * self.diff(node, k, |q| q.tangent.clone())).collect();
            let c = (0..n).map(|k| t.transpose() * self.diff(node, k, |q| q.x.clone())).collect();
            forms[node] = Some((w, c));
        }
        let mut worst = 0.0_f64;
        for node in self.grid.interior(2) {
            let (w, c) = forms[node].as_ref().expect("interior");
            for k in 0..n {
                for l in k + 1..n {
                    let dw = |form: usize, axis: usize| {
                        let s = self.grid.stride(axis);
                        let p = &forms[node + s].as_ref().expect("interior").0[form];
                        let m = &forms[node - s].as_ref().expect("interior").0[form];
                        (p - m) / (2.0 * self.grid.step[axis])
                    };
                    let r = dw(l, k) - dw(k, l) + &w[k] * &w[l] - &w[l] * &w[k] + &c[k] * c[l].transpose()
                        - &c[l] * c[k].transpose();
                    worst = worst.max(max_abs(&r));
                }
            }
        }
        Ok(worst)
    }

    /// Gauss curvature of the slices `u¹ = const` from the finite-difference
    /// metric (Brioschi formula); `None` unless the slices are surfaces.
    pub fn slice_curvature(&self) -> Option<f64> {
        if self.grid.dim() != 3 || self.grid.nodes.iter().any(|&m| m < 7) {
            return None;
        }
        let g = &self.grid;
        let metric: Vec<Option<[f64; 3]>> = (0..g.len())
            .map(|node| {
                let c = g.coords(node);
                let inner = (1..3).all(|k| c[k] >= 1 && c[k] + 1 < g.nodes[k]);
                inner.then(|| {
                    let xu = self.diff(node, 1, |q| q.x.clone());
                    let xv = self.diff(node, 2, |q| q.x.clone());
                    [xu.dot(&xu), xu.dot(&xv), xv.dot(&xv)]
                })
            })
            .collect();
        let (hu, hv) = (g.step[1], g.step[2]);
        let (su, sv) = (g.stride(1), g.stride(2));
        let m = |i: usize| metric[i].expect("inner slice node");
        let mut worst = 0.0_f64;
        for node in 0..g.len() {
            let c = g.coords(node);
            if !(1..3).all(|k| c[k] >= 3 && c[k] + 3 < g.nodes[k]) {
                continue;
            }
            let du = |f: usize, i: usize| (m(i + su)[f] - m(i - su)[f]) / (2.0 * hu);
            let dv = |f: usize, i: usize| (m(i + sv)[f] - m(i - sv)[f]) / (2.0 * hv);
            let [e, f, gg] = m(node);
            let (eu, ev, fu, fv, gu, gv) = (du(0, node), dv(0, node), du(1, node), dv(1, node), du(2, node), dv(2, node));
            let evv = (dv(0, node + sv) - dv(0, node - sv)) / (2.0 * hv);
            let guu = (du(2, node + su) - du(2, node - su)) / (2.0 * hu);
            let fuv = (du(1, node + sv) - du(1, node - sv)) / (2.0 * hv);
            let det3 = |r: [[f64; 3]; 3]| {
                r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                    + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
            };
            let first = det3([
                [-0.5 * evv + fuv - 0.5 * guu, 0.5 * eu, fu - 0.5 * ev],
                [fv - 0.5 * gu, e, f],
                [0.5 * gv, f, gg],
            ]);
            let second = det3([[0.0, 0.5 * ev, 0.5 * gu], [0.5 * ev, e, f], [0.5 * gu, f, gg]]);
            worst = worst.max(((first - second) / (e * gg - f * f).powi(2)).abs());
        }
        Some(worst)
    }
}

fn frame_derivative(p: &FramePoint, jet: &FrameJet, k: usize) -> FramePoint {
    let n = jet.a.nrows();
    let w = connection(&jet.a, &jet.da);
    let shape = unit(n, k) * jet.a.transpose() * shape_projector(n);
    FramePoint {
        x: p.tangent.column(k) * jet.a[(0, k)],
        tangent: &p.tangent * &w[k] - &p.normal * shape.transpose(),
        normal: &p.tangent * shape,
    }
}

fn frame_axpy(p: &FramePoint, d: &FramePoint, h: f64) -> FramePoint {
    FramePoint { x: &p.x + &d.x * h, tangent: &p.tangent + &d.tangent * h, normal: &p.normal + &d.normal * h }
}

/// Reconstruct the immersion of a GSGE source by integrating the frame
/// equations `dx = X′ω`, `dX′ = X′ω′ − X″ω″ᵀ`, `dX″ = X′ω″` from `start`
/// at the first grid node.
pub fn tt_immersion(source: &impl GsgeSource, grid: &GridN, start: &FramePoint) -> Result<Immersion, HighDimError> {
    let n = source.dim();
    if grid.dim() != n || start.tangent.ncols() != n || start.tangent.nrows() != 2 * n - 1 {
        return Err(HighDimError::Mismatch);
    }
    grid.require(2)?;
    let mut points: Vec<Option<FramePoint>> = vec![None; grid.len()];
    points[0] = Some(start.clone());
    for axis in 0..n {
        let stride = grid.stride(axis);
        let h = grid.step[axis];
        let starts: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let c = grid.coords(i);
                c[axis] == 0 && c[axis + 1..].iter().all(|&v| v == 0)
            })
            .collect();
        for s in starts {
            for step in 1..grid.nodes[axis] {
                let from = s + (step - 1) * stride;
                let p = points[from].clone().expect("filled");
                let u = grid.point(from);
                let at = |t: f64| {
                    let mut q = u.clone();
                    q[axis] += t;
                    source.jet(&q)
                };
                let (j0, jm, j1) = (at(0.0), at(0.5 * h), at(h));
                let k1 = frame_derivative(&p, &j0, axis);
                let k2 = frame_derivative(&frame_axpy(&p, &k1, 0.5 * h), &jm, axis);
                let k3 = frame_derivative(&frame_axpy(&p, &k2, 0.5 * h), &jm, axis);
                let k4 = frame_derivative(&frame_axpy(&p, &k3, h), &j1, axis);
                let sum = FramePoint {
                    x: k1.x + k2.x * 2.0 + k3.x * 2.0 + k4.x,
                    tangent: k1.tangent + k2.tangent * 2.0 + k3.tangent * 2.0 + k4.tangent,
                    normal: k1.normal + k2.normal * 2.0 + k3.normal * 2.0 + k4.normal,
                };
                points[from + stride] = Some(frame_axpy(&p, &sum, h / 6.0));
            }
        }
    }
    Ok(Immersion { grid: grid.clone(), points: points.into_iter().map(|p| p.expect("sweep covers grid")).collect() })
}

/// The transformed immersion `x₁ = x₀ + sin σ X₀′A₁ᵀe₁` with frames
/// `X₁′ = sin σ (X₀′A₁ᵀD − X₀″(J+I)/2)A₀` and `X₁″ = sin σ (X₀′A₁ᵀ + X₀″D)(J+I)/2`.
pub fn tt_transform(seed: &Immersion, a0: &OrthoField, a1: &OrthoField, params: &TtParams) -> Result<Immersion, HighDimError> {
    a0.check_same(a1)?;
    if seed.grid != a0.grid || params.dim() != a0.dim() {
        return Err(HighDimError::Mismatch);
    }
    let n = a0.dim();
    let s = params.sigma().sin();
    let d = params.d();
    let proj = shape_projector(n);
    let points = seed
        .points
        .iter()
        .zip(a0.a.iter().zip(&a1.a))
        .map(|(p, (a0, a1))| {
            let lifted = &p.tangent * a1.transpose();
            FramePoint {
                x: &p.x + lifted.column(0) * s,
                tangent: (&lifted * d - &p.normal * &proj) * a0 * s,
                normal: (&lifted + &p.normal * d) * &proj * s,
            }
        })
        .collect();
    Ok(Immersion { grid: seed.grid.clone(), points })
}

/// Worst gap between the principal angles of the two normal spaces and `σ`,
/// measured on cosines.
pub fn isoclinic_defect(seed: &Immersion, leaf: &Immersion, sigma: f64) -> f64 {
    let target = sigma.cos().abs();
    seed.points
        .iter()
        .zip(&leaf.points)
        .map(|(p, q)| {
            let n = p.normal.ncols();
            let m = p.normal.columns(1, n - 1).transpose() * q.normal.columns(1, n - 1);
            m.singular_values().iter().map(|c| (c - target).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// `A₃` closing the square over `A₀` from `A₁` (angle `σ₁`) and `A₂`
/// (angle `σ₂`): `X(D₁ − D₂C) = D₁C − D₂` with `C = A₂A₁ᵀ`, `X = A₃A₀ᵀ`,
/// differentiated implicitly for `dA₃`.
pub fn permute_jet(j0: &FrameJet, j1: &FrameJet, j2: &FrameJet, p1: &TtParams, p2: &TtParams) -> Result<FrameJet, HighDimError> {
    let (d1, d2) = (p1.d(), p2.d());
    let c = &j2.a * j1.a.transpose();
    let closure_inv = inverse_checked(&(d1 - d2 * &c), spectral(d1) + spectral(d2))?;
    let x = (d1 * &c - d2) * &closure_inv;
    let lead = d1 + &x * d2;
    let da = (0..j0.a.nrows())
        .map(|k| {
            let dc = &j2.da[k] * j1.a.transpose() + &j2.a * j1.da[k].transpose();
            &lead * dc * &closure_inv * &j0.a + &x * &j0.da[k]
        })
        .collect();
    Ok(FrameJet { a: &x * &j0.a, da })
}

/// Algebraic closure of two transforms over the whole grid.
pub fn tt_permutability(
    a0: &OrthoField,
    a1: &OrthoField,
    a2: &OrthoField,
    p1: &TtParams,
    p2: &TtParams,
) -> Result<OrthoField, HighDimError> {
    a0.check_same(a1)?;
    a0.check_same(a2)?;
    let (a, da) = (0..a0.grid.len())
        .map(|i| permute_jet(&a0.jet(i), &a1.jet(i), &a2.jet(i), p1, p2).map(|j| (j.a, j.da)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .unzip();
    Ok(OrthoField { grid: a0.grid.clone(), a, da })
}

/// Eighth vertex of a cube of transforms, with the gap between its two
/// closed-form expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeVertex {
    pub a7: Mat,
    pub expression_gap: f64,
}

/// Closes the cube over `A₀` spanned by `A₁, A₂, A₄` (angles `σ₁, σ₂, σ₃`)
/// with face vertices `A₃, A₅, A₆`. Both expressions
///
/// ```text
/// D₁((D₂²−D₃²)D₂X₃(D₂X₃ − D₃X₅)⁻¹A₁ − D₂²A₁)
/// D₂((D₃²−D₁²)D₁X₃(D₃X₆ − D₁X₃)⁻¹A₂ − D₁²A₂)
/// ```
///
/// with `X_k = A_kA₀⁻¹` equal `D₁D₂D₃A₇`.
pub fn tt_mobius3(a: [&Mat; 7], params: [&TtParams; 3]) -> Result<CubeVertex, HighDimError> {
    let [a0, a1, a2, a3, _a4, a5, a6] = a;
    let (d1, d2, d3) = (params[0].d(), params[1].d(), params[2].d());
    let a0_inv = inverse_checked(a0, spectral(a0))?;
    let (x3, x5, x6) = (a3 * &a0_inv, a5 * &a0_inv, a6 * &a0_inv);
    let (q1, q2, q3) = (d1 * d1, d2 * d2, d3 * d3);
    let (n1, n2, n3) = (spectral(d1), spectral(d2), spectral(d3));
    let left = d1 * ((&q2 - &q3) * d2 * &x3 * inverse_checked(&(d2 * &x3 - d3 * &x5), n2 + n3)? * a1 - &q2 * a1);
    let right = d2 * ((&q3 - &q1) * d1 * &x3 * inverse_checked(&(d3 * &x6 - d1 * &x3), n3 + n1)? * a2 - &q1 * a2);
    let product = d1 * d2 * d3;
    let scale = inverse_checked(&product, spectral(&product))?;
    let a7 = &scale * left;
    let other = &scale * right;
    Ok(CubeVertex { expression_gap: max_abs(&(&a7 - &other)), a7 })
}

/// Cube closure over the grid. Values come from the first expression of
/// [`tt_mobius3`]; derivatives from the face closure over `A₁`.
pub fn tt_mobius3_field(fields: [&OrthoField; 7], params: [&TtParams; 3]) -> Result<(OrthoField, f64), HighDimError> {
    for f in &fields[1..] {
        fields[0].check_same(f)?;
    }
    let mut gap = 0.0_f64;
    let mut a = Vec::with_capacity(fields[0].grid.len());
    let mut da = Vec::with_capacity(fields[0].grid.len());
    for i in 0..fields[0].grid.len() {
        let v = tt_mobius3(fields.map(|f| &f.a[i]), params)?;
        gap = gap.max(v.expression_gap);
        let face = permute_jet(&fields[1].jet(i), &fields[3].jet(i), &fields[5].jet(i), params[1], params[2])?;
        a.push(v.a7);
        da.push(face.da);
    }
    Ok((OrthoField { grid: fields[0].grid.clone(), a, da }, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation3(axis: [f64; 3]) -> Mat {
        let r = nalgebra::Rotation3::from_scaled_axis(nalgebra::Vector3::from(axis));
        Mat::from_fn(3, 3, |i, j| r[(i, j)])
    }

    fn rotation2(t: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
    }

    fn lambda(n: usize) -> Vec<f64> {
        if n == 2 {
            vec![1.0]
        } else {
            vec![0.6, 0.8]
        }
    }

    /// Orthogonal initial values with a well spread first row.
    fn init(n: usize, which: usize) -> Mat {
        if n == 2 {
            return rotation2([PI / 4.0 - 0.3, 0.4, PI / 4.0][which]);
        }
        let axis = [[0.3, 0.15, -0.3], [-0.4, 0.0, 0.0], [0.0, 0.0, 0.0]][which];
        let mut spread = Mat::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0, 1.0, 1.0, -2.0]);
        for mut row in spread.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        polar(&(rotation3(axis) * spread))
    }

    fn patch(n: usize, cells: usize) -> GridN {
        let mut lo = vec![0.0; n];
        lo[0] = 0.7;
        GridN::cube(&lo, 0.3, cells)
    }

    fn order(coarse: f64, fine: f64) -> f64 {
        (coarse / fine).log2()
    }

    #[test]
    fn d_squared_identity() {
        for n in 2..=3 {
            assert!(TtParams::new(n, 0.9).unwrap().square_defect() < 1e-14);
        }
        assert!(matches!(TtParams::new(2, PI), Err(HighDimError::BadAngle { .. })));
    }

    #[test]
    fn pseudosphere_connection_matches_closed_form() {
        let grid = patch(2, 16);
        let (p, field, _) = pseudosphere_field(&[1.0], &grid).unwrap();
        for i in 0..grid.len() {
            let closed = p.closed_connection(&grid.point(i));
            for (w, c) in field.connection(i).iter().zip(&closed) {
                assert!(max_abs(&(w - c)) <= 1e-10);
            }
        }
        assert!(field.orthogonality_drift() < 1e-14);
        assert!(matches!(Pseudosphere::new(&[0.6, 0.7]), Err(HighDimError::BadLambda)));
    }

    #[test]
    fn pseudosphere_gsge_is_second_order() {
        let r: Vec<f64> = [8, 16]
            .iter()
            .map(|&c| gsge_residual(&pseudosphere_field(&[0.6, 0.8], &patch(3, c)).unwrap().1).unwrap().max())
            .collect();
        let ratio = r[0] / r[1];
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }

    #[test]
    fn constant_field_is_flagged() {
        let grid = patch(2, 8);
        let field = OrthoField::constant(&grid, &rotation2(0.7));
        let r = gsge_residual(&field).unwrap();
        assert!(matches!(r.require(1e-3), Err(HighDimError::NonSolution { .. })));
        let tiny = GridN::cube(&[1.0, 0.0], 0.1, 3);
        assert!(matches!(gsge_residual(&OrthoField::constant(&tiny, &rotation2(0.7))), Err(HighDimError::GridTooCoarse { .. })));
    }

    #[test]
    fn perturbation_grows_linearly() {
        let grid = patch(2, 32);
        let (_, field, _) = pseudosphere_field(&[1.0], &grid).unwrap();
        let e = Mat::from_row_slice(2, 2, &[0.3, -0.5, 0.7, 0.2]);
        let r = |eps: f64| gsge_residual(&field.perturbed(eps, &e)).unwrap().max();
        let ratio = r(2e-2) / r(1e-2);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn clifford_slices_are_flat() {
        let (_, _, imm) = pseudosphere_field(&[0.6, 0.8], &patch(3, 12)).unwrap();
        assert!(imm.slice_curvature().unwrap() < 1e-6);
    }

    #[test]
    fn frame_equations_reconstruct_seed() {
        for n in 2..=3 {
            let grid = patch(n, 16);
            let (p, field, imm) = pseudosphere_field(&lambda(n), &grid).unwrap();
            assert!(imm.frame_orthogonality() < 1e-14);
            assert!(imm.structure_defect(&field).unwrap().max() < 1e-3);
            let rebuilt = tt_immersion(&p, &grid, &imm.points[0]).unwrap();
            assert!(rebuilt.max_distance(&imm) < 1e-8);
        }
    }

    #[test]
    fn ricatti_preserves_orthogonality() {
        let grid = GridN::cube(&[0.7, 0.0], 0.4, 127);
        let p = Pseudosphere::new(&[1.0]).unwrap();
        let leaf = tt_backlund(&p, &grid, &TtParams::new(2, PI / 3.0).unwrap(), &init(2, 0)).unwrap();
        assert_eq!(leaf.grid.len(), 128 * 128);
        assert!(leaf.orthogonality_drift() <= 1e-8);
        let (one, two) = leaf.curvature_invariants();
        assert!(one <= 1e-8 && two <= 1e-8);
    }

    #[test]
    fn sweep_order_is_fourth_order() {
        for n in 2..=3 {
            let p = Pseudosphere::new(&lambda(n)).unwrap();
            let params = TtParams::new(n, PI / 3.0).unwrap();
            let gap = |cells| {
                let g = patch(n, cells);
                let fwd = tt_backlund(&p, &g, &params, &init(n, 0)).unwrap();
                let rev: Vec<usize> = (0..n).rev().collect();
                let bwd = tt_backlund_ordered(&p, &g, &params, &init(n, 0), &rev).unwrap();
                fwd.max_gap(&bwd)
            };
            let (g1, g2) = (gap(8), gap(16));
            assert!(order(g1, g2) > 3.5, "n = {n}: {g1:e} {g2:e}");
        }
    }

    #[test]
    fn leaf_gsge_is_second_order() {
        for n in 2..=3 {
            let p = Pseudosphere::new(&lambda(n)).unwrap();
            let params = TtParams::new(n, PI / 3.0).unwrap();
            let r: Vec<f64> = [16, 32]
                .iter()
                .map(|&c| gsge_residual(&tt_backlund(&p, &patch(n, c), &params, &init(n, 1)).unwrap()).unwrap().max())
                .collect();
            assert!(order(r[0], r[1]) >= 1.8, "n = {n}: {r:?}");
        }
    }

    #[test]
    fn leaf_immersion_has_the_leaf_structure() {
        for n in 2..=3 {
            let params = TtParams::new(n, PI / 3.0).unwrap();
            let mut defects = Vec::new();
            for cells in [16, 32] {
                let grid = patch(n, cells);
                let (p, a0, seed) = pseudosphere_field(&lambda(n), &grid).unwrap();
                let a1 = tt_backlund(&p, &grid, &params, &init(n, 0)).unwrap();
                let leaf = tt_transform(&seed, &a0, &a1, &params).unwrap();
                assert!(leaf.frame_orthogonality() < 1e-8);
                assert!(isoclinic_defect(&seed, &leaf, params.sigma()) <= 1e-7);
                defects.push((leaf.structure_defect(&a1).unwrap().max(), leaf.gauss_defect().unwrap()));
            }
            assert!(order(defects[0].0, defects[1].0) >= 1.8, "n = {n}: {defects:?}");
            assert!(order(defects[0].1, defects[1].1) >= 1.8, "n = {n}: {defects:?}");
        }
    }

    #[test]
    fn shifted_angle_gives_the_same_leaf() {
        let grid = patch(2, 8);
        let (p, a0, seed) = pseudosphere_field(&[1.0], &grid).unwrap();
        let (s, t) = (TtParams::new(2, 0.8).unwrap(), TtParams::new(2, 0.8 + PI).unwrap());
        let a = tt_backlund(&p, &grid, &s, &init(2, 0)).unwrap();
        let b = tt_backlund(&p, &grid, &t, &(sign_flip(2) * init(2, 0))).unwrap();
        let (x, y) = (tt_transform(&seed, &a0, &a, &s).unwrap(), tt_transform(&seed, &a0, &b, &t).unwrap());
        assert!(x.max_distance(&y) < 1e-12);
    }

    #[test]
    fn small_angle_leaf_is_close() {
        let grid = patch(2, 64);
        let (p, a0, seed) = pseudosphere_field(&[1.0], &grid).unwrap();
        for sigma in [0.7, 2.0] {
            let params = TtParams::new(2, sigma).unwrap();
            let a1 = tt_backlund(&p, &grid, &params, &init(2, 0)).unwrap();
            let dist = tt_transform(&seed, &a0, &a1, &params).unwrap().max_distance(&seed);
            assert!((dist / sigma.sin() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn permutability_closes_both_ways() {
        for n in 2..=3 {
            let (s1, s2) = (TtParams::new(n, 0.7).unwrap(), TtParams::new(n, 1.1).unwrap());
            let mut res = Vec::new();
            for cells in [16, 32] {
                let grid = patch(n, cells);
                let (p, a0, _) = pseudosphere_field(&lambda(n), &grid).unwrap();
                let a1 = tt_backlund(&p, &grid, &s1, &init(n, 0)).unwrap();
                let a2 = tt_backlund(&p, &grid, &s2, &init(n, 1)).unwrap();
                let a3 = tt_permutability(&a0, &a1, &a2, &s1, &s2).unwrap();
                if cells == 32 {
                    assert!(a3.orthogonality_drift() <= 1e-8, "n = {n}: {:e}", a3.orthogonality_drift());
                }
                res.push((ricatti_residual(&a3, &a1, &s2).unwrap(), ricatti_residual(&a3, &a2, &s1).unwrap()));
            }
            assert!(order(res[0].0, res[1].0) >= 1.8, "n = {n}: {res:?}");
            assert!(order(res[0].1, res[1].1) >= 1.8, "n = {n}: {res:?}");
        }
    }

    #[test]
    fn coinciding_transforms_return_the_base() {
        let grid = patch(2, 16);
        let (p, a0, _) = pseudosphere_field(&[1.0], &grid).unwrap();
        let (s1, s2) = (TtParams::new(2, 0.7).unwrap(), TtParams::new(2, 1.3).unwrap());
        let a1 = tt_backlund(&p, &grid, &s1, &init(2, 0)).unwrap();
        let a3 = tt_permutability(&a0, &a1, &a1, &s1, &s2).unwrap();
        assert!(a3.max_gap(&a0) < 1e-8);
        assert!(matches!(tt_permutability(&a0, &a1, &a1, &s1, &s1), Err(HighDimError::SingularClosure { .. })));
    }

    #[test]
    fn cube_expressions_agree() {
        for n in 2..=3 {
            let grid = patch(n, 32);
            let s = [0.7, 1.1, 2.0].map(|t| TtParams::new(n, t).unwrap());
            let (p, a0, _) = pseudosphere_field(&lambda(n), &grid).unwrap();
            let a1 = tt_backlund(&p, &grid, &s[0], &init(n, 0)).unwrap();
            let a2 = tt_backlund(&p, &grid, &s[1], &init(n, 1)).unwrap();
            let a4 = tt_backlund(&p, &grid, &s[2], &init(n, 2)).unwrap();
            let a3 = tt_permutability(&a0, &a1, &a2, &s[0], &s[1]).unwrap();
            let a5 = tt_permutability(&a0, &a1, &a4, &s[0], &s[2]).unwrap();
            let a6 = tt_permutability(&a0, &a2, &a4, &s[1], &s[2]).unwrap();
            let (a7, gap) = tt_mobius3_field([&a0, &a1, &a2, &a3, &a4, &a5, &a6], [&s[0], &s[1], &s[2]]).unwrap();
            assert!(gap <= 1e-7);
            assert!(a7.orthogonality_drift() <= 1e-7);
            for (face, a, b, pa, pb) in [(&a1, &a3, &a5, &s[1], &s[2]), (&a2, &a3, &a6, &s[0], &s[2]), (&a4, &a5, &a6, &s[0], &s[1])] {
                let gap = tt_permutability(face, a, b, pa, pb).unwrap().max_gap(&a7);
                assert!(gap < 1e-6, "n = {n}: {gap:e}");
            }
            for (old, sigma) in [(&a3, &s[2]), (&a5, &s[1]), (&a6, &s[0])] {
                let r = ricatti_residual(&a7, old, sigma).unwrap();
                assert!(r < 1e-2, "n = {n}: {r:e}");
            }
        }
    }
}
