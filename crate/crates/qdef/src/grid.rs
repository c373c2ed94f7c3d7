//! Uniform parameter grids and finite-difference stencils.

use std::ops::{Add, Mul, Sub};

use nalgebra::Vector3;

/// Uniform tensor grid over `(u, v)`; node `(i, j)` sits at `(u_lo + i·hu, v_lo + j·hv)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2 {
    pub u_lo: f64,
    pub u_hi: f64,
    pub nu: usize,
    pub v_lo: f64,
    pub v_hi: f64,
    pub nv: usize,
}

impl Grid2 {
    pub fn new(u: (f64, f64), nu: usize, v: (f64, f64), nv: usize) -> Self {
        Self { u_lo: u.0, u_hi: u.1, nu, v_lo: v.0, v_hi: v.1, nv }
    }

    /// Square grid with `cells` intervals of width `h` per direction starting at `origin`.
    pub fn with_step(origin: (f64, f64), h: f64, cells: usize) -> Self {
        let span = h * cells as f64;
        Self::new((origin.0, origin.0 + span), cells + 1, (origin.1, origin.1 + span), cells + 1)
    }

    pub fn hu(&self) -> f64 {
        (self.u_hi - self.u_lo) / (self.nu - 1) as f64
    }

    pub fn hv(&self) -> f64 {
        (self.v_hi - self.v_lo) / (self.nv - 1) as f64
    }

    pub fn u(&self, i: usize) -> f64 {
        self.u_lo + self.hu() * i as f64
    }

    pub fn v(&self, j: usize) -> f64 {
        self.v_lo + self.hv() * j as f64
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nv + j
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nu).flat_map(move |i| (0..self.nv).map(move |j| (i, j)))
    }

    /// Nodes at least `margin` away from every edge.
    pub fn interior(&self, margin: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nu, nv) = (self.nu, self.nv);
        (margin..nu.saturating_sub(margin)).flat_map(move |i| (margin..nv.saturating_sub(margin)).map(move |j| (i, j)))
    }

    /// Samples `f` at every node in row-major order.
    pub fn sample<T>(&self, mut f: impl FnMut(f64, f64) -> T) -> Vec<T> {
        self.nodes().map(|(i, j)| f(self.u(i), self.v(j))).collect()
    }
}

/// Values supporting linear finite-difference combinations.
pub trait Linear: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>> Linear for T {}

/// Second-order central derivatives of a node field.
pub struct Stencil<'a, T> {
    pub grid: &'a Grid2,
    pub values: &'a [T],
}

impl<'a, T: Linear> Stencil<'a, T> {
    pub fn new(grid: &'a Grid2, values: &'a [T]) -> Self {
        assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.idx(i, j)]
    }

    pub fn du(&self, i: usize, j: usize) -> T {
        (self.at(i + 1, j) - self.at(i - 1, j)) * (0.5 / self.grid.hu())
    }

    pub fn dv(&self, i: usize, j: usize) -> T {
        (self.at(i, j + 1) - self.at(i, j - 1)) * (0.5 / self.grid.hv())
    }

    pub fn duu(&self, i: usize, j: usize) -> T {
        let h = self.grid.hu();
        (self.at(i + 1, j) + self.at(i - 1, j) - self.at(i, j) * 2.0) * (1.0 / (h * h))
    }

    pub fn dvv(&self, i: usize, j: usize) -> T {
        let h = self.grid.hv();
        (self.at(i, j + 1) + self.at(i, j - 1) - self.at(i, j) * 2.0) * (1.0 / (h * h))
    }

    pub fn duv(&self, i: usize, j: usize) -> T {
        let s = 0.25 / (self.grid.hu() * self.grid.hv());
        (self.at(i + 1, j + 1) - self.at(i + 1, j - 1) - self.at(i - 1, j + 1) + self.at(i - 1, j - 1)) * s
    }

    /// Fourth-order central first derivative in `u` (needs two nodes of margin).
    pub fn du4(&self, i: usize, j: usize) -> T {
        let c = (self.at(i + 1, j) - self.at(i - 1, j)) * (8.0 / 12.0)
            - (self.at(i + 2, j) - self.at(i - 2, j)) * (1.0 / 12.0);
        c * (1.0 / self.grid.hu())
    }

    /// Fourth-order central first derivative in `v` (needs two nodes of margin).
    pub fn dv4(&self, i: usize, j: usize) -> T {
        let c = (self.at(i, j + 1) - self.at(i, j - 1)) * (8.0 / 12.0)
            - (self.at(i, j + 2) - self.at(i, j - 2)) * (1.0 / 12.0);
        c * (1.0 / self.grid.hv())
    }
}

const D4: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const D4_2: [(isize, f64); 5] =
    [(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];

impl<'a, T: Linear> Stencil<'a, T> {
    fn off(&self, i: usize, j: usize, a: isize, b: isize) -> T {
        self.at((i as isize + a) as usize, (j as isize + b) as usize)
    }

    /// Fourth-order `∂_uu`.
    pub fn duu4(&self, i: usize, j: usize) -> T {
        let h = self.grid.hu();
        let mut acc = self.at(i, j) * 0.0;
        for (a, c) in D4_2 {
            acc = acc + self.off(i, j, a, 0) * c;
        }
        acc * (1.0 / (h * h))
    }

    /// Fourth-order `∂_vv`.
    pub fn dvv4(&self, i: usize, j: usize) -> T {
        let h = self.grid.hv();
        let mut acc = self.at(i, j) * 0.0;
        for (b, c) in D4_2 {
            acc = acc + self.off(i, j, 0, b) * c;
        }
        acc * (1.0 / (h * h))
    }

    /// Fourth-order `∂_uv`.
    pub fn duv4(&self, i: usize, j: usize) -> T {
        let mut acc = self.at(i, j) * 0.0;
        for (a, ca) in D4 {
            for (b, cb) in D4 {
                acc = acc + self.off(i, j, a, b) * (ca * cb);
            }
        }
        acc * (1.0 / (self.grid.hu() * self.grid.hv()))
    }
}

/// Gauss curvature of a point field from fourth-order differences (two nodes of margin).
pub fn gauss_curvature_fd(grid: &Grid2, points: &[Vector3<f64>], i: usize, j: usize) -> f64 {
    let st = Stencil::new(grid, points);
    let (xu, xv) = (st.du4(i, j), st.dv4(i, j));
    let n = xu.cross(&xv).normalize();
    let (e, f, g) = (xu.dot(&xu), xu.dot(&xv), xv.dot(&xv));
    let (l, m, nn) = (st.duu4(i, j).dot(&n), st.duv4(i, j).dot(&n), st.dvv4(i, j).dot(&n));
    (l * nn - m * m) / (e * g - f * f)
}

/// Unit normal of a point field from fourth-order differences.
pub fn normal_fd(grid: &Grid2, points: &[Vector3<f64>], i: usize, j: usize) -> Vector3<f64> {
    let st = Stencil::new(grid, points);
    st.du4(i, j).cross(&st.dv4(i, j)).normalize()
}

/// First fundamental form `(E, F, G)` of a point field at an interior node.
pub fn first_form(grid: &Grid2, points: &[Vector3<f64>], i: usize, j: usize) -> (f64, f64, f64) {
    let st = Stencil::new(grid, points);
    let (xu, xv) = (st.du(i, j), st.dv(i, j));
    (xu.dot(&xu), xu.dot(&xv), xv.dot(&xv))
}

/// First fundamental form from fourth-order differences (two nodes of margin).
pub fn first_form4(grid: &Grid2, points: &[Vector3<f64>], i: usize, j: usize) -> (f64, f64, f64) {
    let st = Stencil::new(grid, points);
    let (xu, xv) = (st.du4(i, j), st.dv4(i, j));
    (xu.dot(&xu), xu.dot(&xv), xv.dot(&xv))
}

/// Largest relative first-fundamental-form gap between two point fields over interior nodes.
pub fn metric_gap(grid: &Grid2, a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    form_gap(grid, 1, first_form, a, b)
}

/// [`metric_gap`] with fourth-order tangents.
pub fn metric_gap4(grid: &Grid2, a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    form_gap(grid, 2, first_form4, a, b)
}

type FormFn = fn(&Grid2, &[Vector3<f64>], usize, usize) -> (f64, f64, f64);

fn form_gap(grid: &Grid2, margin: usize, form: FormFn, a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    grid.interior(margin)
        .map(|(i, j)| {
            let (e1, f1, g1) = form(grid, a, i, j);
            let (e2, f2, g2) = form(grid, b, i, j);
            let scale = e2.abs() + g2.abs() + f64::MIN_POSITIVE;
            (e1 - e2).abs().max((f1 - f2).abs()).max((g1 - g2).abs()) / scale
        })
        .fold(0.0, f64::max)
}

/// Observed convergence order from errors at steps `h` and `h/2`.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}
