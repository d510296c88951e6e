//! Uniform 2D grids, node/cell fields and the discrete calculus shared by
//! every other module.
//!
//! Scalars live on nodes, vectors on cell centres. A cell `(ci, cj)` has
//! corners `(ci, cj)`, `(ci + 1, cj)`, `(ci, cj + 1)` and `(ci + 1, cj + 1)`.
//! All reductions run in a fixed order so results are reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Uniform Cartesian grid with spacing `h` and `nx * ny` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(x0: f64, y0: f64, h: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid(format!("grid spacing must be positive, got {h}")));
        }
        if nx < 3 || ny < 3 {
            return Err(Error::invalid(format!("grid needs at least 3x3 nodes, got {nx}x{ny}")));
        }
        if !x0.is_finite() || !y0.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(Self { x0, y0, h, nx, ny })
    }

    /// Square grid covering `[lo, hi]^2` with `n` nodes per axis.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::invalid(format!("bad square grid [{lo}, {hi}] with {n} nodes")));
        }
        Self::new(lo, lo, (hi - lo) / (n - 1) as f64, n, n)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h]
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn ncx(&self) -> usize {
        self.nx - 1
    }

    #[inline]
    pub fn ncy(&self) -> usize {
        self.ny - 1
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.ncx() * self.ncy()
    }

    #[inline]
    pub fn cell_idx(&self, ci: usize, cj: usize) -> usize {
        debug_assert!(ci < self.ncx() && cj < self.ncy());
        cj * self.ncx() + ci
    }

    #[inline]
    pub fn cell_center(&self, ci: usize, cj: usize) -> Point {
        [
            self.x0 + (ci as f64 + 0.5) * self.h,
            self.y0 + (cj as f64 + 0.5) * self.h,
        ]
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.nx - 1) as f64 * self.h
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + (self.ny - 1) as f64 * self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// True when the closed point lies in the grid rectangle.
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x_max() && p[1] >= self.y0 && p[1] <= self.y_max()
    }

    /// Nearest node to `p`, clamped to the grid.
    pub fn nearest_node(&self, p: Point) -> (usize, usize) {
        let fi = ((p[0] - self.x0) / self.h).round();
        let fj = ((p[1] - self.y0) / self.h).round();
        let i = fi.clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = fj.clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Cell containing `p` and local coordinates in `[0, 1]^2`; `None` outside.
    pub fn locate(&self, p: Point) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(p) {
            return None;
        }
        let fx = (p[0] - self.x0) / self.h;
        let fy = (p[1] - self.y0) / self.h;
        let ci = (fx.floor() as usize).min(self.ncx() - 1);
        let cj = (fy.floor() as usize).min(self.ncy() - 1);
        Some((ci, cj, fx - ci as f64, fy - cj as f64))
    }

    /// Node sub-lattice `i0..=i1`, `j0..=j1`.
    pub fn subgrid(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> Result<Self> {
        if i1 >= self.nx || j1 >= self.ny || i1 < i0 + 2 || j1 < j0 + 2 {
            return Err(Error::invalid(format!(
                "subgrid [{i0}, {i1}] x [{j0}, {j1}] does not fit a {}x{} grid",
                self.nx, self.ny
            )));
        }
        let o = self.node(i0, j0);
        Self::new(o[0], o[1], self.h, i1 - i0 + 1, j1 - j0 + 1)
    }

    /// Equality up to floating tolerance on the geometry.
    pub fn matches(&self, other: &Grid2D) -> bool {
        let tol = 1e-12 * (1.0 + self.x0.abs().max(self.y0.abs()));
        self.nx == other.nx
            && self.ny == other.ny
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && (self.x0 - other.x0).abs() <= tol
            && (self.y0 - other.y0).abs() <= tol
    }

    pub fn ensure_matches(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

/// Boolean predicate over cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMask {
    pub ncx: usize,
    pub ncy: usize,
    pub cells: Vec<bool>,
}

impl CellMask {
    pub fn all(grid: &Grid2D) -> Self {
        Self { ncx: grid.ncx(), ncy: grid.ncy(), cells: vec![true; grid.n_cells()] }
    }

    /// Mask of cells whose centre satisfies `pred`.
    pub fn from_centers(grid: &Grid2D, pred: impl Fn(Point) -> bool) -> Self {
        let mut cells = Vec::with_capacity(grid.n_cells());
        for cj in 0..grid.ncy() {
            for ci in 0..grid.ncx() {
                cells.push(pred(grid.cell_center(ci, cj)));
            }
        }
        Self { ncx: grid.ncx(), ncy: grid.ncy(), cells }
    }

    /// Cells whose four corners all satisfy `pred`.
    pub fn from_corners(grid: &Grid2D, pred: impl Fn(Point) -> bool) -> Self {
        let node_ok: Vec<bool> = (0..grid.n_nodes())
            .map(|k| pred(grid.node(k % grid.nx, k / grid.nx)))
            .collect();
        let mut cells = Vec::with_capacity(grid.n_cells());
        for cj in 0..grid.ncy() {
            for ci in 0..grid.ncx() {
                let ok = node_ok[grid.idx(ci, cj)]
                    && node_ok[grid.idx(ci + 1, cj)]
                    && node_ok[grid.idx(ci, cj + 1)]
                    && node_ok[grid.idx(ci + 1, cj + 1)];
                cells.push(ok);
            }
        }
        Self { ncx: grid.ncx(), ncy: grid.ncy(), cells }
    }

    #[inline]
    pub fn get(&self, ci: usize, cj: usize) -> bool {
        self.cells[cj * self.ncx + ci]
    }

    pub fn and(&self, other: &CellMask) -> CellMask {
        let cells = self.cells.iter().zip(&other.cells).map(|(a, b)| *a && *b).collect();
        CellMask { ncx: self.ncx, ncy: self.ncy, cells }
    }

    pub fn not(&self) -> CellMask {
        CellMask { ncx: self.ncx, ncy: self.ncy, cells: self.cells.iter().map(|c| !c).collect() }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub(crate) fn check(&self, grid: &Grid2D) -> Result<()> {
        if self.ncx != grid.ncx() || self.ncy != grid.ncy() {
            return Err(Error::GridMismatch(format!(
                "mask is {}x{} cells, grid has {}x{}",
                self.ncx,
                self.ncy,
                grid.ncx(),
                grid.ncy()
            )));
        }
        Ok(())
    }
}

/// Node-centred scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::invalid(format!(
                "scalar field has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("node ({}, {})", k % grid.nx, k / grid.nx),
                value: values[k],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Point) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.node(i, j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n_nodes()])
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Average of the four corner values of a cell.
    #[inline]
    pub fn cell_mean(&self, ci: usize, cj: usize) -> f64 {
        0.25 * (self.at(ci, cj) + self.at(ci + 1, cj) + self.at(ci, cj + 1) + self.at(ci + 1, cj + 1))
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        let (ci, cj, s, t) = self.grid.locate(p)?;
        let v00 = self.at(ci, cj);
        let v10 = self.at(ci + 1, cj);
        let v01 = self.at(ci, cj + 1);
        let v11 = self.at(ci + 1, cj + 1);
        Some((1.0 - s) * (1.0 - t) * v00 + s * (1.0 - t) * v10 + (1.0 - s) * t * v01 + s * t * v11)
    }

    /// Restriction to a node sub-lattice.
    pub fn restrict(&self, sub: &Grid2D) -> Result<ScalarField> {
        let (i0, j0) = self.grid.nearest_node([sub.x0, sub.y0]);
        if (self.grid.h - sub.h).abs() > 1e-12 * self.grid.h
            || i0 + sub.nx > self.grid.nx
            || j0 + sub.ny > self.grid.ny
        {
            return Err(Error::GridMismatch("restriction target is not a sub-lattice".into()));
        }
        let mut values = Vec::with_capacity(sub.n_nodes());
        for j in 0..sub.ny {
            for i in 0..sub.nx {
                values.push(self.at(i0 + i, j0 + j));
            }
        }
        ScalarField::new(*sub, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Cell-centred 2-vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid2D,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(grid: Grid2D, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::invalid(format!(
                "vector field has {} values, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            let bad = if values[k][0].is_finite() { values[k][1] } else { values[k][0] };
            return Err(Error::NonFinite {
                location: format!("cell ({}, {})", k % grid.ncx(), k / grid.ncx()),
                value: bad,
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: Grid2D, f: impl Fn(Point) -> [f64; 2]) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_cells());
        for cj in 0..grid.ncy() {
            for ci in 0..grid.ncx() {
                values.push(f(grid.cell_center(ci, cj)));
            }
        }
        Self::new(grid, values)
    }

    #[inline]
    pub fn at(&self, ci: usize, cj: usize) -> [f64; 2] {
        self.values[self.grid.cell_idx(ci, cj)]
    }

    pub fn norms(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0].hypot(v[1])).collect()
    }

    /// Bilinear interpolation of the cell-centre values, clamped at the
    /// outermost half cell.
    pub fn interpolate(&self, p: Point) -> Option<[f64; 2]> {
        let g = &self.grid;
        if !g.contains(p) {
            return None;
        }
        let fx = ((p[0] - g.x0) / g.h - 0.5).clamp(0.0, (g.ncx() - 1) as f64);
        let fy = ((p[1] - g.y0) / g.h - 0.5).clamp(0.0, (g.ncy() - 1) as f64);
        let ci = (fx.floor() as usize).min(g.ncx().saturating_sub(2));
        let cj = (fy.floor() as usize).min(g.ncy().saturating_sub(2));
        let s = fx - ci as f64;
        let t = fy - cj as f64;
        let a = self.at(ci, cj);
        let b = self.at(ci + 1, cj);
        let c = self.at(ci, cj + 1);
        let d = self.at(ci + 1, cj + 1);
        let mut out = [0.0; 2];
        for k in 0..2 {
            out[k] = (1.0 - s) * (1.0 - t) * a[k] + s * (1.0 - t) * b[k] + (1.0 - s) * t * c[k] + s * t * d[k];
        }
        Some(out)
    }
}

/// Smooth bump `exp(1 - 1/(1 - |x - c|^2 / rho^2))`, equal to 1 at the centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Point,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || !center[0].is_finite() || !center[1].is_finite() {
            return Err(Error::invalid(format!("bad test function at {center:?} radius {radius}")));
        }
        Ok(Self { center, radius })
    }

    #[inline]
    fn s(&self, x: Point) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        (dx * dx + dy * dy) / (self.radius * self.radius)
    }

    pub fn value(&self, x: Point) -> f64 {
        let s = self.s(x);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let s = self.s(x);
        if s >= 1.0 {
            return [0.0, 0.0];
        }
        let q = 1.0 - s;
        let phi = (1.0 - 1.0 / q).exp();
        let f = -phi / (q * q) * 2.0 / (self.radius * self.radius);
        [f * (x[0] - self.center[0]), f * (x[1] - self.center[1])]
    }

    pub fn laplacian(&self, x: Point) -> f64 {
        let s = self.s(x);
        if s >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s;
        let phi = (1.0 - 1.0 / q).exp();
        let d1 = -phi / (q * q);
        let d2 = phi * (2.0 * s - 1.0) / q.powi(4);
        let r2 = self.radius * self.radius;
        4.0 * (d2 * s + d1) / r2
    }

    /// Support strictly inside the grid rectangle.
    pub fn fits(&self, grid: &Grid2D) -> bool {
        self.center[0] - self.radius > grid.x0
            && self.center[0] + self.radius < grid.x_max()
            && self.center[1] - self.radius > grid.y0
            && self.center[1] + self.radius < grid.y_max()
    }

    /// Range of cells whose centres can lie in the support.
    pub(crate) fn cell_range(&self, grid: &Grid2D) -> (usize, usize, usize, usize) {
        let lo = |c: f64, o: f64, n: usize| {
            (((c - self.radius - o) / grid.h - 1.0).floor().max(0.0) as usize).min(n - 1)
        };
        let hi = |c: f64, o: f64, n: usize| {
            (((c + self.radius - o) / grid.h + 1.0).ceil().max(0.0) as usize).min(n - 1)
        };
        (
            lo(self.center[0], grid.x0, grid.ncx()),
            hi(self.center[0], grid.x0, grid.ncx()),
            lo(self.center[1], grid.y0, grid.ncy()),
            hi(self.center[1], grid.y0, grid.ncy()),
        )
    }
}

/// One-sided gradients at the four corners of a cell, ordered
/// `(0,0)`, `(1,0)`, `(0,1)`, `(1,1)`. Their mean is the cell gradient.
#[inline]
pub fn corner_gradients(u: &ScalarField, ci: usize, cj: usize) -> [[f64; 2]; 4] {
    let h = u.grid.h;
    let u00 = u.at(ci, cj);
    let u10 = u.at(ci + 1, cj);
    let u01 = u.at(ci, cj + 1);
    let u11 = u.at(ci + 1, cj + 1);
    let bottom = (u10 - u00) / h;
    let top = (u11 - u01) / h;
    let left = (u01 - u00) / h;
    let right = (u11 - u10) / h;
    [[bottom, left], [bottom, right], [top, left], [top, right]]
}

/// Cell gradient: each component is the mean of the two parallel one-sided
/// differences across the cell. Exact for bilinear fields.
pub fn gradient(u: &ScalarField) -> VectorField {
    let g = u.grid;
    let h = g.h;
    let mut values = Vec::with_capacity(g.n_cells());
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let u00 = u.at(ci, cj);
            let u10 = u.at(ci + 1, cj);
            let u01 = u.at(ci, cj + 1);
            let u11 = u.at(ci + 1, cj + 1);
            values.push([
                0.5 * ((u10 - u00) + (u11 - u01)) / h,
                0.5 * ((u01 - u00) + (u11 - u10)) / h,
            ]);
        }
    }
    VectorField { grid: g, values }
}

/// Rotation by a quarter turn: `(a, b) -> (-b, a)`.
pub fn perp(g: &VectorField) -> VectorField {
    VectorField { grid: g.grid, values: g.values.iter().map(|v| [-v[1], v[0]]).collect() }
}

/// Midpoint rule: sum over cells of the nodal average times the cell area.
pub fn integrate(s: &ScalarField, mask: Option<&CellMask>) -> Result<f64> {
    let g = &s.grid;
    if let Some(m) = mask {
        m.check(g)?;
    }
    let mut total = 0.0;
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            if mask.is_none_or(|m| m.get(ci, cj)) {
                total += s.cell_mean(ci, cj);
            }
        }
    }
    Ok(total * g.cell_area())
}

/// Midpoint rule for a cell-valued integrand.
pub fn integrate_cells(grid: &Grid2D, values: &[f64], mask: Option<&CellMask>) -> Result<f64> {
    if values.len() != grid.n_cells() {
        return Err(Error::invalid("cell integrand has the wrong length"));
    }
    if let Some(m) = mask {
        m.check(grid)?;
    }
    let mut total = 0.0;
    for (k, v) in values.iter().enumerate() {
        if mask.is_none_or(|m| m.cells[k]) {
            total += v;
        }
    }
    Ok(total * grid.cell_area())
}

/// `r(eta) = int F . grad eta + int eta s` with `s` given per cell.
/// Vanishes (up to discretisation) exactly when `div F = s` weakly.
///
/// `eta` enters through its nodal interpolant: cell gradient and cell mean,
/// so constant `F` with `s = 0` gives zero up to rounding.
pub fn weak_divergence_residual_cells(
    f: &VectorField,
    s: &[f64],
    tests: &[TestFunction],
) -> Result<Vec<f64>> {
    let g = f.grid;
    if s.len() != g.n_cells() {
        return Err(Error::invalid("source term has the wrong number of cells"));
    }
    let area = g.cell_area();
    let mut out = Vec::with_capacity(tests.len());
    for (k, eta) in tests.iter().enumerate() {
        if !eta.fits(&g) {
            return Err(Error::invalid(format!(
                "test function {k} (centre {:?}, radius {}) leaves the grid interior",
                eta.center, eta.radius
            )));
        }
        let (i0, i1, j0, j1) = eta.cell_range(&g);
        let w = i1 - i0 + 2;
        let mut nodal = Vec::with_capacity(w * (j1 - j0 + 2));
        for j in j0..=j1 + 1 {
            for i in i0..=i1 + 1 {
                nodal.push(eta.value(g.node(i, j)));
            }
        }
        let mut r = 0.0;
        for cj in j0..=j1 {
            for ci in i0..=i1 {
                let b = (cj - j0) * w + ci - i0;
                let (e00, e10, e01, e11) = (nodal[b], nodal[b + 1], nodal[b + w], nodal[b + w + 1]);
                if e00 == 0.0 && e10 == 0.0 && e01 == 0.0 && e11 == 0.0 {
                    continue;
                }
                let de = [0.5 * (e10 - e00 + e11 - e01) / g.h, 0.5 * (e01 - e00 + e11 - e10) / g.h];
                let kc = g.cell_idx(ci, cj);
                let fv = f.values[kc];
                r += fv[0] * de[0] + fv[1] * de[1] + 0.25 * (e00 + e10 + e01 + e11) * s[kc];
            }
        }
        out.push(r * area);
    }
    Ok(out)
}

/// Weak divergence residual with a nodal source, averaged to cells.
pub fn weak_divergence_residual(
    f: &VectorField,
    s: &ScalarField,
    tests: &[TestFunction],
) -> Result<Vec<f64>> {
    f.grid.ensure_matches(&s.grid, "weak divergence residual")?;
    let g = s.grid;
    let mut cells = Vec::with_capacity(g.n_cells());
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            cells.push(s.cell_mean(ci, cj));
        }
    }
    weak_divergence_residual_cells(f, &cells, tests)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q1(n: usize) -> Grid2D {
        Grid2D::square(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_invariants_are_enforced() {
        assert!(Grid2D::new(0.0, 0.0, 0.0, 5, 5).is_err());
        assert!(Grid2D::new(0.0, 0.0, 0.1, 2, 5).is_err());
        let g = q1(9);
        assert_eq!(g.node(0, 0), [-1.0, -1.0]);
        assert_eq!(g.node(8, 8), [1.0, 1.0]);
        assert_eq!(g.idx(3, 2), 21);
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = q1(9);
        let c = ScalarField::constant(g, 5.0).unwrap();
        assert!(gradient(&c).values.iter().all(|v| *v == [0.0, 0.0]));
        let lin = ScalarField::from_fn(g, |x| x[1]).unwrap();
        for v in gradient(&lin).values {
            assert!((v[0]).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_of_bilinear_product() {
        // h = 0.5, cell with corners (0, 0) and (0.5, 0.5)
        let g = q1(5);
        let u = ScalarField::from_fn(g, |x| x[0] * x[1]).unwrap();
        let gu = gradient(&u);
        let v = gu.at(2, 2);
        assert_eq!(g.cell_center(2, 2), [0.25, 0.25]);
        assert!((v[0] - 0.25).abs() < 1e-15 && (v[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn perp_definition() {
        let g = q1(5);
        let e2 = VectorField::from_fn(g, |_| [0.0, 1.0]).unwrap();
        assert!(perp(&e2).values.iter().all(|v| *v == [-1.0, 0.0]));
        let e1 = VectorField::from_fn(g, |_| [1.0, 0.0]).unwrap();
        assert!(perp(&e1).values.iter().all(|v| *v == [0.0, 1.0]));
    }

    #[test]
    fn integrate_examples() {
        let g = q1(65);
        let one = ScalarField::constant(g, 1.0).unwrap();
        assert!((integrate(&one, None).unwrap() - 4.0).abs() < 1e-12);
        let odd = ScalarField::from_fn(g, |x| x[0]).unwrap();
        assert!(integrate(&odd, None).unwrap().abs() < 1e-13);
        let sq = ScalarField::from_fn(g, |x| x[0] * x[0]).unwrap();
        assert!((integrate(&sq, None).unwrap() - 4.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn integrate_is_additive_over_masks() {
        let g = q1(33);
        let s = ScalarField::from_fn(g, |x| (x[0] * 3.0).sin().powi(2) + x[1] * x[1]).unwrap();
        let m = CellMask::from_centers(&g, |c| c[0] + 0.3 * c[1] < 0.1);
        let a = integrate(&s, Some(&m)).unwrap();
        let b = integrate(&s, Some(&m.not())).unwrap();
        let all = integrate(&s, None).unwrap();
        assert!((a + b - all).abs() < 1e-12);
        assert!(a >= 0.0 && b >= 0.0);
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let eta = TestFunction::new([0.1, -0.2], 0.4).unwrap();
        let d = 1e-6;
        for p in [[0.2, -0.1], [0.0, -0.4], [0.35, -0.2], [0.1, 0.15]] {
            let g = eta.gradient(p);
            let fx = (eta.value([p[0] + d, p[1]]) - eta.value([p[0] - d, p[1]])) / (2.0 * d);
            let fy = (eta.value([p[0], p[1] + d]) - eta.value([p[0], p[1] - d])) / (2.0 * d);
            assert!((g[0] - fx).abs() < 1e-6 && (g[1] - fy).abs() < 1e-6);
            let lap = (eta.value([p[0] + d, p[1]]) + eta.value([p[0] - d, p[1]])
                + eta.value([p[0], p[1] + d])
                + eta.value([p[0], p[1] - d])
                - 4.0 * eta.value(p))
                / (d * d);
            assert!((eta.laplacian(p) - lap).abs() < 1e-3 * (1.0 + lap.abs()));
        }
        assert_eq!(eta.value([0.6, -0.2]), 0.0);
        assert_eq!(eta.gradient([0.1, 0.3]), [0.0, 0.0]);
    }

    #[test]
    fn weak_residual_of_zero_data_is_zero() {
        let g = q1(17);
        let f = VectorField::from_fn(g, |_| [0.0, 0.0]).unwrap();
        let s = ScalarField::constant(g, 0.0).unwrap();
        let tests = [TestFunction::new([0.0, 0.0], 0.5).unwrap()];
        assert_eq!(weak_divergence_residual(&f, &s, &tests).unwrap(), vec![0.0]);
    }

    #[test]
    fn weak_residual_rejects_tests_leaving_the_grid() {
        let g = q1(17);
        let f = VectorField::from_fn(g, |_| [0.0, 0.0]).unwrap();
        let s = ScalarField::constant(g, 0.0).unwrap();
        let tests = [TestFunction::new([0.8, 0.0], 0.5).unwrap()];
        assert!(weak_divergence_residual(&f, &s, &tests).is_err());
    }

    #[test]
    fn weak_residual_of_constant_field_telescopes() {
        let g = q1(33);
        let f = VectorField::from_fn(g, |_| [0.3, -1.7]).unwrap();
        let tests = [TestFunction::new([0.1, -0.2], 0.5).unwrap(), TestFunction::new([0.0, 0.0], 0.13).unwrap()];
        for r in weak_divergence_residual_cells(&f, &vec![0.0; g.n_cells()], &tests).unwrap() {
            assert!(r.abs() < 1e-15, "{r}");
        }
    }

    #[test]
    fn discrete_integration_by_parts_is_second_order() {
        // int grad v . grad eta + int v lap eta -> 0
        let eta = TestFunction::new([0.05, -0.1], 0.6).unwrap();
        let mut errs = Vec::new();
        for n in [129, 257, 513] {
            let g = q1(n);
            let v = ScalarField::from_fn(g, |x| (1.3 * x[0]).sin() * (0.7 * x[1]).cos() + x[0] * x[1]).unwrap();
            let gv = gradient(&v);
            let mut r = 0.0;
            for cj in 0..g.ncy() {
                for ci in 0..g.ncx() {
                    let c = g.cell_center(ci, cj);
                    let de = eta.gradient(c);
                    let a = gv.at(ci, cj);
                    r += a[0] * de[0] + a[1] * de[1] + v.cell_mean(ci, cj) * eta.laplacian(c);
                }
            }
            errs.push((r * g.cell_area()).abs());
        }
        // the bump is only resolved once h is well below its radius
        assert!(errs[1] < 0.3 * errs[0], "{errs:?}");
        assert!(errs[2] < 0.3 * errs[1], "{errs:?}");
    }

    #[test]
    fn interpolation_is_exact_on_bilinear_fields() {
        let g = q1(9);
        let u = ScalarField::from_fn(g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]).unwrap();
        for p in [[0.13, -0.77], [0.999, 0.5], [-1.0, -1.0]] {
            let exact = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
            assert!((u.interpolate(p).unwrap() - exact).abs() < 1e-13);
        }
        assert!(u.interpolate([1.1, 0.0]).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gradient_exact_on_affine(a in -5.0..5.0f64, b0 in -5.0..5.0f64, b1 in -5.0..5.0f64) {
                let g = Grid2D::new(-0.3, 0.2, 0.07, 11, 8).unwrap();
                let u = ScalarField::from_fn(g, |x| a + b0 * x[0] + b1 * x[1]).unwrap();
                for v in gradient(&u).values {
                    prop_assert!((v[0] - b0).abs() < 1e-12 && (v[1] - b1).abs() < 1e-12);
                }
            }

            #[test]
            fn perp_twice_is_negation_and_isometry(vals in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 16)) {
                let g = Grid2D::new(0.0, 0.0, 1.0, 5, 5).unwrap();
                let f = VectorField::new(g, vals.iter().map(|(a, b)| [*a, *b]).collect()).unwrap();
                let pp = perp(&perp(&f));
                for (x, y) in f.values.iter().zip(&pp.values) {
                    prop_assert_eq!([-x[0], -x[1]], *y);
                }
                for (x, y) in f.norms().iter().zip(perp(&f).norms()) {
                    prop_assert_eq!(*x, y);
                }
            }
        }
    }
}
