//! Conjugate stream function `v` with `grad v = -|grad u|^(p-2) grad_perp u`,
//! the transform `w = log(v) / (1 - p)` and the flux `F`.
//!
//! The flux `W grad u` crosses each primal edge through a dual edge joining
//! two cell centres, so `v` lives on the cell-centre grid. Its increments
//! are the edge fluxes; with the solver's corner-weight rule they are
//! conserved exactly at every unknown node of a converged solve, and `v` is
//! their weighted least-squares potential. Each dual edge is weighted by the
//! inverse square of its own increment, so the fit stays relative when
//! `|grad u|^(p-2)` spans hundreds of orders of magnitude. Values are stored
//! in units of `exp(log_scale)`.

use crate::error::{Error, Result};
use crate::grid::{corner_gradients, gradient, integrate_cells, CellMask, Grid2D, Point, ScalarField, TestFunction, VectorField};
use crate::grid::weak_divergence_residual_cells;
use crate::linalg::BandedSpd;
use crate::solver::PExponent;

pub const DEFAULT_ANCHOR: Point = [-0.75, 0.0];
/// Default bound on the per-cell relative circulation of the edge increments.
pub const DEFAULT_CURL_BOUND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePair {
    pub u: ScalarField,
    /// `v / exp(log_scale)`.
    pub v: ScalarField,
    pub log_scale: f64,
    pub p: PExponent,
    pub gamma: f64,
    pub anchor: Point,
    pub curl_residual: f64,
    pub rule: FluxRule,
}

impl ConjugatePair {
    /// `log v(anchor)`, which equals `(p - 1) log gamma` after normalisation.
    pub fn log_v_at_anchor(&self) -> Result<f64> {
        let v = self
            .v
            .interpolate(self.anchor)
            .ok_or_else(|| Error::invalid("anchor outside the grid"))?;
        Ok(v.ln() + self.log_scale)
    }

    /// `|grad v|^(p'-2) grad v` per cell, formed in log space.
    pub fn dual_flux(&self) -> VectorField {
        let gv = gradient(&self.v);
        let e = self.p.p_conj - 1.0;
        let values = gv
            .values
            .iter()
            .map(|g| {
                let n = g[0].hypot(g[1]);
                if n == 0.0 {
                    return [0.0, 0.0];
                }
                let m = (e * (n.ln() + self.log_scale)).exp() / n;
                [m * g[0], m * g[1]]
            })
            .collect();
        VectorField { grid: gv.grid, values }
    }

    /// Relative L1 defect of `|grad v|^(p'-2) grad v = -grad_perp u` over
    /// the cells of `mask` (cells of the grid of `v`).
    pub fn duality_defect(&self, mask: Option<&CellMask>) -> Result<f64> {
        let flux = self.dual_flux();
        let gp = perp_grad_on_cells(&self.u, &self.v.grid)?;
        let diff: Vec<f64> = flux.values.iter().zip(&gp.values).map(|(a, b)| (a[0] + b[0]).hypot(a[1] + b[1])).collect();
        let size: Vec<f64> = gp.values.iter().map(|b| b[0].hypot(b[1])).collect();
        Ok(integrate_cells(&self.v.grid, &diff, mask)? / integrate_cells(&self.v.grid, &size, mask)?)
    }
}

/// `grad_perp u` at the primal nodes that sit at the cell centres of
/// `cells`, a sub-lattice of the cell-centre grid of `u`.
pub fn perp_grad_on_cells(u: &ScalarField, cells: &Grid2D) -> Result<VectorField> {
    let g = u.grid;
    let grad = nodal_gradient(u);
    let mut values = Vec::with_capacity(cells.n_cells());
    for cj in 0..cells.ncy() {
        for ci in 0..cells.ncx() {
            let c = cells.cell_center(ci, cj);
            let (i, j) = g.nearest_node(c);
            let x = g.node(i, j);
            if (x[0] - c[0]).abs() > 1e-9 * g.h || (x[1] - c[1]).abs() > 1e-9 * g.h || i == 0 || j == 0 || i + 1 == g.nx || j + 1 == g.ny {
                return Err(Error::GridMismatch("cells are not centred on interior nodes of u".into()));
            }
            let d = grad[g.idx(i, j)];
            values.push([-d[1], d[0]]);
        }
    }
    VectorField::new(*cells, values)
}

/// Node sub-lattice of `g` inside the box `[lo, hi]`.
pub fn sublattice_in(g: &Grid2D, lo: Point, hi: Point) -> Result<Grid2D> {
    let first = |a: f64, o: f64| ((a - o) / g.h - 1e-9).ceil().max(0.0) as usize;
    let last = |b: f64, o: f64, n: usize| (((b - o) / g.h + 1e-9).floor().max(0.0) as usize).min(n - 1);
    g.subgrid(first(lo[0], g.x0), last(hi[0], g.x0, g.nx), first(lo[1], g.y0), last(hi[1], g.y0, g.ny))
}

/// `log(expm1(z) / z)` without overflow.
fn log_phi(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        0.5 * z
    } else if z > 0.0 {
        z + (-(-z).exp_m1()).ln() - z.ln()
    } else {
        (-z.exp_m1()).ln() - (-z).ln()
    }
}

/// Nodal gradient: central differences inside, second-order one-sided
/// differences on the boundary.
pub fn nodal_gradient(u: &ScalarField) -> Vec<[f64; 2]> {
    let g = u.grid;
    let d = |f: &dyn Fn(usize) -> f64, k: usize, n: usize| -> f64 {
        if k == 0 {
            (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * g.h)
        } else if k == n - 1 {
            (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * g.h)
        } else {
            (f(k + 1) - f(k - 1)) / (2.0 * g.h)
        }
    };
    let mut out = Vec::with_capacity(g.n_nodes());
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.push([d(&|a| u.at(a, j), i, g.nx), d(&|b| u.at(i, b), j, g.ny)]);
        }
    }
    out
}

/// How the weight `W ~ |grad u|^(p-2)` on a primal edge is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxRule {
    /// Mean of the regularised corner weights `(|q|^2 + eps^2)^((p-2)/2)`
    /// of the solver's quadrature; conserved exactly by its solutions.
    Solver { epsilon: f64 },
    /// Exponential fit of `|grad u|^(p-2)` between the two cell centres;
    /// second order for smooth fields sampled on the grid.
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateOptions {
    pub rule: FluxRule,
    pub curl_bound: f64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        Self { rule: FluxRule::Fitted, curl_bound: DEFAULT_CURL_BOUND }
    }
}

/// Cell-centre grid of `g`.
pub fn dual_grid(g: &Grid2D) -> Result<Grid2D> {
    Grid2D::new(g.x0 + 0.5 * g.h, g.y0 + 0.5 * g.h, g.h, g.nx - 1, g.ny - 1)
}

/// Signed log-magnitude of an increment: `(log |delta|, sign)`.
type LogIncrement = (f64, f64);

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Increments of `v` along the dual edges: `dh` for `(i, j) -> (i + 1, j)`
/// at `j * (nx - 1) + i`, `dv` for `(i, j) -> (i, j + 1)` at `j * nx + i`,
/// with `nx` the dual width.
fn dual_increments(u: &ScalarField, p: f64, rule: FluxRule) -> (Vec<LogIncrement>, Vec<LogIncrement>) {
    let g = u.grid;
    let (dnx, dny) = (g.nx - 1, g.ny - 1);
    let q = p - 2.0;
    // log W on the primal edge separating dual nodes c1 and c2, given as
    // (cell, corner) pairs on each side for the solver rule
    let cell_ell: Vec<f64> = gradient(u).norms().iter().map(|n| n.max(1e-300).ln()).collect();
    let corner_lw: Vec<[f64; 4]> = match rule {
        FluxRule::Solver { epsilon } => (0..g.n_cells())
            .map(|c| {
                let cg = corner_gradients(u, c % dnx, c / dnx);
                cg.map(|v| if q == 0.0 { 0.0 } else { 0.5 * q * (v[0] * v[0] + v[1] * v[1] + epsilon * epsilon).ln() })
            })
            .collect(),
        FluxRule::Fitted => vec![],
    };
    let log_w = |c1: usize, c2: usize, k1: [usize; 2], k2: [usize; 2]| -> f64 {
        match rule {
            FluxRule::Fitted => q * cell_ell[c1] + log_phi(q * (cell_ell[c2] - cell_ell[c1])),
            FluxRule::Solver { .. } => {
                log_sum_exp(&[corner_lw[c1][k1[0]], corner_lw[c1][k1[1]], corner_lw[c2][k2[0]], corner_lw[c2][k2[1]]])
                    - 4f64.ln()
            }
        }
    };
    let inc = |lw: f64, du: f64, sign: f64| -> LogIncrement {
        if du == 0.0 || lw == f64::NEG_INFINITY {
            (f64::NEG_INFINITY, 0.0)
        } else {
            (lw + du.abs().ln(), sign * du.signum())
        }
    };
    let mut dh = Vec::with_capacity((dnx - 1) * dny);
    for j in 0..dny {
        for i in 0..dnx - 1 {
            // primal edge (i+1, j) -> (i+1, j+1); left cell uses its right
            // corners, right cell its left corners
            let (c1, c2) = (j * dnx + i, j * dnx + i + 1);
            let du = u.at(i + 1, j + 1) - u.at(i + 1, j);
            dh.push(inc(log_w(c1, c2, [1, 3], [0, 2]), du, 1.0));
        }
    }
    let mut dv = Vec::with_capacity(dnx * (dny - 1));
    for j in 0..dny - 1 {
        for i in 0..dnx {
            // primal edge (i, j+1) -> (i+1, j+1); lower cell uses its top
            // corners, upper cell its bottom corners
            let (c1, c2) = (j * dnx + i, (j + 1) * dnx + i);
            let du = u.at(i + 1, j + 1) - u.at(i, j + 1);
            dv.push(inc(log_w(c1, c2, [2, 3], [0, 1]), du, -1.0));
        }
    }
    (dh, dv)
}

/// Largest per-cell ratio `|circulation| / sum |increments|`.
fn curl_residual(g: &Grid2D, dh: &[f64], dv: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let b = dh[cj * (g.nx - 1) + ci];
            let t = dh[(cj + 1) * (g.nx - 1) + ci];
            let l = dv[cj * g.nx + ci];
            let r = dv[cj * g.nx + ci + 1];
            let tot = b.abs() + t.abs() + l.abs() + r.abs();
            if tot > 0.0 {
                worst = worst.max((b + r - t - l).abs() / tot);
            }
        }
    }
    worst
}

/// Scale of each edge equation: its own increment, floored at a fraction of
/// the largest increment in the adjacent cells and at a global minimum so
/// weights within a cell stay within `1 / SIGMA_REL^2` of each other.
fn edge_sigmas(g: &Grid2D, dh: &[f64], dv: &[f64]) -> (Vec<f64>, Vec<f64>) {
    const SIGMA_REL: f64 = 1e-2;
    const SIGMA_MIN: f64 = 1e-60;
    let (nx, ny) = (g.nx, g.ny);
    let mut cell_max = vec![0.0f64; g.n_cells()];
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            cell_max[g.cell_idx(ci, cj)] = [
                dh[cj * (nx - 1) + ci],
                dh[(cj + 1) * (nx - 1) + ci],
                dv[cj * nx + ci],
                dv[cj * nx + ci + 1],
            ]
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        }
    }
    let sigma = |d: f64, local: f64| d.abs().max(SIGMA_REL * local).max(SIGMA_MIN);
    let mut sh = Vec::with_capacity(dh.len());
    for j in 0..ny {
        for i in 0..nx - 1 {
            let mut local = 0.0f64;
            for cj in [j.wrapping_sub(1), j] {
                if cj < ny - 1 {
                    local = local.max(cell_max[g.cell_idx(i, cj)]);
                }
            }
            sh.push(sigma(dh[j * (nx - 1) + i], local));
        }
    }
    let mut sv = Vec::with_capacity(dv.len());
    for j in 0..ny - 1 {
        for i in 0..nx {
            let mut local = 0.0f64;
            for ci in [i.wrapping_sub(1), i] {
                if ci < nx - 1 {
                    local = local.max(cell_max[g.cell_idx(ci, j)]);
                }
            }
            sv.push(sigma(dv[j * nx + i], local));
        }
    }
    (sh, sv)
}

/// Potential integrated up the column through `(pi, pj)` and then along
/// each row; exact when the increments are curl free.
fn path_potential(g: &Grid2D, dh: &[f64], dv: &[f64], pi: usize, pj: usize) -> Vec<f64> {
    let (nx, ny) = (g.nx, g.ny);
    let mut v = vec![0.0; g.n_nodes()];
    for j in pj + 1..ny {
        v[g.idx(pi, j)] = v[g.idx(pi, j - 1)] + dv[(j - 1) * nx + pi];
    }
    for j in (0..pj).rev() {
        v[g.idx(pi, j)] = v[g.idx(pi, j + 1)] - dv[j * nx + pi];
    }
    for j in 0..ny {
        for i in pi + 1..nx {
            v[g.idx(i, j)] = v[g.idx(i - 1, j)] + dh[j * (nx - 1) + i - 1];
        }
        for i in (0..pi).rev() {
            v[g.idx(i, j)] = v[g.idx(i + 1, j)] - dh[j * (nx - 1) + i];
        }
    }
    v
}

/// Node with the largest total weight `sum 1 / sigma^2` of its edges.
fn heaviest_node(g: &Grid2D, sh: &[f64], sv: &[f64]) -> (usize, usize) {
    let mut total = vec![0.0f64; g.n_nodes()];
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let w = sh[j * (g.nx - 1) + i].powi(-2);
            total[g.idx(i, j)] += w;
            total[g.idx(i + 1, j)] += w;
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let w = sv[j * g.nx + i].powi(-2);
            total[g.idx(i, j)] += w;
            total[g.idx(i, j + 1)] += w;
        }
    }
    let k = (0..total.len()).fold(0, |b, k| if total[k] > total[b] { k } else { b });
    (k % g.nx, k / g.nx)
}

pub fn conjugate(u: &ScalarField, p: PExponent, gamma: f64, anchor: Point) -> Result<ConjugatePair> {
    conjugate_with(u, p, gamma, anchor, &ConjugateOptions::default())
}

pub fn conjugate_with(u: &ScalarField, p: PExponent, gamma: f64, anchor: Point, opts: &ConjugateOptions) -> Result<ConjugatePair> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if u.grid.nx < 4 || u.grid.ny < 4 {
        return Err(Error::invalid("conjugate needs at least 4 x 4 nodes"));
    }
    let g = dual_grid(&u.grid)?;
    if !g.contains(anchor) {
        return Err(Error::invalid(format!("anchor {anchor:?} lies outside the cell-centre grid")));
    }
    if let Some(k) = u.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { location: format!("u node {k}"), value: u.values[k] });
    }
    let (ih, iv) = dual_increments(u, p.p, opts.rule);
    let log_scale = ih.iter().chain(&iv).map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let log_scale = if log_scale.is_finite() { log_scale } else { 0.0 };
    let scaled = |e: &LogIncrement| if e.1 == 0.0 { 0.0 } else { e.1 * (e.0 - log_scale).exp() };
    let dh: Vec<f64> = ih.iter().map(scaled).collect();
    let dv: Vec<f64> = iv.iter().map(scaled).collect();
    let curl = curl_residual(&g, &dh, &dv);
    if curl > opts.curl_bound {
        return Err(Error::CurlResidual { residual: curl, bound: opts.curl_bound });
    }

    let (sh, sv) = edge_sigmas(&g, &dh, &dv);
    let (pi, pj) = heaviest_node(&g, &sh, &sv);
    let v0 = path_potential(&g, &dh, &dv, pi, pj);

    // weighted least-squares correction of the path potential; the pin only
    // fixes the constant, and pinning where the weights peak keeps the
    // diagonally scaled system well conditioned
    let pin = g.idx(pi, pj);
    let n = g.n_nodes() - 1;
    let col = |k: usize| if k > pin { k - 1 } else { k };
    let mut a = BandedSpd::zeros(n, g.nx);
    let mut rhs = vec![0.0; n];
    let mut add_edge = |ka: usize, kb: usize, d: f64, sigma: f64| {
        let w = 1.0 / (sigma * sigma);
        let d = d - (v0[kb] - v0[ka]);
        for (k, s) in [(ka, -1.0), (kb, 1.0)] {
            if k != pin {
                a.add(col(k), col(k), w);
                rhs[col(k)] += s * w * d;
            }
        }
        if ka != pin && kb != pin {
            a.add(col(ka), col(kb), -w);
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            add_edge(g.idx(i, j), g.idx(i + 1, j), dh[j * (g.nx - 1) + i], sh[j * (g.nx - 1) + i]);
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            add_edge(g.idx(i, j), g.idx(i, j + 1), dv[j * g.nx + i], sv[j * g.nx + i]);
        }
    }
    // two rounds of iterative refinement recover the digits lost to the
    // anisotropic weights
    let chol = a.clone().factor()?;
    let mut sol = chol.solve(&rhs);
    for _ in 0..2 {
        let ax = a.mul(&sol);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        for (x, d) in sol.iter_mut().zip(chol.solve(&r)) {
            *x += d;
        }
    }
    let mut values = v0;
    for k in 0..g.n_nodes() {
        if k != pin {
            values[k] += sol[col(k)];
        }
    }
    let mut v = ScalarField::new(g, values)?;
    let target = ((p.p - 1.0) * gamma.ln() - log_scale).exp();
    let shift = target - v.interpolate(anchor).expect("anchor checked above");
    for x in &mut v.values {
        *x += shift;
    }
    let mut log_scale = log_scale;
    let vmax = v.max_abs();
    if log_scale.abs() < 600.0 && vmax * log_scale.exp() < 1e300 {
        let s = log_scale.exp();
        for x in &mut v.values {
            *x *= s;
        }
        log_scale = 0.0;
    }
    Ok(ConjugatePair { u: u.clone(), v, log_scale, p, gamma, anchor, curl_residual: curl, rule: opts.rule })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedField {
    pub w: ScalarField,
    /// `F = (p - 1)^(-1/(p-1)) exp(w) grad_perp u` per cell, with `exp(w)`
    /// from the mean of the four nodal `w`.
    pub f: VectorField,
    /// `grad_perp u` on the cells of the grid of `w`.
    pub grad_perp_u: VectorField,
    pub p: PExponent,
}

impl TransformedField {
    /// `|grad w|^(p'-2) grad w` from the discrete gradient of `w`.
    pub fn direct_flux(&self) -> VectorField {
        let gw = gradient(&self.w);
        let e = self.p.p_conj - 2.0;
        let values = gw
            .values
            .iter()
            .map(|g| {
                let n = g[0].hypot(g[1]);
                if n == 0.0 {
                    [0.0, 0.0]
                } else {
                    let m = n.powf(e);
                    [m * g[0], m * g[1]]
                }
            })
            .collect();
        VectorField { grid: gw.grid, values }
    }
}

/// `w = (log v) / (1 - p)` on the nodes of the grid of `v` inside the box
/// `roi` (everywhere when `None`).
pub fn log_transform(pair: &ConjugatePair, roi: Option<(Point, Point)>) -> Result<TransformedField> {
    let grid = match roi {
        Some((lo, hi)) => sublattice_in(&pair.v.grid, lo, hi)?,
        None => pair.v.grid,
    };
    let v = pair.v.restrict(&grid)?;
    let bad: Vec<(usize, usize)> = (0..grid.n_nodes())
        .filter(|&k| !(v.values[k] > 0.0))
        .map(|k| (k % grid.nx, k / grid.nx))
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonPositive { count: bad.len(), nodes: bad.into_iter().take(8).collect() });
    }
    let p = pair.p.p;
    let w = ScalarField::new(grid, v.values.iter().map(|x| (x.ln() + pair.log_scale) / (1.0 - p)).collect())?;
    let c = -(p - 1.0).ln() / (p - 1.0);
    let gp = perp_grad_on_cells(&pair.u, &grid)?;
    let mut values = Vec::with_capacity(grid.n_cells());
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            let m = (c + w.cell_mean(ci, cj)).exp();
            let d = gp.at(ci, cj);
            values.push([m * d[0], m * d[1]]);
        }
    }
    let f = VectorField::new(grid, values)?;
    Ok(TransformedField { w, f, grad_perp_u: gp, p: pair.p })
}

/// Weak residual `int |grad w|^(p'-2) grad w . grad eta + int eta |grad w|^p'`
/// for each test function.
pub fn pprime_equation_residual(t: &TransformedField, tests: &[TestFunction]) -> Result<Vec<f64>> {
    let flux = t.direct_flux();
    let s: Vec<f64> = gradient(&t.w).norms().iter().map(|n| n.powf(t.p.p_conj)).collect();
    weak_divergence_residual_cells(&flux, &s, tests)
}
