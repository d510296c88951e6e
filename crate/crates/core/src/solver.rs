//! Regularised p-Dirichlet minimisation with continuation in p.
//!
//! The discrete energy sums the four one-sided corner gradients of every
//! cell with weight `h^2 / 4`. Their mean is the cell gradient of
//! [`crate::grid::gradient`], and at `p = 2` the functional is exactly the
//! 5-point Laplacian energy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{corner_gradients, gradient, CellMask, Grid2D, Point, ScalarField};
use crate::linalg::BandedSpd;

/// Lower clamp on `log(weight / max weight)`.
const LOG_CLAMP: f64 = -700.0;
const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Node-pair differences making up each corner gradient, in the order of
/// [`corner_gradients`]. Local nodes are `0 = (i, j)`, `1 = (i+1, j)`,
/// `2 = (i, j+1)`, `3 = (i+1, j+1)`; each entry is `(from, to)` for the x and
/// y components.
const CORNERS: [[(usize, usize); 2]; 4] = [
    [(0, 1), (0, 2)],
    [(0, 1), (1, 3)],
    [(2, 3), (0, 2)],
    [(2, 3), (1, 3)],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PExponent {
    pub p: f64,
    pub p_conj: f64,
}

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p < 2.0 {
            return Err(Error::invalid(format!("p must be finite and >= 2, got {p}")));
        }
        Ok(Self { p, p_conj: p / (p - 1.0) })
    }
}

/// Dirichlet data on a masked rectangle. Nodes outside `unknown` keep their
/// value; values at unknown nodes are the initial guess.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub unknown: Vec<bool>,
}

impl DirichletProblem {
    pub fn new(grid: Grid2D, values: Vec<f64>, unknown: Vec<bool>) -> Result<Self> {
        let n = grid.n_nodes();
        if values.len() != n || unknown.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} node values and flags, got {} and {}",
                values.len(),
                unknown.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("node ({}, {})", k % grid.nx, k / grid.nx),
                value: values[k],
            });
        }
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let edge = i == 0 || j == 0 || i + 1 == grid.nx || j + 1 == grid.ny;
                if edge && unknown[grid.idx(i, j)] {
                    return Err(Error::invalid(format!("node ({i}, {j}) on the grid boundary is marked unknown")));
                }
            }
        }
        if !unknown.iter().any(|&f| f) {
            return Err(Error::invalid("problem has no unknown nodes"));
        }
        Ok(Self { grid, values, unknown })
    }

    /// All interior nodes unknown, boundary values and initial guess from `u`.
    pub fn rectangle(u: &ScalarField) -> Result<Self> {
        let g = u.grid;
        let unknown = (0..g.n_nodes())
            .map(|k| {
                let (i, j) = (k % g.nx, k / g.nx);
                i > 0 && j > 0 && i + 1 < g.nx && j + 1 < g.ny
            })
            .collect();
        Self::new(g, u.values.clone(), unknown)
    }

    /// Prescribes `data` everywhere, frees the interior nodes where `inside`
    /// holds and starts them from the mean of the prescribed values.
    pub fn masked(grid: Grid2D, data: impl Fn(Point) -> f64, inside: impl Fn(Point) -> bool) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_nodes());
        let mut unknown = Vec::with_capacity(grid.n_nodes());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let x = grid.node(i, j);
                let edge = i == 0 || j == 0 || i + 1 == grid.nx || j + 1 == grid.ny;
                values.push(data(x));
                unknown.push(!edge && inside(x));
            }
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for (v, &f) in values.iter().zip(&unknown) {
            if !f && v.is_finite() {
                sum += v;
                count += 1;
            }
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        for (v, &f) in values.iter_mut().zip(&unknown) {
            if f {
                *v = mean;
            }
        }
        Self::new(grid, values, unknown)
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknown.iter().filter(|&&f| f).count()
    }

    /// Replaces the values at unknown nodes.
    pub fn with_initial_guess(mut self, guess: &ScalarField) -> Result<Self> {
        self.grid.ensure_matches(&guess.grid, "initial guess")?;
        for (k, v) in self.values.iter_mut().enumerate() {
            if self.unknown[k] {
                *v = guess.values[k];
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub p: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    /// Floor `eps_min` of the regularisation schedule.
    pub epsilon: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub continuation: Vec<Stage>,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self::schedule(&[2.0, 4.0, 8.0, 16.0, 32.0, 64.0], 0.0)
    }
}

impl SolveParams {
    /// Stages at the given exponents with `eps = max(eps_min, 10 / p)`.
    pub fn schedule(ps: &[f64], eps_min: f64) -> Self {
        Self {
            epsilon: eps_min,
            tol: 1e-9,
            max_iters: 200,
            continuation: ps.iter().map(|&p| Stage { p, epsilon: eps_min.max(10.0 / p) }).collect(),
        }
    }

    /// Doubling schedule `2, 4, ...` up to and including `p_max`.
    pub fn doubling(p_max: f64, eps_min: f64) -> Self {
        let mut ps = vec![2.0];
        while ps[ps.len() - 1] * 2.0 <= p_max * (1.0 + 1e-12) {
            ps.push(ps[ps.len() - 1] * 2.0);
        }
        if ps[ps.len() - 1] < p_max {
            ps.push(p_max);
        }
        Self::schedule(&ps, eps_min)
    }

    /// Appends a stage at the last exponent with `eps = eps_min`, so the
    /// returned field solves the unregularised equation.
    pub fn polished(mut self) -> Self {
        if let Some(last) = self.continuation.last().copied() {
            if last.epsilon > self.epsilon {
                self.continuation.push(Stage { p: last.p, epsilon: self.epsilon });
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if self.continuation.is_empty() {
            return Err(Error::invalid("continuation has no stages"));
        }
        for (k, s) in self.continuation.iter().enumerate() {
            PExponent::new(s.p)?;
            if !(s.epsilon >= 0.0) || !s.epsilon.is_finite() {
                return Err(Error::invalid(format!("stage {k}: epsilon must be >= 0, got {}", s.epsilon)));
            }
            if k > 0 {
                let prev = self.continuation[k - 1];
                if s.p < prev.p {
                    return Err(Error::invalid(format!("stage {k}: p decreases ({} after {})", s.p, prev.p)));
                }
                if s.epsilon > prev.epsilon {
                    return Err(Error::invalid(format!(
                        "stage {k}: epsilon increases ({} after {})",
                        s.epsilon, prev.epsilon
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub p: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub picard_steps: usize,
    /// Unregularised energy of the stage result.
    pub energy: f64,
    pub residual: f64,
    pub converged: bool,
    /// Relative change of the regularised energy for every accepted step.
    pub decrements: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    pub unknown: Vec<bool>,
    pub p: PExponent,
    pub epsilon: f64,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stages: Vec<StageReport>,
}

impl SolveResult {
    /// Cells with at least one unknown node; the discrete domain.
    pub fn active_cells(&self) -> CellMask {
        active_mask(&self.u.grid, &self.unknown)
    }
}

/// Per-stage convergence table.
pub fn stages_csv(stages: &[StageReport]) -> String {
    let mut s = String::from("stage,p,epsilon,iterations,energy,residual,converged\n");
    for r in stages {
        let _ = writeln!(
            s,
            "{},{},{:.16e},{},{:.16e},{:.16e},{}",
            r.stage, r.p, r.epsilon, r.iterations, r.energy, r.residual, r.converged
        );
    }
    s
}

fn active_mask(grid: &Grid2D, unknown: &[bool]) -> CellMask {
    let mut m = CellMask::all(grid);
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            let any = [(0, 0), (1, 0), (0, 1), (1, 1)].iter().any(|&(a, b)| unknown[grid.idx(ci + a, cj + b)]);
            m.cells[grid.cell_idx(ci, cj)] = any;
        }
    }
    m
}

fn cell_nodes(grid: &Grid2D, cell: usize) -> [usize; 4] {
    let (ci, cj) = (cell % grid.ncx(), cell / grid.ncx());
    let k = grid.idx(ci, cj);
    [k, k + 1, k + grid.nx, k + grid.nx + 1]
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.filter(|t| *t > f64::NEG_INFINITY).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `log(1/p * sum_corners h^2/4 (|q|^2 + eps^2)^{p/2})` over the given cells.
fn log_energy_integral(u: &ScalarField, p: f64, eps: f64, cells: Option<&CellMask>) -> f64 {
    let g = &u.grid;
    let lw = (g.cell_area() / 4.0).ln();
    let mut terms = Vec::with_capacity(4 * g.n_cells());
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            if cells.is_some_and(|m| !m.get(ci, cj)) {
                continue;
            }
            for q in corner_gradients(u, ci, cj) {
                let s2 = q[0] * q[0] + q[1] * q[1] + eps * eps;
                terms.push(0.5 * p * s2.ln() + lw);
            }
        }
    }
    log_sum_exp(terms.into_iter()) - p.ln()
}

/// `(1/p * int (|grad u|^2 + eps^2)^{p/2})^{1/p}`, evaluated in log space.
pub fn energy(u: &ScalarField, p: PExponent, epsilon: f64) -> Result<f64> {
    energy_on(u, p, epsilon, None)
}

pub fn energy_on(u: &ScalarField, p: PExponent, epsilon: f64, cells: Option<&CellMask>) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let l = log_energy_integral(u, p.p, epsilon, cells);
    if l == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let e = (l / p.p).exp();
    if !e.is_finite() {
        return Err(Error::Overflow(format!("energy at p = {} exceeds the double range", p.p)));
    }
    Ok(e)
}

/// `log ||grad u||_{L^p}` over the given cells, with the corner quadrature.
pub fn log_lp_gradient_norm(u: &ScalarField, p: f64, cells: Option<&CellMask>) -> f64 {
    (log_energy_integral(u, p, 0.0, cells) + p.ln()) / p
}

/// Numbering of the unknowns and the active cells of a problem.
struct Layout {
    index: Vec<usize>,
    nodes: Vec<usize>,
    cells: Vec<usize>,
    bw: usize,
}

impl Layout {
    fn new(grid: &Grid2D, unknown: &[bool]) -> Self {
        let mut index = vec![usize::MAX; unknown.len()];
        let mut nodes = Vec::new();
        for (k, &f) in unknown.iter().enumerate() {
            if f {
                index[k] = nodes.len();
                nodes.push(k);
            }
        }
        let mut cells = Vec::new();
        let mut bw = 0;
        for c in 0..grid.n_cells() {
            let ids: Vec<usize> = cell_nodes(grid, c).iter().map(|&k| index[k]).filter(|&i| i != usize::MAX).collect();
            if let (Some(lo), Some(hi)) = (ids.iter().min(), ids.iter().max()) {
                bw = bw.max(hi - lo);
                cells.push(c);
            }
        }
        Self { index, nodes, cells, bw }
    }
}

/// Corner data of one iterate: gradient, squared regularised norm and
/// log weight `(p - 2)/2 * log(s^2)`.
struct CornerState {
    q: Vec<[f64; 2]>,
    s2: Vec<f64>,
    logw: Vec<f64>,
}

impl CornerState {
    fn new(u: &[f64], grid: &Grid2D, layout: &Layout, p: f64, eps: f64) -> Self {
        let n = 4 * layout.cells.len();
        let (mut q, mut s2, mut logw) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let h = grid.h;
        for &c in &layout.cells {
            let nd = cell_nodes(grid, c);
            for pairs in CORNERS {
                let qx = (u[nd[pairs[0].1]] - u[nd[pairs[0].0]]) / h;
                let qy = (u[nd[pairs[1].1]] - u[nd[pairs[1].0]]) / h;
                let s = qx * qx + qy * qy + eps * eps;
                q.push([qx, qy]);
                s2.push(s);
                logw.push(if p == 2.0 { 0.0 } else { 0.5 * (p - 2.0) * s.ln() });
            }
        }
        Self { q, s2, logw }
    }

    fn max_logw(&self) -> f64 {
        let m = self.logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }
}

struct Step {
    grad: Vec<f64>,
    matrix: BandedSpd,
    diag: Vec<f64>,
}

/// Gradient and Newton (or lagged-weight Picard) matrix of the scaled
/// energy `e^{-m} J`.
fn assemble(grid: &Grid2D, layout: &Layout, st: &CornerState, p: f64, m: f64, picard: bool) -> Step {
    let n = layout.nodes.len();
    let h = grid.h;
    let w0 = grid.cell_area() / 4.0;
    let mut grad = vec![0.0; n];
    let mut mat = BandedSpd::zeros(n, layout.bw);
    let mut k = 0;
    for &c in &layout.cells {
        let nd = cell_nodes(grid, c);
        let ids = nd.map(|v| layout.index[v]);
        for pairs in CORNERS {
            let q = st.q[k];
            let s2 = st.s2[k];
            let a = (st.logw[k] - m).max(LOG_CLAMP).exp() * w0;
            k += 1;
            // d q / d u_local: b[l] = (bx, by)
            let mut b = [[0.0f64; 2]; 4];
            for (comp, &(from, to)) in pairs.iter().enumerate() {
                b[from][comp] -= 1.0 / h;
                b[to][comp] += 1.0 / h;
            }
            let aq = [a * q[0], a * q[1]];
            // corner Hessian a (I + (p-2) q q^T / s^2)
            let mut hc = [[a, 0.0], [0.0, a]];
            if !picard && p != 2.0 && s2 > 0.0 {
                let f = a * (p - 2.0) / s2;
                hc[0][0] += f * q[0] * q[0];
                hc[0][1] += f * q[0] * q[1];
                hc[1][0] += f * q[1] * q[0];
                hc[1][1] += f * q[1] * q[1];
            }
            for l in 0..4 {
                let il = ids[l];
                if il == usize::MAX || (b[l][0] == 0.0 && b[l][1] == 0.0) {
                    continue;
                }
                grad[il] += aq[0] * b[l][0] + aq[1] * b[l][1];
                let hb = [hc[0][0] * b[l][0] + hc[0][1] * b[l][1], hc[1][0] * b[l][0] + hc[1][1] * b[l][1]];
                for r in 0..=l {
                    let ir = ids[r];
                    if ir == usize::MAX {
                        continue;
                    }
                    let v = hb[0] * b[r][0] + hb[1] * b[r][1];
                    if v != 0.0 {
                        mat.add(il, ir, v);
                    }
                }
            }
        }
    }
    let diag = (0..n).map(|i| mat.diag(i)).collect();
    Step { grad, matrix: mat, diag }
}

/// Change of the scaled energy `e^{-m} J` when `u` moves to `trial`, summed
/// cornerwise from `expm1`/`ln_1p` so that it stays accurate near the
/// minimum.
fn energy_change(grid: &Grid2D, layout: &Layout, st: &CornerState, trial: &[f64], p: f64, m: f64, eps: f64) -> f64 {
    let h = grid.h;
    let w0 = grid.cell_area() / 4.0;
    let mut total = 0.0;
    let mut k = 0;
    for &c in &layout.cells {
        let nd = cell_nodes(grid, c);
        for pairs in CORNERS {
            let qx = (trial[nd[pairs[0].1]] - trial[nd[pairs[0].0]]) / h;
            let qy = (trial[nd[pairs[1].1]] - trial[nd[pairs[1].0]]) / h;
            let q0 = st.q[k];
            let s2_old = st.s2[k];
            let ds2 = (qx - q0[0]) * (qx + q0[0]) + (qy - q0[1]) * (qy + q0[1]);
            let d = if s2_old > 0.0 {
                let base = (st.logw[k] - m).max(LOG_CLAMP).exp() * s2_old / p;
                base * (0.5 * p * (ds2 / s2_old).ln_1p()).exp_m1()
            } else {
                let s2_new = qx * qx + qy * qy + eps * eps;
                if s2_new > 0.0 {
                    (0.5 * p * s2_new.ln() - m).max(LOG_CLAMP).exp() / p
                } else {
                    0.0
                }
            };
            total += w0 * d;
            k += 1;
        }
    }
    total
}

fn scaled_energy(grid: &Grid2D, st: &CornerState, p: f64, m: f64) -> f64 {
    let w0 = grid.cell_area() / 4.0;
    st.s2
        .iter()
        .zip(&st.logw)
        .map(|(s2, lw)| w0 * (lw - m).max(LOG_CLAMP).exp() * s2 / p)
        .sum()
}

fn run_stage(
    u: &mut [f64],
    grid: &Grid2D,
    layout: &Layout,
    stage: Stage,
    index: usize,
    params: &SolveParams,
    active: &CellMask,
) -> Result<StageReport> {
    let (p, eps) = (stage.p, stage.epsilon);
    let mut iterations = 0;
    let mut picard_steps = 0;
    let mut decrements = Vec::new();
    let mut converged = false;
    let mut residual;
    loop {
        let st = CornerState::new(u, grid, layout, p, eps);
        let m = st.max_logw();
        let newton = assemble(grid, layout, &st, p, m, false);
        let umax = layout.nodes.iter().map(|&k| u[k].abs()).fold(0.0, f64::max);
        residual = newton
            .grad
            .iter()
            .zip(&newton.diag)
            .map(|(g, d)| if *d > 0.0 { g.abs() / d } else { g.abs() })
            .fold(0.0, f64::max)
            / (1.0 + umax);
        if !residual.is_finite() {
            return Err(Error::NonFinite { location: format!("solver residual at p = {p}"), value: residual });
        }
        if residual <= params.tol {
            converged = true;
            break;
        }
        if iterations >= params.max_iters {
            break;
        }
        iterations += 1;
        let j0 = scaled_energy(grid, &st, p, m);
        let mut accepted = None;
        for picard in [false, true] {
            let matrix = if picard { assemble(grid, layout, &st, p, m, true).matrix } else { newton.matrix.clone() };
            let chol = match matrix.factor() {
                Ok(c) => c,
                Err(_) => continue,
            };
            let rhs: Vec<f64> = newton.grad.iter().map(|g| -g).collect();
            let d = chol.solve(&rhs);
            let slope: f64 = d.iter().zip(&newton.grad).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                continue;
            }
            let mut t = 1.0;
            let mut trial = u.to_vec();
            for _ in 0..MAX_HALVINGS {
                for (i, &k) in layout.nodes.iter().enumerate() {
                    trial[k] = u[k] + t * d[i];
                }
                let de = energy_change(grid, layout, &st, &trial, p, m, eps);
                if de < 0.0 && de <= ARMIJO_C1 * t * slope {
                    accepted = Some((trial.clone(), de));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                if picard {
                    picard_steps += 1;
                }
                break;
            }
        }
        match accepted {
            Some((trial, de)) => {
                u.copy_from_slice(&trial);
                decrements.push(if j0 > 0.0 { de / j0 } else { de });
            }
            None => break,
        }
    }
    let field = ScalarField::new(*grid, u.to_vec())?;
    let energy = energy_on(&field, PExponent::new(p)?, 0.0, Some(active))?;
    Ok(StageReport { stage: index, p, epsilon: eps, iterations, picard_steps, energy, residual, converged, decrements })
}

/// Runs every continuation stage, each warm-started from the previous one.
pub fn solve(problem: &DirichletProblem, params: &SolveParams) -> Result<SolveResult> {
    params.validate()?;
    let grid = problem.grid;
    let layout = Layout::new(&grid, &problem.unknown);
    let active = active_mask(&grid, &problem.unknown);
    let mut u = problem.values.clone();
    let mut stages = Vec::with_capacity(params.continuation.len());
    for (k, &stage) in params.continuation.iter().enumerate() {
        stages.push(run_stage(&mut u, &grid, &layout, stage, k, params, &active)?);
    }
    let last = stages[stages.len() - 1].clone();
    Ok(SolveResult {
        u: ScalarField::new(grid, u)?,
        unknown: problem.unknown.clone(),
        p: PExponent::new(last.p)?,
        epsilon: last.epsilon,
        energy: last.energy,
        residual: last.residual,
        iterations: stages.iter().map(|s| s.iterations).sum(),
        converged: last.converged,
        stages,
    })
}

/// Interior gradient bound: `lhs = max |grad u|` over domain cells farther
/// than `rho` from the discrete boundary, `rhs = (C p^{5/2} / rho^3)^{1/p}
/// ||grad u||_{L^p}`.
pub fn interior_sup_gradient_check(result: &SolveResult, rho: f64, p: PExponent, c: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0) || !(c > 0.0) {
        return Err(Error::invalid(format!("rho and C must be positive, got {rho} and {c}")));
    }
    let grid = result.u.grid;
    let unknown = &result.unknown;
    let mut boundary: Vec<Point> = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if unknown[grid.idx(i, j)] {
                continue;
            }
            let near = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (-1, 1), (1, -1)].iter().any(|&(a, b)| {
                let (ii, jj) = (i as i64 + a, j as i64 + b);
                ii >= 0 && jj >= 0 && (ii as usize) < grid.nx && (jj as usize) < grid.ny && unknown[grid.idx(ii as usize, jj as usize)]
            });
            if near {
                boundary.push(grid.node(i, j));
            }
        }
    }
    let grads = gradient(&result.u);
    let active = result.active_cells();
    let mut lhs: Option<f64> = None;
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            if !active.get(ci, cj) {
                continue;
            }
            let x = grid.cell_center(ci, cj);
            let d2 = boundary.iter().map(|b| (b[0] - x[0]).powi(2) + (b[1] - x[1]).powi(2)).fold(f64::INFINITY, f64::min);
            if d2.sqrt() > rho {
                let g = grads.at(ci, cj);
                let n = g[0].hypot(g[1]);
                lhs = Some(lhs.map_or(n, |l: f64| l.max(n)));
            }
        }
    }
    let lhs = lhs.ok_or_else(|| Error::invalid(format!("no domain cells farther than rho = {rho} from the boundary")))?;
    let pp = p.p;
    let log_rhs = (c.ln() + 2.5 * pp.ln() - 3.0 * rho.ln()) / pp + log_lp_gradient_norm(&result.u, pp, Some(&active));
    Ok((lhs, log_rhs.exp()))
}

/// Minimum of the cell value of `du/dx2` over domain cells, optionally
/// restricted further by `mask`.
pub fn vertical_monotonicity_check(result: &SolveResult, mask: Option<&CellMask>) -> f64 {
    let grads = gradient(&result.u);
    let active = result.active_cells();
    let g = result.u.grid;
    let mut min = f64::INFINITY;
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            if active.get(ci, cj) && mask.is_none_or(|m| m.get(ci, cj)) {
                min = min.min(grads.at(ci, cj)[1]);
            }
        }
    }
    min
}
