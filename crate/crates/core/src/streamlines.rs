//! Streamlines `gamma' = grad u`, level curves of `u`, the orientation of a
//! gradient field and the level family of the local construction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, CellMask, Grid2D, Point, ScalarField, VectorField};

/// Gradients below this are treated as critical points.
pub const GRAD_FLOOR: f64 = 1e-8;
const MONOTONE_SLACK: f64 = 1e-6;
const CORRECTOR_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamlinePath {
    pub points: Vec<Point>,
    pub grad_norm_along: Vec<f64>,
    pub arclength: Vec<f64>,
    /// Set when the path stopped at a near-critical point.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationField {
    pub grid: Grid2D,
    /// `+1` or `-1` where defined, `0` elsewhere.
    pub omega: Vec<i8>,
    pub defined: Vec<bool>,
}

impl OrientationField {
    /// The same sign everywhere, for branches fixed by hand.
    pub fn uniform(grid: Grid2D, omega: i8) -> Result<Self> {
        if omega != 1 && omega != -1 {
            return Err(Error::invalid(format!("orientation must be +1 or -1, got {omega}")));
        }
        Ok(Self { grid, omega: vec![omega; grid.n_nodes()], defined: vec![true; grid.n_nodes()] })
    }

    /// Sign on a cell when all four corners agree.
    pub fn cell(&self, ci: usize, cj: usize) -> Option<i8> {
        let a = self.at(ci, cj)?;
        for (i, j) in [(ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)] {
            if self.at(i, j)? != a {
                return None;
            }
        }
        Some(a)
    }

    pub fn at(&self, i: usize, j: usize) -> Option<i8> {
        let k = self.grid.idx(i, j);
        self.defined[k].then_some(self.omega[k])
    }

    /// Pairs of adjacent defined nodes with opposite signs.
    pub fn sign_changes(&self) -> usize {
        let g = &self.grid;
        let mut n = 0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let Some(a) = self.at(i, j) else { continue };
                if i + 1 < g.nx && self.at(i + 1, j).is_some_and(|b| b != a) {
                    n += 1;
                }
                if j + 1 < g.ny && self.at(i, j + 1).is_some_and(|b| b != a) {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Interpolated view of a scalar field and its cell gradients.
pub struct FieldProbe<'a> {
    pub u: &'a ScalarField,
    pub grad: VectorField,
    lo: Point,
    hi: Point,
}

impl<'a> FieldProbe<'a> {
    /// Probe confined to the grid rectangle shrunk by `margin`.
    pub fn new(u: &'a ScalarField, margin: f64) -> Self {
        let g = u.grid;
        Self {
            u,
            grad: gradient(u),
            lo: [g.x0 + margin, g.y0 + margin],
            hi: [g.x_max() - margin, g.y_max() - margin],
        }
    }

    pub fn inside(&self, x: Point) -> bool {
        x[0] >= self.lo[0] && x[0] <= self.hi[0] && x[1] >= self.lo[1] && x[1] <= self.hi[1]
    }

    pub fn value(&self, x: Point) -> Option<f64> {
        self.u.interpolate(x)
    }

    pub fn grad(&self, x: Point) -> Option<[f64; 2]> {
        self.grad.interpolate(x)
    }

    fn unit(&self, x: Point, rotate: bool) -> Option<[f64; 2]> {
        let g = self.grad(x)?;
        let n = g[0].hypot(g[1]);
        if n < GRAD_FLOOR {
            return None;
        }
        Some(if rotate { [-g[1] / n, g[0] / n] } else { [g[0] / n, g[1] / n] })
    }
}

fn rk4(probe: &FieldProbe, x: Point, h: f64, rotate: bool, sign: f64) -> Option<Point> {
    let f = |p: Point| probe.unit(p, rotate).map(|v| [sign * v[0], sign * v[1]]);
    let k1 = f(x)?;
    let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]])?;
    let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]])?;
    let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]])?;
    Some([
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

fn norm_at(probe: &FieldProbe, x: Point) -> f64 {
    probe.grad(x).map_or(0.0, |g| g[0].hypot(g[1]))
}

/// Unit-speed RK4 integration of `gamma' = grad u / |grad u|` (or its
/// reverse when `sign < 0`), stopped one cell before the grid edge.
pub fn trace_streamline_dir(u: &ScalarField, start: Point, step: f64, max_len: f64, sign: f64) -> Result<StreamlinePath> {
    if !(step > 0.0) || !(max_len >= 0.0) {
        return Err(Error::invalid(format!("need step > 0 and max_len >= 0, got {step} and {max_len}")));
    }
    let probe = FieldProbe::new(u, u.grid.h);
    if !probe.inside(start) {
        return Err(Error::invalid(format!("start {start:?} is outside the tracing margin")));
    }
    let g0 = norm_at(&probe, start);
    if g0 <= GRAD_FLOOR {
        return Err(Error::invalid(format!("|grad u| = {g0:e} at the start point {start:?}")));
    }
    let mut path = StreamlinePath { points: vec![start], grad_norm_along: vec![g0], arclength: vec![0.0], truncated: false };
    let mut x = start;
    let mut s = 0.0;
    while s < max_len {
        let h = step.min(max_len - s);
        let Some(next) = rk4(&probe, x, h, false, sign.signum()) else {
            path.truncated = true;
            break;
        };
        if !probe.inside(next) {
            break;
        }
        let g = norm_at(&probe, next);
        if g <= GRAD_FLOOR {
            path.truncated = true;
            break;
        }
        x = next;
        s += h;
        path.points.push(x);
        path.grad_norm_along.push(g);
        path.arclength.push(s);
    }
    Ok(path)
}

pub fn trace_streamline(u: &ScalarField, start: Point, step: f64, max_len: f64) -> Result<StreamlinePath> {
    trace_streamline_dir(u, start, step, max_len, 1.0)
}

/// Streamline through `start` in both directions, ordered along `grad u`.
pub fn trace_streamline_through(u: &ScalarField, start: Point, step: f64, max_len: f64) -> Result<StreamlinePath> {
    let back = trace_streamline_dir(u, start, step, max_len, -1.0)?;
    let fwd = trace_streamline_dir(u, start, step, max_len, 1.0)?;
    let mut out = StreamlinePath { points: vec![], grad_norm_along: vec![], arclength: vec![], truncated: back.truncated || fwd.truncated };
    for k in (1..back.points.len()).rev() {
        out.points.push(back.points[k]);
        out.grad_norm_along.push(back.grad_norm_along[k]);
        out.arclength.push(-back.arclength[k]);
    }
    out.points.extend(&fwd.points);
    out.grad_norm_along.extend(&fwd.grad_norm_along);
    out.arclength.extend(&fwd.arclength);
    Ok(out)
}

/// Relative spread `(max - min) / mean` of `|grad u|` along a path.
pub fn relative_variation(path: &StreamlinePath) -> f64 {
    let v = &path.grad_norm_along;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (max - min) / mean
}

/// Newton projection onto `{u = level}` along the interpolated gradient.
fn correct(probe: &FieldProbe, mut x: Point, level: f64) -> Result<Point> {
    let tol = 1e-11 * (1.0 + level.abs());
    for _ in 0..CORRECTOR_STEPS {
        let (Some(v), Some(g)) = (probe.value(x), probe.grad(x)) else {
            return Err(Error::CorrectorFailed { x: x[0], y: x[1] });
        };
        let r = v - level;
        if r.abs() <= tol {
            return Ok(x);
        }
        let n2 = g[0] * g[0] + g[1] * g[1];
        if n2 < GRAD_FLOOR * GRAD_FLOOR {
            break;
        }
        x = [x[0] - r * g[0] / n2, x[1] - r * g[1] / n2];
    }
    Err(Error::CorrectorFailed { x: x[0], y: x[1] })
}

/// One branch of a level curve from `seed` along `sign * grad_perp u`.
fn level_branch(probe: &FieldProbe, seed: Point, level: f64, step: f64, max_len: f64, sign: f64) -> Result<Vec<Point>> {
    let mut pts = vec![seed];
    let mut x = seed;
    let mut s = 0.0;
    while s < max_len {
        let h = step.min(max_len - s);
        let Some(pred) = rk4(probe, x, h, true, sign) else { break };
        if !probe.inside(pred) {
            break;
        }
        let next = correct(probe, pred, level)?;
        if !probe.inside(next) {
            break;
        }
        s += h;
        x = next;
        pts.push(x);
    }
    Ok(pts)
}

/// Level curve `{u = level}` through the projection of `seed`, in both
/// directions, ordered along `grad_perp u`.
pub fn trace_level_set(u: &ScalarField, level: f64, seed: Point, step: f64, max_len: f64) -> Result<Vec<Point>> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let probe = FieldProbe::new(u, u.grid.h);
    if !probe.inside(seed) {
        return Err(Error::invalid(format!("seed {seed:?} is outside the tracing margin")));
    }
    let start = correct(&probe, seed, level)?;
    let back = level_branch(&probe, start, level, step, max_len, -1.0)?;
    let fwd = level_branch(&probe, start, level, step, max_len, 1.0)?;
    let mut pts: Vec<Point> = back.into_iter().skip(1).rev().collect();
    pts.extend(fwd);
    Ok(pts)
}

/// Symmetric Hausdorff distance between two polylines, using their vertices
/// against the other polyline's segments.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
        let d = [b[0] - a[0], b[1] - a[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
        (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
    }
    fn one_sided(a: &[Point], b: &[Point]) -> f64 {
        a.iter()
            .map(|&p| {
                if b.len() == 1 {
                    return (p[0] - b[0][0]).hypot(p[1] - b[0][1]);
                }
                b.windows(2).map(|w| seg_dist(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    one_sided(a, b).max(one_sided(b, a))
}

/// Orientation detector: at each node the level curve through it is traced
/// for arclength `r` both ways and `|grad u|` is sampled along it in the
/// `grad_perp u(x)` direction. `+1` for nondecreasing samples, `-1` for
/// nonincreasing ones (ties go to `+1`), undefined otherwise. Nodes whose
/// defined neighbours disagree are dropped afterwards.
pub fn detect_orientation(u: &ScalarField, grad_norm: &ScalarField, r: f64) -> Result<OrientationField> {
    let grid = u.grid;
    grid.ensure_matches(&grad_norm.grid, "grad_norm")?;
    if !(r >= 2.0 * grid.h) {
        return Err(Error::invalid(format!("probe radius {r} is below 2h = {}", 2.0 * grid.h)));
    }
    let probe = FieldProbe::new(u, grid.h);
    let step = 0.5 * grid.h;
    let n = grid.n_nodes();
    let mut omega = vec![0i8; n];
    let mut defined = vec![false; n];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let x = grid.node(i, j);
            if !probe.inside(x) || norm_at(&probe, x) <= GRAD_FLOOR {
                continue;
            }
            let Some(level) = probe.value(x) else { continue };
            let (Ok(back), Ok(fwd)) = (
                level_branch(&probe, x, level, step, r, -1.0),
                level_branch(&probe, x, level, step, r, 1.0),
            ) else {
                continue;
            };
            // both branches must reach the full probe length
            let need = (r / step).round() as usize + 1;
            if back.len() < need || fwd.len() < need {
                continue;
            }
            let samples: Vec<f64> = back
                .iter()
                .rev()
                .chain(fwd.iter().skip(1))
                .map(|&p| grad_norm.interpolate(p).unwrap_or(f64::NAN))
                .collect();
            if samples.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let up = samples.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK);
            let down = samples.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
            let k = grid.idx(i, j);
            if up {
                omega[k] = 1;
                defined[k] = true;
            } else if down {
                omega[k] = -1;
                defined[k] = true;
            }
        }
    }
    let mut field = OrientationField { grid, omega, defined };
    enforce_continuity(&mut field);
    Ok(field)
}

fn enforce_continuity(f: &mut OrientationField) {
    let g = f.grid;
    loop {
        let mut drop = Vec::new();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let Some(a) = f.at(i, j) else { continue };
                let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
                if nbrs.iter().any(|&(a2, b2)| a2 < g.nx && b2 < g.ny && f.at(a2, b2).is_some_and(|b| b != a)) {
                    drop.push(g.idx(i, j));
                }
            }
        }
        if drop.is_empty() {
            return;
        }
        for k in drop {
            f.defined[k] = false;
            f.omega[k] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetFamily {
    pub t_values: Vec<f64>,
    pub levels: Vec<f64>,
    pub curves: Vec<Vec<Point>>,
    pub m_t: Vec<f64>,
    /// Largest slope of each traced curve as a graph over `x1`.
    pub lipschitz: Vec<f64>,
    pub m_mask: CellMask,
}

/// Slope bound `max |dx2 / dx1|` of a polyline read as a graph over `x1`.
pub fn graph_lipschitz(curve: &[Point]) -> f64 {
    curve
        .windows(2)
        .map(|w| {
            let dx = w[1][0] - w[0][0];
            if dx.abs() < 1e-300 {
                f64::INFINITY
            } else {
                ((w[1][1] - w[0][1]) / dx).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Solves `u(0, t) = level` for `t` by bisection on the line `x1 = 0`.
fn level_parameter(probe: &FieldProbe, level: f64) -> Option<f64> {
    let (mut lo, mut hi) = (probe.lo[1], probe.hi[1]);
    let (flo, fhi) = (probe.value([0.0, lo])? - level, probe.value([0.0, hi])? - level);
    if flo > 0.0 || fhi < 0.0 {
        return None;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if probe.value([0.0, mid])? < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Traces `L_t = {u = u(0, t)}` for each `t` and rasterises
/// `M = union of {x in L_t : x1 <= m(t)}` over `t in [-1/2, 1/2]`.
pub fn build_level_family(
    u: &ScalarField,
    m: impl Fn(f64) -> f64,
    t_values: &[f64],
    delta: f64,
    step: f64,
) -> Result<LevelSetFamily> {
    let grid = u.grid;
    let probe = FieldProbe::new(u, grid.h);
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            let g = probe.grad.at(ci, cj);
            let dev = g[0].hypot(g[1] - 1.0);
            if dev > delta {
                return Err(Error::PinchViolated { i: ci, j: cj, value: dev, delta });
            }
        }
    }
    let mut fam = LevelSetFamily {
        t_values: t_values.to_vec(),
        levels: vec![],
        curves: vec![],
        m_t: vec![],
        lipschitz: vec![],
        m_mask: CellMask::all(&grid),
    };
    for &t in t_values {
        if !(-0.5..=0.5).contains(&t) {
            return Err(Error::invalid(format!("t = {t} outside [-1/2, 1/2]")));
        }
        let level = probe
            .value([0.0, t])
            .ok_or_else(|| Error::invalid(format!("(0, {t}) lies outside the grid")))?;
        let curve = trace_level_set(u, level, [0.0, t], step, 4.0)?;
        fam.lipschitz.push(graph_lipschitz(&curve));
        fam.levels.push(level);
        fam.curves.push(curve);
        fam.m_t.push(m(t).clamp(-1.0, 1.0));
    }
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            let x = grid.cell_center(ci, cj);
            let inside = probe.value(x).and_then(|lv| level_parameter(&probe, lv)).is_some_and(|t| {
                (-0.5..=0.5).contains(&t) && x[0] <= m(t).clamp(-1.0, 1.0)
            });
            fam.m_mask.cells[grid.cell_idx(ci, cj)] = inside;
        }
    }
    Ok(fam)
}

/// Polylines as `path_id,s,x,y,grad_norm`.
pub fn paths_csv(paths: &[StreamlinePath]) -> String {
    let mut s = String::from("path_id,s,x,y,grad_norm\n");
    for (id, p) in paths.iter().enumerate() {
        for k in 0..p.points.len() {
            let _ = writeln!(
                s,
                "{id},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.arclength[k], p.points[k][0], p.points[k][1], p.grad_norm_along[k]
            );
        }
    }
    s
}

/// Level curves in the same polyline format, with `|grad u|` sampled from
/// `u`.
pub fn curves_csv(u: &ScalarField, curves: &[Vec<Point>]) -> String {
    let probe = FieldProbe::new(u, 0.0);
    let paths: Vec<StreamlinePath> = curves
        .iter()
        .map(|c| {
            let mut s = 0.0;
            let mut arclength = Vec::with_capacity(c.len());
            for (k, p) in c.iter().enumerate() {
                if k > 0 {
                    s += (p[0] - c[k - 1][0]).hypot(p[1] - c[k - 1][1]);
                }
                arclength.push(s);
            }
            StreamlinePath {
                points: c.clone(),
                grad_norm_along: c.iter().map(|&p| norm_at(&probe, p)).collect(),
                arclength,
                truncated: false,
            }
        })
        .collect();
    paths_csv(&paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{sample, ExactSolution};

    fn angle_grid() -> Grid2D {
        Grid2D::square(0.0, 2.0, 257).unwrap()
    }

    #[test]
    fn vertical_streamline_of_linear_field() {
        let g = Grid2D::square(-1.0, 1.0, 33).unwrap();
        let u = ScalarField::from_fn(g, |x| x[1]).unwrap();
        let path = trace_streamline(&u, [0.0, -0.5], 0.01, 10.0).unwrap();
        assert!(!path.truncated);
        let last = path.points[path.points.len() - 1];
        assert!(last[1] > 1.0 - 2.0 * g.h - 0.011 && last[1] <= 1.0 - g.h);
        for (p, gn) in path.points.iter().zip(&path.grad_norm_along) {
            assert!(p[0].abs() < 1e-12);
            assert!((gn - 1.0).abs() < 1e-12);
        }
        for w in path.points.windows(2) {
            assert!((w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) <= 2.0 * 0.01);
        }
    }

    #[test]
    fn angle_streamline_is_a_circle() {
        let g = angle_grid();
        let (u, _, _) = sample(&ExactSolution::angle(), &g).unwrap();
        let start = [1.5 * 0.02f64.cos(), 1.5 * 0.02f64.sin()];
        let path = trace_streamline(&u, start, 1e-3, 2.0).unwrap();
        assert!(path.arclength[path.arclength.len() - 1] > 2.0 - 1e-9);
        for p in &path.points {
            assert!((p[0].hypot(p[1]) - 1.5).abs() < 1e-4, "{p:?}");
        }
        assert!(relative_variation(&path) < 1e-3);
    }

    #[test]
    fn level_sets_of_linear_and_angle() {
        let g = Grid2D::square(-1.0, 1.0, 33).unwrap();
        let u = ScalarField::from_fn(g, |x| x[1]).unwrap();
        let c = trace_level_set(&u, 0.0, [0.3, 0.02], 0.05, 4.0).unwrap();
        assert!(c.iter().all(|p| p[1].abs() < 1e-12));
        assert!(c[0][0] > 0.0 && c[c.len() - 1][0] < 0.0, "ordered along grad_perp u = (-1, 0)");

        let g = Grid2D::square(0.0, 2.0, 129).unwrap();
        let (u, _, _) = sample(&ExactSolution::angle(), &g).unwrap();
        let q = std::f64::consts::FRAC_PI_4;
        let c = trace_level_set(&u, q, [0.8, 0.81], 0.01, 3.0).unwrap();
        for p in &c {
            if p[0].hypot(p[1]) > 0.5 {
                assert!((p[1] - p[0]).abs() / 2f64.sqrt() < 1e-4, "{p:?}");
            }
        }
    }

    #[test]
    fn orthogonality_of_tangents() {
        let g = Grid2D::square(0.0, 2.0, 129).unwrap();
        let (u, _, _) = sample(&ExactSolution::angle(), &g).unwrap();
        let s = trace_streamline(&u, [1.2, 0.3], 1e-2, 0.8).unwrap();
        for w in s.points.windows(3) {
            let t = [w[2][0] - w[0][0], w[2][1] - w[0][1]];
            let lv = u.interpolate(w[1]).unwrap();
            let c = trace_level_set(&u, lv, w[1], 2e-2, 2e-2).unwrap();
            let k = c.len() / 2;
            let l = [c[k + 1][0] - c[k - 1][0], c[k + 1][1] - c[k - 1][1]];
            let cos = (t[0] * l[0] + t[1] * l[1]) / (t[0].hypot(t[1]) * l[0].hypot(l[1]));
            assert!(cos.abs() < 1e-3, "{cos}");
        }
    }

    #[test]
    fn orientation_examples() {
        let g = Grid2D::square(-1.0, 1.0, 41).unwrap();
        let lin = ExactSolution::linear([0.0, 1.0]).unwrap();
        let (u, gn, _) = sample(&lin, &g).unwrap();
        let om = detect_orientation(&u, &gn, 2.0 * g.h).unwrap();
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let x = g.node(i, j);
                if x[0].abs() < 1.0 - 4.0 * g.h && x[1].abs() < 1.0 - 2.0 * g.h {
                    assert_eq!(om.at(i, j), Some(1), "{x:?}");
                }
            }
        }
        assert!(detect_orientation(&u, &gn, g.h).is_err());

        let ar = ExactSolution::aronsson43();
        let (u, gn, _) = sample(&ar, &g).unwrap();
        let r = 2.0 * g.h;
        let om = detect_orientation(&u, &gn, r).unwrap();
        assert_eq!(om.sign_changes(), 0);
        let mut defined = 0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.node(i, j);
                if let Some(w) = om.at(i, j) {
                    defined += 1;
                    assert_eq!(Some(w), ar.omega(x), "{x:?}");
                }
                if x[0].abs() < 1e-12 || x[1].abs() < 1e-12 {
                    assert_eq!(om.at(i, j), None, "{x:?} on an axis");
                }
            }
        }
        assert!(defined > g.n_nodes() / 2, "{defined}");

        // reversal
        let neg = ScalarField::new(g, u.values.iter().map(|v| -v).collect()).unwrap();
        let om2 = detect_orientation(&neg, &gn, r).unwrap();
        for k in 0..g.n_nodes() {
            if om.defined[k] && om2.defined[k] {
                assert_eq!(om.omega[k], -om2.omega[k]);
            }
        }
    }

    #[test]
    fn angle_orientation_is_constant() {
        let g = Grid2D::square(0.0, 2.0, 65).unwrap();
        let (u, gn, _) = sample(&ExactSolution::angle(), &g).unwrap();
        let om = detect_orientation(&u, &gn, 2.0 * g.h).unwrap();
        let mut n = 0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.node(i, j);
                let r = x[0].hypot(x[1]);
                if r > 0.6 && r < 1.9 && x[0] > 0.1 && x[1] > 0.1 {
                    assert_eq!(om.at(i, j), Some(1), "{x:?}");
                    n += 1;
                }
            }
        }
        assert!(n > 100);
    }

    #[test]
    fn level_family_thresholds() {
        let g = Grid2D::square(-1.0, 1.0, 65).unwrap();
        let u = ScalarField::from_fn(g, |x| x[1] + 0.01 * (x[0] * 2.0).sin()).unwrap();
        let ts: Vec<f64> = (0..11).map(|k| -0.5 + 0.1 * k as f64).collect();
        let all = build_level_family(&u, |_| 1.0, &ts, 0.05, 0.01).unwrap();
        let none = build_level_family(&u, |_| -1.0, &ts, 0.05, 0.01).unwrap();
        let mut slab = 0;
        for cj in 0..g.ncy() {
            for ci in 0..g.ncx() {
                let x = g.cell_center(ci, cj);
                if x[1].abs() < 0.45 {
                    assert!(all.m_mask.get(ci, cj));
                    slab += 1;
                }
                assert!(!none.m_mask.get(ci, cj) || x[0] < -1.0 + g.h);
            }
        }
        assert!(slab > 0);
        for l in &all.lipschitz {
            assert!(*l <= 0.05 / (1.0f64 - 0.05 * 0.05).sqrt());
        }

        let lin = ScalarField::from_fn(g, |x| x[1]).unwrap();
        let f = |t: f64| 0.3 * t.sin() + 0.2;
        let fam = build_level_family(&lin, f, &ts, 0.05, 0.01).unwrap();
        let mut wrong = 0;
        for cj in 0..g.ncy() {
            for ci in 0..g.ncx() {
                let x = g.cell_center(ci, cj);
                if x[1].abs() > 0.5 - g.h {
                    continue;
                }
                let want = x[0] <= f(x[1]);
                if fam.m_mask.get(ci, cj) != want && (x[0] - f(x[1])).abs() > g.h {
                    wrong += 1;
                }
            }
        }
        assert_eq!(wrong, 0);

        let bent = ScalarField::from_fn(g, |x| x[1] + 0.2 * x[0] * x[0]).unwrap();
        assert!(matches!(build_level_family(&bent, |_| 1.0, &ts, 0.05, 0.01), Err(Error::PinchViolated { .. })));
    }

    #[test]
    fn polyline_csv() {
        let g = Grid2D::square(-1.0, 1.0, 17).unwrap();
        let u = ScalarField::from_fn(g, |x| x[1]).unwrap();
        let p = trace_streamline(&u, [0.0, 0.0], 0.1, 0.3).unwrap();
        let csv = paths_csv(&[p.clone(), p]);
        assert!(csv.starts_with("path_id,s,x,y,grad_norm\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
    }

    #[test]
    fn hausdorff_of_parallel_segments() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, 0.1], [0.5, 0.1], [1.0, 0.1]];
        assert!((hausdorff(&a, &b) - 0.1).abs() < 1e-15);
    }
}
