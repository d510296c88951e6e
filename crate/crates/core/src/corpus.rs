//! Closed-form infinity-harmonic functions used as oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Point, ScalarField};
use crate::solver::DirichletProblem;
use crate::streamlines::OrientationField;

pub type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn mat_t_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[1][0] * v[1], m[0][1] * v[0] + m[1][1] * v[1]]
}

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Region on which a member is an exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    Rectangle { lo: Point, hi: Point },
    Sector { r_min: f64, r_max: f64, theta_min: f64, theta_max: f64 },
    /// Preimage of `base` under `x -> r R x + x0`.
    Mapped { base: Box<Domain>, r: f64, rotation: Mat2, x0: Point },
}

impl Domain {
    pub fn contains(&self, x: Point) -> bool {
        const TOL: f64 = 1e-12;
        match self {
            Domain::Rectangle { lo, hi } => {
                x[0] >= lo[0] - TOL && x[0] <= hi[0] + TOL && x[1] >= lo[1] - TOL && x[1] <= hi[1] + TOL
            }
            Domain::Sector { r_min, r_max, theta_min, theta_max } => {
                let r = x[0].hypot(x[1]);
                let t = x[1].atan2(x[0]);
                r >= r_min - TOL && r <= r_max + TOL && t >= theta_min - TOL && t <= theta_max + TOL
            }
            Domain::Mapped { base, r, rotation, x0 } => base.contains(forward(*r, rotation, *x0, x)),
        }
    }

    /// Nearest point of the closure, measured in the base coordinates for
    /// mapped domains.
    pub fn project(&self, x: Point) -> Point {
        match self {
            Domain::Rectangle { lo, hi } => [x[0].clamp(lo[0], hi[0]), x[1].clamp(lo[1], hi[1])],
            Domain::Sector { r_min, r_max, theta_min, theta_max } => {
                let r = x[0].hypot(x[1]).clamp(*r_min, *r_max);
                let t = if x[0] == 0.0 && x[1] == 0.0 { 0.5 * (theta_min + theta_max) } else { x[1].atan2(x[0]) };
                let t = t.clamp(*theta_min, *theta_max);
                [r * t.cos(), r * t.sin()]
            }
            Domain::Mapped { base, r, rotation, x0 } => {
                let y = base.project(forward(*r, rotation, *x0, x));
                backward(*r, rotation, *x0, y)
            }
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Domain::Rectangle { lo, hi } => (*lo, *hi),
            Domain::Sector { r_min, r_max, theta_min, theta_max } => {
                let mut pts = vec![];
                for r in [*r_min, *r_max] {
                    for t in [*theta_min, *theta_max] {
                        pts.push([r * t.cos(), r * t.sin()]);
                    }
                }
                for k in -4..=4 {
                    let t = k as f64 * std::f64::consts::FRAC_PI_2;
                    if t > *theta_min && t < *theta_max {
                        pts.push([r_max * t.cos(), r_max * t.sin()]);
                    }
                }
                bbox(&pts)
            }
            Domain::Mapped { base, r, rotation, x0 } => {
                let (lo, hi) = base.bounding_box();
                let corners = [lo, [hi[0], lo[1]], [lo[0], hi[1]], hi];
                let pts: Vec<Point> = corners.iter().map(|&y| backward(*r, rotation, *x0, y)).collect();
                bbox(&pts)
            }
        }
    }
}

fn bbox(pts: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn forward(r: f64, rot: &Mat2, x0: Point, x: Point) -> Point {
    let y = mat_vec(rot, x);
    [r * y[0] + x0[0], r * y[1] + x0[1]]
}

fn backward(r: f64, rot: &Mat2, x0: Point, y: Point) -> Point {
    mat_t_vec(rot, [(y[0] - x0[0]) / r, (y[1] - x0[1]) / r])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    Linear { xi: [f64; 2] },
    Aronsson43,
    Angle,
    /// `a * base(r R x + x0)` with `R` orthogonal.
    Rescaled { base: Box<ExactSolution>, a: f64, r: f64, rotation: Mat2, x0: Point },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub name: String,
    pub member: Member,
    pub domain: Domain,
    pub smoothness: String,
}

impl ExactSolution {
    pub fn linear(xi: [f64; 2]) -> Result<Self> {
        if !(xi[0].is_finite() && xi[1].is_finite()) || xi == [0.0, 0.0] {
            return Err(Error::invalid(format!("xi must be finite and nonzero, got {xi:?}")));
        }
        Ok(Self {
            name: "linear".into(),
            member: Member::Linear { xi },
            domain: Domain::Rectangle { lo: [-1.0, -1.0], hi: [1.0, 1.0] },
            smoothness: "analytic; constant gradient".into(),
        })
    }

    pub fn aronsson43() -> Self {
        Self {
            name: "aronsson43".into(),
            member: Member::Aronsson43,
            domain: Domain::Rectangle { lo: [-1.0, -1.0], hi: [1.0, 1.0] },
            smoothness: "C^{1,1/3} on the axes, analytic in each open quadrant; gradient vanishes only at the origin".into(),
        }
    }

    pub fn angle() -> Self {
        Self {
            name: "angle".into(),
            member: Member::Angle,
            domain: Domain::Sector { r_min: 0.5, r_max: 2.0, theta_min: 0.0, theta_max: std::f64::consts::FRAC_PI_2 },
            smoothness: "analytic away from the origin; |grad u| = 1/r".into(),
        }
    }

    /// `x -> a u(r R x + x0)`; rejects non-orthogonal `R`, `a = 0` and `r <= 0`.
    pub fn rescaled(&self, a: f64, r: f64, rotation: Mat2, x0: Point) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !(r > 0.0) || !r.is_finite() {
            return Err(Error::invalid(format!("rescaling needs a != 0 and r > 0, got a = {a}, r = {r}")));
        }
        let rtr = [
            [
                rotation[0][0] * rotation[0][0] + rotation[1][0] * rotation[1][0],
                rotation[0][0] * rotation[0][1] + rotation[1][0] * rotation[1][1],
            ],
            [
                rotation[0][1] * rotation[0][0] + rotation[1][1] * rotation[1][0],
                rotation[0][1] * rotation[0][1] + rotation[1][1] * rotation[1][1],
            ],
        ];
        let off = (rtr[0][0] - 1.0).abs() + (rtr[1][1] - 1.0).abs() + rtr[0][1].abs() + rtr[1][0].abs();
        if off > 1e-12 {
            return Err(Error::invalid(format!("matrix {rotation:?} is not orthogonal")));
        }
        Ok(Self {
            name: format!("{}-rescaled", self.name),
            member: Member::Rescaled { base: Box::new(self.clone()), a, r, rotation, x0 },
            domain: Domain::Mapped { base: Box::new(self.domain.clone()), r, rotation, x0 },
            smoothness: self.smoothness.clone(),
        })
    }

    /// Rescaling about `x0` with `grad u(0) = e2`, reflected when needed so
    /// that the orientation at `x0` is `-1`.
    pub fn normalized_at(&self, x0: Point, r: f64) -> Result<Self> {
        let g = self.gradient(x0);
        let n = g[0].hypot(g[1]);
        if !(n > 0.0) {
            return Err(Error::invalid(format!("gradient vanishes at {x0:?}")));
        }
        // R^T g / |g| = e2 with R a rotation: columns of R are (g_perp', g)/|g|
        let c = [g[1] / n, -g[0] / n];
        let mut rot = [[c[0], g[0] / n], [c[1], g[1] / n]];
        let base_omega = self.omega(x0).unwrap_or(1) as f64;
        if base_omega * det(&rot) > 0.0 {
            // reflect x1 -> -x1, keeping the second column
            rot = [[-rot[0][0], rot[0][1]], [-rot[1][0], rot[1][1]]];
        }
        self.rescaled(1.0 / (r * n), r, rot, x0)
    }

    pub fn members(xi: [f64; 2]) -> Result<Vec<Self>> {
        Ok(vec![Self::linear(xi)?, Self::aronsson43(), Self::angle()])
    }

    pub fn value(&self, x: Point) -> f64 {
        match &self.member {
            Member::Linear { xi } => xi[0] * x[0] + xi[1] * x[1],
            Member::Aronsson43 => x[0].abs().powf(4.0 / 3.0) - x[1].abs().powf(4.0 / 3.0),
            Member::Angle => x[1].atan2(x[0]),
            Member::Rescaled { base, a, r, rotation, x0 } => a * base.value(forward(*r, rotation, *x0, x)),
        }
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        match &self.member {
            Member::Linear { xi } => *xi,
            Member::Aronsson43 => [
                4.0 / 3.0 * x[0].signum() * x[0].abs().cbrt() * (x[0] != 0.0) as u8 as f64,
                -4.0 / 3.0 * x[1].signum() * x[1].abs().cbrt() * (x[1] != 0.0) as u8 as f64,
            ],
            Member::Angle => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                [-x[1] / r2, x[0] / r2]
            }
            Member::Rescaled { base, a, r, rotation, x0 } => {
                let g = mat_t_vec(rotation, base.gradient(forward(*r, rotation, *x0, x)));
                [a * r * g[0], a * r * g[1]]
            }
        }
    }

    /// Second derivatives where the member is C^2; `None` on the axes of the
    /// Aronsson example and at the origin for the angle.
    pub fn hessian(&self, x: Point) -> Option<Mat2> {
        match &self.member {
            Member::Linear { .. } => Some([[0.0; 2]; 2]),
            Member::Aronsson43 => {
                if x[0] == 0.0 || x[1] == 0.0 {
                    return None;
                }
                let a = 4.0 / 9.0 * x[0].abs().powf(-2.0 / 3.0);
                let b = -4.0 / 9.0 * x[1].abs().powf(-2.0 / 3.0);
                Some([[a, 0.0], [0.0, b]])
            }
            Member::Angle => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 == 0.0 {
                    return None;
                }
                let r4 = r2 * r2;
                let d = (x[1] * x[1] - x[0] * x[0]) / r4;
                Some([[2.0 * x[0] * x[1] / r4, d], [d, -2.0 * x[0] * x[1] / r4]])
            }
            Member::Rescaled { base, a, r, rotation, x0 } => {
                let h = base.hessian(forward(*r, rotation, *x0, x))?;
                // a r^2 R^T H R
                let mut out = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let mut s = 0.0;
                        for k in 0..2 {
                            for l in 0..2 {
                                s += rotation[k][i] * h[k][l] * rotation[l][j];
                            }
                        }
                        out[i][j] = a * r * r * s;
                    }
                }
                Some(out)
            }
        }
    }

    pub fn grad_norm(&self, x: Point) -> f64 {
        let g = self.gradient(x);
        g[0].hypot(g[1])
    }

    pub fn exact_w(&self, x: Point) -> f64 {
        -self.grad_norm(x).ln()
    }

    /// Orientation of the member at `x`; `+1` for the linear member, whose
    /// orientation is not unique.
    pub fn omega(&self, x: Point) -> Option<i8> {
        match &self.member {
            Member::Linear { .. } => Some(1),
            Member::Aronsson43 => {
                let s = x[0] * x[1];
                if s > 0.0 {
                    Some(1)
                } else if s < 0.0 {
                    Some(-1)
                } else {
                    None
                }
            }
            Member::Angle => (x[0] != 0.0 || x[1] != 0.0).then_some(1),
            Member::Rescaled { base, a, r, rotation, x0 } => {
                let s = if a * det(rotation) > 0.0 { 1 } else { -1 };
                base.omega(forward(*r, rotation, *x0, x)).map(|w| w * s)
            }
        }
    }

    /// `grad u . grad |grad u|^2 = 2 grad u^T H grad u` where C^2.
    pub fn aronsson_residual(&self, x: Point) -> Option<f64> {
        let h = self.hessian(x)?;
        let g = self.gradient(x);
        let hg = mat_vec(&h, g);
        Some(2.0 * (g[0] * hg[0] + g[1] * hg[1]))
    }
}

/// Nodal values of `u` and `|grad u|` plus the orientation. Nodes outside the
/// exact domain (possible for the sector inside its bounding box) take the
/// values at the nearest domain point and are left without orientation.
pub fn sample(sol: &ExactSolution, grid: &Grid2D) -> Result<(ScalarField, ScalarField, OrientationField)> {
    let (lo, hi) = sol.domain.bounding_box();
    let tol = 1e-9 * (1.0 + grid.h);
    if grid.x0 < lo[0] - tol || grid.y0 < lo[1] - tol || grid.x_max() > hi[0] + tol || grid.y_max() > hi[1] + tol {
        return Err(Error::invalid(format!(
            "grid [{}, {}] x [{}, {}] leaves the domain of {} (box {lo:?} to {hi:?})",
            grid.x0,
            grid.x_max(),
            grid.y0,
            grid.y_max(),
            sol.name
        )));
    }
    let n = grid.n_nodes();
    let (mut u, mut g) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut omega, mut defined) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let x = grid.node(i, j);
            let inside = sol.domain.contains(x);
            let y = if inside { x } else { sol.domain.project(x) };
            u.push(sol.value(y));
            g.push(sol.grad_norm(y));
            let w = if inside { sol.omega(x) } else { None };
            omega.push(w.unwrap_or(0));
            defined.push(w.is_some());
        }
    }
    Ok((
        ScalarField::new(*grid, u)?,
        ScalarField::new(*grid, g)?,
        OrientationField { grid: *grid, omega, defined },
    ))
}

/// Level slab of the construction: `U = {a < u - sigma x2 < b}` inside the
/// grid with `a, b` taken at `(0, -3/4)` and `(0, 3/4)`.
#[derive(Debug, Clone)]
pub struct Prop1Problem {
    pub problem: DirichletProblem,
    pub delta: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    /// Lipschitz bound `delta / sqrt((1 - sigma)^2 - delta^2)` of the slab
    /// boundaries.
    pub lipschitz_bound: f64,
}

pub fn check_delta_sigma(delta: f64, sigma: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0 / 16.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1/16), got {delta}")));
    }
    if !(sigma >= 0.5 && sigma < 1.0 - 8.0 * delta) {
        return Err(Error::invalid(format!("sigma must lie in [1/2, 1 - 8 delta) = [0.5, {}), got {sigma}", 1.0 - 8.0 * delta)));
    }
    Ok(())
}

pub fn make_prop1_problem(sol: &ExactSolution, delta: f64, sigma: f64, grid: &Grid2D) -> Result<Prop1Problem> {
    check_delta_sigma(delta, sigma)?;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let x = grid.node(i, j);
            if !sol.domain.contains(x) {
                return Err(Error::invalid(format!("node ({i}, {j}) at {x:?} lies outside the domain of {}", sol.name)));
            }
            let gr = sol.gradient(x);
            let dev = gr[0].hypot(gr[1] - 1.0);
            if dev > delta {
                return Err(Error::PinchViolated { i, j, value: dev, delta });
            }
        }
    }
    let tilde = |x: Point| sol.value(x) - sigma * x[1];
    let (a, b) = (tilde([0.0, -0.75]), tilde([0.0, 0.75]));
    let problem = DirichletProblem::masked(*grid, |x| sol.value(x), |x| {
        let t = tilde(x);
        t > a && t < b
    })?;
    Ok(Prop1Problem {
        problem,
        delta,
        sigma,
        a,
        b,
        lipschitz_bound: delta / ((1.0 - sigma).powi(2) - delta * delta).sqrt(),
    })
}

pub fn identity() -> Mat2 {
    IDENTITY
}
