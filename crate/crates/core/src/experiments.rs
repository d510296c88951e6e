//! End-to-end experiments: p-sweeps of solve, conjugate and transform,
//! the Proposition-1 checks, the curve brackets, and the seminorm
//! dichotomy for the gradient norm.

use crate::conjugate::{conjugate_with, log_transform, sublattice_in, ConjugateOptions, ConjugatePair, FluxRule, TransformedField};
use crate::corpus::{make_prop1_problem, ExactSolution};
use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, integrate_cells, CellMask, Grid2D, Point, ScalarField, TestFunction, VectorField};
use crate::solver::{interior_sup_gradient_check, solve, DirichletProblem, SolveParams, SolveResult, StageReport};
use crate::streamlines::{hausdorff, relative_variation, trace_level_set, trace_streamline_through, StreamlinePath};
use crate::verifier::{bump_competitors, certify_on, covering_tests, huisken_ilmanen_check, ImcfCertificate, Tolerances};
use serde::{Deserialize, Serialize};

/// `slack(p) = SLACK_C / p`. The linear member needs `p max w_p = p log 2 /
/// (p - 1) <= 0.8` on `Q_{1/4}` for `gamma = 1/2`.
pub const SLACK_C: f64 = 1.0;
/// Curl bound for conjugates of converged solves.
pub const SOLVED_CURL_BOUND: f64 = 1e-6;
pub const Q_QUARTER: (Point, Point) = ([-0.25, -0.25], [0.25, 0.25]);
pub const INTERIOR_RHO: f64 = 0.1;
pub const INTERIOR_C: f64 = 100.0;

pub fn slack(p: f64) -> f64 {
    SLACK_C / p
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// A p-sweep: one warm-started solve per exponent, each followed by the
/// conjugate on the node box `conj_box`.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub problem: DirichletProblem,
    pub p_values: Vec<f64>,
    pub conj_box: (Point, Point),
    pub gamma: f64,
    pub anchor: Point,
}

#[derive(Debug, Clone)]
pub struct SweepStage {
    pub result: SolveResult,
    pub pair: ConjugatePair,
}

pub fn check_p_values(ps: &[f64]) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::invalid("empty p sweep"));
    }
    for w in ps.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid(format!("p values must increase strictly, got {} after {}", w[1], w[0])));
        }
    }
    if !(ps[0] >= 2.0) || !ps[ps.len() - 1].is_finite() {
        return Err(Error::invalid(format!("p values must be finite and >= 2, got {ps:?}")));
    }
    Ok(())
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepStage>> {
    check_p_values(&spec.p_values)?;
    let sub = sublattice_in(&spec.problem.grid, spec.conj_box.0, spec.conj_box.1)?;
    let mut out: Vec<SweepStage> = Vec::with_capacity(spec.p_values.len());
    for &p in &spec.p_values {
        let (problem, params) = match out.last() {
            None => (spec.problem.clone(), SolveParams::doubling(p, 0.0).polished()),
            Some(prev) => (
                spec.problem.clone().with_initial_guess(&prev.result.u)?,
                SolveParams::schedule(&[p], 0.0).polished(),
            ),
        };
        let result = solve(&problem, &params)?;
        if !result.converged {
            return Err(Error::invalid(format!("solve at p = {p} did not converge (residual {:.3e})", result.residual)));
        }
        let u = result.u.restrict(&sub)?;
        let opts = ConjugateOptions { rule: FluxRule::Solver { epsilon: result.epsilon }, curl_bound: SOLVED_CURL_BOUND };
        let pair = conjugate_with(&u, result.p, spec.gamma, spec.anchor, &opts)?;
        out.push(SweepStage { result, pair });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub pass: bool,
    pub sup_f_norm: f64,
    pub alignment_residual_l1: f64,
    pub max_weak_div: f64,
    pub failures: usize,
}

impl From<&ImcfCertificate> for CertificateSummary {
    fn from(c: &ImcfCertificate) -> Self {
        Self {
            pass: c.verdict.pass,
            sup_f_norm: c.sup_f_norm,
            alignment_residual_l1: c.alignment_residual_l1,
            max_weak_div: c.max_weak_div(),
            failures: c.verdict.failures.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub p: f64,
    pub energy: f64,
    pub newton_iterations: usize,
    /// Largest cell `|grad u_p|` at distance `> INTERIOR_RHO` from the boundary.
    pub interior_sup_grad: f64,
    pub interior_bound: f64,
    /// `|| w_p - w_ref ||_{L1(Q_{1/4})}`.
    pub l1_to_ref: f64,
    /// `max (w_p - w_ref)` on `Q_{1/4}`.
    pub max_excess: f64,
    pub slack: f64,
    pub max_abs_w: f64,
    pub certificate: CertificateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub p_values: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    /// `|| w_{p_k+1} - w_{p_k} ||_{L1(Q_{1/4})}`.
    pub consecutive_l1: Vec<f64>,
    pub slope_l1_to_ref: Option<f64>,
}

impl SweepReport {
    pub fn validate(&self) -> Result<()> {
        check_p_values(&self.p_values)?;
        let finite = self.entries.iter().all(|e| {
            [e.energy, e.interior_sup_grad, e.interior_bound, e.l1_to_ref, e.max_excess, e.max_abs_w].iter().all(|v| v.is_finite())
        }) && self.consecutive_l1.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("sweep report holds a non-finite norm"));
        }
        Ok(())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("p,energy,newton_iterations,interior_sup_grad,interior_bound,l1_to_ref,max_excess,slack,max_abs_w,cert_pass,sup_F,alignment_L1,max_weak_div\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e}\n",
                e.p,
                e.energy,
                e.newton_iterations,
                e.interior_sup_grad,
                e.interior_bound,
                e.l1_to_ref,
                e.max_excess,
                e.slack,
                e.max_abs_w,
                e.certificate.pass,
                e.certificate.sup_f_norm,
                e.certificate.alignment_residual_l1,
                e.certificate.max_weak_div
            ));
        }
        s
    }
}

/// Tests for a region of interest: bumps of radius `max(2h, 1/16)` on a
/// lattice of the same spacing.
pub fn roi_tests(grid: &Grid2D, domain: &CellMask) -> Result<Vec<TestFunction>> {
    let r = (2.0 * grid.h).max(0.0625);
    covering_tests(grid, domain, r, r)
}

fn abs_diff_l1(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid.ensure_matches(&b.grid, "L1 distance")?;
    let d = ScalarField::new(a.grid, a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).collect())?;
    integrate(&d, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Params {
    pub n: usize,
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub p_values: Vec<f64>,
    pub seed: u64,
    pub competitors: usize,
    pub tolerances: Option<Tolerances>,
}

impl Default for Prop1Params {
    fn default() -> Self {
        Self {
            n: 65,
            delta: 0.05,
            sigma: 0.5,
            gamma: 0.5,
            p_values: vec![8.0, 16.0, 32.0, 64.0],
            seed: 0,
            competitors: 50,
            tolerances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub member: String,
    pub params: Prop1Params,
    pub sweep: SweepReport,
    /// `max |u_p - u|` over the grid for every p.
    pub max_solution_error: Vec<f64>,
    /// Minimum of the cell value of `du_p/dx2` per p.
    pub vertical_monotonicity: Vec<f64>,
    /// Certificate of `w = w_{p_max}`, `F = e^w grad_perp u` on `Q_{1/4}`.
    pub certificate: ImcfCertificate,
    /// Certificate of the finite-p pair `(w_{p_max}, F_{p_max})`.
    pub finite_p_certificate: ImcfCertificate,
    pub checks: Vec<Check>,
    /// Continuation stages of each solve, by p.
    #[serde(skip)]
    pub solver_stages: Vec<(f64, Vec<StageReport>)>,
    /// `u_pmax` and its transform for field dumps.
    #[serde(skip)]
    pub final_fields: Option<(ScalarField, TransformedField)>,
}

impl Prop1Report {
    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

/// `e^w grad_perp u` per cell with `grad_perp u` from the exact member.
pub fn limit_flux(sol: &ExactSolution, w: &ScalarField) -> Result<VectorField> {
    let g = w.grid;
    let mut values = Vec::with_capacity(g.n_cells());
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let d = sol.gradient(g.cell_center(ci, cj));
            let m = w.cell_mean(ci, cj).exp();
            values.push([-m * d[1], m * d[0]]);
        }
    }
    VectorField::new(g, values)
}

/// Slab problem on `Q_1` with the conjugate on `[-1, 1] x [-1/2, 1/2]`,
/// normalised at `(-3/4, 0)`.
pub fn prop1_sweep_spec(sol: &ExactSolution, params: &Prop1Params) -> Result<SweepSpec> {
    let grid = Grid2D::square(-1.0, 1.0, params.n)?;
    let p1 = make_prop1_problem(sol, params.delta, params.sigma, &grid)?;
    if !(params.gamma > 0.0 && params.gamma < 1.0 - params.delta) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1 - delta), got {}", params.gamma)));
    }
    Ok(SweepSpec {
        problem: p1.problem,
        p_values: params.p_values.clone(),
        conj_box: ([-1.0, -0.5], [1.0, 0.5]),
        gamma: params.gamma,
        anchor: [-0.75, 0.0],
    })
}

pub fn run_prop1(sol: &ExactSolution, params: &Prop1Params) -> Result<Prop1Report> {
    let spec = prop1_sweep_spec(sol, params)?;
    let grid = spec.problem.grid;
    let stages = run_sweep(&spec)?;

    let mut entries = Vec::new();
    let mut ws: Vec<ScalarField> = Vec::new();
    let mut transforms: Vec<TransformedField> = Vec::new();
    let mut max_err = Vec::new();
    let mut mono = Vec::new();
    for st in &stages {
        let t = log_transform(&st.pair, Some(Q_QUARTER))?;
        let roi = t.w.grid;
        let w_ref = ScalarField::from_fn(roi, |x| sol.exact_w(x))?;
        let l1 = abs_diff_l1(&t.w, &w_ref)?;
        let excess = t.w.values.iter().zip(&w_ref.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        let tests = roi_tests(&roi, &CellMask::all(&roi))?;
        let tol = params.tolerances.unwrap_or_else(|| Tolerances::for_spacing(roi.h));
        let cert = certify_on(&t.w, &t.f, &tests, tol, None)?;
        let (lhs, rhs) = interior_sup_gradient_check(&st.result, INTERIOR_RHO, st.result.p, INTERIOR_C)?;
        let u = &st.result.u;
        max_err.push(
            (0..grid.n_nodes())
                .map(|k| (u.values[k] - sol.value(grid.node(k % grid.nx, k / grid.nx))).abs())
                .fold(0.0, f64::max),
        );
        mono.push(crate::solver::vertical_monotonicity_check(&st.result, None));
        entries.push(SweepEntry {
            p: st.result.p.p,
            energy: st.result.energy,
            newton_iterations: st.result.iterations,
            interior_sup_grad: lhs,
            interior_bound: rhs,
            l1_to_ref: l1,
            max_excess: excess,
            slack: slack(st.result.p.p),
            max_abs_w: t.w.max_abs(),
            certificate: CertificateSummary::from(&cert),
        });
        ws.push(t.w.clone());
        transforms.push(t);
    }
    let consecutive_l1 = ws.windows(2).map(|w| abs_diff_l1(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
    let sweep = SweepReport {
        p_values: params.p_values.clone(),
        slope_l1_to_ref: loglog_slope(&params.p_values, &entries.iter().map(|e| e.l1_to_ref).collect::<Vec<_>>()),
        entries,
        consecutive_l1,
    };
    sweep.validate()?;

    let last = transforms.last().expect("non-empty sweep");
    let roi = last.w.grid;
    let tests = roi_tests(&roi, &CellMask::all(&roi))?;
    let tol = params.tolerances.unwrap_or_else(|| Tolerances::for_spacing(roi.h));
    let k = CellMask::from_centers(&roi, |x| x[0].abs() < 0.2 && x[1].abs() < 0.2);
    let comps = bump_competitors(&last.w, &k, params.competitors, params.seed)?;
    let pairs = huisken_ilmanen_check(&last.w, &comps, &k)?;
    let f_lim = limit_flux(sol, &last.w)?;
    let certificate = certify_on(&last.w, &f_lim, &tests, tol, None)?.with_huisken_ilmanen(pairs.clone());
    let finite_p_certificate = certify_on(&last.w, &last.f, &tests, tol, None)?.with_huisken_ilmanen(pairs);

    let mut checks = Vec::new();
    for e in &sweep.entries {
        checks.push(Check::new(
            &format!("one_sided_bound_p{}", e.p),
            e.max_excess <= e.slack,
            format!("max (w_p - w_ref) = {:.4e}, slack {:.4e}", e.max_excess, e.slack),
        ));
        checks.push(Check::new(
            &format!("interior_gradient_bound_p{}", e.p),
            e.interior_sup_grad <= e.interior_bound,
            format!("{:.6} <= {:.6}", e.interior_sup_grad, e.interior_bound),
        ));
    }
    let l1: Vec<f64> = sweep.entries.iter().map(|e| e.l1_to_ref).collect();
    checks.push(Check::new("l1_to_reference_decreasing", l1.windows(2).all(|w| w[1] < w[0]), format!("{l1:?}")));
    checks.push(Check::new(
        "consecutive_l1_decreasing",
        sweep.consecutive_l1.windows(2).all(|w| w[1] < w[0]),
        format!("{:?}", sweep.consecutive_l1),
    ));
    checks.push(Check::new(
        "vertical_monotonicity",
        mono.iter().all(|m| *m >= params.sigma - 1e-2),
        format!("min du/dx2 per p {mono:?}, sigma {}", params.sigma),
    ));
    checks.push(Check::new("limit_certificate", certificate.verdict.pass, certificate.verdict.failures.join("; ")));
    Ok(Prop1Report {
        member: sol.name.clone(),
        params: params.clone(),
        sweep,
        max_solution_error: max_err,
        vertical_monotonicity: mono,
        certificate,
        finite_p_certificate,
        checks,
        solver_stages: stages.iter().map(|st| (st.result.p.p, st.result.stages.clone())).collect(),
        final_fields: Some((stages.last().expect("non-empty sweep").result.u.clone(), last.clone())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSweepParams {
    /// Nodes per side of the grid on `[0, 2]^2`.
    pub n: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub gamma: f64,
    /// Radius of the anchor on the corner of the conjugate box.
    pub anchor_radius: f64,
    /// Distance from the boundary, in cells, of the interior cells.
    pub margin_cells: f64,
    pub p_values: Vec<f64>,
}

impl Default for AngleSweepParams {
    fn default() -> Self {
        Self { n: 129, r_min: 1.0, r_max: 2.0, gamma: 0.5, anchor_radius: 1.93, margin_cells: 4.0, p_values: vec![8.0, 16.0, 32.0, 64.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSweepReport {
    pub params: AngleSweepParams,
    /// `|| w_p - log r - c_p ||_{L1}` with `c_p` the median offset.
    pub l1: Vec<f64>,
    pub offsets: Vec<f64>,
    pub slope: Option<f64>,
    pub interior_cells: usize,
    pub interior_sup_grad: Vec<(f64, f64)>,
    pub curl_residuals: Vec<f64>,
}

/// The angle member `u = -theta` on the sector `r_min < r < r_max` of the
/// first quadrant. The sign makes the conjugate `r^(2-p)/(p-2) + shift`
/// positive.
pub fn angle_sector_problem(params: &AngleSweepParams) -> Result<DirichletProblem> {
    let g = Grid2D::square(0.0, 2.0, params.n)?;
    let (a, b) = (params.r_min, params.r_max);
    DirichletProblem::masked(g, |x| -x[1].atan2(x[0]), move |x| {
        let r = x[0].hypot(x[1]);
        r > a && r < b
    })
}

/// Largest node box `[r_min, x1] x [0, x2]` with the far corner inside the
/// sector, `x1 / x2` fixed at 4 / 3.
fn sector_box(params: &AngleSweepParams, h: f64) -> (Point, Point) {
    let t = params.r_max - 1.5 * h;
    let x1 = (0.8 * t / h).floor() * h;
    let x2 = (0.6 * t / h).floor() * h;
    ([params.r_min, 0.0], [x1, x2])
}

pub fn angle_sweep_spec(params: &AngleSweepParams) -> Result<SweepSpec> {
    let problem = angle_sector_problem(params)?;
    let h = problem.grid.h;
    let (lo, hi) = sector_box(params, h);
    let ra = params.anchor_radius;
    let ax = hi[0] - 2.0 * h;
    if !(ra > ax && ra < params.r_max) {
        return Err(Error::invalid(format!("anchor radius {ra} does not reach the conjugate box")));
    }
    let anchor = [ax, (ra * ra - ax * ax).sqrt()];
    Ok(SweepSpec { problem, p_values: params.p_values.clone(), conj_box: (lo, hi), gamma: params.gamma, anchor })
}

pub fn run_angle_sweep(params: &AngleSweepParams) -> Result<AngleSweepReport> {
    let spec = angle_sweep_spec(params)?;
    let h = spec.problem.grid.h;
    let stages = run_sweep(&spec)?;
    let margin = params.margin_cells * h;
    let (mut l1, mut offsets, mut sups, mut curls) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut cells = 0;
    for st in &stages {
        let t = log_transform(&st.pair, None)?;
        let g = t.w.grid;
        let (rmin, rmax) = (params.r_min + margin, params.r_max - margin);
        let mask = CellMask::from_centers(&g, |x| {
            let r = x[0].hypot(x[1]);
            r > rmin && r < rmax && x[1] > margin && x[0] > margin
        });
        let mut diffs = Vec::new();
        for cj in 0..g.ncy() {
            for ci in 0..g.ncx() {
                if mask.get(ci, cj) {
                    let c = g.cell_center(ci, cj);
                    diffs.push(t.w.cell_mean(ci, cj) - c[0].hypot(c[1]).ln());
                }
            }
        }
        if diffs.is_empty() {
            return Err(Error::invalid("no interior cells in the conjugate box"));
        }
        let mut sorted = diffs.clone();
        sorted.sort_by(f64::total_cmp);
        let med = sorted[sorted.len() / 2];
        l1.push(diffs.iter().map(|d| (d - med).abs()).sum::<f64>() * g.cell_area());
        offsets.push(med);
        cells = diffs.len();
        sups.push(interior_sup_gradient_check(&st.result, INTERIOR_RHO, st.result.p, INTERIOR_C)?);
        curls.push(st.pair.curl_residual);
    }
    Ok(AngleSweepReport {
        params: params.clone(),
        slope: loglog_slope(&params.p_values, &l1),
        l1,
        offsets,
        interior_cells: cells,
        interior_sup_grad: sups,
        curl_residuals: curls,
    })
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma42Params {
    /// Polyline `lambda`, first point `x`, last point `y`.
    pub curve: Vec<Point>,
    /// Radius of the endpoint disks.
    pub rho: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRow {
    pub p: f64,
    /// `(inf_{B(y)} v_p - sup_{B(x)} v_p)_+^(1/(p-1))`.
    pub inner: f64,
    /// `(sup_{B(y)} v_p - inf_{B(x)} v_p)_+^(1/(p-1))`.
    pub outer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma42Report {
    pub params: Lemma42Params,
    pub length: f64,
    /// `sup |grad u_inf|` along the curve.
    pub upper: f64,
    /// Arclength mean of `lambda'^perp . grad u_inf`.
    pub lower: f64,
    pub rows: Vec<BracketRow>,
    pub checks: Vec<Check>,
}

impl Lemma42Report {
    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

const CURVE_SAMPLES: usize = 64;

/// Length, `sup |grad u|` and the mean normal derivative along a polyline.
pub fn curve_bounds(sol: &ExactSolution, curve: &[Point]) -> Result<(f64, f64, f64)> {
    if curve.len() < 2 || curve.iter().any(|x| !(x[0].is_finite() && x[1].is_finite())) {
        return Err(Error::invalid("curve needs at least two finite points"));
    }
    let (mut len, mut sup, mut flux) = (0.0, 0.0f64, 0.0);
    for seg in curve.windows(2) {
        let d = [seg[1][0] - seg[0][0], seg[1][1] - seg[0][1]];
        let l = d[0].hypot(d[1]);
        if l == 0.0 {
            continue;
        }
        let n = [-d[1] / l, d[0] / l];
        for k in 0..=CURVE_SAMPLES {
            let t = k as f64 / CURVE_SAMPLES as f64;
            sup = sup.max(sol.grad_norm([seg[0][0] + t * d[0], seg[0][1] + t * d[1]]));
        }
        for k in 0..CURVE_SAMPLES {
            let t = (k as f64 + 0.5) / CURVE_SAMPLES as f64;
            let g = sol.gradient([seg[0][0] + t * d[0], seg[0][1] + t * d[1]]);
            flux += (n[0] * g[0] + n[1] * g[1]) * l / CURVE_SAMPLES as f64;
        }
        len += l;
    }
    if len == 0.0 {
        return Err(Error::invalid("curve has zero length"));
    }
    Ok((len, sup, flux / len))
}

/// Values of `v` at the dual nodes within `rho` of `c`, refusing disks that
/// leave the conjugate grid or the solved domain.
fn disk_values(stage: &SweepStage, c: Point, rho: f64) -> Result<Vec<f64>> {
    let v = &stage.pair.v;
    let g = v.grid;
    if c[0] - rho < g.x0 || c[1] - rho < g.y0 || c[0] + rho > g.x_max() || c[1] + rho > g.y_max() {
        return Err(Error::invalid(format!("disk of radius {rho} about {c:?} leaves the conjugate grid")));
    }
    let primal = stage.result.u.grid;
    let active = stage.result.active_cells();
    let mut out = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let x = g.node(i, j);
            if (x[0] - c[0]).hypot(x[1] - c[1]) > rho {
                continue;
            }
            match primal.locate(x) {
                Some((ci, cj, _, _)) if active.get(ci, cj) => out.push(v.at(i, j)),
                _ => return Err(Error::invalid(format!("disk about {c:?} leaves the solved domain at {x:?}"))),
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("disk of radius {rho} about {c:?} holds no grid node")));
    }
    Ok(out)
}

/// `((a - b) e^s)_+^(1/(p-1))` without forming `e^s`.
fn root_of_difference(a: f64, b: f64, log_scale: f64, p: f64) -> f64 {
    if a > b {
        (((a - b).ln() + log_scale) / (p - 1.0)).exp()
    } else {
        0.0
    }
}

pub fn run_lemma42(sol: &ExactSolution, spec: &SweepSpec, params: &Lemma42Params) -> Result<Lemma42Report> {
    if !(params.rho > 0.0) || !(params.slack >= 0.0) {
        return Err(Error::invalid(format!("need rho > 0 and slack >= 0, got {} and {}", params.rho, params.slack)));
    }
    let (length, upper, lower) = curve_bounds(sol, &params.curve)?;
    let x = params.curve[0];
    let y = *params.curve.last().expect("checked length");
    let stages = run_sweep(spec)?;
    let mut rows = Vec::new();
    for st in &stages {
        let bx = disk_values(st, x, params.rho)?;
        let by = disk_values(st, y, params.rho)?;
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = st.result.p.p;
        rows.push(BracketRow {
            p,
            inner: root_of_difference(min(&by), max(&bx), st.pair.log_scale, p),
            outer: root_of_difference(max(&by), min(&bx), st.pair.log_scale, p),
        });
    }
    let last = rows.last().expect("non-empty sweep");
    let checks = vec![
        Check::new(
            "inner_bracket_below_sup",
            last.inner <= upper + params.slack,
            format!("{:.6} <= {:.6} + {}", last.inner, upper, params.slack),
        ),
        Check::new(
            "outer_bracket_above_mean",
            last.outer >= lower - params.slack,
            format!("{:.6} >= {:.6} - {}", last.outer, lower, params.slack),
        ),
    ];
    Ok(Lemma42Report { params: params.clone(), length, upper, lower, rows, checks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Point,
    pub hi: Point,
}

impl BoxRegion {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) || ![lo[0], lo[1], hi[0], hi[1]].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("empty or non-finite box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: Point) -> bool {
        x[0] > self.lo[0] && x[0] < self.hi[0] && x[1] > self.lo[1] && x[1] < self.hi[1]
    }

    fn within_closure_of(&self, other: &BoxRegion) -> bool {
        self.lo[0] >= other.lo[0] && self.lo[1] >= other.lo[1] && self.hi[0] <= other.hi[0] && self.hi[1] <= other.hi[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Params {
    /// Oriented open region `G`.
    pub g: BoxRegion,
    /// Boundary segment `Gamma` of `G`.
    pub gamma: (Point, Point),
    /// Region touching `Gamma` from inside `G`.
    pub touching: BoxRegion,
    /// Region crossing `Gamma` or another singular line.
    pub crossing: BoxRegion,
    /// Nodes per side of the grids on `Q_1`.
    pub ns: Vec<usize>,
    pub qs: Vec<f64>,
}

impl Default for Theorem2Params {
    fn default() -> Self {
        Self {
            g: BoxRegion { lo: [0.0, 0.0], hi: [1.0, 1.0] },
            gamma: ([0.0, 0.0], [1.0, 0.0]),
            touching: BoxRegion { lo: [0.25, 0.0], hi: [0.75, 0.5] },
            crossing: BoxRegion { lo: [-0.25, 0.25], hi: [0.25, 0.75] },
            ns: vec![65, 129, 257],
            qs: vec![2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormRow {
    pub h: f64,
    pub q: f64,
    pub touching: f64,
    pub crossing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub member: String,
    pub params: Theorem2Params,
    pub rows: Vec<SeminormRow>,
    /// Whether the orientation of the member is defined at sample points of
    /// `Gamma` itself.
    pub orientation_on_gamma: bool,
    pub checks: Vec<Check>,
}

impl Theorem2Report {
    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }

    pub fn series(&self, q: f64, touching: bool) -> Vec<f64> {
        self.rows.iter().filter(|r| r.q == q).map(|r| if touching { r.touching } else { r.crossing }).collect()
    }
}

/// `int_U |grad g|^q` with `g = |grad u|` sampled at the nodes and the cell
/// gradient of its bilinear interpolant.
pub fn grad_norm_seminorm(sol: &ExactSolution, grid: &Grid2D, u: &BoxRegion, q: f64) -> Result<f64> {
    let g = ScalarField::from_fn(*grid, |x| sol.grad_norm(x))?;
    let cells = CellMask::from_centers(grid, |x| u.contains(x));
    if cells.count() == 0 {
        return Err(Error::invalid(format!("region {u:?} holds no cell of the grid")));
    }
    let vals: Vec<f64> = gradient(&g).norms().iter().map(|n| n.powf(q)).collect();
    integrate_cells(grid, &vals, Some(&cells))
}

pub fn run_theorem2(sol: &ExactSolution, params: &Theorem2Params) -> Result<Theorem2Report> {
    if params.ns.len() < 2 || params.qs.is_empty() {
        return Err(Error::invalid("need at least two grids and one exponent"));
    }
    if !params.touching.within_closure_of(&params.g) {
        return Err(Error::invalid(format!("touching region {:?} is not inside the closure of G", params.touching)));
    }
    let (a, b) = params.gamma;
    let on_edge = |x: Point| {
        let r = &params.g;
        let inside = x[0] >= r.lo[0] && x[0] <= r.hi[0] && x[1] >= r.lo[1] && x[1] <= r.hi[1];
        inside && (x[0] == r.lo[0] || x[0] == r.hi[0] || x[1] == r.lo[1] || x[1] == r.hi[1])
    };
    let straight = a[0] == b[0] || a[1] == b[1];
    if !(on_edge(a) && on_edge(b) && straight) {
        return Err(Error::invalid(format!("Gamma {a:?}..{b:?} is not a side segment of G")));
    }
    // a continuous orientation on a connected box is constant
    let coarse = Grid2D::square(-1.0, 1.0, params.ns[0])?;
    let mut seen: Option<i8> = None;
    for cj in 0..coarse.ncy() {
        for ci in 0..coarse.ncx() {
            let c = coarse.cell_center(ci, cj);
            if !params.g.contains(c) {
                continue;
            }
            match (sol.omega(c), seen) {
                (None, _) => return Err(Error::invalid(format!("orientation undefined inside G at {c:?}"))),
                (Some(o), Some(s)) if o != s => {
                    return Err(Error::invalid(format!("orientation changes sign inside G at {c:?}")))
                }
                (Some(o), _) => seen = Some(o),
            }
        }
    }
    let orientation_on_gamma = (1..16).all(|k| {
        let t = k as f64 / 16.0;
        sol.omega([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).is_some()
    });

    let mut rows = Vec::new();
    for &n in &params.ns {
        let grid = Grid2D::square(-1.0, 1.0, n)?;
        for &q in &params.qs {
            rows.push(SeminormRow {
                h: grid.h,
                q,
                touching: grad_norm_seminorm(sol, &grid, &params.touching, q)?,
                crossing: grad_norm_seminorm(sol, &grid, &params.crossing, q)?,
            });
        }
    }
    let mut rep = Theorem2Report { member: sol.name.clone(), params: params.clone(), rows, orientation_on_gamma, checks: Vec::new() };
    for &q in &params.qs {
        let t = rep.series(q, true);
        let (lo, hi) = t.iter().fold((f64::INFINITY, 0.0f64), |(l, u), v| (l.min(*v), u.max(*v)));
        rep.checks.push(Check::new(
            &format!("touching_bounded_q{q}"),
            hi <= 2.0 * lo || hi <= 1e-12,
            format!("seminorms {t:?}, spread {:.4}", if lo > 0.0 { hi / lo } else { 0.0 }),
        ));
        if q >= 3.0 {
            let c = rep.series(q, false);
            let ratios: Vec<f64> = c.windows(2).map(|w| w[1] / w[0]).collect();
            rep.checks.push(Check::new(
                &format!("crossing_blows_up_q{q}"),
                ratios.iter().all(|r| *r >= 2.0),
                format!("seminorms {c:?}, ratios {ratios:?}"),
            ));
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamlineReport {
    pub h: f64,
    pub seeds: Vec<Point>,
    /// `(max - min) / mean` of `|grad u|` along each streamline.
    pub variations: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Hausdorff distance between the level set of `w` and the streamline
    /// through each seed, when a `w` was supplied.
    pub hausdorff: Vec<f64>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub paths: Vec<StreamlinePath>,
}

impl StreamlineReport {
    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

pub const STREAMLINE_VARIATION_TOL: f64 = 2e-3;

fn clip_to(points: &[Point], lo: Point, hi: Point) -> Vec<Point> {
    points.iter().copied().filter(|x| x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1]).collect()
}

/// Streamlines of `u` through `seeds`, traced both ways with step `h / 4`.
/// With `w`, also traces `{w = w(seed)}` and measures its Hausdorff distance
/// to the streamline, both clipped to the `w` grid shrunk by one cell.
pub fn run_streamlines(u: &ScalarField, seeds: &[Point], max_len: f64, w: Option<&ScalarField>) -> Result<StreamlineReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("no streamline seeds"));
    }
    let h = u.grid.h;
    let step = 0.25 * h;
    let mut rep = StreamlineReport { h, seeds: seeds.to_vec(), variations: vec![], lengths: vec![], hausdorff: vec![], checks: vec![], paths: vec![] };
    for &s in seeds {
        let path = trace_streamline_through(u, s, step, max_len)?;
        rep.variations.push(relative_variation(&path));
        rep.lengths.push(path.arclength.last().copied().unwrap_or(0.0) - path.arclength.first().copied().unwrap_or(0.0));
        if let Some(w) = w {
            let g = w.grid;
            let lo = [g.x0 + g.h, g.y0 + g.h];
            let hi = [g.x_max() - g.h, g.y_max() - g.h];
            let level = w.interpolate(s).ok_or_else(|| Error::invalid(format!("seed {s:?} lies outside the w grid")))?;
            let curve = trace_level_set(w, level, s, 0.25 * g.h, max_len)?;
            let (a, b) = (clip_to(&curve, lo, hi), clip_to(&path.points, lo, hi));
            if a.is_empty() || b.is_empty() {
                return Err(Error::invalid(format!("curves through {s:?} leave the w grid")));
            }
            rep.hausdorff.push(hausdorff(&a, &b));
        }
        rep.paths.push(path);
    }
    let worst = rep.variations.iter().copied().fold(0.0, f64::max);
    rep.checks.push(Check::new(
        "grad_norm_constant_along_streamlines",
        worst <= STREAMLINE_VARIATION_TOL,
        format!("max relative variation {worst:.3e} over {} streamlines", seeds.len()),
    ));
    if w.is_some() {
        let d = rep.hausdorff.iter().copied().fold(0.0, f64::max);
        rep.checks.push(Check::new(
            "level_sets_match_streamlines",
            d <= 2.0 * h,
            format!("max Hausdorff distance {d:.3e}, bound 2h = {:.3e}", 2.0 * h),
        ));
    }
    Ok(rep)
}

/// Seeds spread evenly on the segment `[a, b]`, end points excluded.
pub fn seeds_on_segment(a: Point, b: Point, count: usize) -> Vec<Point> {
    (1..=count)
        .map(|k| {
            let t = k as f64 / (count + 1) as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

/// Angle member `u = -theta` at spacing `2 / (n - 1)`: streamlines through
/// 20 seeds on the ray `theta = 0.35`, compared with the level sets of
/// `w_p` from the sector solve.
pub fn angle_streamlines(n: usize, p: f64) -> Result<StreamlineReport> {
    let params = AngleSweepParams { n, p_values: vec![p], ..Default::default() };
    let spec = angle_sweep_spec(&params)?;
    let u = ScalarField::from_fn(spec.problem.grid, |x| -x[1].atan2(x[0]))?;
    let stages = run_sweep(&spec)?;
    let t = log_transform(&stages[0].pair, None)?;
    let (c, s) = (0.35f64.cos(), 0.35f64.sin());
    let seeds = seeds_on_segment([1.08 * c, 1.08 * s], [1.52 * c, 1.52 * s], 20);
    run_streamlines(&u, &seeds, 4.0, Some(&t.w))
}

/// Aronsson member on the quadrant box `[1/8, 1]^2` at spacing `1 / m`,
/// `m` a multiple of 8. The conjugate is anchored at the far corner where
/// `v` is smallest; that node is left out of the transform because its
/// normalised value is below the resolution of `v`. Seeds lie on the
/// diagonal `[1/2, 0.95]`: towards the origin `|grad u|^(p-1) / v` drops
/// below double precision and the level sets of `w_p` are not resolved.
pub fn aronsson_quadrant_streamlines(m: usize, p: f64) -> Result<StreamlineReport> {
    if m == 0 || !m.is_multiple_of(8) {
        return Err(Error::invalid(format!("m must be a positive multiple of 8, got {m}")));
    }
    let sol = ExactSolution::aronsson43();
    let h = 1.0 / m as f64;
    let n = 7 * m / 8 + 1;
    let grid = Grid2D::new(0.125, 0.125, h, n, n)?;
    let u = ScalarField::from_fn(grid, |x| sol.value(x))?;
    let a = 1.0 - 0.5 * h;
    let spec = SweepSpec {
        problem: DirichletProblem::rectangle(&u)?,
        p_values: vec![p],
        conj_box: ([0.125, 0.125], [1.0, 1.0]),
        gamma: 0.5,
        anchor: [a, a],
    };
    let stages = run_sweep(&spec)?;
    let t = log_transform(&stages[0].pair, Some(([0.125, 0.125], [1.0 - 1.5 * h, 1.0 - 1.5 * h])))?;
    let seeds = seeds_on_segment([0.5, 0.5], [0.95, 0.95], 20);
    run_streamlines(&u, &seeds, 4.0, Some(&t.w))
}

/// Cells whose corners all have `|grad u|` at least this are certified;
/// keeps `w = -log |grad u|` away from critical points.
pub const CERTIFY_MIN_GRAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub center: Point,
    pub radius: f64,
    pub residual: f64,
    /// The support meets a coordinate axis.
    pub meets_axis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub member: String,
    pub h: f64,
    pub certificate: ImcfCertificate,
    pub tests: Vec<NamedTest>,
    /// Names of the tests whose residual exceeds the divergence tolerance.
    pub failing_tests: Vec<String>,
    pub checks: Vec<Check>,
}

impl CertifyReport {
    pub fn pass(&self) -> bool {
        all_pass(&self.checks)
    }
}

/// The corpus pair `w = -log |grad u|`, `F = -omega grad_perp u / |grad u|`
/// per cell of `mask`. Nodes outside the domain take `w` at their
/// projection, critical points a finite stand-in, and cells outside the mask
/// get `F = 0`; none of these enter a masked certificate.
pub fn exact_pair(sol: &ExactSolution, grid: &Grid2D, mask: &CellMask) -> Result<(ScalarField, VectorField)> {
    let w = ScalarField::from_fn(*grid, |x| {
        let y = if sol.domain.contains(x) { x } else { sol.domain.project(x) };
        let v = sol.exact_w(y);
        if v.is_finite() {
            v
        } else {
            -CERTIFY_MIN_GRAD.ln()
        }
    })?;
    let mut f = Vec::with_capacity(grid.n_cells());
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            if !mask.get(ci, cj) {
                f.push([0.0, 0.0]);
                continue;
            }
            let c = grid.cell_center(ci, cj);
            let g = sol.gradient(c);
            let n = g[0].hypot(g[1]);
            let om = match sol.omega(c) {
                Some(o) if n > 0.0 => o as f64,
                _ => return Err(Error::invalid(format!("orientation undefined at cell centre {c:?}"))),
            };
            f.push([om * g[1] / n, -om * g[0] / n]);
        }
    }
    Ok((w, VectorField::new(*grid, f)?))
}

/// Certifies the exact pair of a corpus member on the square around its
/// bounding box
/// with `n` nodes per side and tests of radius `radius` on a lattice of the
/// same spacing.
pub fn run_certify_exact(sol: &ExactSolution, n: usize, radius: f64, tol: Option<Tolerances>) -> Result<CertifyReport> {
    let (lo, hi) = sol.domain.bounding_box();
    let grid = Grid2D::square(lo[0].min(lo[1]), hi[0].max(hi[1]), n)?;
    let mask = CellMask::from_corners(&grid, |x| sol.domain.contains(x) && sol.grad_norm(x) >= CERTIFY_MIN_GRAD);
    let (w, f) = exact_pair(sol, &grid, &mask)?;
    let tests = covering_tests(&grid, &mask, radius, radius)?;
    let tol = tol.unwrap_or_else(|| Tolerances::for_spacing(grid.h));
    let certificate = certify_on(&w, &f, &tests, tol, Some(&mask))?;
    let named: Vec<NamedTest> = certificate
        .weak_div_residuals
        .iter()
        .map(|&(k, r)| {
            let t = &tests[k];
            NamedTest {
                name: format!("t{k:03}"),
                center: t.center,
                radius: t.radius,
                residual: r,
                meets_axis: t.center[0].abs() < t.radius || t.center[1].abs() < t.radius,
            }
        })
        .collect();
    let failing_tests: Vec<String> = named.iter().filter(|t| t.residual.abs() > tol.div).map(|t| t.name.clone()).collect();
    let checks = vec![Check::new("certificate", certificate.verdict.pass, certificate.verdict.failures.join("; "))];
    Ok(CertifyReport { member: sol.name.clone(), h: grid.h, certificate, tests: named, failing_tests, checks })
}
