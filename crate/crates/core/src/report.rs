//! JSON manifests and the experiment runner behind the command line.

use crate::corpus::ExactSolution;
use crate::error::{Error, Result};
use crate::experiments::{
    angle_sweep_spec, prop1_sweep_spec, run_angle_sweep, run_certify_exact, run_lemma42, run_prop1, run_streamlines,
    run_theorem2, seeds_on_segment, AngleSweepParams, Check, Lemma42Params, Prop1Params, Theorem2Params, INTERIOR_C, INTERIOR_RHO,
};
use crate::field_io::{load_scalar, write_scalar, write_vector};
use crate::grid::{Grid2D, Point, ScalarField};
use crate::solver::{interior_sup_gradient_check, solve, stages_csv, DirichletProblem, SolveParams};
use crate::streamlines::paths_csv;
use crate::verifier::Tolerances;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MIN_GRID: usize = 9;
pub const MAX_GRID: usize = 513;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Prop1,
    Lemma42,
    Theorem2,
    Certify,
    Solve,
    Trace,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Prop1 => "prop1",
            Self::Lemma42 => "lemma42",
            Self::Theorem2 => "theorem2",
            Self::Certify => "certify",
            Self::Solve => "solve",
            Self::Trace => "trace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemberSpec {
    Linear { xi: [f64; 2] },
    Aronsson43,
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizeSpec {
    pub x0: Point,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: 65 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub p_values: Vec<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { p_values: vec![8.0, 16.0, 32.0, 64.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSpec {
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl Default for ConstructionSpec {
    fn default() -> Self {
        Self { delta: 0.05, sigma: 0.5, gamma: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub seeds: Vec<Point>,
    pub max_len: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    pub test_radius: f64,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self { test_radius: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpKind {
    U,
    W,
    F,
}

fn default_competitors() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub member: Option<MemberSpec>,
    #[serde(default)]
    pub normalize: Option<NormalizeSpec>,
    /// Scalar dump in the field CSV format; read as `u` by `trace`.
    #[serde(default)]
    pub field: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub construction: ConstructionSpec,
    #[serde(default)]
    pub lemma42: Option<Lemma42Params>,
    #[serde(default)]
    pub theorem2: Option<Theorem2Params>,
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_competitors")]
    pub competitors: usize,
    #[serde(default)]
    pub dumps: Vec<DumpKind>,
}

fn invalid(pointer: &str, msg: impl Into<String>) -> Error {
    Error::Validation { pointer: pointer.into(), msg: msg.into() }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => {
                let _ = write!(s, "/{index}");
            }
            Segment::Map { key } => {
                let _ = write!(s, "/{}", key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Enum { variant } => {
                let _ = write!(s, "/{variant}");
            }
            Segment::Unknown => {}
        }
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

impl Manifest {
    /// Parses and validates; errors carry the JSON pointer of the offending
    /// value.
    pub fn from_json(text: &str) -> Result<Self> {
        let m = Self::parse(text)?;
        m.validate()?;
        Ok(m)
    }

    fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(e.path());
            invalid(&pointer, e.into_inner().to_string())
        })
    }

    /// Reads a manifest; a relative `field` path is taken from the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(f) = &m.field {
            if f.is_relative() {
                m.field = Some(path.parent().unwrap_or(Path::new(".")).join(f));
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n;
        if !(MIN_GRID..=MAX_GRID).contains(&n) {
            return Err(invalid("/grid/n", format!("grid size must lie in [{MIN_GRID}, {MAX_GRID}], got {n}")));
        }
        let ps = &self.solver.p_values;
        if ps.is_empty() {
            return Err(invalid("/solver/p_values", "at least one p is required"));
        }
        for (k, &p) in ps.iter().enumerate() {
            if !(p >= 2.0 && p.is_finite()) {
                return Err(invalid(&format!("/solver/p_values/{k}"), format!("p must be finite and >= 2, got {p}")));
            }
            if k > 0 && !(p > ps[k - 1]) {
                return Err(invalid(&format!("/solver/p_values/{k}"), format!("p values must increase strictly, got {p} after {}", ps[k - 1])));
            }
        }
        let c = &self.construction;
        if !(c.delta > 0.0 && c.delta < 1.0 / 16.0) {
            return Err(invalid("/construction/delta", format!("delta must lie in (0, 1/16), got {}", c.delta)));
        }
        if !(c.sigma >= 0.5 && c.sigma < 1.0 - 8.0 * c.delta) {
            return Err(invalid(
                "/construction/sigma",
                format!("sigma must lie in [1/2, 1 - 8 delta) = [0.5, {}), got {}", 1.0 - 8.0 * c.delta, c.sigma),
            ));
        }
        if !(c.gamma > 0.0 && c.gamma < 1.0 - c.delta) {
            return Err(invalid(
                "/construction/gamma",
                format!("gamma must lie in (0, 1 - delta) = (0, {}), got {}", 1.0 - c.delta, c.gamma),
            ));
        }
        if let Some(MemberSpec::Linear { xi }) = self.member {
            if !(xi[0].is_finite() && xi[1].is_finite()) || xi == [0.0, 0.0] {
                return Err(invalid("/member/xi", "xi must be finite and nonzero"));
            }
        }
        if let Some(nz) = &self.normalize {
            if !(nz.r > 0.0 && nz.r.is_finite()) {
                return Err(invalid("/normalize/r", format!("r must be positive, got {}", nz.r)));
            }
            if self.member.is_none() {
                return Err(invalid("/normalize", "normalisation needs a corpus member"));
            }
        }
        if let Some(f) = &self.field {
            if !f.is_file() {
                return Err(invalid("/field", format!("file {} does not exist", f.display())));
            }
        }
        if !(1..=10_000).contains(&self.competitors) {
            return Err(invalid("/competitors", format!("competitor count must lie in [1, 10000], got {}", self.competitors)));
        }
        if let Some(t) = &self.tolerances {
            for (name, v) in [("sup_f", t.sup_f), ("align", t.align), ("div", t.div), ("hi", t.hi)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(&format!("/tolerances/{name}"), format!("tolerance must be finite and >= 0, got {v}")));
                }
            }
        }
        if !(self.certify.test_radius > 0.0) {
            return Err(invalid("/certify/test_radius", "test radius must be positive"));
        }
        if let Some(t) = &self.trace {
            if t.seeds.is_empty() {
                return Err(invalid("/trace/seeds", "at least one seed is required"));
            }
            if !(t.max_len > 0.0) {
                return Err(invalid("/trace/max_len", "max_len must be positive"));
            }
        }
        if let Some(l) = &self.lemma42 {
            if l.curve.len() < 2 {
                return Err(invalid("/lemma42/curve", "the curve needs at least two points"));
            }
            if !(l.rho > 0.0) {
                return Err(invalid("/lemma42/rho", "rho must be positive"));
            }
            if !(l.slack >= 0.0) {
                return Err(invalid("/lemma42/slack", "slack must be >= 0"));
            }
        }
        let needs_member = match self.experiment {
            ExperimentKind::Trace => self.field.is_none(),
            _ => true,
        };
        if needs_member && self.member.is_none() {
            return Err(invalid("/member", format!("experiment `{}` needs a corpus member", self.experiment.name())));
        }
        if self.experiment == ExperimentKind::Lemma42 && self.lemma42.is_none() {
            return Err(invalid("/lemma42", "experiment `lemma42` needs a curve section"));
        }
        Ok(())
    }

    pub fn solution(&self) -> Result<Option<ExactSolution>> {
        let Some(m) = self.member else { return Ok(None) };
        let base = match m {
            MemberSpec::Linear { xi } => ExactSolution::linear(xi)?,
            MemberSpec::Aronsson43 => ExactSolution::aronsson43(),
            MemberSpec::Angle => ExactSolution::angle(),
        };
        Ok(Some(match self.normalize {
            Some(nz) => base.normalized_at(nz.x0, nz.r)?,
            None => base,
        }))
    }
}

/// Command-line overrides, applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub p_max: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, m: &mut Manifest) -> Result<()> {
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if let Some(n) = self.grid {
            m.grid.n = n;
        }
        if let Some(pm) = self.p_max {
            m.solver.p_values.retain(|p| *p <= pm);
            if m.solver.p_values.is_empty() {
                return Err(invalid("/solver/p_values", format!("no p value at or below --p-max {pm}")));
            }
        }
        m.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub status: Status,
    pub pass: bool,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub manifest: Manifest,
    pub result: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub report_path: PathBuf,
}

impl RunOutcome {
    /// 0 iff every check passed; 1 otherwise, aborted runs included.
    pub fn exit_code(&self) -> i32 {
        if self.report.status == Status::Completed && self.report.pass {
            0
        } else {
            1
        }
    }
}

struct Output<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl Output<'_> {
    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), body)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn scalar(&mut self, name: &str, u: &ScalarField) -> Result<()> {
        write_scalar(&self.dir.join(name), u)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn vector(&mut self, name: &str, f: &crate::grid::VectorField) -> Result<()> {
        write_vector(&self.dir.join(name), f)?;
        self.artifacts.push(name.into());
        Ok(())
    }
}

type Outcome = (Vec<Check>, serde_json::Value);

fn member(m: &Manifest) -> Result<ExactSolution> {
    m.solution()?.ok_or_else(|| invalid("/member", "a corpus member is required"))
}

fn p_fmt(p: f64) -> String {
    format!("{p}").replace('.', "_")
}

fn run_prop1_kind(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    let sol = member(m)?;
    if m.member == Some(MemberSpec::Angle) && m.normalize.is_none() {
        // the unrescaled angle member runs the sector rate experiment
        let params = AngleSweepParams { n: m.grid.n, gamma: m.construction.gamma, p_values: m.solver.p_values.clone(), ..Default::default() };
        let rep = run_angle_sweep(&params)?;
        let mut csv = String::from("p,l1,offset,curl_residual\n");
        for k in 0..rep.l1.len() {
            let _ = writeln!(csv, "{},{:.17e},{:.17e},{:.17e}", params.p_values[k], rep.l1[k], rep.offsets[k], rep.curl_residuals[k]);
        }
        out.text("angle_rate.csv", &csv)?;
        let mut checks = Vec::new();
        if let Some(s) = rep.slope {
            checks.push(Check::new("angle_rate_slope", (-1.3..=-0.7).contains(&s), format!("fitted slope {s:.4}, l1 {:?}", rep.l1)));
        } else {
            checks.push(Check::new("angle_rate_slope", false, "slope needs two p values with positive errors".into()));
        }
        for (p, (lhs, rhs)) in params.p_values.iter().zip(&rep.interior_sup_grad) {
            checks.push(Check::new(&format!("interior_gradient_bound_p{p}"), lhs <= rhs, format!("{lhs:.6} <= {rhs:.6}")));
        }
        return Ok((checks, serde_json::to_value(&rep)?));
    }
    let params = Prop1Params {
        n: m.grid.n,
        delta: m.construction.delta,
        sigma: m.construction.sigma,
        gamma: m.construction.gamma,
        p_values: m.solver.p_values.clone(),
        seed: m.seed,
        competitors: m.competitors,
        tolerances: m.tolerances,
    };
    let rep = run_prop1(&sol, &params)?;
    out.text("sweep.csv", &rep.sweep.csv())?;
    for (p, stages) in &rep.solver_stages {
        out.text(&format!("stages_p{}.csv", p_fmt(*p)), &stages_csv(stages))?;
    }
    if let Some((u, t)) = &rep.final_fields {
        for d in &m.dumps {
            match d {
                DumpKind::U => out.scalar("u.csv", u)?,
                DumpKind::W => out.scalar("w.csv", &t.w)?,
                DumpKind::F => out.vector("f.csv", &t.f)?,
            }
        }
    }
    Ok((rep.checks.clone(), serde_json::to_value(&rep)?))
}

fn run_lemma42_kind(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    let sol = member(m)?;
    let lp: &Lemma42Params = m.lemma42.as_ref().ok_or_else(|| invalid("/lemma42", "missing curve section"))?;
    let spec = if m.member == Some(MemberSpec::Angle) && m.normalize.is_none() {
        angle_sweep_spec(&AngleSweepParams { n: m.grid.n, gamma: m.construction.gamma, p_values: m.solver.p_values.clone(), ..Default::default() })?
    } else {
        let params = Prop1Params {
            n: m.grid.n,
            delta: m.construction.delta,
            sigma: m.construction.sigma,
            gamma: m.construction.gamma,
            p_values: m.solver.p_values.clone(),
            ..Default::default()
        };
        prop1_sweep_spec(&sol, &params)?
    };
    let rep = run_lemma42(&sol, &spec, lp)?;
    let mut csv = String::from("p,inner,outer,upper,lower\n");
    for r in &rep.rows {
        let _ = writeln!(csv, "{},{:.17e},{:.17e},{:.17e},{:.17e}", r.p, r.inner, r.outer, rep.upper, rep.lower);
    }
    out.text("brackets.csv", &csv)?;
    Ok((rep.checks.clone(), serde_json::to_value(&rep)?))
}

fn run_theorem2_kind(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    let sol = member(m)?;
    let params = m.theorem2.clone().unwrap_or_default();
    let rep = run_theorem2(&sol, &params)?;
    let mut csv = String::from("h,q,touching,crossing\n");
    for r in &rep.rows {
        let _ = writeln!(csv, "{:.17e},{},{:.17e},{:.17e}", r.h, r.q, r.touching, r.crossing);
    }
    out.text("seminorms.csv", &csv)?;
    Ok((rep.checks.clone(), serde_json::to_value(&rep)?))
}

fn run_certify_kind(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    let sol = member(m)?;
    let rep = run_certify_exact(&sol, m.grid.n, m.certify.test_radius, m.tolerances)?;
    let mut csv = String::from("name,x,y,radius,residual,meets_axis\n");
    for t in &rep.tests {
        let _ = writeln!(csv, "{},{:.17e},{:.17e},{:.17e},{:.17e},{}", t.name, t.center[0], t.center[1], t.radius, t.residual, t.meets_axis);
    }
    out.text("tests.csv", &csv)?;
    out.text("certificate.json", &rep.certificate.to_json()?)?;
    if !m.dumps.is_empty() {
        let (lo, hi) = sol.domain.bounding_box();
        let grid = Grid2D::square(lo[0].min(lo[1]), hi[0].max(hi[1]), m.grid.n)?;
        let mask = crate::grid::CellMask::from_corners(&grid, |x| {
            sol.domain.contains(x) && sol.grad_norm(x) >= crate::experiments::CERTIFY_MIN_GRAD
        });
        let (w, f) = crate::experiments::exact_pair(&sol, &grid, &mask)?;
        for d in &m.dumps {
            match d {
                DumpKind::W => out.scalar("w.csv", &w)?,
                DumpKind::F => out.vector("f.csv", &f)?,
                DumpKind::U => out.scalar("u.csv", &ScalarField::from_fn(grid, |x| sol.value(x))?)?,
            }
        }
    }
    let mut checks = rep.checks.clone();
    if !rep.failing_tests.is_empty() {
        checks.push(Check::new("failing_tests", false, rep.failing_tests.join(",")));
    }
    Ok((checks, serde_json::to_value(&rep)?))
}

/// Square grid with `n` nodes around the member's bounding box.
fn member_grid(sol: &ExactSolution, n: usize) -> Result<Grid2D> {
    let (lo, hi) = sol.domain.bounding_box();
    Grid2D::square(lo[0].min(lo[1]), hi[0].max(hi[1]), n)
}

fn run_solve_kind(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    let sol = member(m)?;
    let grid = member_grid(&sol, m.grid.n)?;
    let dom = sol.domain.clone();
    let problem = DirichletProblem::masked(grid, |x| sol.value(x), move |x| dom.contains(x))?;
    let p = *m.solver.p_values.last().expect("validated");
    let result = solve(&problem, &SolveParams::doubling(p, 0.0).polished())?;
    out.text("stages.csv", &stages_csv(&result.stages))?;
    if m.dumps.contains(&DumpKind::U) {
        out.scalar("u.csv", &result.u)?;
    }
    let (lhs, rhs) = interior_sup_gradient_check(&result, INTERIOR_RHO, result.p, INTERIOR_C)?;
    let max_err = (0..grid.n_nodes())
        .filter(|&k| problem.unknown[k])
        .map(|k| (result.u.values[k] - sol.value(grid.node(k % grid.nx, k / grid.nx))).abs())
        .fold(0.0, f64::max);
    let checks = vec![
        Check::new("converged", result.converged, format!("residual {:.3e} after {} iterations", result.residual, result.iterations)),
        Check::new("interior_gradient_bound", lhs <= rhs, format!("{lhs:.6} <= {rhs:.6}")),
    ];
    let value = serde_json::json!({
        "p": p,
        "energy": result.energy,
        "residual": result.residual,
        "iterations": result.iterations,
        "max_error_to_member": max_err,
        "interior_sup_grad": lhs,
        "interior_bound": rhs,
        "stages": result.stages,
    });
    Ok((checks, value))
}

fn run_trace_kind(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    let u = match &m.field {
        Some(f) => load_scalar(f)?,
        None => {
            let sol = member(m)?;
            let grid = member_grid(&sol, m.grid.n)?;
            ScalarField::from_fn(grid, |x| sol.value(x))?
        }
    };
    let (seeds, max_len) = match &m.trace {
        Some(t) => (t.seeds.clone(), t.max_len),
        None => {
            let g = u.grid;
            let lo = [g.x0 + 0.25 * (g.x_max() - g.x0), g.y0 + 0.25 * (g.y_max() - g.y0)];
            let hi = [g.x0 + 0.75 * (g.x_max() - g.x0), g.y0 + 0.75 * (g.y_max() - g.y0)];
            (seeds_on_segment(lo, hi, 20), 4.0)
        }
    };
    let rep = run_streamlines(&u, &seeds, max_len, None)?;
    out.text("streamlines.csv", &paths_csv(&rep.paths))?;
    Ok((rep.checks.clone(), serde_json::to_value(&rep)?))
}

fn dispatch(m: &Manifest, out: &mut Output) -> Result<Outcome> {
    match m.experiment {
        ExperimentKind::Prop1 => run_prop1_kind(m, out),
        ExperimentKind::Lemma42 => run_lemma42_kind(m, out),
        ExperimentKind::Theorem2 => run_theorem2_kind(m, out),
        ExperimentKind::Certify => run_certify_kind(m, out),
        ExperimentKind::Solve => run_solve_kind(m, out),
        ExperimentKind::Trace => run_trace_kind(m, out),
    }
}

/// Runs a validated manifest into `dir`: `report.json`, CSV tables and the
/// requested field dumps. Wall time goes to `timing.json` so that
/// `report.json` depends on the manifest and seed alone.
pub fn run_manifest(m: &Manifest, dir: &Path) -> Result<RunOutcome> {
    m.validate()?;
    std::fs::create_dir_all(dir)?;
    let start = std::time::Instant::now();
    let mut out = Output { dir, artifacts: Vec::new() };
    let (status, error, checks, result) = match dispatch(m, &mut out) {
        Ok((checks, value)) => (Status::Completed, None, checks, Some(value)),
        Err(e) => (Status::Aborted, Some(e.to_string()), Vec::new(), None),
    };
    let report = Report {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: m.experiment,
        seed: m.seed,
        pass: status == Status::Completed && checks.iter().all(|c| c.pass),
        status,
        error,
        checks,
        artifacts: out.artifacts,
        manifest: m.clone(),
        result,
    };
    let report_path = dir.join("report.json");
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    std::fs::write(&report_path, body)?;
    let timing = serde_json::json!({ "elapsed_seconds": start.elapsed().as_secs_f64() });
    std::fs::write(dir.join("timing.json"), format!("{timing}\n"))?;
    Ok(RunOutcome { report, report_path })
}

/// Output directory: the explicit one, else the manifest's, else
/// `out/<experiment>`.
pub fn output_dir(m: &Manifest, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| m.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(m.experiment.name()))
}

/// Default manifest for an experiment kind.
pub fn default_manifest(kind: ExperimentKind) -> Manifest {
    let member = match kind {
        ExperimentKind::Theorem2 | ExperimentKind::Certify => MemberSpec::Aronsson43,
        _ => MemberSpec::Linear { xi: [0.0, 1.0] },
    };
    let mut m: Manifest = serde_json::from_value(serde_json::json!({ "experiment": kind })).expect("defaults deserialize");
    m.member = Some(member);
    if kind == ExperimentKind::Lemma42 {
        m.lemma42 = Some(Lemma42Params { curve: vec![[-0.5, 0.0], [0.5, 0.0]], rho: 0.1, slack: 5e-2 });
    }
    m
}
