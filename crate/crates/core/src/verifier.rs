//! Checks that a pair `(w, F)` is a weak solution of inverse mean curvature
//! flow, the two identities satisfied by infinity-harmonic functions, and
//! the Huisken-Ilmanen competitor inequality.
//!
//! All quantities are cellwise: `F` lives on cells, `grad w` is the cell
//! gradient of the nodal `w`, integrals use the midpoint rule.

use crate::error::{Error, Result};
use crate::grid::{
    gradient, integrate_cells, weak_divergence_residual_cells, CellMask, Grid2D, ScalarField, TestFunction,
    VectorField,
};
use crate::streamlines::OrientationField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Cells with `|grad w|` at or below this are critical.
pub const CRITICAL_GRAD: f64 = 1e-10;
/// `tol_div(h) = C0_DIV * h`, calibrated on the expanding circles.
pub const C0_DIV: f64 = 0.05;
/// `tol_align(h) = C_ALIGN * h`.
pub const C_ALIGN: f64 = 0.05;
pub const MIN_TESTS: usize = 20;
pub const HI_AMPLITUDES: [f64; 3] = [0.01, 0.1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed excess of `max |F|` over 1.
    pub sup_f: f64,
    pub align: f64,
    pub div: f64,
    pub hi: f64,
}

impl Tolerances {
    pub fn for_spacing(h: f64) -> Self {
        Self { sup_f: 1e-6, align: C_ALIGN * h, div: C0_DIV * h, hi: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiPair {
    pub competitor: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl HiPair {
    pub fn excess(&self) -> f64 {
        self.lhs - self.rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub thresholds: Tolerances,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImcfCertificate {
    pub h: f64,
    #[serde(rename = "sup_F_norm")]
    pub sup_f_norm: f64,
    #[serde(rename = "alignment_residual_L1")]
    pub alignment_residual_l1: f64,
    /// `(test id, signed residual)`.
    pub weak_div_residuals: Vec<(usize, f64)>,
    pub huisken_ilmanen_violations: Vec<HiPair>,
    pub verdict: Verdict,
}

impl ImcfCertificate {
    pub fn max_weak_div(&self) -> f64 {
        self.weak_div_residuals.iter().map(|r| r.1.abs()).fold(0.0, f64::max)
    }

    pub fn max_hi_excess(&self) -> f64 {
        self.huisken_ilmanen_violations.iter().map(HiPair::excess).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Attaches competitor results and re-judges.
    pub fn with_huisken_ilmanen(mut self, pairs: Vec<HiPair>) -> Self {
        self.huisken_ilmanen_violations = pairs;
        self.verdict = judge(&self, self.verdict.thresholds);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn judge(c: &ImcfCertificate, t: Tolerances) -> Verdict {
    let mut failures = Vec::new();
    if !(c.sup_f_norm <= 1.0 + t.sup_f) {
        failures.push(format!("sup |F| = {:.6e} exceeds 1 + {:.1e}", c.sup_f_norm, t.sup_f));
    }
    if !(c.alignment_residual_l1 <= t.align) {
        failures.push(format!("alignment residual {:.6e} exceeds {:.3e}", c.alignment_residual_l1, t.align));
    }
    for &(k, r) in &c.weak_div_residuals {
        if !(r.abs() <= t.div) {
            failures.push(format!("weak divergence residual of test {k} is {r:.6e}, bound {:.3e}", t.div));
        }
    }
    for p in &c.huisken_ilmanen_violations {
        if !(p.excess() <= t.hi) {
            failures.push(format!(
                "competitor {} violates the inequality: lhs {:.9e} > rhs {:.9e} + {:.1e}",
                p.competitor, p.lhs, p.rhs, t.hi
            ));
        }
    }
    Verdict { pass: failures.is_empty(), thresholds: t, failures }
}

fn check_mask(grid: &Grid2D, mask: Option<&CellMask>) -> Result<()> {
    mask.map_or(Ok(()), |m| m.check(grid))
}

/// Cells with a corner in the open support of `t`.
fn support_cells(t: &TestFunction, grid: &Grid2D) -> Vec<(usize, usize)> {
    let (i0, i1, j0, j1) = t.cell_range(grid);
    let mut out = Vec::new();
    for cj in j0..=j1 {
        for ci in i0..=i1 {
            if [(ci, cj), (ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)].iter().any(|&(i, j)| t.value(grid.node(i, j)) > 0.0) {
                out.push((ci, cj));
            }
        }
    }
    out
}

fn check_supports(tests: &[TestFunction], grid: &Grid2D, ok: impl Fn(usize, usize) -> bool, what: &str) -> Result<()> {
    for (k, t) in tests.iter().enumerate() {
        if !t.fits(grid) {
            return Err(Error::invalid(format!("test function {k} leaves the grid interior")));
        }
        if let Some((ci, cj)) = support_cells(t, grid).into_iter().find(|&(ci, cj)| !ok(ci, cj)) {
            return Err(Error::invalid(format!("support of test function {k} reaches cell ({ci}, {cj}) outside {what}")));
        }
    }
    Ok(())
}

/// Bumps of the given radius centred on a square lattice, kept when every
/// cell of the support belongs to `domain`.
pub fn covering_tests(grid: &Grid2D, domain: &CellMask, radius: f64, spacing: f64) -> Result<Vec<TestFunction>> {
    check_mask(grid, Some(domain))?;
    if !(spacing > 0.0) || !(radius >= 2.0 * grid.h) {
        return Err(Error::invalid(format!("need spacing > 0 and radius >= 2h, got {spacing} and {radius}")));
    }
    let mut out = Vec::new();
    let mut y = grid.y0 + radius + grid.h;
    while y + radius + grid.h < grid.y_max() {
        let mut x = grid.x0 + radius + grid.h;
        while x + radius + grid.h < grid.x_max() {
            let t = TestFunction::new([x, y], radius)?;
            if t.fits(grid) && support_cells(&t, grid).iter().all(|&(ci, cj)| domain.get(ci, cj)) {
                out.push(t);
            }
            x += spacing;
        }
        y += spacing;
    }
    Ok(out)
}

/// The three conditions of a weak solution, over the whole grid.
pub fn certify(w: &ScalarField, f: &VectorField, tests: &[TestFunction], tol: Tolerances) -> Result<ImcfCertificate> {
    certify_on(w, f, tests, tol, None)
}

/// As [`certify`], restricted to the cells of `domain`. Test supports must
/// stay inside the domain.
pub fn certify_on(
    w: &ScalarField,
    f: &VectorField,
    tests: &[TestFunction],
    tol: Tolerances,
    domain: Option<&CellMask>,
) -> Result<ImcfCertificate> {
    let grid = w.grid;
    grid.ensure_matches(&f.grid, "certify: F")?;
    if f.values.len() != grid.n_cells() {
        return Err(Error::invalid("F must hold one vector per cell"));
    }
    check_mask(&grid, domain)?;
    if tests.len() < MIN_TESTS {
        return Err(Error::invalid(format!("need at least {MIN_TESTS} test functions, got {}", tests.len())));
    }
    let inside = |ci: usize, cj: usize| domain.is_none_or(|m| m.get(ci, cj));
    check_supports(tests, &grid, inside, "the domain")?;

    let gw = gradient(w);
    let norms: Vec<f64> = gw.norms();
    let mut sup = 0.0f64;
    let mut align = vec![0.0; grid.n_cells()];
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            if !inside(ci, cj) {
                continue;
            }
            let k = grid.cell_idx(ci, cj);
            let fv = f.values[k];
            let nf = fv[0].hypot(fv[1]);
            if !nf.is_finite() {
                return Err(Error::NonFinite { location: format!("F at cell ({ci}, {cj})"), value: nf });
            }
            sup = sup.max(nf);
            let n = norms[k];
            if n > CRITICAL_GRAD {
                let g = gw.values[k];
                align[k] = (fv[0] * g[0] + fv[1] * g[1] - n).abs();
            }
        }
    }
    let alignment = integrate_cells(&grid, &align, domain)?;
    let weak = weak_divergence_residual_cells(f, &norms, tests)?;
    let mut cert = ImcfCertificate {
        h: grid.h,
        sup_f_norm: sup,
        alignment_residual_l1: alignment,
        weak_div_residuals: weak.into_iter().enumerate().collect(),
        huisken_ilmanen_violations: Vec::new(),
        verdict: Verdict { pass: false, thresholds: tol, failures: Vec::new() },
    };
    cert.verdict = judge(&cert, tol);
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Residuals {
    /// `int | |grad g| perp(grad u)/|grad u| - omega grad g |` over cells
    /// with a defined orientation.
    pub eq4_residual_l1: f64,
    /// Weak residuals of `div(perp(grad u)/|grad u|) = -omega |grad g| / g`.
    pub eq5_residuals: Vec<f64>,
    /// Cells that entered the first integral.
    pub cells: usize,
}

impl Theorem1Residuals {
    pub fn max_eq5(&self) -> f64 {
        self.eq5_residuals.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }
}

/// Residuals of the two identities for an infinity-harmonic candidate `u`
/// with `g = grad_norm` on the cells of `domain`.
pub fn theorem1_identities(
    u: &ScalarField,
    orientation: &OrientationField,
    grad_norm: &ScalarField,
    tests: &[TestFunction],
    domain: Option<&CellMask>,
) -> Result<Theorem1Residuals> {
    let grid = u.grid;
    grid.ensure_matches(&grad_norm.grid, "theorem1: grad_norm")?;
    grid.ensure_matches(&orientation.grid, "theorem1: orientation")?;
    check_mask(&grid, domain)?;
    let inside = |ci: usize, cj: usize| domain.is_none_or(|m| m.get(ci, cj));
    check_supports(
        tests,
        &grid,
        |ci, cj| inside(ci, cj) && orientation.cell(ci, cj).is_some(),
        "the oriented domain",
    )?;

    let gu = gradient(u);
    let gg = gradient(grad_norm);
    let mut normal = vec![[0.0; 2]; grid.n_cells()];
    let mut source = vec![0.0; grid.n_cells()];
    let mut eq4 = vec![0.0; grid.n_cells()];
    let mut cells = 0;
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            if !inside(ci, cj) {
                continue;
            }
            let k = grid.cell_idx(ci, cj);
            let [a, b] = gu.values[k];
            let n = a.hypot(b);
            if !(n > CRITICAL_GRAD) {
                return Err(Error::invalid(format!(
                    "|grad u| = {n:.3e} at cell ({ci}, {cj}); the identities need a non-vanishing gradient"
                )));
            }
            let Some(omega) = orientation.cell(ci, cj) else { continue };
            let omega = f64::from(omega);
            let dg = gg.values[k];
            let ndg = dg[0].hypot(dg[1]);
            let nrm = [-b / n, a / n];
            eq4[k] = (ndg * nrm[0] - omega * dg[0]).hypot(ndg * nrm[1] - omega * dg[1]);
            let g = grad_norm.cell_mean(ci, cj);
            if !(g > 0.0) {
                return Err(Error::invalid(format!("grad_norm is not positive at cell ({ci}, {cj})")));
            }
            normal[k] = nrm;
            source[k] = -omega * ndg / g;
            cells += 1;
        }
    }
    let mask = domain.cloned().unwrap_or_else(|| CellMask::all(&grid));
    let eq4_residual_l1 = integrate_cells(&grid, &eq4, Some(&mask))?;
    let field = VectorField { grid, values: normal };
    let eq5_residuals = weak_divergence_residual_cells(&field, &source, tests)?;
    Ok(Theorem1Residuals { eq4_residual_l1, eq5_residuals, cells })
}

/// Nodes all of whose adjacent cells lie in `k`.
fn interior_nodes(grid: &Grid2D, k: &CellMask) -> Vec<bool> {
    let mut out = vec![false; grid.n_nodes()];
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            out[grid.idx(i, j)] = k.get(i - 1, j - 1) && k.get(i, j - 1) && k.get(i - 1, j) && k.get(i, j);
        }
    }
    out
}

fn ensure_competitor(w: &ScalarField, c: &ScalarField, interior: &[bool], id: usize) -> Result<()> {
    w.grid.ensure_matches(&c.grid, "competitor")?;
    for (k, (a, b)) in w.values.iter().zip(&c.values).enumerate() {
        if !interior[k] && a != b {
            let (i, j) = (k % w.grid.nx, k / w.grid.nx);
            return Err(Error::invalid(format!("competitor {id} differs from w at node ({i}, {j}) outside K")));
        }
    }
    Ok(())
}

/// `lhs = int_K (1 + w)|grad w|` and `rhs = int_K |grad w~| + w~ |grad w|`
/// for each competitor `w~`, which must equal `w` off the interior of `K`.
pub fn huisken_ilmanen_check(w: &ScalarField, competitors: &[ScalarField], k: &CellMask) -> Result<Vec<HiPair>> {
    let grid = w.grid;
    check_mask(&grid, Some(k))?;
    let interior = interior_nodes(&grid, k);
    let norms = gradient(w).norms();
    let area = grid.cell_area();
    let mut lhs = 0.0;
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            if k.get(ci, cj) {
                lhs += (1.0 + w.cell_mean(ci, cj)) * norms[grid.cell_idx(ci, cj)];
            }
        }
    }
    lhs *= area;
    let mut out = Vec::with_capacity(competitors.len());
    for (id, c) in competitors.iter().enumerate() {
        ensure_competitor(w, c, &interior, id)?;
        let cn = gradient(c).norms();
        let mut rhs = 0.0;
        for cj in 0..grid.ncy() {
            for ci in 0..grid.ncx() {
                if k.get(ci, cj) {
                    let kk = grid.cell_idx(ci, cj);
                    rhs += cn[kk] + c.cell_mean(ci, cj) * norms[kk];
                }
            }
        }
        out.push(HiPair { competitor: id, lhs, rhs: rhs * area });
    }
    Ok(out)
}

/// Upper bound for `lhs - rhs` of one competitor in terms of the weak
/// solution defects of `(w, F)` on `K`: the alignment defect, the excess of
/// `|F|` over 1 and the weak divergence residual tested against `w~ - w`.
pub fn huisken_ilmanen_gap_bound(w: &ScalarField, f: &VectorField, competitor: &ScalarField, k: &CellMask) -> Result<f64> {
    let grid = w.grid;
    grid.ensure_matches(&f.grid, "gap bound: F")?;
    check_mask(&grid, Some(k))?;
    ensure_competitor(w, competitor, &interior_nodes(&grid, k), 0)?;
    let zeta = ScalarField {
        grid,
        values: competitor.values.iter().zip(&w.values).map(|(a, b)| a - b).collect(),
    };
    let gw = gradient(w);
    let gc = gradient(competitor);
    let gz = gradient(&zeta);
    let (mut align, mut excess, mut weak) = (0.0, 0.0, 0.0);
    for cj in 0..grid.ncy() {
        for ci in 0..grid.ncx() {
            if !k.get(ci, cj) {
                continue;
            }
            let kk = grid.cell_idx(ci, cj);
            let fv = f.values[kk];
            let a = gw.values[kk][0].hypot(gw.values[kk][1]);
            align += (a - fv[0] * gw.values[kk][0] - fv[1] * gw.values[kk][1]).abs();
            excess += (fv[0].hypot(fv[1]) - 1.0).max(0.0) * gc.values[kk][0].hypot(gc.values[kk][1]);
            weak += fv[0] * gz.values[kk][0] + fv[1] * gz.values[kk][1] + zeta.cell_mean(ci, cj) * a;
        }
    }
    Ok((align + excess + weak.abs()) * grid.cell_area())
}

/// Seeded bump perturbations `w + s a eta` supported on the interior nodes
/// of `K`, amplitudes cycling through [`HI_AMPLITUDES`].
pub fn bump_competitors(w: &ScalarField, k: &CellMask, count: usize, seed: u64) -> Result<Vec<ScalarField>> {
    let grid = w.grid;
    check_mask(&grid, Some(k))?;
    let interior = interior_nodes(&grid, k);
    let nodes: Vec<usize> = (0..grid.n_nodes()).filter(|&n| interior[n]).collect();
    if nodes.is_empty() {
        return Err(Error::invalid("K has no interior nodes"));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &n in &nodes {
        let p = grid.node(n % grid.nx, n / grid.nx);
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let r_min = 2.0 * grid.h;
    let r_max = (0.25 * (hi[0] - lo[0]).min(hi[1] - lo[1])).max(r_min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for m in 0..count {
        let n = nodes[rng.gen_range(0..nodes.len())];
        let centre = grid.node(n % grid.nx, n / grid.nx);
        let radius = if r_max > r_min { rng.gen_range(r_min..r_max) } else { r_min };
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let amp = sign * HI_AMPLITUDES[m % HI_AMPLITUDES.len()];
        let eta = TestFunction::new(centre, radius)?;
        let mut c = w.clone();
        for &n in &nodes {
            c.values[n] += amp * eta.value(grid.node(n % grid.nx, n / grid.nx));
        }
        out.push(c);
    }
    Ok(out)
}
