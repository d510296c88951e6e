//! Plain-text CSV dumps of node and cell fields.
//!
//! Scalars: header `x,y,value`, one row per node. Vectors: header
//! `x,y,fx,fy`, one row per cell centre. Rows are row-major (x fastest) and
//! numbers carry 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, VectorField};

const LATTICE_TOL: f64 = 1e-9;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn scalar_csv(u: &ScalarField) -> String {
    let g = &u.grid;
    let mut s = String::with_capacity(64 * g.n_nodes());
    s.push_str("x,y,value\n");
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = g.node(i, j);
            let _ = writeln!(s, "{},{},{}", num(p[0]), num(p[1]), num(u.at(i, j)));
        }
    }
    s
}

pub fn vector_csv(f: &VectorField) -> String {
    let g = &f.grid;
    let mut s = String::with_capacity(80 * g.n_cells());
    s.push_str("x,y,fx,fy\n");
    for cj in 0..g.ncy() {
        for ci in 0..g.ncx() {
            let p = g.cell_center(ci, cj);
            let v = f.at(ci, cj);
            let _ = writeln!(s, "{},{},{},{}", num(p[0]), num(p[1]), num(v[0]), num(v[1]));
        }
    }
    s
}

pub fn write_scalar(path: &Path, u: &ScalarField) -> Result<()> {
    std::fs::write(path, scalar_csv(u))?;
    Ok(())
}

pub fn write_vector(path: &Path, f: &VectorField) -> Result<()> {
    std::fs::write(path, vector_csv(f))?;
    Ok(())
}

/// Axis lattice from a set of coordinates: origin, spacing and count.
fn lattice(mut coords: Vec<f64>, axis: &str) -> Result<(f64, f64, usize)> {
    coords.sort_by(f64::total_cmp);
    let mut uniq: Vec<f64> = Vec::new();
    for c in coords {
        match uniq.last() {
            Some(&l) if (c - l).abs() <= LATTICE_TOL * (1.0 + l.abs()) => {}
            _ => uniq.push(c),
        }
    }
    if uniq.len() < 3 {
        return Err(Error::Parse { row: 0, msg: format!("fewer than 3 distinct {axis} coordinates") });
    }
    let h = uniq
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let x0 = uniq[0];
    let n = ((uniq[uniq.len() - 1] - x0) / h).round() as usize + 1;
    if n != uniq.len() {
        return Err(Error::Parse {
            row: 0,
            msg: format!("non-uniform {axis} lattice: {} distinct coordinates for {n} slots", uniq.len()),
        });
    }
    for (k, c) in uniq.iter().enumerate() {
        let m = ((c - x0) / h).round();
        if (x0 + m * h - c).abs() > LATTICE_TOL * (1.0 + c.abs()) {
            return Err(Error::Parse {
                row: 0,
                msg: format!("non-uniform {axis} lattice at coordinate #{k} ({c})"),
            });
        }
    }
    Ok((x0, h, n))
}

/// Parses a scalar dump back into a field. Row numbers in errors count the
/// header as row 1.
pub fn parse_scalar(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "x,y,value" => {}
        _ => return Err(Error::Parse { row: 1, msg: "expected header `x,y,value`".into() }),
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse { row, msg: format!("expected 3 columns, got {}", parts.len()) });
        }
        let mut vals = [0.0; 3];
        for (v, p) in vals.iter_mut().zip(&parts) {
            *v = p.trim().parse::<f64>().map_err(|e| Error::Parse { row, msg: format!("{e}: `{p}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, msg: format!("non-finite entry `{}`", p.trim()) });
            }
        }
        rows.push((row, vals));
    }
    let (x0, hx, nx) = lattice(rows.iter().map(|r| r.1[0]).collect(), "x")?;
    let (y0, hy, ny) = lattice(rows.iter().map(|r| r.1[1]).collect(), "y")?;
    if (hx - hy).abs() > LATTICE_TOL * hx {
        return Err(Error::Parse { row: 0, msg: format!("spacing differs between axes ({hx} vs {hy})") });
    }
    let grid = Grid2D::new(x0, y0, hx, nx, ny)?;
    let mut values = vec![f64::NAN; grid.n_nodes()];
    let mut seen = vec![false; grid.n_nodes()];
    for (row, [x, y, v]) in rows {
        let i = ((x - x0) / hx).round() as usize;
        let j = ((y - y0) / hx).round() as usize;
        let k = grid.idx(i, j);
        if seen[k] {
            return Err(Error::Parse { row, msg: format!("duplicate node ({i}, {j})") });
        }
        seen[k] = true;
        values[k] = v;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Parse {
            row: 0,
            msg: format!("missing node ({}, {})", k % nx, k / nx),
        });
    }
    ScalarField::new(grid, values)
}

pub fn load_scalar(path: &Path) -> Result<ScalarField> {
    parse_scalar(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> ScalarField {
        let g = Grid2D::new(-0.5, 0.25, 0.125, 7, 5).unwrap();
        ScalarField::from_fn(g, |x| (3.0 * x[0]).sin() * x[1].exp() / 3.0).unwrap()
    }

    #[test]
    fn dump_then_load_is_identity() {
        let u = field();
        let back = parse_scalar(&scalar_csv(&u)).unwrap();
        assert!(back.grid.matches(&u.grid));
        assert_eq!(back.values, u.values);
    }

    #[test]
    fn nan_row_is_reported() {
        let text = scalar_csv(&field());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[4] = "0,0.25,NaN".into();
        let err = parse_scalar(&lines.join("\n")).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 5),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn deleted_row_is_a_missing_node() {
        let text = scalar_csv(&field());
        let lines: Vec<&str> = text.lines().collect();
        // row-major: data line 1 + (j * 7 + i); drop node (3, 2)
        let drop = 1 + 2 * 7 + 3;
        let kept: Vec<&str> = lines.iter().enumerate().filter(|(k, _)| *k != drop).map(|(_, l)| *l).collect();
        let err = parse_scalar(&kept.join("\n")).unwrap_err().to_string();
        assert!(err.contains("missing node (3, 2)"), "{err}");
    }

    #[test]
    fn non_uniform_lattice_is_rejected() {
        let text = "x,y,value\n0,0,1\n1,0,1\n3,0,1\n0,1,1\n1,1,1\n3,1,1\n0,2,1\n1,2,1\n3,2,1\n";
        assert!(parse_scalar(text).unwrap_err().to_string().contains("non-uniform"));
    }

    #[test]
    fn vector_dump_has_one_row_per_cell() {
        let u = field();
        let g = crate::grid::gradient(&u);
        let text = vector_csv(&g);
        assert!(text.starts_with("x,y,fx,fy\n"));
        assert_eq!(text.lines().count(), 1 + u.grid.n_cells());
    }
}
