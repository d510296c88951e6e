//! Banded symmetric positive definite systems.
//!
//! Grid problems numbered row-major have bandwidth `nx + 1`, so a dense band
//! Cholesky costs `O(n * nx^2)` and is plenty for desk-scale grids. The
//! matrix is equilibrated symmetrically before factorisation so rows whose
//! weights differ by many orders of magnitude still factor stably.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: entry `(i, j)` with `i - bw <= j <= i`
/// is stored at `i * (bw + 1) + (i - j)`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to the symmetric pair `(i, j)` / `(j, i)`; give each
    /// off-diagonal pair once.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw, "entry ({r}, {c}) outside band {}", self.bw);
        self.data[r * (self.bw + 1) + (r - c)] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[r * (self.bw + 1) + (r - c)]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[i * (self.bw + 1)]
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=self.bw.min(i) {
                let j = i - k;
                y[i] += row[k] * x[j];
                y[j] += row[k] * x[i];
            }
        }
        y
    }

    /// Equilibrated Cholesky factorisation.
    pub fn factor(mut self) -> Result<BandedCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut scale = vec![0.0; n];
        for i in 0..n {
            let d = self.data[i * w];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
            scale[i] = 1.0 / d.sqrt();
        }
        for i in 0..n {
            for k in 0..=bw.min(i) {
                self.data[i * w + k] *= scale[i] * scale[i - k];
            }
        }
        // row-oriented band Cholesky: L(i, j) for j in [i - bw, i]
        let a = &mut self.data;
        for i in 0..n {
            let jlo = i.saturating_sub(bw);
            for j in jlo..=i {
                // sum_{k} L(i,k) L(j,k), k in [max(jlo, j - bw), j)
                let klo = jlo.max(j.saturating_sub(bw));
                let mut s = a[i * w + (i - j)];
                for k in klo..j {
                    s -= a[i * w + (i - k)] * a[j * w + (j - k)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    a[i * w] = s.sqrt();
                } else {
                    a[i * w + (i - j)] = s / a[j * w];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l: self.data, scale })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    scale: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        let mut y: Vec<f64> = b.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.l[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for (v, s) in y.iter_mut().zip(&self.scale) {
            *v *= s;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let a = laplacian_1d(n);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&x);
        let sol = a.factor().unwrap().solve(&b);
        for (p, q) in sol.iter().zip(&x) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn graded_system_keeps_relative_accuracy() {
        // D A D with D spanning 60 orders of magnitude
        let n = 40;
        let base = laplacian_1d(n);
        let d: Vec<f64> = (0..n).map(|i| 10f64.powf(-30.0 + 60.0 * i as f64 / (n - 1) as f64)).collect();
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, base.get(i, i) * d[i] * d[i]);
            if i > 0 {
                a.add(i, i - 1, base.get(i, i - 1) * d[i] * d[i - 1]);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 / d[i] * (1.0 + 0.1 * i as f64)).collect();
        let b = a.mul(&x);
        let sol = a.factor().unwrap().solve(&b);
        for (p, q) in sol.iter().zip(&x) {
            assert!(((p - q) / q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(matches!(a.factor(), Err(Error::NotPositiveDefinite { .. })));
    }
}
