//! Ridge-jittered normal equations solved by Cholesky factorization.

use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-8;

/// Dense row-major design matrix.
#[derive(Clone, Debug)]
pub struct Design {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn new(cols: usize) -> Self {
        Design { rows: 0, cols, data: Vec::new() }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Lower-triangular factor of `XᵀX + ridge·I`.
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn of_gram(x: &Design, ridge: f64) -> Result<Self> {
        let p = x.cols;
        let mut a = vec![0.0; p * p];
        for r in 0..x.rows {
            let row = x.row(r);
            for i in 0..p {
                let xi = row[i];
                if xi == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    a[i * p + j] += xi * row[j];
                }
            }
        }
        for i in 0..p {
            a[i * p + i] += ridge;
        }
        Self::factor(a, p)
    }

    /// Factors a symmetric matrix given by its lower triangle.
    fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                let diag: Vec<f64> = (0..j).map(|i| a[i * n + i]).collect();
                let (lo, hi) = diag
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let cond = if lo > 0.0 && j > 0 { (hi / lo).powi(2) } else { f64::INFINITY };
                return Err(Error::Numerical(format!(
                    "normal equations are singular at pivot {j} of {n} even with ridge jitter (condition estimate {cond:.3e})"
                )));
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l: a })
    }

    /// Solves `L Lᵀ β = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// `Xᵀy`.
pub fn xty(x: &Design, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.cols];
    for r in 0..x.rows {
        let yr = y[r];
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v * yr;
        }
    }
    out
}

/// Minimizer of `‖Xβ − y‖² + ridge·‖β‖²`.
pub fn ridge_lstsq(x: &Design, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    Ok(Cholesky::of_gram(x, ridge)?.solve(&xty(x, y)))
}
