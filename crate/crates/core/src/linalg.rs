//! Small dense linear-algebra helpers: a growable Cholesky factor and
//! compensated summation.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` of a symmetric positive definite
/// matrix `A = L Lᵀ`, stored row by row (row `i` holds `i + 1` entries).
///
/// Rows can be appended, which extends the factor of `A` to the factor of
/// the bordered matrix `[[A, b], [bᵀ, d]]` in O(n²).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    pub fn new() -> Self {
        Self::default()
    }

    /// Factor a full symmetric matrix given as row-major `n × n` entries.
    pub fn factor(n: usize, a: &[f64]) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut chol = Self { rows: Vec::with_capacity(n) };
        for i in 0..n {
            chol.append(&a[i * n..i * n + i], a[i * n + i])?;
        }
        Ok(chol)
    }

    /// Factor `a + jitter·I`, retrying once with `retry_jitter` added to the
    /// diagonal if the plain factorization fails.
    pub fn factor_with_retry(n: usize, a: &[f64], retry_jitter: f64) -> Result<Self> {
        match Self::factor(n, a) {
            Ok(c) => Ok(c),
            Err(_) => {
                let mut b = a.to_vec();
                for i in 0..n {
                    b[i * n + i] += retry_jitter;
                }
                Self::factor(n, &b)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Computes the new row `(l, d)` for appending the border `(col, diag)`
    /// without modifying the factor.
    pub fn border(&self, col: &[f64], diag: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.dim();
        assert_eq!(col.len(), n, "border column must match factor dimension");
        let l = self.forward(col);
        let sq = diag - l.iter().map(|v| v * v).sum::<f64>();
        if !(sq > 0.0) || !sq.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: n, value: sq });
        }
        Ok((l, sq.sqrt()))
    }

    /// Appends one row/column to the factored matrix.
    pub fn append(&mut self, col: &[f64], diag: f64) -> Result<()> {
        let (mut l, d) = self.border(col, diag)?;
        l.push(d);
        self.rows.push(l);
        Ok(())
    }

    /// Appends a row previously computed by [`Cholesky::border`].
    pub fn push_border(&mut self, mut l: Vec<f64>, d: f64) {
        assert_eq!(l.len(), self.dim());
        l.push(d);
        self.rows.push(l);
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z = Vec::with_capacity(n);
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&z).map(|(l, z)| l * z).sum();
            z.push((b[i] - s) / row[i]);
        }
        z
    }

    /// Solves `Lᵀ x = z` in place.
    fn backward(&self, z: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let s: f64 = z[i] - (i + 1..n).map(|j| self.rows[j][i] * z[j]).sum::<f64>();
            z[i] = s / self.rows[i][i];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = self.forward(b);
        self.backward(&mut z);
        z
    }

    /// `ln det A = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.rows.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>()
    }

    /// Entry `L[i][j]` (zero above the diagonal).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.rows[i][j]
        }
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
