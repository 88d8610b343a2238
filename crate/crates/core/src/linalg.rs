//! Small sparse linear-algebra helpers on top of `nalgebra-sparse`.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};

/// Builds a CSC matrix from `(row, col, value)` triplets, summing duplicates.
pub fn csc_from_triplets(n: usize, m: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut coo = CooMatrix::new(n, m);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CscMatrix::from(&coo)
}

/// `y = A x` for a CSC matrix.
pub fn spmv(a: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    assert_eq!(a.ncols(), x.len(), "spmv dimension mismatch");
    let mut y = DVector::zeros(a.nrows());
    for (j, col) in a.col_iter().enumerate() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * xj;
        }
    }
    y
}

/// `x^T A y`.
pub fn bilinear(a: &CscMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&spmv(a, y))
}

/// Largest `|A_ij - A_ji|`.
pub fn symmetry_defect(a: &CscMatrix<f64>) -> f64 {
    let t = a.transpose();
    let mut worst = 0.0f64;
    for (i, j, v) in a.triplet_iter() {
        let other = t.get_entry(i, j).map(|e| e.into_value()).unwrap_or(0.0);
        worst = worst.max((v - other).abs());
    }
    for (i, j, v) in t.triplet_iter() {
        if a.get_entry(i, j).is_none() {
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Positions of the diagonal entries in the value array of a square CSC matrix.
pub fn diagonal_positions(a: &CscMatrix<f64>) -> Result<Vec<usize>> {
    let offsets = a.col_offsets();
    let rows = a.row_indices();
    (0..a.ncols())
        .map(|j| {
            (offsets[j]..offsets[j + 1])
                .find(|&k| rows[k] == j)
                .ok_or_else(|| Error::Internal(format!("structural zero on diagonal at {j}")))
        })
        .collect()
}

/// Cholesky factor of a sparse SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: CscCholesky<f64>,
    n: usize,
}

impl SpdFactor {
    pub fn new(a: &CscMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Internal("factorizing a non-square matrix".into()));
        }
        let chol = CscCholesky::factor(a)
            .map_err(|e| Error::Internal(format!("Cholesky factorization failed: {e}")))?;
        Ok(Self { chol, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        if self.n == 0 {
            return DVector::zeros(0);
        }
        let x = self.chol.solve(b);
        DVector::from_column_slice(x.as_slice())
    }

    /// Smallest diagonal entry of the factor squared, a cheap lower-side
    /// indicator of conditioning.
    pub fn min_pivot(&self) -> f64 {
        let l = self.chol.l();
        (0..self.n)
            .map(|j| {
                l.get_entry(j, j)
                    .map(|e| e.into_value())
                    .unwrap_or(0.0)
                    .powi(2)
            })
            .fold(f64::INFINITY, f64::min)
    }
}
