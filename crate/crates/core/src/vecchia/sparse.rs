use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::plan::SparsityPattern;

/// Row-compressed lower-triangular matrix. Within a row, columns ascend and
/// the diagonal entry is stored last.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLowerTriangular {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseLowerTriangular {
    /// Assembles from per-row `(columns, values)`; the diagonal must be the last entry of each row.
    pub(crate) fn from_rows(rows: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(|r| r.0.len()).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, (c, v)) in rows.into_iter().enumerate() {
            if c.len() != v.len() || c.last() != Some(&i) {
                return Err(Error::Domain(format!(
                    "row {i} must end with its diagonal entry"
                )));
            }
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Domain(format!("row {i} columns are not ascending")));
            }
            cols.extend(c);
            vals.extend(v);
            row_ptr.push(cols.len());
        }
        Ok(Self {
            row_ptr,
            cols,
            vals,
        })
    }

    /// Lower triangle of a dense matrix restricted to `pattern`.
    pub fn from_dense(dense: &DenseMatrix, pattern: &SparsityPattern) -> Result<Self> {
        let rows = (0..pattern.dim())
            .map(|i| {
                let c = pattern.row(i).to_vec();
                let v = c.iter().map(|&j| dense[(i, j)]).collect();
                (c, v)
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn identity(p: usize) -> Self {
        Self {
            row_ptr: (0..=p).collect(),
            cols: (0..p).collect(),
            vals: vec![1.0; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Columns and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.vals[self.row_ptr[i + 1] - 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn offdiagonal_nnz(&self) -> usize {
        self.nnz() - self.dim()
    }

    pub fn pattern(&self) -> SparsityPattern {
        SparsityPattern::from_offdiagonal(
            (0..self.dim())
                .map(|i| {
                    let c = self.row(i).0;
                    c[..c.len() - 1].to_vec()
                })
                .collect(),
        )
        .expect("stored rows are lower-triangular")
    }

    pub fn sum_log_diag(&self) -> f64 {
        (0..self.dim()).map(|i| self.diag(i).ln()).sum()
    }

    /// `L y`.
    pub fn mul_vec(&self, y: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * y[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let p = self.dim();
        let mut d = DenseMatrix::zeros(p, p);
        for i in 0..p {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[(i, j)] = a;
            }
        }
        d
    }
}
