//! Small dense linear-algebra kernel: row-major matrices, Cholesky, triangular solves.
//!
//! Everything here is written against plain `Vec<f64>` storage so that the exact
//! backend and the Vecchia backend share the same arithmetic and can be timed
//! against each other on equal footing.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Fills the lower triangle from `f` and mirrors it, so the result is exactly symmetric.
    pub fn symmetric_from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Domain(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Domain(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Reorders rows and columns: `out[(a, b)] = self[(perm[a], perm[b])]`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        Self::from_fn(perm.len(), perm.len(), |a, b| self[(perm[a], perm[b])])
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max |self - other| / max |other|`.
    pub fn max_rel_diff(&self, other: &DenseMatrix) -> f64 {
        let scale = other.max_abs().max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
            / scale
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four independent accumulators in a fixed order: deterministic, and not
    // bound by the latency of a single running sum
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Pairwise (tree) summation. The association order depends only on the length,
/// so sums are reproducible no matter how the terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Lower Cholesky factor `L` with `L Lᵀ = K`. Only the lower triangle of `k` is read.
pub fn dense_cholesky(k: &DenseMatrix) -> Result<DenseMatrix> {
    if !k.is_square() {
        return Err(Error::Domain(format!(
            "cholesky needs a square matrix, got {}x{}",
            k.rows, k.cols
        )));
    }
    let n = k.rows;
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            u[i * n + j] = k.data[j * n + i];
        }
    }
    cholesky_upper_in_place(&mut u, n)?;
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            l.data[i * n + j] = u[j * n + i];
        }
    }
    Ok(l)
}

/// In-place Cholesky on a row-major `n × n` buffer whose upper triangle holds
/// `K`; on success the upper triangle holds `U` with `UᵀU = K`. The strict
/// lower triangle is neither read nor written.
///
/// Right-looking elimination: in row-major storage every update is a
/// contiguous axpy over a row of `U`.
pub fn cholesky_upper_in_place(u: &mut [f64], n: usize) -> Result<()> {
    debug_assert!(u.len() >= n * n);
    for p in 0..n {
        let pivot = u[p * n + p];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: p, value: pivot });
        }
        let d = pivot.sqrt();
        u[p * n + p] = d;
        let inv = 1.0 / d;
        u[p * n + p + 1..(p + 1) * n].iter_mut().for_each(|v| *v *= inv);
        let (done, rest) = u[..n * n].split_at_mut((p + 1) * n);
        let row_p = &done[p * n..];
        for (offset, row) in rest.chunks_exact_mut(n).enumerate() {
            let i = p + 1 + offset;
            let f = row_p[i];
            if f == 0.0 {
                continue;
            }
            for (x, &y) in row[i..].iter_mut().zip(&row_p[i..]) {
                *x -= f * y;
            }
        }
    }
    Ok(())
}

/// Overwrites `x` with `K⁻¹ x` given the upper factor from [`cholesky_upper_in_place`].
pub fn cholesky_upper_solve(u: &[f64], n: usize, x: &mut [f64]) {
    debug_assert_eq!(x.len(), n);
    // Uᵀ z = x, column sweeps over rows of U
    for j in 0..n {
        let row = &u[j * n..(j + 1) * n];
        x[j] /= row[j];
        let xj = x[j];
        for (xi, &uji) in x[j + 1..].iter_mut().zip(&row[j + 1..]) {
            *xi -= uji * xj;
        }
    }
    // U y = z
    for i in (0..n).rev() {
        let row = &u[i * n..(i + 1) * n];
        x[i] = (x[i] - dot(&row[i + 1..], &x[i + 1..])) / row[i];
    }
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(b.len(), n);
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &x[..i]);
        x[i] = (b[i] - s) / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        x[i] /= l[(i, i)];
        let xi = x[i];
        for (xj, &lij) in x[..i].iter_mut().zip(&l.row(i)[..i]) {
            *xj -= lij * xi;
        }
    }
    x
}

/// Solves `K x = b` given the Cholesky factor of `K`.
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// `log det K` from its Cholesky factor.
pub fn cholesky_logdet(l: &DenseMatrix) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of a lower-triangular matrix (result is lower-triangular).
pub fn lower_inverse(l: &DenseMatrix) -> DenseMatrix {
    let n = l.rows;
    let mut x = DenseMatrix::zeros(n, n);
    let mut acc = vec![0.0; n];
    for i in 0..n {
        acc[..i].iter_mut().for_each(|a| *a = 0.0);
        for k in 0..i {
            let lik = l.data[i * n + k];
            if lik == 0.0 {
                continue;
            }
            for (a, &xkj) in acc[..=k].iter_mut().zip(&x.data[k * n..k * n + k + 1]) {
                *a += lik * xkj;
            }
        }
        let inv_diag = 1.0 / l.data[i * n + i];
        for j in 0..i {
            x.data[i * n + j] = -acc[j] * inv_diag;
        }
        x.data[i * n + i] = inv_diag;
    }
    x
}

/// `K⁻¹` from the Cholesky factor of `K`, exactly symmetric.
pub fn cholesky_inverse(l: &DenseMatrix) -> DenseMatrix {
    let n = l.rows;
    let x = lower_inverse(l);
    // K⁻¹ = Xᵀ X with X = L⁻¹; accumulate the lower triangle by rows of X.
    let mut inv = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let xk = &x.data[k * n..k * n + k + 1];
        for a in 0..=k {
            let xka = xk[a];
            if xka == 0.0 {
                continue;
            }
            let row = &mut inv.data[a * n..a * n + a + 1];
            for (r, &xkb) in row.iter_mut().zip(&xk[..=a]) {
                *r += xka * xkb;
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            inv.data[b * n + a] = inv.data[a * n + b];
        }
    }
    inv
}
