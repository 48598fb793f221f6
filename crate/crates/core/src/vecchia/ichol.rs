use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::plan::SparsityPattern;
use super::sparse::SparseLowerTriangular;

/// Zero-fill incomplete Cholesky of `sigma` restricted to `pattern`.
///
/// For each row `i` and each `j < i` in the pattern,
/// `L_ij = (Σ_ij - Σ_{u<j} L_iu L_ju) / L_jj`, then
/// `L_ii = (Σ_ii - Σ_{u<i} L_iu²)^{1/2}`. Entries outside the pattern are
/// never formed. With the full lower pattern this is the dense Cholesky factor.
pub fn incomplete_cholesky(sigma: &DenseMatrix, pattern: &SparsityPattern) -> Result<SparseLowerTriangular> {
    let p = pattern.dim();
    if !sigma.is_square() || sigma.rows() != p {
        return Err(Error::Domain(format!(
            "pattern of dimension {p} does not match {}x{} matrix",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(p);
    for i in 0..p {
        let cols = pattern.row(i).to_vec();
        let mut vals = vec![0.0; cols.len()];
        let off = cols.len() - 1;
        for k in 0..off {
            let j = cols[k];
            let (jcols, jvals) = (&rows[j].0, &rows[j].1);
            // Σ_{u<j} L_iu L_ju over the shared support
            let mut s = 0.0;
            let (mut a, mut b) = (0, 0);
            while a < k && b + 1 < jcols.len() {
                match cols[a].cmp(&jcols[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        s += vals[a] * jvals[b];
                        a += 1;
                        b += 1;
                    }
                }
            }
            let ljj = *jvals.last().expect("row has a diagonal");
            vals[k] = (sigma[(i, j)] - s) / ljj;
        }
        let pivot = sigma[(i, i)] - vals[..off].iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: i, value: pivot });
        }
        vals[off] = pivot.sqrt();
        rows.push((cols, vals));
    }
    SparseLowerTriangular::from_rows(rows)
}
