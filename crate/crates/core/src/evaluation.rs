//! Partition agreement and Gaussian approximation-quality metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{build_covariance, Grid, KernelParams};
use crate::linalg::{dense_cholesky, solve_lower, DenseMatrix};
use crate::vecchia::{implied_covariance, vecchia_inverse_cholesky, VecchiaPlan, DENSIFY_LIMIT};

/// Order-independent sum: terms are sorted before accumulation.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    -sorted_sum(
        counts
            .filter(|&c| c > 0)
            .map(|c| {
                let q = c as f64 / n;
                q * q.ln()
            })
            .collect(),
    )
}

/// Normalized mutual information `I(a; b) / sqrt(H(a) H(b))` with natural logs.
///
/// Two constant partitions score 1; one constant partition against a
/// non-constant one scores 0. Label values are arbitrary identifiers.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "partitions have different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("partitions are empty".into()));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    match (ha > 0.0, hb > 0.0) {
        (false, false) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mi = sorted_sum(
        joint
            .iter()
            .map(|(&(x, y), &c)| {
                let c = c as f64;
                c / n * (c * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
            })
            .collect(),
    );
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// `KL(N(0, k1) ‖ N(0, k2)) = ½ (tr(k2⁻¹ k1) - p + log det k2 - log det k1)`.
pub fn gaussian_kl(k1: &DenseMatrix, k2: &DenseMatrix) -> Result<f64> {
    if !k1.is_square() || k1.rows() != k2.rows() || k1.cols() != k2.cols() {
        return Err(Error::Domain(format!(
            "covariances must be square and equal-sized ({}x{} vs {}x{})",
            k1.rows(),
            k1.cols(),
            k2.rows(),
            k2.cols()
        )));
    }
    let p = k1.rows();
    let l1 = dense_cholesky(k1)?;
    let l2 = dense_cholesky(k2)?;
    // tr(k2⁻¹ k1) = ‖L2⁻¹ L1‖²_F, one triangular solve per column of L1
    let trace: f64 = (0..p)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = (0..p).map(|i| l1[(i, j)]).collect();
            solve_lower(&l2, &col).iter().map(|v| v * v).sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let logdet_ratio: f64 = (0..p).map(|i| (l2[(i, i)] / l1[(i, i)]).ln()).sum();
    Ok((0.5 * (trace - p as f64) + logdet_ratio).max(0.0))
}

/// KL divergence from the exact GP covariance to its Vecchia approximation for each
/// conditioning-set size in `ms`, all sharing one maximin ordering.
pub fn vecchia_kl_curve(params: &KernelParams, grid: &Grid, ms: &[usize]) -> Result<Vec<(usize, f64)>> {
    if grid.len() > DENSIFY_LIMIT {
        return Err(Error::TooLarge {
            dim: grid.len(),
            limit: DENSIFY_LIMIT,
        });
    }
    if ms.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("conditioning-set sizes must be sorted ascending".into()));
    }
    let plans = ms
        .iter()
        .map(|&m| VecchiaPlan::build(grid, m))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = plans.first() else {
        return Ok(Vec::new());
    };
    let k = build_covariance(params, &first.ordered_grid(grid))?;
    plans
        .par_iter()
        .map(|plan| {
            let u = vecchia_inverse_cholesky(params, grid, plan)?;
            let khat = implied_covariance(&u)?;
            Ok((plan.m(), gaussian_kl(&k, &khat)?))
        })
        .collect()
}
