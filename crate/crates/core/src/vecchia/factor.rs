use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::HALF_LN_2PI;
use crate::kernel::{Grid, KernelParams};
use crate::linalg::{cholesky_upper_in_place, cholesky_upper_solve, dot, lower_inverse, pairwise_sum, DenseMatrix};

use super::plan::VecchiaPlan;
use super::sparse::SparseLowerTriangular;

/// Largest dimension [`implied_covariance`] will densify.
pub const DENSIFY_LIMIT: usize = 2000;

/// Distinct pairwise distances used by a plan's local covariance blocks.
///
/// Pairs at bitwise-equal distance share one kernel evaluation, which on a
/// regular grid collapses the `O(p m²)` evaluations per factorization to a few
/// per grid spacing.
pub(crate) struct DistanceTable {
    dists: Vec<f64>,
    /// Per ordered position `i`, the packed strict lower triangle of the local
    /// block over `[c(i)..., i]`: entry `(a, b)` with `a > b` at `a(a-1)/2 + b`.
    slots: Vec<Vec<u32>>,
}

impl DistanceTable {
    pub(crate) fn new(xs: &[f64], plan: &VecchiaPlan) -> Self {
        let mut ids: HashMap<u64, u32> = HashMap::new();
        let mut dists = Vec::new();
        let slots = (0..plan.len())
            .map(|i| {
                let c = plan.cset(i);
                let point = |a: usize| if a < c.len() { xs[c[a]] } else { xs[i] };
                let q = c.len();
                let mut row = Vec::with_capacity(q * (q + 1) / 2);
                for a in 1..=q {
                    for b in 0..a {
                        let r = (point(a) - point(b)).abs();
                        let id = *ids.entry(r.to_bits()).or_insert_with(|| {
                            dists.push(r);
                            (dists.len() - 1) as u32
                        });
                        row.push(id);
                    }
                }
                row
            })
            .collect();
        Self { dists, slots }
    }

    fn len(&self) -> usize {
        self.slots.len()
    }

    /// Kernel value at every distinct distance.
    fn values(&self, params: &KernelParams) -> Vec<f64> {
        self.dists.iter().map(|&r| params.cov(r)).collect()
    }
}

/// Kriging weights `b = K[c,c]⁻¹ K[c,i]` and conditional variance `d` of one
/// ordered position.
struct Conditional {
    b: Vec<f64>,
    d: f64,
}

/// Conditional of position `i` given its `q` predecessors; `kv` holds the
/// kernel at each distinct distance of `table`. `scratch` is left holding the
/// upper Cholesky factor of `K[c,c]` (row-major, `q × q`).
fn conditional(
    params: &KernelParams,
    table: &DistanceTable,
    kv: &[f64],
    i: usize,
    q: usize,
    scratch: &mut Vec<f64>,
) -> Result<Conditional> {
    let diag = params.variance();
    scratch.resize(q * q, 0.0);
    // slot (a, b), a > b, is upper entry (b, a); slots are packed row by row
    let mut packed = table.slots[i].iter();
    for a in 0..q {
        for b in 0..a {
            scratch[b * q + a] = kv[*packed.next().expect("slot per pair") as usize];
        }
        scratch[a * q + a] = diag;
    }
    let kci: Vec<f64> = packed.map(|&id| kv[id as usize]).collect();
    cholesky_upper_in_place(scratch, q).map_err(|e| match e {
        Error::NotPositiveDefinite { value, .. } => Error::ConditionalVariance { index: i, value },
        other => other,
    })?;
    let mut b = kci.clone();
    cholesky_upper_solve(scratch, q, &mut b);
    let d = diag - dot(&kci, &b);
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::ConditionalVariance { index: i, value: d });
    }
    Ok(Conditional { b, d })
}

/// Sparse inverse Cholesky factor of the Vecchia-implied covariance.
///
/// Row `i` (ordered coordinates) holds `1/√d_i` on the diagonal and `-b_i/√d_i`
/// at the columns of `c(i)`, where `b_i` and `d_i` are the kriging weights and
/// conditional variance of position `i` given its conditioning set. The stored
/// matrix `L` is the transpose of the upper factor `U`, so `Lᵀ L = U Uᵀ = K̂⁻¹`.
pub fn vecchia_inverse_cholesky(
    params: &KernelParams,
    grid: &Grid,
    plan: &VecchiaPlan,
) -> Result<SparseLowerTriangular> {
    params.validate()?;
    if grid.len() != plan.len() {
        return Err(Error::Domain(format!(
            "plan built for {} points, grid has {}",
            plan.len(),
            grid.len()
        )));
    }
    let table = DistanceTable::new(plan.ordered_grid(grid).points(), plan);
    inverse_cholesky_ordered(params, plan, &table)
}

/// [`vecchia_inverse_cholesky`] with a prebuilt distance table.
fn inverse_cholesky_ordered(
    params: &KernelParams,
    plan: &VecchiaPlan,
    table: &DistanceTable,
) -> Result<SparseLowerTriangular> {
    let kv = table.values(params);
    let rows = (0..table.len())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let c = plan.cset(i);
            let cond = conditional(params, table, &kv, i, c.len(), scratch)?;
            let s = cond.d.sqrt();
            let mut cols = c.to_vec();
            cols.push(i);
            let mut vals: Vec<f64> = cond.b.iter().map(|b| -b / s).collect();
            vals.push(1.0 / s);
            Ok((cols, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    SparseLowerTriangular::from_rows(rows)
}

/// `log N(y; 0, K̂)` for `y` in ordered coordinates:
/// `-(p/2) log 2π + Σ log L_ii - ½ ‖L y‖²`.
pub fn vecchia_loglik(y: &[f64], factor: &SparseLowerTriangular) -> Result<f64> {
    if y.len() != factor.dim() {
        return Err(Error::Domain(format!(
            "vector of length {} does not match factor of dimension {}",
            y.len(),
            factor.dim()
        )));
    }
    let z = factor.mul_vec(y);
    Ok(-(y.len() as f64) * HALF_LN_2PI + factor.sum_log_diag() - 0.5 * dot(&z, &z))
}

/// Dense `K̂ = (Lᵀ L)⁻¹ = L⁻¹ L⁻ᵀ`. Validation utility, refused above [`DENSIFY_LIMIT`].
pub fn implied_covariance(factor: &SparseLowerTriangular) -> Result<DenseMatrix> {
    let p = factor.dim();
    if p > DENSIFY_LIMIT {
        return Err(Error::TooLarge {
            dim: p,
            limit: DENSIFY_LIMIT,
        });
    }
    let x = lower_inverse(&factor.to_dense());
    Ok(DenseMatrix::symmetric_from_fn(p, |a, b| {
        dot(&x.row(a)[..=b], &x.row(b)[..=b])
    }))
}

/// Gradient pieces of one ordered position: kriging weights `b`, their
/// derivatives `∂b = K_cc⁻¹ (∂k - ∂K_cc b)`, the conditional variance `d` and
/// its derivatives `∂d = ∂k_ii - 2 ∂kᵀ b + bᵀ ∂K_cc b`.
struct RowGradient {
    b: Vec<f64>,
    db: [Vec<f64>; 2],
    d: f64,
    dd: [f64; 2],
}

/// Per-curve Vecchia log-likelihoods at one parameter value, with per-row
/// gradient pieces when requested.
pub(crate) struct VecchiaEval {
    pub logliks: Vec<f64>,
    rows: Vec<RowGradient>,
}

/// Evaluates every curve (ordered coordinates) under the Vecchia density.
///
/// Position `i` contributes `-½ log 2π - ½ log d - ½ r²/d` with residual
/// `r = y_i - bᵀ y_c`. Per-row terms are summed pairwise so the result does
/// not depend on the thread count.
pub(crate) fn vecchia_eval(
    params: &KernelParams,
    plan: &VecchiaPlan,
    table: &DistanceTable,
    curves: &[&[f64]],
    gradient: bool,
) -> Result<VecchiaEval> {
    let evals: Vec<(f64, f64, f64)> = if gradient {
        table.dists.iter().map(|&r| params.cov_with_log_grad(r)).collect()
    } else {
        table.dists.iter().map(|&r| (params.cov(r), 0.0, 0.0)).collect()
    };
    let kv: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let per_row = (0..plan.len())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let c = plan.cset(i);
            let q = c.len();
            let cond = conditional(params, table, &kv, i, q, scratch)?;
            let d = cond.d;
            let base = -HALF_LN_2PI - 0.5 * d.ln();
            let terms: Vec<f64> = curves
                .iter()
                .map(|y| {
                    let r = y[i] - c.iter().zip(&cond.b).map(|(&j, &b)| b * y[j]).sum::<f64>();
                    base - 0.5 * r * r / d
                })
                .collect();
            if !gradient {
                return Ok((terms, None));
            }

            // log l: ∂b = K_cc⁻¹ (∂k - ∂K_cc b), ∂d = ∂k_ii - 2 ∂kᵀ b + bᵀ ∂K_cc b.
            // log sigma: ∂K = 2 (K - nugget I) gives ∂b = 2 nugget K_cc⁻¹ b and
            // ∂d = 2 (d - nugget) - 2 nugget bᵀb without cancellation.
            let ids = &table.slots[i];
            let b = &cond.b;
            let mut dkcc_b = vec![0.0; q];
            let mut packed = ids.iter();
            for a in 0..q {
                for bb in 0..a {
                    let gl = evals[*packed.next().expect("slot per pair") as usize].1;
                    dkcc_b[a] += gl * b[bb];
                    dkcc_b[bb] += gl * b[a];
                }
            }
            let dk: Vec<f64> = packed.map(|&id| evals[id as usize].1).collect();
            let nugget = params.nugget;
            let dd = [
                -2.0 * dot(&dk, b) + dot(b, &dkcc_b),
                2.0 * (d - nugget) - 2.0 * nugget * dot(b, b),
            ];
            let rhs_l: Vec<f64> = dk.iter().zip(&dkcc_b).map(|(k, kb)| k - kb).collect();
            let rhs_s: Vec<f64> = b.iter().map(|v| 2.0 * nugget * v).collect();
            let mut db = [rhs_l, rhs_s];
            for x in &mut db {
                cholesky_upper_solve(scratch, q, x);
            }
            Ok((terms, Some(RowGradient { b: cond.b, db, d, dd })))
        })
        .collect::<Result<Vec<_>>>()?;

    let p = per_row.len();
    let logliks: Vec<f64> = (0..curves.len())
        .map(|n| pairwise_sum(&per_row.iter().map(|(t, _)| t[n]).collect::<Vec<_>>()))
        .collect();
    if !logliks.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite Vecchia likelihood at l={}, sigma={}",
            params.l, params.sigma
        )));
    }
    let rows: Vec<RowGradient> = per_row.into_iter().filter_map(|(_, g)| g).collect();
    debug_assert!(rows.is_empty() || rows.len() == p);
    Ok(VecchiaEval { logliks, rows })
}

impl VecchiaEval {
    /// `Σ_n w_n ∇ log N(y_n; 0, K̂)` over `(log l, log sigma)`. Per row, with
    /// `S0 = Σ w`, `S2 = Σ w r²` and `e_n = ∂bᵀ y_{n,c}`, the derivative is
    /// `-½ S0 ∂d/d + ½ S2 ∂d/d² + Σ w r e / d`.
    ///
    /// Panics if the evaluation was made without gradient pieces.
    pub(crate) fn weighted_gradient(&self, plan: &VecchiaPlan, curves: &[&[f64]], weights: &[f64]) -> [f64; 2] {
        assert!(!self.rows.is_empty(), "evaluation carries no gradient pieces");
        let s0: f64 = weights.iter().sum();
        let terms: Vec<[f64; 2]> = self
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| {
                let c = plan.cset(i);
                let mut s2 = 0.0;
                let mut cross = [0.0; 2];
                for (y, &w) in curves.iter().zip(weights) {
                    if w == 0.0 {
                        continue;
                    }
                    let mut pred = 0.0;
                    let mut e = [0.0; 2];
                    for (a, &j) in c.iter().enumerate() {
                        pred += row.b[a] * y[j];
                        e[0] += row.db[0][a] * y[j];
                        e[1] += row.db[1][a] * y[j];
                    }
                    let r = y[i] - pred;
                    s2 += w * r * r;
                    cross[0] += w * r * e[0];
                    cross[1] += w * r * e[1];
                }
                let d = row.d;
                let mut g = [0.0; 2];
                for t in 0..2 {
                    g[t] = -0.5 * s0 * row.dd[t] / d + 0.5 * s2 * row.dd[t] / (d * d) + cross[t] / d;
                }
                g
            })
            .collect();
        [
            pairwise_sum(&terms.iter().map(|g| g[0]).collect::<Vec<_>>()),
            pairwise_sum(&terms.iter().map(|g| g[1]).collect::<Vec<_>>()),
        ]
    }
}
