//! Exact zero-mean Gaussian likelihood on the full covariance, its analytic
//! hyperparameter gradient, and GP sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{build_covariance, Grid, KernelParams};
use crate::linalg::{
    cholesky_inverse, cholesky_solve, dense_cholesky, dot, solve_lower, DenseMatrix,
};

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_dims(y: &[f64], k: &DenseMatrix) -> Result<()> {
    if !k.is_square() || k.rows() != y.len() {
        return Err(Error::Domain(format!(
            "vector of length {} does not match {}x{} covariance",
            y.len(),
            k.rows(),
            k.cols()
        )));
    }
    Ok(())
}

/// `log N_p(y; 0, K)` given the lower Cholesky factor of `K`.
pub fn loglik_from_cholesky(y: &[f64], l: &DenseMatrix) -> f64 {
    let p = y.len() as f64;
    let z = solve_lower(l, y);
    let log_diag: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    -p * HALF_LN_2PI - log_diag - 0.5 * dot(&z, &z)
}

/// `log N_p(y; 0, K)` through a dense Cholesky factorization.
pub fn gaussian_loglik_exact(y: &[f64], k: &DenseMatrix) -> Result<f64> {
    check_dims(y, k)?;
    let l = dense_cholesky(k)?;
    Ok(loglik_from_cholesky(y, &l))
}

/// Per-curve exact log-likelihoods at one parameter value, with the pieces of
/// their `(log l, log sigma)` gradients when requested.
///
/// With `α_n = K⁻¹ y_n`, curve `n` has gradient `½ α_nᵀ ∂K α_n - ½ tr(K⁻¹ ∂K)`;
/// `half_quad[n]` holds the first term and `half_trace` the second.
pub(crate) struct ExactEval {
    pub logliks: Vec<f64>,
    pub half_trace: [f64; 2],
    pub half_quad: Vec<[f64; 2]>,
}

pub(crate) fn exact_eval(
    params: &KernelParams,
    grid: &Grid,
    curves: &[&[f64]],
    gradient: bool,
) -> Result<ExactEval> {
    let chol = dense_cholesky(&build_covariance(params, grid)?)?;
    let logliks: Vec<f64> = curves.iter().map(|y| loglik_from_cholesky(y, &chol)).collect();
    if !gradient {
        return Ok(ExactEval {
            logliks,
            half_trace: [0.0; 2],
            half_quad: Vec::new(),
        });
    }
    let p = grid.len();
    let nc = curves.len();
    let inv = cholesky_inverse(&chol);
    // alphas[a * nc + n] = (K⁻¹ y_n)_a, so the inner loop over curves is contiguous
    let mut alphas = vec![0.0; p * nc];
    for (n, y) in curves.iter().enumerate() {
        for (a, v) in cholesky_solve(&chol, y).into_iter().enumerate() {
            alphas[a * nc + n] = v;
        }
    }

    let x = grid.points();
    let mut trace = [0.0; 2];
    let mut quad = vec![[0.0; 2]; nc];
    for a in 0..p {
        let aa = &alphas[a * nc..(a + 1) * nc];
        for b in 0..=a {
            let (_, dl, ds) = params.cov_with_log_grad((x[a] - x[b]).abs());
            // off-diagonal pairs appear twice in the symmetric sums
            let f = if a == b { 1.0 } else { 2.0 };
            trace[0] += f * inv[(a, b)] * dl;
            trace[1] += f * inv[(a, b)] * ds;
            let ab = &alphas[b * nc..(b + 1) * nc];
            for ((q, &va), &vb) in quad.iter_mut().zip(aa).zip(ab) {
                let prod = f * va * vb;
                q[0] += prod * dl;
                q[1] += prod * ds;
            }
        }
    }
    let eval = ExactEval {
        logliks,
        half_trace: [0.5 * trace[0], 0.5 * trace[1]],
        half_quad: quad.into_iter().map(|q| [0.5 * q[0], 0.5 * q[1]]).collect(),
    };
    let finite = eval.half_trace.iter().all(|v| v.is_finite())
        && eval.half_quad.iter().flatten().all(|v| v.is_finite())
        && eval.logliks.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::Numerical(format!(
            "non-finite exact likelihood or gradient at l={}, sigma={}",
            params.l, params.sigma
        )));
    }
    Ok(eval)
}

/// Gradient of `log N_p(y; 0, K(l, sigma))` with respect to `(l, sigma)`,
/// computed analytically as `½ (yᵀK⁻¹ ∂K K⁻¹y - tr(K⁻¹ ∂K))`.
pub fn loglik_gradient_exact(y: &[f64], params: &KernelParams, grid: &Grid) -> Result<(f64, f64)> {
    if y.len() != grid.len() {
        return Err(Error::Domain(format!(
            "vector of length {} does not match grid of length {}",
            y.len(),
            grid.len()
        )));
    }
    let eval = exact_eval(params, grid, &[y], true)?;
    let [ql, qs] = eval.half_quad[0];
    let [tl, ts] = eval.half_trace;
    Ok(((ql - tl) / params.l, (qs - ts) / params.sigma))
}

/// Seeded generator used for every random draw in the crate: ChaCha8 keyed
/// through `SeedableRng::seed_from_u64`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `L z` with `L` the Cholesky factor of the grid covariance and `z`
/// i.i.d. standard normal from the seeded ChaCha8 stream.
pub fn sample_gp(params: &KernelParams, grid: &Grid, seed: u64) -> Result<Vec<f64>> {
    let k = build_covariance(params, grid)?;
    let l = dense_cholesky(&k)?;
    Ok(sample_with_factor(&l, seed))
}

pub(crate) fn sample_with_factor(l: &DenseMatrix, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let z: Vec<f64> = (0..l.rows())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    (0..l.rows())
        .map(|i| dot(&l.row(i)[..=i], &z[..=i]))
        .collect()
}
