//! Brute-force oracles shared by the integration tests. Nothing here calls the
//! library's linear algebra: inverses and determinants come from Gauss-Jordan
//! elimination with partial pivoting, and kernels are evaluated from the formula.

#![allow(dead_code)]

use std::f64::consts::PI;

use gpmix::kernel::{KernelFamily, KernelParams};

pub type Mat = Vec<Vec<f64>>;

/// Kernel matrix with the nugget on the diagonal, straight from the formula.
pub fn kernel_matrix(params: &KernelParams, xs: &[f64]) -> Mat {
    let s2 = params.sigma * params.sigma;
    xs.iter()
        .enumerate()
        .map(|(i, &a)| {
            xs.iter()
                .enumerate()
                .map(|(j, &b)| {
                    let r = (a - b).abs();
                    let k = match params.family {
                        KernelFamily::SquaredExponential => s2 * (-(r * r) / (params.l * params.l)).exp(),
                        KernelFamily::Matern12 => s2 * (-r / params.l).exp(),
                    };
                    if i == j {
                        k + params.nugget
                    } else {
                        k
                    }
                })
                .collect()
        })
        .collect()
}

/// Inverse and log-determinant by Gauss-Jordan elimination.
pub fn inverse_logdet(a: &Mat) -> (Mat, f64) {
    let n = a.len();
    let mut m: Mat = a.clone();
    let mut inv: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut logdet = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        assert!(p != 0.0, "singular matrix");
        // row swaps flip the sign; SPD inputs end with a positive product
        logdet += p.abs().ln();
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r][j] -= f * m[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    (inv, logdet)
}

pub fn quad_form(a: &Mat, y: &[f64]) -> f64 {
    a.iter()
        .zip(y)
        .map(|(row, yi)| yi * row.iter().zip(y).map(|(v, yj)| v * yj).sum::<f64>())
        .sum()
}

/// `log N(y; 0, K)` through an explicit inverse and determinant.
pub fn mvn_logpdf(y: &[f64], k: &Mat) -> f64 {
    let (inv, logdet) = inverse_logdet(k);
    -0.5 * (y.len() as f64) * (2.0 * PI).ln() - 0.5 * logdet - 0.5 * quad_form(&inv, y)
}

/// Sub-matrix on index sets.
pub fn sub(k: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    rows.iter().map(|&i| cols.iter().map(|&j| k[i][j]).collect()).collect()
}

/// Variance of `y_i` given `y_set` under `N(0, K)`: `K_ii - K_iS K_SS⁻¹ K_Si`.
pub fn conditional_variance(k: &Mat, i: usize, set: &[usize]) -> f64 {
    if set.is_empty() {
        return k[i][i];
    }
    let (inv, _) = inverse_logdet(&sub(k, set, set));
    let kis: Vec<f64> = set.iter().map(|&j| k[i][j]).collect();
    k[i][i] - quad_form(&inv, &kis)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
