//! Covariance kernels and input grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Jitter added to the covariance diagonal, relative to `sigma²`.
pub const DEFAULT_RELATIVE_NUGGET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `σ² exp(-(xi - xj)² / l²)`.
    SquaredExponential,
    /// Matérn with smoothness 1/2: `σ² exp(-|xi - xj| / l)`.
    Matern12,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sqexp" | "squaredexponential" | "se" | "rbf" => Ok(KernelFamily::SquaredExponential),
            "matern12" | "exponential" => Ok(KernelFamily::Matern12),
            _ => Err(Error::Domain(format!("unknown kernel family '{s}'"))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::SquaredExponential => f.write_str("sqexp"),
            KernelFamily::Matern12 => f.write_str("matern12"),
        }
    }
}

/// Stationary covariance function with range `l`, scale `sigma` and a diagonal nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub l: f64,
    pub sigma: f64,
    pub nugget: f64,
}

impl KernelParams {
    /// Kernel with the default nugget `1e-8 · sigma²`.
    pub fn new(family: KernelFamily, l: f64, sigma: f64) -> Result<Self> {
        Self::with_nugget(family, l, sigma, DEFAULT_RELATIVE_NUGGET * sigma * sigma)
    }

    pub fn with_nugget(family: KernelFamily, l: f64, sigma: f64, nugget: f64) -> Result<Self> {
        let params = Self {
            family,
            l,
            sigma,
            nugget,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn squared_exponential(l: f64, sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, l, sigma)
    }

    pub fn matern12(l: f64, sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern12, l, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::Domain(format!("range l must be positive, got {}", self.l)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Domain(format!(
                "scale sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::Domain(format!(
                "nugget must be non-negative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    /// Kernel value at distance `r ≥ 0`, without the nugget.
    #[inline]
    pub fn cov(&self, r: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.family {
            KernelFamily::SquaredExponential => {
                let t = r / self.l;
                s2 * (-t * t).exp()
            }
            KernelFamily::Matern12 => s2 * (-r / self.l).exp(),
        }
    }

    /// Kernel value and its derivatives with respect to `log l` and `log sigma`
    /// at distance `r`, nugget excluded.
    #[inline]
    pub fn cov_with_log_grad(&self, r: f64) -> (f64, f64, f64) {
        let k = self.cov(r);
        let d_log_l = match self.family {
            KernelFamily::SquaredExponential => {
                let t = r / self.l;
                2.0 * t * t * k
            }
            KernelFamily::Matern12 => r / self.l * k,
        };
        (k, d_log_l, 2.0 * k)
    }

    /// Variance at a single input: `sigma² + nugget`.
    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma + self.nugget
    }

    pub fn with_log_params(&self, log_l: f64, log_sigma: f64) -> Self {
        Self {
            l: log_l.exp(),
            sigma: log_sigma.exp(),
            ..*self
        }
    }
}

/// Evaluates the kernel between two inputs. The nugget is not included here;
/// it belongs to the diagonal of a covariance matrix.
pub fn kernel_eval(params: &KernelParams, xi: f64, xj: f64) -> Result<f64> {
    if !xi.is_finite() || !xj.is_finite() {
        return Err(Error::Domain(format!(
            "kernel inputs must be finite, got {xi} and {xj}"
        )));
    }
    params.validate()?;
    Ok(params.cov((xi - xj).abs()))
}

/// One-dimensional input locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Grid from strictly increasing finite points.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        Self::check_finite(&points)?;
        if let Some(w) = points.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "grid points must be strictly increasing (index {} = {}, index {} = {})",
                w,
                points[w],
                w + 1,
                points[w + 1]
            )));
        }
        Ok(Self { points })
    }

    /// Grid from distinct finite points in arbitrary storage order.
    pub fn from_unordered(points: Vec<f64>) -> Result<Self> {
        Self::check_finite(&points)?;
        let mut sorted = points.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("duplicate grid point {}", w[0])));
        }
        Ok(Self { points })
    }

    /// `p` equally spaced points on `[a, b]` inclusive.
    pub fn uniform(a: f64, b: f64, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Domain("grid needs at least one point".into()));
        }
        if p == 1 {
            return Self::new(vec![a]);
        }
        // weighted form keeps both endpoints exact
        let n = (p - 1) as f64;
        Self::new((0..p).map(|i| (a * (n - i as f64) + b * i as f64) / n).collect())
    }

    fn check_finite(points: &[f64]) -> Result<()> {
        if points.is_empty() {
            return Err(Error::Domain("grid needs at least one point".into()));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "grid point {i} is not finite ({})",
                points[i]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid restricted to `range`, keeping storage order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::from_unordered(self.points[range].to_vec())
    }

    /// Grid in the order given by `perm` (`out[a] = self[perm[a]]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: perm.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

/// Covariance matrix on the grid, exactly symmetric with diagonal `sigma² + nugget`.
pub fn build_covariance(params: &KernelParams, grid: &Grid) -> Result<DenseMatrix> {
    params.validate()?;
    let x = grid.points();
    let diag = params.variance();
    Ok(DenseMatrix::symmetric_from_fn(x.len(), |i, j| {
        if i == j {
            diag
        } else {
            params.cov((x[i] - x[j]).abs())
        }
    }))
}
