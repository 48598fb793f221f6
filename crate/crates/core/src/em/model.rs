use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelParams;

/// Zero-mean GP mixture: weights and per-component kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub components: Vec<KernelParams>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<KernelParams>) -> Result<Self> {
        let model = Self { weights, components };
        model.validate()?;
        Ok(model)
    }

    /// Equal weights over the given components.
    pub fn uniform(components: Vec<KernelParams>) -> Result<Self> {
        let g = components.len();
        Self::new(vec![1.0 / g as f64; g], components)
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if self.weights.len() != self.components.len() {
            return Err(Error::Domain(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("mixture weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("mixture weights sum to {total}, not 1")));
        }
        self.components.iter().try_for_each(KernelParams::validate)
    }
}

/// Posterior membership probabilities, `N × G`, rows summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    n: usize,
    g: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let g = rows.first().map_or(0, Vec::len);
        if n == 0 || g == 0 || rows.iter().any(|r| r.len() != g) {
            return Err(Error::Domain("responsibilities must be a non-empty rectangular matrix".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Self {
            n,
            g,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub(crate) fn from_raw(n: usize, g: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * g);
        Self { n, g, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.g..(i + 1) * self.g]
    }

    pub fn get(&self, i: usize, g: usize) -> f64 {
        self.data[i * self.g + g]
    }

    /// Weights of component `g` across curves.
    pub fn column(&self, g: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, g)).collect()
    }

    /// `Σ_i W[i, g]` for each component.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.g).map(|g| self.column(g).iter().sum()).collect()
    }
}

/// Hard labels (1-based): the most probable component per row, ties to the smallest index.
pub fn assign_clusters(w: &Responsibilities) -> Vec<usize> {
    (0..w.n())
        .map(|i| {
            let row = w.row(i);
            let mut best = 0;
            for (g, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = g;
                }
            }
            best + 1
        })
        .collect()
}
