use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::exact;
use crate::kernel::{Grid, KernelParams};
use crate::linalg::pairwise_sum;
use crate::vecchia::{self, VecchiaPlan};

use super::model::MixtureModel;

/// Likelihood backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    /// Dense covariance, `O(p³)` per factorization.
    Exact,
    /// Vecchia approximation with conditioning sets of size at most `m`.
    Vecchia { m: usize },
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Exact => f.write_str("exact"),
            Backend::Vecchia { m } => write!(f, "vecchia(m={m})"),
        }
    }
}

/// How the M-step obtains hyperparameter gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    /// Central differences of the backend's own weighted log-likelihood.
    CentralFd,
}

enum Parts {
    Exact(exact::ExactEval),
    Vecchia(vecchia::VecchiaEval),
}

/// One component evaluated at one parameter value: per-curve log-densities
/// and, optionally, the weight-independent pieces of its gradient.
pub struct ComponentEval {
    parts: Parts,
    gradient: bool,
}

impl ComponentEval {
    pub fn logliks(&self) -> &[f64] {
        match &self.parts {
            Parts::Exact(e) => &e.logliks,
            Parts::Vecchia(v) => &v.logliks,
        }
    }

    /// `Σ_i w_i ℓ_i`, zero weights skipped.
    pub fn weighted_loglik(&self, weights: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .logliks()
            .iter()
            .zip(weights)
            .map(|(l, w)| if *w == 0.0 { 0.0 } else { w * l })
            .collect();
        pairwise_sum(&terms)
    }
}

enum Kind {
    Exact,
    Vecchia(VecchiaPlan, vecchia::DistanceTable),
}

/// A dataset prepared for one backend: for Vecchia, the plan is built once and
/// grid and curves are stored in its ordering.
pub struct LikelihoodEngine {
    kind: Kind,
    grid: Grid,
    curves: Vec<Vec<f64>>,
}

impl LikelihoodEngine {
    pub fn new(ds: &Dataset, backend: Backend) -> Result<Self> {
        match backend {
            Backend::Exact => Ok(Self {
                kind: Kind::Exact,
                grid: ds.grid.clone(),
                curves: ds.curves.clone(),
            }),
            Backend::Vecchia { m } => {
                let plan = VecchiaPlan::build(&ds.grid, m)?;
                let grid = plan.ordered_grid(&ds.grid);
                let curves = ds.curves.iter().map(|c| plan.to_ordered(c)).collect();
                let table = vecchia::DistanceTable::new(grid.points(), &plan);
                Ok(Self {
                    kind: Kind::Vecchia(plan, table),
                    grid,
                    curves,
                })
            }
        }
    }

    pub fn backend(&self) -> Backend {
        match &self.kind {
            Kind::Exact => Backend::Exact,
            Kind::Vecchia(plan, _) => Backend::Vecchia { m: plan.m() },
        }
    }

    pub fn n(&self) -> usize {
        self.curves.len()
    }

    /// Grid length.
    pub fn p(&self) -> usize {
        self.grid.len()
    }

    fn curve_refs(&self) -> Vec<&[f64]> {
        self.curves.iter().map(Vec::as_slice).collect()
    }

    /// Evaluates every curve under one component, factoring its covariance
    /// once. With `gradient`, the evaluation also carries everything needed for
    /// weighted gradients, so the M-step reuses the E-step's factorization.
    pub fn evaluate(&self, params: &KernelParams, gradient: bool) -> Result<ComponentEval> {
        let curves = self.curve_refs();
        let parts = match &self.kind {
            Kind::Exact => Parts::Exact(exact::exact_eval(params, &self.grid, &curves, gradient)?),
            Kind::Vecchia(plan, table) => Parts::Vecchia(vecchia::vecchia_eval(params, plan, table, &curves, gradient)?),
        };
        Ok(ComponentEval { parts, gradient })
    }

    /// Log-density of every curve under one component.
    pub fn component_logliks(&self, params: &KernelParams) -> Result<Vec<f64>> {
        Ok(self.evaluate(params, false)?.logliks().to_vec())
    }

    /// `ℓ[i][g]`: log-density of curve `i` under component `g`.
    pub fn loglik_matrix(&self, model: &MixtureModel) -> Result<Vec<Vec<f64>>> {
        let per_component = model
            .components
            .par_iter()
            .map(|c| self.component_logliks(c))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.n())
            .map(|i| per_component.iter().map(|col| col[i]).collect())
            .collect())
    }

    /// `Σ_i w_i log N(y_i; 0, K(params))` under this backend.
    pub fn weighted_loglik(&self, params: &KernelParams, weights: &[f64]) -> Result<f64> {
        Ok(self.evaluate(params, false)?.weighted_loglik(weights))
    }

    /// Weighted gradient from an evaluation made by [`Self::evaluate`] with `gradient = true`.
    pub fn eval_gradient(&self, eval: &ComponentEval, weights: &[f64]) -> Result<[f64; 2]> {
        if !eval.gradient {
            return Err(Error::Domain("evaluation was made without gradient pieces".into()));
        }
        if weights.len() != self.n() {
            return Err(Error::Domain(format!(
                "{} weights for {} curves",
                weights.len(),
                self.n()
            )));
        }
        let grad = match (&eval.parts, &self.kind) {
            (Parts::Exact(e), _) => {
                let total: f64 = weights.iter().sum();
                let mut g = [0.0; 2];
                for (t, gt) in g.iter_mut().enumerate() {
                    let terms: Vec<f64> = e
                        .half_quad
                        .iter()
                        .zip(weights)
                        .map(|(q, &w)| if w == 0.0 { 0.0 } else { w * q[t] })
                        .collect();
                    *gt = pairwise_sum(&terms) - total * e.half_trace[t];
                }
                g
            }
            (Parts::Vecchia(v), Kind::Vecchia(plan, _)) => v.weighted_gradient(plan, &self.curve_refs(), weights),
            (Parts::Vecchia(_), Kind::Exact) => unreachable!("evaluation came from another engine"),
        };
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::Numerical("non-finite likelihood gradient".into()));
        }
        Ok(grad)
    }

    /// Weighted log-likelihood and its gradient with respect to `(log l, log sigma)`.
    pub fn weighted_log_gradient(
        &self,
        params: &KernelParams,
        weights: &[f64],
        mode: GradientMode,
        fd_step: f64,
    ) -> Result<(f64, [f64; 2])> {
        match mode {
            GradientMode::Analytic => {
                let eval = self.evaluate(params, true)?;
                Ok((eval.weighted_loglik(weights), self.eval_gradient(&eval, weights)?))
            }
            GradientMode::CentralFd => {
                let value = self.weighted_loglik(params, weights)?;
                let (ll, ls) = (params.l.ln(), params.sigma.ln());
                let mut grad = [0.0; 2];
                for (t, g) in grad.iter_mut().enumerate() {
                    let base = if t == 0 { ll } else { ls };
                    let h = fd_step * base.abs().max(1.0);
                    let shifted = |delta: f64| {
                        if t == 0 {
                            params.with_log_params(ll + delta, ls)
                        } else {
                            params.with_log_params(ll, ls + delta)
                        }
                    };
                    let plus = self.weighted_loglik(&shifted(h), weights)?;
                    let minus = self.weighted_loglik(&shifted(-h), weights)?;
                    *g = (plus - minus) / (2.0 * h);
                }
                if !grad.iter().all(|g| g.is_finite()) {
                    return Err(Error::Numerical("non-finite finite-difference gradient".into()));
                }
                Ok((value, grad))
            }
        }
    }
}
