use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{derive_seed, Dataset};
use crate::error::{Error, Result};
use crate::exact::rng_from_seed;
use crate::kernel::{KernelFamily, KernelParams, DEFAULT_RELATIVE_NUGGET};
use crate::linalg::pairwise_sum;

use super::engine::{Backend, ComponentEval, GradientMode, LikelihoodEngine};
use super::model::{assign_clusters, MixtureModel, Responsibilities};

/// Mass below which a component counts as empty.
const DEGENERATE_MASS: f64 = 1e-8;
/// Consecutive empty iterations before a component is re-seeded.
const DEGENERATE_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub backend: Backend,
    pub family: KernelFamily,
    /// Step size on the per-observation averaged gradient in `(log l, log sigma)`:
    /// the weighted gradient is divided by the component's mass times `p`.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Relative change of the observed-data log-likelihood that stops the run.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    /// Relative step for central differences, scaled by `max(1, |log θ|)`.
    pub fd_step: f64,
    /// Cap on `|Δ log θ|` per iteration.
    pub max_log_step: f64,
    /// Nugget as a fraction of the data's mean squared value; fixed during a fit.
    pub relative_nugget: f64,
    /// Range for the log-uniform draw of initial `l` and `sigma`.
    pub init_range: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Exact,
            family: KernelFamily::SquaredExponential,
            learning_rate: 0.1,
            max_iters: 500,
            tol: 1e-6,
            restarts: 5,
            seed: 0,
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-5,
            max_log_step: 0.5,
            relative_nugget: DEFAULT_RELATIVE_NUGGET,
            init_range: (0.05, 1.0),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if !(self.fd_step > 0.0) || !(self.max_log_step > 0.0) {
            return bad("fd_step and max_log_step must be positive");
        }
        if !(self.relative_nugget >= 0.0) {
            return bad("relative nugget must be non-negative");
        }
        let (lo, hi) = self.init_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("init range must satisfy 0 < lo <= hi");
        }
        if let Backend::Vecchia { m } = self.backend {
            if m == 0 {
                return bad("conditioning-set size m must be at least 1");
            }
        }
        Ok(())
    }
}

/// Wall-clock seconds per phase, summed over iterations of the returned run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub setup: f64,
    pub e_step: f64,
    pub m_step: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MixtureModel,
    pub responsibilities: Responsibilities,
    /// 1-based hard labels.
    pub labels: Vec<usize>,
    /// Expected complete-data log-likelihood at each E-step.
    pub objective_trace: Vec<f64>,
    /// Observed-data log-likelihood at each E-step.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Which restart produced this result.
    pub restart: usize,
    pub wall_times: PhaseTimes,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("at least one E-step")
    }

    /// Mean wall time of one E-step plus M-step.
    pub fn seconds_per_iteration(&self) -> f64 {
        (self.wall_times.e_step + self.wall_times.m_step) / self.iterations.max(1) as f64
    }
}

/// E-step output: responsibilities plus the log-likelihood summaries they imply.
#[derive(Debug, Clone)]
pub struct EStep {
    pub responsibilities: Responsibilities,
    /// `Σ_i log Σ_g π_g N(y_i; 0, K_g)`.
    pub loglik: f64,
    /// `Σ_i Σ_g W_ig log(π_g N(y_i; 0, K_g))`.
    pub objective: f64,
}

/// Posterior memberships `W[i, g] ∝ π_g N(y_i; 0, K_g)` via log-sum-exp.
pub fn e_step(engine: &LikelihoodEngine, model: &MixtureModel) -> Result<EStep> {
    model.validate()?;
    let ll = engine.loglik_matrix(model)?;
    e_step_from(model, &ll)
}

fn evaluate_all(engine: &LikelihoodEngine, model: &MixtureModel, gradient: bool) -> Result<Vec<ComponentEval>> {
    model
        .components
        .par_iter()
        .map(|c| engine.evaluate(c, gradient))
        .collect()
}

fn loglik_rows(evals: &[ComponentEval]) -> Vec<Vec<f64>> {
    let n = evals.first().map_or(0, |e| e.logliks().len());
    (0..n).map(|i| evals.iter().map(|e| e.logliks()[i]).collect()).collect()
}

/// E-step on precomputed `ℓ[i][g]`.
fn e_step_from(model: &MixtureModel, ll: &[Vec<f64>]) -> Result<EStep> {
    let g = model.n_components();
    let log_pi: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut data = Vec::with_capacity(ll.len() * g);
    let mut row_ll = Vec::with_capacity(ll.len());
    let mut row_obj = Vec::with_capacity(ll.len());
    for (i, row) in ll.iter().enumerate() {
        let joint: Vec<f64> = row.iter().zip(&log_pi).map(|(l, p)| l + p).collect();
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical(format!("NaN log-likelihood for curve {i}")));
        }
        let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!(
                "curve {i} has zero density under every component"
            )));
        }
        let exps: Vec<f64> = joint.iter().map(|j| (j - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        row_ll.push(max + total.ln());
        let mut obj = 0.0;
        for (e, j) in exps.iter().zip(&joint) {
            let w = e / total;
            if w > 0.0 {
                obj += w * j;
            }
            data.push(w);
        }
        row_obj.push(obj);
    }
    Ok(EStep {
        responsibilities: Responsibilities::from_raw(ll.len(), g, data),
        loglik: pairwise_sum(&row_ll),
        objective: pairwise_sum(&row_obj),
    })
}

/// One generalized-EM update: closed-form weights, then a single gradient-ascent
/// step per component in `(log l, log sigma)` on its weighted log-likelihood.
pub fn m_step(
    engine: &LikelihoodEngine,
    w: &Responsibilities,
    model: &MixtureModel,
    cfg: &FitConfig,
) -> Result<MixtureModel> {
    let evals = match cfg.gradient_mode {
        GradientMode::Analytic => Some(evaluate_all(engine, model, true)?),
        GradientMode::CentralFd => None,
    };
    m_step_with(engine, w, model, cfg, evals.as_deref())
}

/// M-step reusing analytic evaluations at the current parameters when given.
fn m_step_with(
    engine: &LikelihoodEngine,
    w: &Responsibilities,
    model: &MixtureModel,
    cfg: &FitConfig,
    evals: Option<&[ComponentEval]>,
) -> Result<MixtureModel> {
    let n = w.n() as f64;
    let masses = w.masses();
    let weights: Vec<f64> = masses.iter().map(|m| m / n).collect();
    let components = model
        .components
        .par_iter()
        .enumerate()
        .map(|(g, params)| {
            if masses[g] < DEGENERATE_MASS {
                return Ok(*params);
            }
            let column = w.column(g);
            let grad = match evals {
                Some(evals) => engine.eval_gradient(&evals[g], &column)?,
                None => engine.weighted_log_gradient(params, &column, cfg.gradient_mode, cfg.fd_step)?.1,
            };
            if !grad.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient for component {}", g + 1)));
            }
            // per-observation average, so one learning rate suits any N and p
            let scale = masses[g] * engine.p() as f64;
            let step = |gr: f64| (cfg.learning_rate * gr / scale).clamp(-cfg.max_log_step, cfg.max_log_step);
            let updated = params.with_log_params(params.l.ln() + step(grad[0]), params.sigma.ln() + step(grad[1]));
            updated.validate()?;
            Ok(updated)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = weights.iter().sum();
    Ok(MixtureModel {
        weights: weights.iter().map(|w| w / total).collect(),
        components,
    })
}

fn draw_params(rng: &mut ChaCha8Rng, cfg: &FitConfig, nugget: f64) -> KernelParams {
    let (lo, hi) = (cfg.init_range.0.ln(), cfg.init_range.1.ln());
    let mut draw = || if hi > lo { rng.random_range(lo..hi).exp() } else { lo.exp() };
    let l = draw();
    let sigma = draw();
    KernelParams {
        family: cfg.family,
        l,
        sigma,
        nugget,
    }
}

fn data_nugget(ds: &Dataset, relative: f64) -> f64 {
    let sq: Vec<f64> = ds.curves.iter().flatten().map(|v| v * v).collect();
    let mean_sq = pairwise_sum(&sq) / sq.len().max(1) as f64;
    relative * if mean_sq > 0.0 { mean_sq } else { 1.0 }
}

/// Runs EM from one seeded initialization.
fn fit_once(
    engine: &LikelihoodEngine,
    g: usize,
    cfg: &FitConfig,
    nugget: f64,
    restart: usize,
) -> Result<FitResult> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, restart as u64));
    let components = (0..g).map(|_| draw_params(&mut rng, cfg, nugget)).collect();
    let mut model = MixtureModel::uniform(components)?;

    let mut times = PhaseTimes::default();
    let mut objective_trace: Vec<f64> = Vec::new();
    let mut loglik_trace: Vec<f64> = Vec::new();
    let mut warnings = Vec::new();
    let mut empty_streak = vec![0usize; g];
    let mut reseeded = vec![false; g];
    let mut converged = false;
    let mut iterations = 0;
    let analytic = cfg.gradient_mode == GradientMode::Analytic;

    loop {
        let t = Instant::now();
        let evals = evaluate_all(engine, &model, analytic)?;
        let est = e_step_from(&model, &loglik_rows(&evals))?;
        times.e_step += t.elapsed().as_secs_f64();
        iterations += 1;
        if let Some(&prev) = loglik_trace.last() {
            let rel = (est.loglik - prev).abs() / prev.abs().max(1e-300);
            converged = rel <= cfg.tol;
        }
        objective_trace.push(est.objective);
        loglik_trace.push(est.loglik);
        if converged || iterations >= cfg.max_iters {
            let labels = assign_clusters(&est.responsibilities);
            return Ok(FitResult {
                model,
                responsibilities: est.responsibilities,
                labels,
                objective_trace,
                loglik_trace,
                iterations,
                converged,
                restart,
                wall_times: times,
                warnings,
            });
        }

        let masses = est.responsibilities.masses();
        let mut reseed = Vec::new();
        for (k, &mass) in masses.iter().enumerate() {
            if mass >= DEGENERATE_MASS {
                empty_streak[k] = 0;
                continue;
            }
            empty_streak[k] += 1;
            if empty_streak[k] >= DEGENERATE_PATIENCE {
                if reseeded[k] {
                    return Err(Error::DegenerateComponent {
                        component: k + 1,
                        iteration: iterations,
                        mass,
                    });
                }
                warnings.push(format!(
                    "restart {restart}: component {} emptied at iteration {iterations}; re-seeded",
                    k + 1
                ));
                reseeded[k] = true;
                empty_streak[k] = 0;
                reseed.push(k);
            }
        }

        let t = Instant::now();
        model = m_step_with(engine, &est.responsibilities, &model, cfg, analytic.then_some(evals.as_slice()))?;
        if !reseed.is_empty() {
            for &k in &reseed {
                model.components[k] = draw_params(&mut rng, cfg, nugget);
                model.weights[k] = 1.0 / g as f64;
            }
            let total: f64 = model.weights.iter().sum();
            model.weights.iter_mut().for_each(|w| *w /= total);
        }
        times.m_step += t.elapsed().as_secs_f64();
    }
}

/// Fits a `g`-component zero-mean GP mixture. Every restart draws its own
/// initialization from `cfg.seed`; the restart with the highest final
/// observed-data log-likelihood is returned.
pub fn fit(ds: &Dataset, g: usize, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if g == 0 || ds.n() < g {
        return Err(Error::Domain(format!(
            "need at least one component and no more components than curves (G={g}, N={})",
            ds.n()
        )));
    }
    let start = Instant::now();
    let engine = LikelihoodEngine::new(ds, cfg.backend)?;
    let setup = start.elapsed().as_secs_f64();
    let nugget = data_nugget(ds, cfg.relative_nugget);

    let mut best: Option<FitResult> = None;
    let mut failures = Vec::new();
    for restart in 0..cfg.restarts {
        match fit_once(&engine, g, cfg, nugget, restart) {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.final_loglik() > b.final_loglik()) {
                    best = Some(run);
                }
            }
            Err(e) if e.is_numerical() => failures.push(e),
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(mut run) => {
            run.wall_times.setup = setup;
            run.wall_times.total = start.elapsed().as_secs_f64();
            run.warnings
                .extend(failures.iter().map(|e| format!("a restart failed: {e}")));
            Ok(run)
        }
        None => Err(failures.into_iter().next().expect("at least one restart ran")),
    }
}
