//! Paired timing and accuracy comparison of the exact and Vecchia backends.
//!
//! Every trial simulates one dataset and fits it with the exact backend and
//! with the Vecchia backend at each requested `m`, all from the same fit seed.

use serde::{Deserialize, Serialize};

use crate::datasets::{derive_seed, simulate_mixture, ScenarioSpec};
use crate::em::{fit, Backend, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::evaluation::nmi;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: ScenarioSpec,
    pub ms: Vec<usize>,
    pub trials: usize,
    /// Base fit configuration; its backend is overridden per run.
    pub fit: FitConfig,
    /// Skip the exact backend (NMI-only studies of `m`).
    pub skip_exact: bool,
}

/// One fitted run. A fit that failed numerically on every restart is kept with
/// NMI 0 and a NaN time, which the ratio medians skip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub trial: usize,
    pub backend: String,
    /// Conditioning-set size; `None` for the exact backend.
    pub m: Option<usize>,
    pub p: usize,
    pub iterations: usize,
    pub seconds_per_iteration: f64,
    pub nmi: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "trial,backend,m,p,iterations,seconds_per_iteration,nmi";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6e},{:.6}",
            self.trial,
            self.backend,
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            self.p,
            self.iterations,
            self.seconds_per_iteration,
            self.nmi
        )
    }
}

/// Median over trials of `VEM seconds-per-iteration / exact seconds-per-iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub m: usize,
    pub median_time_ratio: f64,
    pub median_nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub exact_median_nmi: Option<f64>,
    pub ratios: Vec<RatioSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn row(trial: usize, p: usize, m: Option<usize>, outcome: Result<FitResult>, truth: &[usize]) -> Result<BenchRow> {
    let mut row = BenchRow {
        trial,
        backend: if m.is_some() { "vecchia" } else { "exact" }.to_string(),
        m,
        p,
        iterations: 0,
        seconds_per_iteration: f64::NAN,
        nmi: 0.0,
    };
    match outcome {
        Ok(result) => {
            row.iterations = result.iterations;
            row.seconds_per_iteration = result.seconds_per_iteration();
            row.nmi = nmi(truth, &result.labels)?;
        }
        // a fit that fails numerically on every restart recovers nothing
        Err(e) if e.is_numerical() => {}
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// Runs every trial; trial `t` simulates with seed `derive_seed(scenario.seed, t)`.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    cfg.scenario.validate()?;
    let g = cfg.scenario.components.len();
    let mut rows = Vec::new();
    for trial in 0..cfg.trials {
        let spec = ScenarioSpec {
            seed: derive_seed(cfg.scenario.seed, trial as u64),
            ..cfg.scenario.clone()
        };
        let ds = simulate_mixture(&spec)?;
        let truth = ds.truth.clone().expect("simulated data has truth");
        if !cfg.skip_exact {
            let exact = fit(&ds, g, &FitConfig { backend: Backend::Exact, ..cfg.fit.clone() });
            rows.push(row(trial, spec.p, None, exact, &truth)?);
        }
        for &m in &cfg.ms {
            let run = fit(&ds, g, &FitConfig { backend: Backend::Vecchia { m }, ..cfg.fit.clone() });
            rows.push(row(trial, spec.p, Some(m), run, &truth)?);
        }
    }
    Ok(summarize(rows))
}

/// Computes median NMI and paired median time ratios from bench rows.
pub fn summarize(rows: Vec<BenchRow>) -> BenchReport {
    let exact: Vec<&BenchRow> = rows.iter().filter(|r| r.m.is_none()).collect();
    let exact_median_nmi = (!exact.is_empty()).then(|| median(&exact.iter().map(|r| r.nmi).collect::<Vec<_>>()));
    let mut ms: Vec<usize> = rows.iter().filter_map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let ratios = ms
        .into_iter()
        .map(|m| {
            let runs: Vec<&BenchRow> = rows.iter().filter(|r| r.m == Some(m)).collect();
            let paired: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    exact
                        .iter()
                        .find(|e| e.trial == r.trial)
                        .map(|e| r.seconds_per_iteration / e.seconds_per_iteration)
                })
                .filter(|ratio| ratio.is_finite())
                .collect();
            RatioSummary {
                m,
                median_time_ratio: median(&paired),
                median_nmi: median(&runs.iter().map(|r| r.nmi).collect::<Vec<_>>()),
            }
        })
        .collect();
    BenchReport {
        rows,
        exact_median_nmi,
        ratios,
    }
}
