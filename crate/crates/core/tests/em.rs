mod common;

use gpmix::datasets::{simulate_mixture, Dataset, ScenarioSpec};
use gpmix::em::{
    assign_clusters, e_step, fit, m_step, Backend, FitConfig, LikelihoodEngine, MixtureModel, Responsibilities,
};
use gpmix::exact::{rng_from_seed, sample_gp};
use gpmix::kernel::{Grid, KernelFamily, KernelParams};
use proptest::prelude::*;
use rand::Rng;

fn se(l: f64, sigma: f64, nugget: f64) -> KernelParams {
    KernelParams::with_nugget(KernelFamily::SquaredExponential, l, sigma, nugget).unwrap()
}

fn dataset(grid: Grid, curves: Vec<Vec<f64>>) -> Dataset {
    let names = (0..curves.len()).map(|i| format!("c{i}")).collect();
    Dataset::new(grid, curves, names, None).unwrap()
}

fn small_mixture(seed: u64, p: usize) -> Dataset {
    let spec = ScenarioSpec {
        components: vec![
            KernelParams::squared_exponential(0.2, 0.5).unwrap(),
            KernelParams::squared_exponential(0.5, 0.2).unwrap(),
        ],
        counts: vec![4, 4],
        p,
        seed,
    };
    simulate_mixture(&spec).unwrap()
}

#[test]
fn e_step_matches_brute_force_densities() {
    let grid = Grid::new(vec![0.0, 0.4, 1.0]).unwrap();
    let curves = vec![vec![0.3, -0.2, 0.9], vec![-1.4, -1.0, 0.1]];
    let ds = dataset(grid.clone(), curves.clone());
    let comps = vec![
        KernelParams::with_nugget(KernelFamily::Matern12, 0.3, 0.8, 0.05).unwrap(),
        se(0.7, 1.3, 0.02),
    ];
    let model = MixtureModel::new(vec![0.35, 0.65], comps.clone()).unwrap();
    let est = e_step(&LikelihoodEngine::new(&ds, Backend::Exact).unwrap(), &model).unwrap();
    for (i, y) in curves.iter().enumerate() {
        let dens: Vec<f64> = comps
            .iter()
            .zip(&model.weights)
            .map(|(c, w)| w * common::mvn_logpdf(y, &common::kernel_matrix(c, grid.points())).exp())
            .collect();
        let total: f64 = dens.iter().sum();
        for g in 0..2 {
            let want = dens[g] / total;
            assert!((est.responsibilities.get(i, g) - want).abs() < 1e-12);
        }
    }
    let want_ll: f64 = curves
        .iter()
        .map(|y| {
            comps
                .iter()
                .zip(&model.weights)
                .map(|(c, w)| w * common::mvn_logpdf(y, &common::kernel_matrix(c, grid.points())).exp())
                .sum::<f64>()
                .ln()
        })
        .sum();
    assert!((est.loglik - want_ll).abs() < 1e-10);
}

#[test]
fn identical_components_split_evenly() {
    let ds = small_mixture(1, 20);
    let c = se(0.3, 0.4, 1e-3);
    let model = MixtureModel::uniform(vec![c, c]).unwrap();
    let est = e_step(&LikelihoodEngine::new(&ds, Backend::Exact).unwrap(), &model).unwrap();
    for i in 0..ds.n() {
        assert_eq!(est.responsibilities.row(i), &[0.5, 0.5]);
    }
}

#[test]
fn single_component_takes_everything() {
    let ds = small_mixture(2, 20);
    let model = MixtureModel::uniform(vec![se(0.3, 0.4, 1e-3)]).unwrap();
    for backend in [Backend::Exact, Backend::Vecchia { m: 5 }] {
        let est = e_step(&LikelihoodEngine::new(&ds, backend).unwrap(), &model).unwrap();
        assert!((0..ds.n()).all(|i| est.responsibilities.row(i) == [1.0]));
    }
}

#[test]
fn weights_are_mean_responsibilities() {
    let ds = small_mixture(3, 10);
    let ds = dataset(ds.grid.clone(), ds.curves.iter().chain(ds.curves.iter().take(2)).cloned().collect());
    assert_eq!(ds.n(), 10);
    let rows = (0..10).map(|i| if i < 3 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    let w = Responsibilities::from_rows(rows).unwrap();
    let model = MixtureModel::uniform(vec![se(0.2, 0.5, 1e-3), se(0.5, 0.2, 1e-3)]).unwrap();
    let engine = LikelihoodEngine::new(&ds, Backend::Exact).unwrap();
    let next = m_step(&engine, &w, &model, &FitConfig::default()).unwrap();
    assert!((next.weights[0] - 0.3).abs() < 1e-15);
    assert!((next.weights[1] - 0.7).abs() < 1e-15);
}

#[test]
fn scalar_step_matches_closed_form() {
    // p = 1, K = σ²: dε/dlog σ = Σ_i W_i (y_i²/σ² - 1), and the step is
    // λ times that divided by the cluster mass times p
    let grid = Grid::new(vec![0.0]).unwrap();
    let ys = [0.9, -1.7, 0.2, 2.4];
    let ds = dataset(grid, ys.iter().map(|y| vec![*y]).collect());
    let sigma: f64 = 0.8;
    let model = MixtureModel::uniform(vec![se(0.3, sigma, 0.0)]).unwrap();
    let w = Responsibilities::from_rows(vec![vec![1.0]; 4]).unwrap();
    let cfg = FitConfig {
        learning_rate: 0.05,
        ..FitConfig::default()
    };
    let next = m_step(&LikelihoodEngine::new(&ds, Backend::Exact).unwrap(), &w, &model, &cfg).unwrap();
    let grad: f64 = ys.iter().map(|y| y * y / (sigma * sigma) - 1.0).sum();
    let want = sigma.ln() + cfg.learning_rate * grad / 4.0;
    assert!((next.components[0].sigma.ln() - want).abs() < 1e-13);
    assert_eq!(next.components[0].l, 0.3);
}

#[test]
fn stationary_point_is_fixed() {
    let grid = Grid::new(vec![0.0]).unwrap();
    let ys = [0.9, -1.7, 0.2, 2.4, -0.6];
    let ds = dataset(grid, ys.iter().map(|y| vec![*y]).collect());
    let nugget = 0.01;
    let mean_sq = ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64;
    let sigma = (mean_sq - nugget).sqrt();
    let start = se(0.4, sigma, nugget);
    let model = MixtureModel::uniform(vec![start]).unwrap();
    let w = Responsibilities::from_rows(vec![vec![1.0]; ys.len()]).unwrap();
    let next = m_step(&LikelihoodEngine::new(&ds, Backend::Exact).unwrap(), &w, &model, &FitConfig::default()).unwrap();
    assert!((next.components[0].sigma - sigma).abs() < 1e-8);
    assert!((next.components[0].l - 0.4).abs() < 1e-8);
}

#[test]
fn assign_clusters_examples() {
    let w = Responsibilities::from_rows(vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(assign_clusters(&w), vec![2, 1, 1, 2]);
}

#[test]
fn single_component_fit_is_monotone() {
    let ds = small_mixture(5, 30);
    let cfg = FitConfig {
        learning_rate: 1e-2,
        max_iters: 60,
        restarts: 1,
        ..FitConfig::default()
    };
    let run = fit(&ds, 1, &cfg).unwrap();
    for w in run.objective_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", run.objective_trace);
    }
}

#[test]
fn small_step_runs_are_mostly_monotone() {
    let runs = 20;
    let mut monotone = 0;
    for seed in 0..runs {
        let ds = simulate_mixture(&ScenarioSpec::scenario2(1000 + seed)).unwrap();
        let cfg = FitConfig {
            learning_rate: 1e-3,
            max_iters: 20,
            // a single random start empties a component in roughly one run in ten
            restarts: 3,
            seed,
            ..FitConfig::default()
        };
        let run = fit(&ds, 2, &cfg).unwrap();
        if run.loglik_trace.windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone as f64 >= 0.95 * runs as f64, "{monotone}/{runs} monotone");
}

#[test]
fn saturated_vecchia_reproduces_exact_fit() {
    let ds = small_mixture(8, 40);
    let base = FitConfig {
        max_iters: 25,
        seed: 3,
        ..FitConfig::default()
    };
    let exact = fit(&ds, 2, &base).unwrap();
    let vecchia = fit(
        &ds,
        2,
        &FitConfig {
            backend: Backend::Vecchia { m: 39 },
            ..base.clone()
        },
    )
    .unwrap();
    assert_eq!(exact.objective_trace.len(), vecchia.objective_trace.len());
    for (a, b) in exact.objective_trace.iter().zip(&vecchia.objective_trace) {
        assert!(common::rel_err(*b, *a) <= 1e-6, "{a} vs {b}");
    }
    assert_eq!(exact.labels, vecchia.labels);
}

#[test]
fn fit_is_deterministic() {
    let ds = small_mixture(9, 30);
    let cfg = FitConfig {
        backend: Backend::Vecchia { m: 6 },
        max_iters: 15,
        restarts: 2,
        seed: 11,
        ..FitConfig::default()
    };
    let a = fit(&ds, 2, &cfg).unwrap();
    let b = fit(&ds, 2, &cfg).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.objective_trace), bits(&b.objective_trace));
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.model, b.model);
}

#[test]
fn fit_rejects_too_many_components() {
    let ds = small_mixture(4, 10);
    assert!(fit(&ds, 9, &FitConfig::default()).is_err());
    assert!(fit(&ds, 0, &FitConfig::default()).is_err());
}

#[test]
fn vecchia_backend_requires_valid_m() {
    let ds = small_mixture(4, 10);
    for m in [0, 10] {
        let cfg = FitConfig {
            backend: Backend::Vecchia { m },
            ..FitConfig::default()
        };
        assert!(fit(&ds, 2, &cfg).is_err());
    }
}

fn random_model(rng: &mut impl Rng, g: usize) -> MixtureModel {
    let mut weights: Vec<f64> = (0..g).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let comps = (0..g)
        .map(|_| se(rng.random_range(0.05..0.8), rng.random_range(0.1..1.5), 1e-3))
        .collect();
    MixtureModel::new(weights, comps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn responsibilities_are_row_stochastic(seed in any::<u64>(), g in 1usize..5, m in 1usize..8) {
        let ds = small_mixture(seed, 25);
        let mut rng = rng_from_seed(seed);
        let model = random_model(&mut rng, g);
        for backend in [Backend::Exact, Backend::Vecchia { m }] {
            let est = e_step(&LikelihoodEngine::new(&ds, backend).unwrap(), &model).unwrap();
            for i in 0..ds.n() {
                let row = est.responsibilities.row(i);
                prop_assert!(row.iter().all(|v| *v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn saturated_responsibilities_match_exact(seed in any::<u64>(), p in 5usize..60) {
        let ds = small_mixture(seed, p);
        let mut rng = rng_from_seed(seed ^ 7);
        let model = random_model(&mut rng, 2);
        let exact = e_step(&LikelihoodEngine::new(&ds, Backend::Exact).unwrap(), &model).unwrap();
        let vecchia = e_step(&LikelihoodEngine::new(&ds, Backend::Vecchia { m: p - 1 }).unwrap(), &model).unwrap();
        for i in 0..ds.n() {
            for g in 0..2 {
                let (a, b) = (exact.responsibilities.get(i, g), vecchia.responsibilities.get(i, g));
                prop_assert!((a - b).abs() <= 1e-6, "W[{},{}]: {} vs {}", i, g, a, b);
            }
        }
    }

    #[test]
    fn relabeling_components_relabels_partition(seed in any::<u64>()) {
        let ds = small_mixture(seed, 20);
        let mut rng = rng_from_seed(seed);
        let model = random_model(&mut rng, 3);
        let perm = [2usize, 0, 1];
        let permuted = MixtureModel::new(
            perm.iter().map(|&g| model.weights[g]).collect(),
            perm.iter().map(|&g| model.components[g]).collect(),
        )
        .unwrap();
        let engine = LikelihoodEngine::new(&ds, Backend::Exact).unwrap();
        let a = assign_clusters(&e_step(&engine, &model).unwrap().responsibilities);
        let b = assign_clusters(&e_step(&engine, &permuted).unwrap().responsibilities);
        // permuted component k is original component perm[k]
        let mapped: Vec<usize> = b.iter().map(|&k| perm[k - 1] + 1).collect();
        prop_assert_eq!(a, mapped);
    }
}

#[test]
fn sampled_single_curve_is_handled() {
    let grid = Grid::uniform(0.0, 1.0, 12).unwrap();
    let c = se(0.3, 0.7, 1e-3);
    let ds = dataset(grid.clone(), vec![sample_gp(&c, &grid, 1).unwrap()]);
    let cfg = FitConfig {
        max_iters: 10,
        restarts: 1,
        ..FitConfig::default()
    };
    let run = fit(&ds, 1, &cfg).unwrap();
    assert_eq!(run.labels, vec![1]);
    assert!(run.objective_trace.iter().all(|v| v.is_finite()));
}

#[test]
fn analytic_gradient_matches_central_differences() {
    use gpmix::em::GradientMode;
    let mut rng = rng_from_seed(77);
    let ds = small_mixture(11, 40);
    for backend in [Backend::Exact, Backend::Vecchia { m: 3 }, Backend::Vecchia { m: 12 }] {
        let engine = LikelihoodEngine::new(&ds, backend).unwrap();
        for family in [KernelFamily::SquaredExponential, KernelFamily::Matern12] {
            let sigma = rng.random_range(0.2..1.0);
            let params = KernelParams::with_nugget(family, rng.random_range(0.1..0.6), sigma, 1e-3).unwrap();
            let weights: Vec<f64> = (0..ds.n()).map(|_| rng.random_range(0.0..1.0)).collect();
            let (_, analytic) = engine.weighted_log_gradient(&params, &weights, GradientMode::Analytic, 1e-5).unwrap();
            let (ll, ls) = (params.l.ln(), params.sigma.ln());
            let f = |a: f64, b: f64| engine.weighted_loglik(&params.with_log_params(a, b), &weights).unwrap();
            let h = 1e-5;
            let fd = [(f(ll + h, ls) - f(ll - h, ls)) / (2.0 * h), (f(ll, ls + h) - f(ll, ls - h)) / (2.0 * h)];
            let (_, lib_fd) = engine.weighted_log_gradient(&params, &weights, GradientMode::CentralFd, 1e-5).unwrap();
            for t in 0..2 {
                let rel = (analytic[t] - fd[t]).abs() / fd[t].abs().max(1e-8);
                assert!(rel <= 1e-5, "{backend} {family} param {t}: {} vs {}", analytic[t], fd[t]);
                assert!((lib_fd[t] - fd[t]).abs() <= 1e-6 * fd[t].abs().max(1.0));
            }
        }
    }
}
