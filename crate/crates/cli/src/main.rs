mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpmix::bench::{run_bench, BenchConfig, BenchRow};
use gpmix::datasets::{
    load_csv, load_labels_csv, moving_average, simulate_mixture, write_csv, write_labels_csv, ScenarioSpec,
};
use gpmix::em::{fit, Backend, FitConfig, GradientMode};
use gpmix::evaluation::nmi;
use gpmix::kernel::KernelFamily;
use serde::{Deserialize, Serialize};

use config::prefer_flags;

#[derive(Parser)]
#[command(name = "gpmix", version, about = "Gaussian-process mixture clustering of functional data")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file supplying any of the subcommand's flags; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a two-cluster scenario and write curves plus truth labels.
    Simulate(SimulateArgs),
    /// Fit a mixture to a dataset CSV.
    Fit(FitArgs),
    /// NMI between two label files.
    Eval(EvalArgs),
    /// Paired exact vs Vecchia runs over repeated simulated trials.
    Bench(BenchArgs),
}

#[derive(Args, Serialize, Deserialize, Default)]
struct SimulateArgs {
    #[arg(long)]
    scenario: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid length (default 300).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truth labels file (default: `<out>` with a `_labels.csv` suffix).
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BackendKind {
    Exact,
    Vecchia,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KernelKind {
    Sqexp,
    Matern12,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GradientKind {
    Analytic,
    Fd,
}

/// Optimizer settings shared by `fit` and `bench`.
#[derive(Args, Serialize, Deserialize, Default)]
struct OptimArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    relative_nugget: Option<f64>,
    #[arg(long, value_enum)]
    gradient: Option<GradientKind>,
}

impl OptimArgs {
    fn merge(&mut self, file: OptimArgs) {
        prefer_flags!(self, file; max_iters, tol, restarts, learning_rate, relative_nugget, gradient);
    }

    fn apply(&self, cfg: &mut FitConfig) {
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.relative_nugget {
            cfg.relative_nugget = v;
        }
        if let Some(g) = self.gradient {
            cfg.gradient_mode = match g {
                GradientKind::Analytic => GradientMode::Analytic,
                GradientKind::Fd => GradientMode::CentralFd,
            };
        }
    }
}

#[derive(Args, Serialize, Deserialize, Default)]
struct FitArgs {
    /// Dataset CSV: grid column followed by one column per curve.
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Conditioning-set size; required with `--backend vecchia`.
    #[arg(long)]
    m: Option<usize>,
    /// Number of mixture components.
    #[arg(long = "G")]
    #[serde(rename = "G")]
    g: Option<usize>,
    #[arg(long, value_enum)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Centered moving-average window applied before fitting.
    #[arg(long)]
    smooth: Option<usize>,
    /// Result JSON (default: `<dataset>_fit.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fitted labels (default: `<dataset>_fit_labels.csv`).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    optim: OptimArgs,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct EvalArgs {
    truth: Option<PathBuf>,
    predicted: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct BenchArgs {
    #[arg(long)]
    scenario: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated conditioning-set sizes.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    ms: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Only run the Vecchia fits.
    #[arg(long)]
    #[serde(default)]
    skip_exact: bool,
    /// Per-trial CSV (default `bench.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    optim: OptimArgs,
}

pub enum CliError {
    Usage(String),
    Io(String),
    Lib(gpmix::Error),
}

impl From<gpmix::Error> for CliError {
    fn from(e: gpmix::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use gpmix::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(E::Io(_) | E::Csv(_)) => 1,
            CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn required<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required {what}")))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable result");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(mut args: SimulateArgs, file: SimulateArgs) -> Result<(), CliError> {
    prefer_flags!(args, file; scenario, seed, p, out, labels_out);
    let scenario = required(args.scenario, "--scenario")?;
    let mut spec = ScenarioSpec::numbered(scenario, args.seed.unwrap_or(0)).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = args.p {
        spec = spec.with_p(p);
    }
    let out = required(args.out, "--out")?;
    let labels_out = args.labels_out.unwrap_or_else(|| with_suffix(&out, "_labels.csv"));
    let ds = simulate_mixture(&spec)?;
    write_csv(&ds, &out)?;
    write_labels_csv(&ds.names, ds.truth.as_deref().expect("simulated truth"), &labels_out)?;
    println!(
        "scenario {scenario}: {} curves x {} points, seed {} -> {}, {}",
        ds.n(),
        ds.p(),
        spec.seed,
        out.display(),
        labels_out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    dataset: &'a Path,
    n: usize,
    p: usize,
    g: usize,
    config: &'a FitConfig,
    result: &'a gpmix::em::FitResult,
}

fn cmd_fit(mut args: FitArgs, file: FitArgs) -> Result<(), CliError> {
    prefer_flags!(args, file; dataset, backend, m, g, kernel, seed, smooth, out, labels_out);
    args.optim.merge(file.optim);
    let dataset = required(args.dataset, "dataset path")?;
    let backend = match (args.backend.unwrap_or(BackendKind::Exact), args.m) {
        (BackendKind::Exact, None) => Backend::Exact,
        (BackendKind::Exact, Some(_)) => return Err(CliError::Usage("--m only applies to --backend vecchia".into())),
        (BackendKind::Vecchia, Some(m)) => Backend::Vecchia { m },
        (BackendKind::Vecchia, None) => return Err(CliError::Usage("--backend vecchia requires --m".into())),
    };
    let g = required(args.g, "--G")?;
    let mut cfg = FitConfig {
        backend,
        family: match args.kernel.unwrap_or(KernelKind::Sqexp) {
            KernelKind::Sqexp => KernelFamily::SquaredExponential,
            KernelKind::Matern12 => KernelFamily::Matern12,
        },
        seed: args.seed.unwrap_or(0),
        ..FitConfig::default()
    };
    args.optim.apply(&mut cfg);
    cfg.validate()?;

    let mut ds = load_csv(&dataset)?;
    if let Some(w) = args.smooth {
        ds = moving_average(&ds, w)?;
    }
    let result = fit(&ds, g, &cfg)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let out = args.out.unwrap_or_else(|| with_suffix(&dataset, "_fit.json"));
    let labels_out = args.labels_out.unwrap_or_else(|| with_suffix(&dataset, "_fit_labels.csv"));
    write_json(
        &FitOutput { dataset: &dataset, n: ds.n(), p: ds.p(), g, config: &cfg, result: &result },
        &out,
    )?;
    write_labels_csv(&ds.names, &result.labels, &labels_out)?;
    println!(
        "{} G={g}: loglik {:.6} after {} iterations (converged: {}) -> {}, {}",
        cfg.backend,
        result.final_loglik(),
        result.iterations,
        result.converged,
        out.display(),
        labels_out.display()
    );
    Ok(())
}

fn cmd_eval(mut args: EvalArgs, file: EvalArgs) -> Result<(), CliError> {
    prefer_flags!(args, file; truth, predicted);
    let a = load_labels_csv(required(args.truth, "truth labels path")?)?;
    let b = load_labels_csv(required(args.predicted, "predicted labels path")?)?;
    if a.len() != b.len() {
        return Err(CliError::Usage(format!("label files differ in length: {} vs {}", a.len(), b.len())));
    }
    println!("{:.6}", nmi(&a, &b)?);
    Ok(())
}

fn cmd_bench(mut args: BenchArgs, file: BenchArgs) -> Result<(), CliError> {
    prefer_flags!(args, file; scenario, seed, p, trials, out);
    if args.ms.is_empty() {
        args.ms = file.ms;
    }
    args.skip_exact |= file.skip_exact;
    args.optim.merge(file.optim);
    let mut scenario = ScenarioSpec::numbered(args.scenario.unwrap_or(2), args.seed.unwrap_or(0))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = args.p {
        scenario = scenario.with_p(p);
    }
    if args.ms.is_empty() {
        return Err(CliError::Usage("--ms needs at least one conditioning-set size".into()));
    }
    let mut fit_cfg = FitConfig { seed: scenario.seed, ..FitConfig::default() };
    args.optim.apply(&mut fit_cfg);
    fit_cfg.validate()?;
    let cfg = BenchConfig {
        scenario,
        ms: args.ms,
        trials: args.trials.unwrap_or(25),
        fit: fit_cfg,
        skip_exact: args.skip_exact,
    };
    let report = run_bench(&cfg)?;

    let out = args.out.unwrap_or_else(|| PathBuf::from("bench.csv"));
    let mut text = String::from(BenchRow::CSV_HEADER);
    text.push('\n');
    for row in &report.rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    std::fs::write(&out, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", out.display())))?;

    if let Some(v) = report.exact_median_nmi {
        println!("exact: median NMI {v:.6}");
    }
    for r in &report.ratios {
        if cfg.skip_exact {
            println!("m={}: median NMI {:.6}", r.m, r.median_nmi);
        } else {
            println!("m={}: median time ratio {:.6}, median NMI {:.6}", r.m, r.median_time_ratio, r.median_nmi);
        }
    }
    println!("{} rows -> {}", report.rows.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::ConfigFile::read(cli.config.as_deref())?;
    let go = || match cli.command {
        Command::Simulate(a) => cmd_simulate(a, file.args()?),
        Command::Fit(a) => cmd_fit(a, file.args()?),
        Command::Eval(a) => cmd_eval(a, file.args()?),
        Command::Bench(a) => cmd_bench(a, file.args()?),
    };
    match cli.threads.or(file.threads) {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(go),
        None => go(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpmix: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
