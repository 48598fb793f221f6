//! Functional datasets: synthetic GP-mixture simulation, CSV I/O, smoothing.
//!
//! CSV layout: a header row is required; column 1 holds the grid and every
//! further column is one curve, named by its header. Values are written with
//! 17 significant digits so a write/read cycle is lossless.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::sample_with_factor;
use crate::kernel::{build_covariance, Grid, KernelParams};
use crate::linalg::dense_cholesky;

/// `N` curves observed on a shared grid, with optional ground-truth labels (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: Grid,
    pub curves: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub truth: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(grid: Grid, curves: Vec<Vec<f64>>, names: Vec<String>, truth: Option<Vec<usize>>) -> Result<Self> {
        let p = grid.len();
        if let Some(i) = curves.iter().position(|c| c.len() != p) {
            return Err(Error::Domain(format!(
                "curve {i} has length {}, grid has {p} points",
                curves[i].len()
            )));
        }
        if names.len() != curves.len() {
            return Err(Error::Domain(format!(
                "{} names for {} curves",
                names.len(),
                curves.len()
            )));
        }
        if let Some(t) = &truth {
            if t.len() != curves.len() {
                return Err(Error::Domain(format!(
                    "{} truth labels for {} curves",
                    t.len(),
                    curves.len()
                )));
            }
        }
        Ok(Self {
            grid,
            curves,
            names,
            truth,
        })
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.curves.len()
    }

    /// Grid length.
    pub fn p(&self) -> usize {
        self.grid.len()
    }
}

/// Simulation recipe for a GP mixture on a uniform `[0, 1]` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub components: Vec<KernelParams>,
    pub counts: Vec<usize>,
    pub p: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The hard case: `(l, σ) = (0.2, 0.2)` against `(0.5, 0.3)`, 10 curves each, `p = 300`.
    pub fn scenario1(seed: u64) -> Self {
        Self::squared_exponential_pair([(0.2, 0.2), (0.5, 0.3)], seed)
    }

    /// The easy case: `(l, σ) = (0.2, 0.5)` against `(0.5, 0.2)`, 10 curves each, `p = 300`.
    pub fn scenario2(seed: u64) -> Self {
        Self::squared_exponential_pair([(0.2, 0.5), (0.5, 0.2)], seed)
    }

    /// Looks up a numbered scenario.
    pub fn numbered(scenario: u32, seed: u64) -> Result<Self> {
        match scenario {
            1 => Ok(Self::scenario1(seed)),
            2 => Ok(Self::scenario2(seed)),
            other => Err(Error::Domain(format!("unknown scenario {other} (expected 1 or 2)"))),
        }
    }

    fn squared_exponential_pair(params: [(f64, f64); 2], seed: u64) -> Self {
        Self {
            components: params
                .iter()
                .map(|&(l, s)| KernelParams::squared_exponential(l, s).expect("constants are valid"))
                .collect(),
            counts: vec![10, 10],
            p: 300,
            seed,
        }
    }

    pub fn with_p(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() != self.counts.len() {
            return Err(Error::Domain(format!(
                "{} components with {} counts",
                self.components.len(),
                self.counts.len()
            )));
        }
        if self.counts.contains(&0) {
            return Err(Error::Domain("every cluster needs at least one curve".into()));
        }
        if self.p < 2 {
            return Err(Error::Domain(format!("grid length must be at least 2, got {}", self.p)));
        }
        self.components.iter().try_for_each(KernelParams::validate)
    }
}

/// SplitMix64 finalizer applied to `base + stream · golden`; gives independent
/// per-item seeds from one user seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples every curve of the scenario. Curve `k` (counted across clusters) uses
/// seed `derive_seed(spec.seed, k)`.
pub fn simulate_mixture(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let grid = Grid::uniform(0.0, 1.0, spec.p)?;
    let mut curves = Vec::new();
    let mut names = Vec::new();
    let mut truth = Vec::new();
    for (g, (params, &count)) in spec.components.iter().zip(&spec.counts).enumerate() {
        let chol = dense_cholesky(&build_covariance(params, &grid)?)?;
        for _ in 0..count {
            let k = curves.len() as u64;
            curves.push(sample_with_factor(&chol, derive_seed(spec.seed, k)));
            names.push(format!("curve{}", curves.len()));
            truth.push(g + 1);
        }
    }
    Dataset::new(grid, curves, names, Some(truth))
}

fn parse_err(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

/// Reads a dataset in the CSV layout described at module level.
/// Row numbers in errors are 1-based file lines (header is line 1).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let width = headers.len();
    if width < 2 {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }

    let mut xs = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width - 1];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                record.len().min(width) + 1,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, c + 1, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, c + 1, format!("'{field}' is not finite")));
            }
            if c == 0 {
                if let Some(&prev) = xs.last() {
                    if v == prev {
                        return Err(parse_err(path, line, 1, format!("duplicate grid value {v}")));
                    }
                    if v < prev {
                        return Err(parse_err(path, line, 1, "grid values must be increasing"));
                    }
                }
                xs.push(v);
            } else {
                columns[c - 1].push(v);
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    let grid = Grid::new(xs)?;
    Dataset::new(grid, columns, headers[1..].to_vec(), None)
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset in the module's CSV layout. The grid header is `x`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "x")?;
    for name in &ds.names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (j, &x) in ds.grid.points().iter().enumerate() {
        write!(out, "{}", fmt_value(x))?;
        for curve in &ds.curves {
            write!(out, ",{}", fmt_value(curve[j]))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a `curve,label` table.
pub fn write_labels_csv(names: &[String], labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    if names.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} names for {} labels",
            names.len(),
            labels.len()
        )));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "curve,label")?;
    for (n, l) in names.iter().zip(labels) {
        writeln!(out, "{n},{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the label column (last column) of a `curve,label` table.
pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&path)?;
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let col = record.len();
        let field = record.get(col.saturating_sub(1)).unwrap_or("");
        let v: usize = field
            .parse()
            .map_err(|_| parse_err(&path, r + 2, col, format!("'{field}' is not a label")))?;
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(path));
    }
    Ok(labels)
}

/// Centered moving average with an odd window; the `(window - 1) / 2` points
/// at each end are dropped rather than padded.
pub fn moving_average(ds: &Dataset, window: usize) -> Result<Dataset> {
    let p = ds.p();
    if window == 0 || window % 2 == 0 || window > p {
        return Err(Error::Domain(format!(
            "moving-average window must be odd and in [1, {p}], got {window}"
        )));
    }
    let half = (window - 1) / 2;
    let grid = ds.grid.slice(half..p - half)?;
    let curves = ds
        .curves
        .iter()
        .map(|c| {
            c.windows(window)
                .map(|w| w.iter().sum::<f64>() / window as f64)
                .collect()
        })
        .collect();
    Dataset::new(grid, curves, ds.names.clone(), ds.truth.clone())
}
