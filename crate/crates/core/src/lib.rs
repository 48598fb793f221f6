//! Model-based clustering of functional data with Gaussian-process mixtures.
//!
//! Curves observed on a shared 1-D grid are modeled as draws from a mixture of
//! zero-mean GPs. Two likelihood backends drive the same EM loop:
//!
//! - [`em::Backend::Exact`] factors the full `p × p` covariance.
//! - [`em::Backend::Vecchia`] conditions each maximin-ordered point on at most
//!   `m` nearest earlier points, so each factorization costs `O(p m³)`.
//!
//! ```no_run
//! use gpmix::datasets::{simulate_mixture, ScenarioSpec};
//! use gpmix::em::{fit, Backend, FitConfig};
//! use gpmix::evaluation::nmi;
//!
//! let ds = simulate_mixture(&ScenarioSpec::scenario2(7)).unwrap();
//! let cfg = FitConfig { backend: Backend::Vecchia { m: 30 }, ..FitConfig::default() };
//! let result = fit(&ds, 2, &cfg).unwrap();
//! println!("NMI = {}", nmi(ds.truth.as_ref().unwrap(), &result.labels).unwrap());
//! ```

pub mod bench;
pub mod datasets;
pub mod em;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod kernel;
pub mod linalg;
pub mod vecchia;

pub use error::{Error, Result};
