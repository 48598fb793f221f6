//! EM for zero-mean GP mixtures with pluggable likelihood backends.
//!
//! Each iteration computes responsibilities from the current model (E-step),
//! sets the weights to the mean responsibilities, and takes one gradient-ascent
//! step per component on its responsibility-weighted log-likelihood (M-step).
//! The exact backend factors the dense covariance; the Vecchia backend builds
//! the sparse inverse Cholesky factor on a plan fixed for the whole fit.

mod engine;
mod fit;
mod model;

pub use engine::{Backend, ComponentEval, GradientMode, LikelihoodEngine};
pub use fit::{e_step, fit, m_step, EStep, FitConfig, FitResult, PhaseTimes};
pub use model::{assign_clusters, MixtureModel, Responsibilities};
