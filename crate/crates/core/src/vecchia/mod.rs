//! Vecchia approximation: maximin ordering, nearest-previous conditioning sets,
//! and the sparse inverse Cholesky factor of the implied covariance.
//!
//! Each variable is conditioned on at most `m` earlier variables in the maximin
//! ordering. The resulting joint density is Gaussian with a precision whose
//! Cholesky factor has the sparsity of the conditioning sets, so both the
//! log-determinant and quadratic forms cost `O(p m)` once the factor is built,
//! and building it costs `O(p m³)`.

mod factor;
mod ichol;
mod plan;
mod sparse;

pub use factor::{implied_covariance, vecchia_inverse_cholesky, vecchia_loglik, DENSIFY_LIMIT};
pub(crate) use factor::{vecchia_eval, DistanceTable, VecchiaEval};
pub use ichol::incomplete_cholesky;
pub use plan::{maximin_order, SparsityPattern, VecchiaPlan};
pub use sparse::SparseLowerTriangular;
