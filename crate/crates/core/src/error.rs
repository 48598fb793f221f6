use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or input outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dense or incomplete Cholesky hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {value:e} at index {index})")]
    NotPositiveDefinite { index: usize, value: f64 },

    /// Vecchia conditional variance was non-positive; usually means the nugget is too small.
    #[error("non-positive conditional variance {value:e} at ordered index {index}")]
    ConditionalVariance { index: usize, value: f64 },

    /// NaN or infinity appeared during a computation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A mixture component lost all of its responsibility mass.
    #[error("component {component} degenerated (total responsibility {mass:e}) at iteration {iteration}")]
    DegenerateComponent {
        component: usize,
        iteration: usize,
        mass: f64,
    },

    #[error("dimension {dim} exceeds the densification limit of {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("{}: parse error at row {row}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{}: dataset is empty", .0.display())]
    EmptyDataset(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that stem from the numerics or the model rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ConditionalVariance { .. }
                | Error::Numerical(_)
                | Error::DegenerateComponent { .. }
        )
    }
}
