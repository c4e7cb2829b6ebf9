//! Safe feature elimination for L1-regularized linear models whose training
//! weights may shift inside a bounded box around the uniform weighting.

pub mod dataset;
pub mod error;
pub mod grid;
mod linalg;
pub mod losses;
pub mod oracle;
pub mod screening;
pub mod solver;
pub mod uncertainty;

pub use dataset::{Dataset, DesignMatrix, Task};
pub use error::{Error, Result};
pub use grid::{run_grid, GridRow, GridSpec};
pub use losses::{LossKind, LossSpec};
pub use oracle::{verify_no_false_elimination, VerificationOutcome};
pub use screening::{build_reference, screen, ReferencePair, ScreeningReport};
pub use solver::{fit_weighted_erm, lambda_max, FitConfig, FittedModel, GapTolerance};
pub use uncertainty::{SampleMode, WeightBox};
