//! Goodness-of-fit testing for multivariate parametric models through
//! projected empirical processes and the K-2 (Khmaladze) rotation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over a tensor midpoint grid:
//!
//! - [`model`]: truncated parametric densities, their normalization, scores
//!   and samplers, plus the builtin models `Q`, `P`, `F1`, `F2`, `F3`.
//! - [`quadrature`]: the grid, Darboux sums, inner products and partial
//!   (prefix) integrals.
//! - [`fit`]: maximum likelihood, Fisher information and normalized scores.
//! - [`process`]: projection plans and the projected / plug-in processes.
//! - [`rotation`]: the isometry `l`, operators `K` and `U`, and the rotated
//!   process that carries a test of `F` onto the null of `Q`.
//! - [`stats`]: sup, Cramér-von Mises and Anderson-Darling functionals.
//! - [`sim`]: per-replicate kernels, null distributions, p-values.
//!
//! Parallel replication, file formats and the CLI live in the `k2gof` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod process;
pub mod quadrature;
pub mod rng;
pub mod rotation;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use fit::{fisher_information, mle_fit, normalized_scores, FisherMatrix, FitResult, NormalizedScores};
pub use model::{
    builtin, instantiate, sample, score, LogDensity, ModelInstance, ModelSpec, ParamDomain, ParamVector,
    Point, SupportRect,
};
pub use process::{build_projection_plan, plugin_process, projected_process, ProcessField, ProcessKind, ProjectionPlan};
pub use quadrature::{Grid, GridField};
pub use rng::RngStream;
pub use rotation::{build_rotation_plan, rotated_process, RotationPlan};
pub use sim::{critical_value, p_value, NullDistribution, StatKind};
pub use stats::{stat_ad, stat_cvm, stat_sup, StatTriple};
