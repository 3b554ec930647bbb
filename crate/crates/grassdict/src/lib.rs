//! Grassmannian set-metrics for multivariate dictionaries.
//!
//! Multivariate dictionaries (collections of `N x rho` atoms) are compared by
//! the subspaces their atoms span: each atom maps to a point on the
//! Grassmannian `Gr(rho, N)`, per-pair ground distances are derived from
//! principal angles, and whole dictionaries are compared with Hausdorff or
//! Wasserstein set-metrics over those grounds. The crate also ships the
//! learning algorithms the metrics are designed to assess (M-OMP / M-DLA and
//! their rotation-invariant nDRI variants), frame-theoretic diagnostics
//! (coherence, Welch bound, ETF tests, RIP constants), synthetic
//! recovery/noise experiment runners and distance-matrix clustering
//! (affinity propagation, consensus ensembles, Hausdorff-linkage
//! agglomeration, Laplacian eigenmaps).
//!
//! The `grassdict` binary exposes the same functionality as a seeded,
//! reproducible command-line pipeline; see the README for the file formats.

pub mod cluster;
pub mod dictlearn;
mod error;
pub mod frames;
pub mod grassmann;
pub mod io;
pub mod linops;
pub mod plot;
pub mod setmetric;
pub mod synthetic;

pub use error::{Error, Result};
