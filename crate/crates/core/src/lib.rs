//! Minimax learning rates for densities on the unit interval.
//!
//! Densities are piecewise constant on a uniform grid. On top of that the
//! crate provides divergences, Hölder smoothness classes, metric entropy of
//! sampled families, finite-state tournament learning, the mixture-based
//! epsilon-net estimator with its risk bounds, and two economic applications.

pub mod applications;
pub mod error;
pub mod finite_state;
pub mod fit;
pub mod grid_density;
pub mod holder_class;
pub mod metric_entropy;
pub mod minimax_estimator;
pub mod seeding;

pub use error::{Error, Result};
pub use grid_density::{GridDensity, LpOrder};
pub use holder_class::HolderSpec;
pub use metric_entropy::Metric;
pub use minimax_estimator::{EpsilonSchedule, RateCurve, RiskSettings};
