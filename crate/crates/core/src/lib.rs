//! Topological depth prediction for firn micro-CT slices.
//!
//! The pipeline turns a grayscale image into a fixed-length feature vector
//! by way of cubical persistent homology, then predicts the sample's depth
//! with a random forest:
//!
//! 1. [`image`] loads PGM/PNG images and provides the manipulations the
//!    evaluation scenarios need (blur, quadrants, rigid motions).
//! 2. [`binarize`] thresholds an image into pore and ice phases (Otsu on a
//!    smoothed histogram) and computes an exact Euclidean distance
//!    transform of the pore phase.
//! 3. [`cubical`] builds a filtered cubical complex over a scalar grid and
//!    computes its dimension-0 and dimension-1 persistence diagrams.
//! 4. [`curves`] vectorizes diagrams as Betti or Gaussian persistence
//!    curves, giving four featurizations: sublevel-set or
//!    distance-transform filtration, Betti or Gaussian curve.
//! 5. [`forest`] trains random forests (regression and classification)
//!    from scratch with seeded determinism.
//! 6. [`experiments`] evaluates the featurizations across train/test
//!    scenarios and renders result tables.
//! 7. [`synth`] generates the synthetic firn corpus used for end-to-end
//!    evaluation, with depth-dependent porosity and grain size.
//!
//! Everything downstream of a seed is deterministic: same inputs, same
//! bytes out.

pub mod binarize;
pub mod cubical;
pub mod curves;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod image;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
