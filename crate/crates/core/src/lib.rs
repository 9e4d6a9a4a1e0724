//! Protein–ligand binding affinity from a distance-only graph transformer
//! whose atom representations feed a Lennard-Jones interaction head.
//!
//! The pipeline is: [`complex::parse_complex`] → [`complex::build_knn_graph`]
//! → [`encoder::encode`] → [`physics`] energy and residual → ŷ = σ·E.
//! [`model::Model`] bundles the stages with their parameters.

pub mod complex;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod model;
pub mod physics;
pub mod training;

pub use error::{Error, Result};
pub use model::Model;
