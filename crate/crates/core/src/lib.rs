//! Latent geometry workbench.
//!
//! Measures and manipulates the geometry of factor-annotated latent spaces:
//! disentanglement metrics, traversal and interpolation, vector arithmetic
//! consistency, decision-tree guided traversal, and a small conditional
//! Gaussian VAE. A synthetic generator with known geometry backs every claim
//! with a testable oracle.

pub mod cvae;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod guided;
pub mod ingest;
pub mod learners;
pub mod metrics;
pub mod synth;

pub use dataset::{Factor, FactorSchema, Label, LatentDataset, Sample, Seed};
pub use error::{Error, Result};
pub use metrics::report::MetricReport;
