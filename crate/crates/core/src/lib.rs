//! General morphological analysis engine.
//!
//! A [`MorphologicalField`] lists dimensions and their mutually exclusive
//! conditions. On top of it this crate provides configuration-space counting,
//! expert-score ingestion, cross-consistency assessment of condition pairs,
//! correlation networks with community/clique/centrality analytics, seeded
//! k-means clustering of pairs, and scenario assembly.

pub mod assess;
pub mod cca;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod field;
pub mod graph;
pub mod pipeline;
pub mod reference;
pub mod report;
pub mod space;

pub use error::{Error, Result, RowIssue};
pub use exec::Execution;
pub use field::{Configuration, Dimension, DimensionCluster, MorphologicalField};
pub use space::ConstraintSet;
