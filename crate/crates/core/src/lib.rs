//! Taxonomic label correction for metagenomic contigs by hierarchical
//! knowledge distillation.
//!
//! A frozen-embedding teacher head and a composition/abundance student MLP
//! are trained together on noisy pseudo-labels over a local taxonomy tree;
//! the student's decoded predictions replace the pseudo-labels.

mod binio;
pub mod distill;
pub mod error;
pub mod features;
pub mod inference;
pub mod neuralnet;
pub mod par;
pub mod simgen;
pub mod taxonomy;
pub mod teacher;

pub use error::{Error, Result};
pub use par::Exec;
