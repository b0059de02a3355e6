//! Concept induction over unstructured text: distill documents into bullet
//! summaries, cluster them, synthesize named concepts with explicit criteria,
//! score every document against every concept, and loop on what is left
//! uncovered.

pub mod clustering;
pub mod config;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod slices;
pub mod workbench;

pub use error::{Error, Result};
