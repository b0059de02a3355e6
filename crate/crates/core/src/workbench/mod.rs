//! Analyst workbench: concept actions, view payloads, and the HTTP service.

pub mod actions;
pub mod service;
pub mod views;

pub use actions::{add_concept, define_slice, edit_concept, merge_concepts, split_concept, ALL_SLICE};
pub use service::{router, serve, AppState, GatewayFactory, JobState, JobStatus, ServiceOptions};
pub use views::{concept_detail, matrix_view, slice_detail, ConceptDetail, MatrixView, SliceDetail};
