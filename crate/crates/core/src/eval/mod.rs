//! Evaluation harness: synthetic corpora, coverage against ground truth,
//! classification metrics and repeated trials.

pub mod coverage;
pub mod hierarchy;
pub mod metrics;
pub mod synthetic;
pub mod trials;

pub use coverage::{auto_coverage, enforce_matches, session_concept_texts, CoverageMatch, MatchResult, MatchWarning};
pub use hierarchy::{ConceptHierarchy, GenericConcept};
pub use metrics::{
    classification_metrics, cohens_kappa, kappa_from_counts, metrics_from_counts, parse_labels, ClassificationMetrics,
    Contingency, Kappa,
};
pub use synthetic::{
    generate_synthetic_dataset, generate_synthetic_doc, hierarchy_specs, split_sentences, verify_synthetic,
    GenerateOptions, GeneratedDoc, SyntheticDataset, SyntheticDoc, SyntheticSpec, Verification,
};
pub use trials::{matcher_mae, run_trials, ManualMatch, ManualTrial, MaeReport, TrialInput, TrialReport, TrialsFile};
