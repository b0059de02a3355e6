use thiserror::Error;

use crate::gateway::GatewayError;

/// Top-level error for engine operations that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error(transparent)]
    Session(#[from] crate::model::SessionIoError),

    #[error(transparent)]
    Clustering(#[from] crate::clustering::ClusterError),

    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),

    #[error(transparent)]
    Predicate(#[from] crate::slices::PredicateError),

    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("unknown concept {0}")]
    UnknownConcept(String),

    #[error("concept inactive: {0}")]
    ConceptInactive(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<crate::gateway::TemplateError> for Error {
    fn from(e: crate::gateway::TemplateError) -> Self {
        Error::Gateway(e.into())
    }
}

impl From<crate::gateway::ParseError> for Error {
    fn from(e: crate::gateway::ParseError) -> Self {
        Error::Gateway(e.into())
    }
}
