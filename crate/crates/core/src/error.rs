use thiserror::Error;

use crate::graph::VertexId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("asymmetric multiplicity: pi({x},{y}) = {forward} but pi({y},{x}) = {backward}")]
    Asymmetric {
        x: VertexId,
        y: VertexId,
        forward: u64,
        backward: u64,
    },

    #[error("vertex {0} is not present in the snapshot")]
    UnknownVertex(VertexId),

    #[error("vertex {0} is isolated (degree 0)")]
    Isolated(VertexId),

    #[error("monotonicity breach at t={t}: {detail}")]
    Monotonicity { t: usize, detail: String },

    #[error("budget exceeded: {what} ({used} > cap {cap}) at t={t}")]
    Budget {
        what: &'static str,
        used: u64,
        cap: u64,
        t: usize,
    },

    #[error("enumeration cap exceeded: {vertices} vertices > cap {cap}; use an analytic profile")]
    EnumerationCap { vertices: usize, cap: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("nesting violation at stage {stage}: {detail}")]
    Nesting { stage: usize, detail: String },

    #[error("region has an empty relative boundary; exit time is undefined")]
    EmptyBoundary,

    #[error("no isoperimetric profile available at t={0}")]
    MissingProfile(usize),

    #[error("non-monotone profile: {0}")]
    NonMonotoneProfile(String),

    #[error("family `{0}` has no certified analytic profile")]
    NoCertificate(String),

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("family parameters: {0}")]
    FamilyParams(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
