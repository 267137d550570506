//! Error type shared by every module in the crate.

use crate::trace::ObjectId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A loaded document or constructed value breaks an invariant.
    /// `field` names what was wrong, `rule` states the rule it broke.
    #[error("invalid {field}: {rule}")]
    Invalid { field: String, rule: String },

    /// Sensitivity classification is undefined when no sample attributed an
    /// access to the object; the caller must treat the object as having no
    /// main-memory traffic in the phase.
    #[error("no attributed samples for object {0}")]
    NoAttributedSamples(ObjectId),

    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),

    #[error("object {0} is not referenced where required")]
    NotReferenced(ObjectId),

    #[error("infeasible eviction: need {needed} bytes but only {available} bytes are evictable")]
    InfeasibleEviction { needed: u64, available: u64 },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("dependency violation: {0}")]
    DependencyViolation(String),

    #[error("capacity violation: {0}")]
    CapacityViolation(String),

    #[error("schema version mismatch: expected \"{expected}\", got \"{got}\"")]
    SchemaVersion { expected: String, got: String },

    #[error("cannot parse quantity {0:?}")]
    Quantity(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
