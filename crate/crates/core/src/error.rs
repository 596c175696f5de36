//! Error types shared across the crate.
//!
//! Policies and estimators are strict about their preconditions: rather than
//! silently clamping a parameter into range, they return a typed error so a
//! caller can tell a misconfigured experiment apart from a legitimate run.

use thiserror::Error;

/// Everything that can go wrong while configuring or running a policy.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    /// An arm index referenced an arm the environment does not have.
    #[error("arm index {index} out of range for {count} arms")]
    InvalidArm { index: usize, count: usize },

    /// A queried action is not a member of the action set.
    #[error("action is not in the action set: {reason}")]
    InvalidAction { reason: String },

    /// A parameter combination the estimator's guarantees do not cover,
    /// e.g. a failure probability at least as large as the replication
    /// budget it is supposed to sit below.
    #[error("invalid parameter regime: {reason}")]
    InvalidRegime { reason: String },

    /// An estimator was handed fewer samples than its precondition demands.
    #[error("insufficient samples: needed {needed}, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    /// A scalar parameter fell outside its documented interval.
    #[error("{name} = {value} outside required range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    /// The horizon is too short to finish even the first batch of the
    /// schedule the policy committed to.
    #[error("horizon {horizon} too small: {reason}")]
    HorizonTooSmall { horizon: u64, reason: String },

    /// The supplied arm vectors do not span enough of the ambient space to
    /// identify the parameter (or the set is empty).
    #[error("degenerate arm set: {reason}")]
    DegenerateArmSet { reason: String },

    /// A design/info matrix that must be invertible was numerically singular.
    #[error("singular design matrix: {reason}")]
    SingularDesign { reason: String },

    /// A discretization step would produce more points than the configured cap.
    #[error("covering net too large: {points} points exceeds cap {cap}")]
    NetTooLarge { points: u64, cap: u64 },

    /// A structurally invalid experiment description (bad JSON field
    /// combinations, empty arm list, and so on).
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, BanditError>;
