use thiserror::Error;

/// Errors produced by simulation components.
#[derive(Debug, Error)]
pub enum AxonError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("shapes {0:?} and {1:?} are not broadcast-compatible")]
    BroadcastMismatch(Vec<usize>, Vec<usize>),

    #[error("invalid sizing: {0}")]
    InvalidSize(String),

    #[error("step length must be positive, got {0}")]
    NonPositiveStep(f32),

    #[error("delay {delay} ms outside the stored window [0, {max}] ms")]
    DelayOutOfRange { delay: f32, max: f32 },

    #[error("selection before any observation was recorded")]
    NoObservations,

    #[error("injected current passed to a synapse that does not accept injection")]
    InjectionNotAllowed,

    #[error("staged updates must be nonnegative")]
    NegativeUpdate,

    #[error("an accumulator cannot combine full bounding with half bounding")]
    ConflictingBounds,

    #[error("cell already registered with this trainer")]
    DuplicateRegistration,

    #[error("cell not registered with this trainer")]
    NotRegistered,

    #[error("connection has no updater for the trained parameter")]
    MissingUpdater,

    #[error("connection has no trainable delays")]
    DelaysDisabled,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, AxonError>;
