use thiserror::Error;

/// Errors reported by the dictionaries and their building blocks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} is outside the domain [0, 2^{bits})")]
    OutOfDomain { value: u64, bits: u32 },

    #[error("key {0} is already present")]
    Duplicate(u64),

    #[error("key {0} is not present")]
    NotResident(u64),

    #[error("capacity of {0} entries exceeded")]
    CapacityExceeded(u64),

    #[error("all {0} codes are allocated")]
    Exhausted(u64),

    #[error("code {0} is not allocated")]
    NotAllocated(u64),

    /// A dictionary running without rebuilds could not place a key.
    #[error("insertion of {0} failed without rebuild")]
    InsertFailed(u64),

    /// The collision structure of a perfect-hashing-only dictionary is full; the caller must
    /// rebuild from its resident keys.
    #[error("collision structure full ({0} entries)")]
    CollisionBudget(u64),

    #[error("payload {payload} does not fit in {width} bits")]
    PayloadTooWide { payload: u64, width: u32 },

    #[error("ledger entry {component} would become negative")]
    LedgerUnderflow { component: String },

    #[error("malformed workload: {0}")]
    MalformedWorkload(String),

    #[error("rebuild did not converge after {0} attempts")]
    RebuildFailed(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
