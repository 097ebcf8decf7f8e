//! Dynamic dictionaries with stable perfect hashing built on quotient hash functions.
//!
//! * [`qhf`]: bijections `[u] -> [b] x [u/b]` with bounded bucket overflow.
//! * [`memb_ph`]: membership plus stable codes in `[n + t]`.
//! * [`ph_only`]: stable codes in `[n + t]` without membership, in less space.
//! * [`retrieval`]: `r`-bit payloads addressed by those codes.
//! * [`space`]: bit-exact space ledgers and a word-array memory model.

pub mod base_dict;
pub mod bits;
pub mod cli;
pub mod error;
pub mod harness;
pub mod memb_ph;
pub mod par;
pub mod perm;
pub mod ph_only;
pub mod qhf;
pub mod retrieval;
pub mod seed;
pub mod space;

pub use error::{Error, Result};
pub use memb_ph::{MembPhDict, MembPhParams, Tunables};
pub use ph_only::{PhOnlyDict, PhOnlyParams};
pub use qhf::{QhfParams, QuotientHashFn};
pub use retrieval::{PerfectHashing, RetrievalDict};
pub use space::{SpaceLedger, SpaceUsage};
