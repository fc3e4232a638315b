//! Classical post-processing for BB84 quantum key distribution.
//!
//! The crate turns raw detection records into a shared secret key while
//! accounting for every pre-shared key bit spent and every failure
//! probability incurred:
//!
//! - [`gf2`]: bit strings, one-time pad, LFSR and Toeplitz hashing;
//! - [`auth`]: LFSR-Toeplitz authentication tags with encrypted tags;
//! - [`sift`]: key sift and authenticated basis sift;
//! - [`reconcile`]: encrypted Cascade error correction and error verification;
//! - [`phase`]: phase-error-rate tail bounds and the exact sampling oracle;
//! - [`privamp`]: Toeplitz privacy amplification and its length/failure terms;
//! - [`budget`]: the key pool, cost/failure accounting and the parameter planner;
//! - [`session`]: simulated channel, two-party engine, transcripts and file formats.

pub mod auth;
pub mod budget;
mod error;
pub mod gf2;
pub mod phase;
pub mod privamp;
pub mod reconcile;
pub mod session;
pub mod sift;

pub use error::{Error, Result};
