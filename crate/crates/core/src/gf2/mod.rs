//! Bit-exact GF(2) primitives: packed bit strings, one-time pad, LFSR streams
//! and Toeplitz matrices.
//!
//! Conventions used everywhere in the crate:
//! - bit strings are LSB-first, bit 0 is the first processed/transmitted bit;
//! - Toeplitz entry `(i, j)` is `diagonal[i - j + cols - 1]`.

mod bitstring;
mod lfsr;
pub(crate) mod poly;
mod toeplitz;

pub use bitstring::{xor_otp, BitString};
pub use lfsr::{lfsr_stream, LfsrSpec, MAX_LFSR_DEGREE};
pub use poly::{is_irreducible, order_of_x};
pub use toeplitz::{toeplitz_from_lfsr, toeplitz_multiply, ToeplitzSource, ToeplitzSpec};
