//! Message authentication with LFSR-generated Toeplitz hashing and
//! one-time-pad encrypted tags.
//!
//! A tag of length `k` over an `m`-bit message costs a `2k`-bit matrix key and
//! a `k`-bit pad. The pad is single-use. The matrix key is reusable across
//! tags because the tags are encrypted, so it is reserved from the key pool
//! rather than charged (see [`KeyPool::reserve`]). A forged message passes
//! with probability at most `m 2^(1-k)`.

use crate::budget::{KeyPool, KeyPurpose};
use crate::error::{Error, Result};
use crate::gf2::{toeplitz_from_lfsr, toeplitz_multiply, xor_otp, BitString};

/// An encrypted authentication tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthTag {
    ciphertext: BitString,
}

impl AuthTag {
    pub fn from_ciphertext(ciphertext: BitString) -> Self {
        AuthTag { ciphertext }
    }

    pub fn k(&self) -> usize {
        self.ciphertext.len()
    }

    pub fn ciphertext(&self) -> &BitString {
        &self.ciphertext
    }

    pub fn ciphertext_mut(&mut self) -> &mut BitString {
        &mut self.ciphertext
    }

    /// Wire form: `k` as u16 LE followed by the packed tag bits.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = (self.k() as u16).to_le_bytes().to_vec();
        out.extend_from_slice(&self.ciphertext.to_bytes());
        out
    }

    pub fn from_wire(buf: &[u8]) -> Result<(AuthTag, usize)> {
        if buf.len() < 2 {
            return Err(Error::Decode("truncated tag header".into()));
        }
        let k = u16::from_le_bytes([buf[0], buf[1]]) as usize;
        let nbytes = k.div_ceil(8);
        if buf.len() < 2 + nbytes {
            return Err(Error::Decode("truncated tag body".into()));
        }
        let ciphertext = BitString::from_bytes(&buf[2..2 + nbytes], k)?;
        Ok((AuthTag { ciphertext }, 2 + nbytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        self == Verdict::Accept
    }
}

/// Unencrypted Toeplitz hash of `message`; the tag length is `matrix_key.len() / 2`.
pub fn bare_hash(message: &BitString, matrix_key: &BitString) -> Result<BitString> {
    if message.is_empty() {
        return Err(Error::Dimension("cannot authenticate an empty message".into()));
    }
    let k = matrix_key.len() / 2;
    let matrix = toeplitz_from_lfsr(matrix_key, k, message.len())?;
    toeplitz_multiply(&matrix, message)
}

pub fn make_tag(message: &BitString, matrix_key: &BitString, pad_key: &BitString) -> Result<AuthTag> {
    if matrix_key.len() != 2 * pad_key.len() {
        return Err(Error::LengthMismatch {
            expected: 2 * pad_key.len(),
            actual: matrix_key.len(),
        });
    }
    let hash = bare_hash(message, matrix_key)?;
    Ok(AuthTag {
        ciphertext: xor_otp(&hash, pad_key)?,
    })
}

/// Recomputes the tag and compares. Malformed inputs are rejections.
pub fn verify_tag(message: &BitString, tag: &AuthTag, matrix_key: &BitString, pad_key: &BitString) -> Verdict {
    match make_tag(message, matrix_key, pad_key) {
        Ok(expected) if expected == *tag => Verdict::Accept,
        _ => Verdict::Reject,
    }
}

/// Forgery probability bound `m 2^(1-k)` for an `m`-bit message and `k`-bit tag, clamped to 1.
pub fn auth_failure_prob(m: u64, k: u32) -> f64 {
    (m as f64 * (1.0 - k as f64).exp2()).min(1.0)
}

/// Smallest `k >= 2` with `m 2^(1-k) <= eps`.
pub fn required_tag_len(m: u64, eps: f64) -> u32 {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    let m = m.max(1);
    let mut k = (((m as f64) / eps).log2().ceil() as i64 + 1).max(2) as u32;
    while auth_failure_prob(m, k) > eps {
        k += 1;
    }
    while k > 2 && auth_failure_prob(m, k - 1) <= eps {
        k -= 1;
    }
    k
}

/// One party's authentication key for one purpose: a reserved matrix key
/// plus the knowledge of which pad purpose to charge per tag.
#[derive(Clone, Debug)]
pub struct TagKey {
    matrix_key: BitString,
    pad_purpose: KeyPurpose,
}

impl TagKey {
    pub fn reserve(pool: &mut KeyPool, k: usize, matrix_purpose: KeyPurpose, pad_purpose: KeyPurpose) -> Result<Self> {
        Ok(TagKey {
            matrix_key: pool.reserve(2 * k, matrix_purpose)?,
            pad_purpose,
        })
    }

    pub fn k(&self) -> usize {
        self.matrix_key.len() / 2
    }

    /// Tags `message`, drawing a fresh pad.
    pub fn seal(&self, message: &BitString, pool: &mut KeyPool) -> Result<AuthTag> {
        let pad = pool.draw(self.k(), self.pad_purpose)?;
        make_tag(message, &self.matrix_key, &pad)
    }

    /// Checks a received tag, drawing the matching pad even on rejection so
    /// that mirrored pools stay aligned.
    pub fn open(&self, message: &BitString, tag: &AuthTag, pool: &mut KeyPool) -> Result<Verdict> {
        let pad = pool.draw(self.k(), self.pad_purpose)?;
        if tag.k() != self.k() {
            return Ok(Verdict::Reject);
        }
        Ok(verify_tag(message, tag, &self.matrix_key, &pad))
    }
}
