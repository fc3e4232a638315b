use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{Error, Result};

/// Packed, LSB-first sequence of bits.
///
/// Bit `i` lives in word `i / 64` at position `i % 64`. Bits past `len` in the
/// last word are always zero, so word-level operations (XOR, popcount) never
/// see stale data.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        BitString {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitString {
            words: Vec::with_capacity(words_for(bits)),
            len: 0,
        }
    }

    /// Builds a bit string from the low `len` bits of `value` (bit 0 first).
    pub fn from_u128(value: u128, len: usize) -> Self {
        assert!(len <= 128);
        let mut out = BitString::zeros(len);
        for i in 0..len {
            if (value >> i) & 1 == 1 {
                out.set(i, true);
            }
        }
        out
    }

    /// Low (up to) 128 bits as an integer, bit 0 least significant.
    pub fn to_u128(&self) -> u128 {
        let mut v = 0u128;
        for (i, w) in self.words.iter().take(2).enumerate() {
            v |= (*w as u128) << (64 * i);
        }
        v
    }

    /// Uniformly random bits.
    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut words = vec![0u64; words_for(len)];
        for w in words.iter_mut() {
            *w = rng.next_u64();
        }
        let mut out = BitString { words, len };
        out.clear_tail();
        out
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::Dimension(format!(
                "{} words cannot hold exactly {len} bits",
                words.len()
            )));
        }
        let mut out = BitString { words, len };
        out.clear_tail();
        Ok(out)
    }

    /// Bits packed LSB-first into bytes; trailing bits of the last byte are ignored.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Decode(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, b) in bytes.iter().enumerate() {
            words[i / 8] |= (*b as u64) << (8 * (i % 8));
        }
        let mut out = BitString { words, len };
        out.clear_tail();
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len.div_ceil(8))
            .map(|i| (self.words[i / 8] >> (8 * (i % 8))) as u8)
            .collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i & 63);
        if bit {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        if bit {
            let i = self.len - 1;
            self.words[i >> 6] |= 1u64 << (i & 63);
        }
    }

    pub fn extend_from(&mut self, other: &BitString) {
        let shift = self.len % 64;
        if shift == 0 {
            self.words.extend_from_slice(&other.words);
        } else {
            for &w in &other.words {
                *self.words.last_mut().expect("nonzero length") |= w << shift;
                self.words.push(w >> (64 - shift));
            }
        }
        self.len += other.len;
        self.words.truncate(words_for(self.len));
        self.clear_tail();
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    /// Copies bits `range.start..range.end`.
    pub fn slice(&self, range: Range<usize>) -> BitString {
        assert!(range.start <= range.end && range.end <= self.len);
        let len = range.end - range.start;
        let mut words = Vec::with_capacity(words_for(len));
        for k in 0..words_for(len) {
            words.push(self.window_word(range.start + 64 * k));
        }
        let mut out = BitString { words, len };
        out.clear_tail();
        out
    }

    /// The 64 bits starting at `offset` (bits past the end read as zero).
    #[inline]
    pub(crate) fn window_word(&self, offset: usize) -> u64 {
        let base = offset >> 6;
        let sh = offset & 63;
        let lo = self.words.get(base).copied().unwrap_or(0);
        if sh == 0 {
            lo
        } else {
            let hi = self.words.get(base + 1).copied().unwrap_or(0);
            (lo >> sh) | (hi << (64 - sh))
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn parity(&self) -> bool {
        self.words.iter().fold(0u64, |acc, w| acc ^ w).count_ones() % 2 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    pub fn xor_assign(&mut self, other: &BitString) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    /// Number of positions where the two strings differ.
    pub fn hamming_distance(&self, other: &BitString) -> Result<usize> {
        Ok(self.xor(other)?.count_ones())
    }

    /// Bit-reversed copy: bit `i` of the result is bit `len - 1 - i` of `self`.
    pub fn reversed(&self) -> BitString {
        let mut out = BitString::zeros(self.len);
        for i in 0..self.len {
            if self.get(i) {
                out.set(self.len - 1 - i, true);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Wire form: bit count as u64 little-endian, then the packed bytes.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.len.div_ceil(8));
        out.extend_from_slice(&(self.len as u64).to_le_bytes());
        out.extend_from_slice(&self.to_bytes());
        out
    }

    /// Parses the wire form, returning the bit string and the bytes consumed.
    pub fn from_wire(buf: &[u8]) -> Result<(BitString, usize)> {
        if buf.len() < 8 {
            return Err(Error::Decode("truncated bit string header".into()));
        }
        let len = u64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| Error::Decode("bit length overflow".into()))?;
        let nbytes = len.div_ceil(8);
        if buf.len() < 8 + nbytes {
            return Err(Error::Decode(format!(
                "bit string declares {len} bits but only {} payload bytes follow",
                buf.len() - 8
            )));
        }
        Ok((BitString::from_bytes(&buf[8..8 + nbytes], len)?, 8 + nbytes))
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let iter = iter.into_iter();
        let mut out = BitString::with_capacity(iter.size_hint().0);
        for b in iter {
            out.push(b);
        }
        out
    }
}

impl fmt::Display for BitString {
    /// Bit 0 first, e.g. `"1010"` has bit 0 set.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len, self.count_ones())
        }
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Decode(format!("invalid bit character {other:?}"))),
            })
            .collect()
    }
}

/// One-time-pad encryption (and decryption) of `message` with `pad`.
pub fn xor_otp(message: &BitString, pad: &BitString) -> Result<BitString> {
    if message.len() != pad.len() {
        return Err(Error::LengthMismatch {
            expected: message.len(),
            actual: pad.len(),
        });
    }
    message.xor(pad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn otp_zero_pad_is_identity() {
        assert_eq!(xor_otp(&bs("1010"), &bs("0000")).unwrap(), bs("1010"));
    }

    #[test]
    fn otp_self_cancels() {
        assert_eq!(xor_otp(&bs("1010"), &bs("1010")).unwrap(), bs("0000"));
    }

    #[test]
    fn otp_length_mismatch_is_error() {
        assert_eq!(
            xor_otp(&bs("101"), &bs("1010")),
            Err(Error::LengthMismatch { expected: 3, actual: 4 })
        );
    }

    #[test]
    fn otp_round_trip_1000_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let m = BitString::random(64, &mut rng);
            let p = BitString::random(64, &mut rng);
            let c = xor_otp(&m, &p).unwrap();
            assert_eq!(xor_otp(&c, &p).unwrap(), m);
        }
    }

    #[test]
    fn display_is_lsb_first() {
        let mut b = BitString::zeros(4);
        b.set(0, true);
        assert_eq!(b.to_string(), "1000");
        assert_eq!(b.to_u128(), 1);
    }

    #[test]
    fn wire_layout_is_length_then_lsb_first_bytes() {
        let b = bs("1000000011");
        let wire = b.to_wire();
        assert_eq!(&wire[..8], &10u64.to_le_bytes());
        assert_eq!(&wire[8..], &[0b0000_0001, 0b0000_0011]);
        assert_eq!(BitString::from_wire(&wire).unwrap(), (b, 10));
    }

    #[test]
    fn truncated_wire_is_rejected() {
        let wire = bs("1010101010").to_wire();
        assert!(BitString::from_wire(&wire[..9]).is_err());
    }

    proptest! {
        #[test]
        fn concat_then_slice_recovers_parts(a in proptest::collection::vec(any::<bool>(), 0..200),
                                            b in proptest::collection::vec(any::<bool>(), 0..200)) {
            let x: BitString = a.iter().copied().collect();
            let y: BitString = b.iter().copied().collect();
            let z = x.concat(&y);
            prop_assert_eq!(z.len(), a.len() + b.len());
            prop_assert_eq!(z.slice(0..a.len()), x);
            prop_assert_eq!(z.slice(a.len()..z.len()), y);
        }

        #[test]
        fn wire_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let x: BitString = bits.iter().copied().collect();
            let (y, used) = BitString::from_wire(&x.to_wire()).unwrap();
            prop_assert_eq!(used, x.to_wire().len());
            prop_assert_eq!(y, x);
        }
    }
}
