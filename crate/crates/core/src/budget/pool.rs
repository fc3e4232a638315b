use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitString;

/// What a block of pre-shared key was spent on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyPurpose {
    BasisSiftMatrix,
    BasisSiftPad,
    EcParity,
    EvMatrix,
    EvPad,
    PaMatrix,
    PaPad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub purpose: KeyPurpose,
    pub amount: usize,
    /// Charged entries count against net key growth. Uncharged entries are
    /// Toeplitz matrix keys, which stay private because every tag built from
    /// them is one-time-pad encrypted.
    pub charged: bool,
}

/// Pre-shared secret key, consumed strictly sequentially.
///
/// Two parties holding mirrored pools and issuing the same draws in the same
/// order always obtain the same bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPool {
    bits: BitString,
    drawn: usize,
    ledger: Vec<LedgerEntry>,
}

const POOL_MAGIC: &[u8; 4] = b"QKDP";
const POOL_VERSION: u16 = 1;

impl KeyPool {
    pub fn new(bits: BitString) -> Self {
        KeyPool {
            bits,
            drawn: 0,
            ledger: Vec::new(),
        }
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        KeyPool::new(BitString::random(len, rng))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn drawn(&self) -> usize {
        self.drawn
    }

    pub fn available(&self) -> usize {
        self.bits.len() - self.drawn
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Consumes `len` bits and charges them to `purpose`.
    pub fn draw(&mut self, len: usize, purpose: KeyPurpose) -> Result<BitString> {
        self.take(len, purpose, true)
    }

    /// Takes `len` bits for a Toeplitz matrix key; recorded but not charged.
    pub fn reserve(&mut self, len: usize, purpose: KeyPurpose) -> Result<BitString> {
        self.take(len, purpose, false)
    }

    fn take(&mut self, len: usize, purpose: KeyPurpose, charged: bool) -> Result<BitString> {
        if len > self.available() {
            return Err(Error::PoolExhausted {
                requested: len,
                available: self.available(),
            });
        }
        let out = self.bits.slice(self.drawn..self.drawn + len);
        self.drawn += len;
        self.ledger.push(LedgerEntry {
            purpose,
            amount: len,
            charged,
        });
        Ok(out)
    }

    pub fn charged_total(&self) -> usize {
        self.ledger.iter().filter(|e| e.charged).map(|e| e.amount).sum()
    }

    pub fn reserved_total(&self) -> usize {
        self.ledger.iter().filter(|e| !e.charged).map(|e| e.amount).sum()
    }

    pub fn charged_for(&self, purpose: KeyPurpose) -> usize {
        self.ledger
            .iter()
            .filter(|e| e.charged && e.purpose == purpose)
            .map(|e| e.amount)
            .sum()
    }

    /// Bits not yet drawn.
    pub fn remaining(&self) -> BitString {
        self.bits.slice(self.drawn..self.bits.len())
    }

    /// File form: `b"QKDP"`, u16 LE version, then the bit string wire form.
    /// Only the key material is stored; a loaded pool starts undrawn.
    pub fn to_file_bytes(bits: &BitString) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + bits.len().div_ceil(8));
        out.extend_from_slice(POOL_MAGIC);
        out.extend_from_slice(&POOL_VERSION.to_le_bytes());
        out.extend_from_slice(&bits.to_wire());
        out
    }

    pub fn from_file_bytes(buf: &[u8]) -> Result<KeyPool> {
        if buf.len() < 6 || &buf[..4] != POOL_MAGIC {
            return Err(Error::Decode("not a key pool file".into()));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != POOL_VERSION {
            return Err(Error::Decode(format!("unsupported key pool version {version}")));
        }
        let (bits, used) = BitString::from_wire(&buf[6..])?;
        if 6 + used != buf.len() {
            return Err(Error::Decode("trailing bytes after key pool".into()));
        }
        Ok(KeyPool::new(bits))
    }
}
