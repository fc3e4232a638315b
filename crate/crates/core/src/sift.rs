//! Key sift (dropping empty rounds, resolving double clicks) and the
//! authenticated basis sift.
//!
//! Bases are encoded in bit strings as X = 0, Z = 1.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::auth::TagKey;
use crate::budget::{KeyPool, KeyPurpose};
use crate::error::{Error, Result};
use crate::gf2::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn bit(self) -> bool {
        self == Basis::Z
    }

    pub fn from_bit(bit: bool) -> Basis {
        if bit {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn random<R: RngCore + ?Sized>(p_x: f64, rng: &mut R) -> Basis {
        if rng.gen::<f64>() < p_x {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Click {
    None,
    Single(bool),
    Double,
}

/// What both parties recorded for one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDetection {
    pub pulse: u64,
    pub alice_bit: bool,
    pub alice_basis: Basis,
    pub bob_click: Click,
    pub bob_basis: Basis,
}

/// Alice's record of one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AliceRecord {
    pub pulse: u64,
    pub bit: bool,
    pub basis: Basis,
}

/// Bob's record of one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BobRecord {
    pub pulse: u64,
    pub click: Click,
    pub basis: Basis,
}

impl RawDetection {
    pub fn split(&self) -> (AliceRecord, BobRecord) {
        (
            AliceRecord {
                pulse: self.pulse,
                bit: self.alice_bit,
                basis: self.alice_basis,
            },
            BobRecord {
                pulse: self.pulse,
                click: self.bob_click,
                basis: self.bob_basis,
            },
        )
    }
}

/// One party's raw key after key sift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawKey {
    pub pulses: Vec<u64>,
    pub bits: BitString,
    pub bases: BitString,
}

impl RawKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Bob's side of key sift: keeps clicked rounds and assigns a random bit to
/// each double click. In passive-basis mode a double click also gets a
/// random basis, since no single detector fired to reveal one.
pub fn bob_key_sift<R: RngCore + ?Sized>(records: &[BobRecord], passive: bool, rng: &mut R) -> RawKey {
    let mut key = RawKey {
        pulses: Vec::new(),
        bits: BitString::new(),
        bases: BitString::new(),
    };
    for r in records {
        let (bit, basis) = match r.click {
            Click::None => continue,
            Click::Single(b) => (b, r.basis),
            Click::Double => {
                let bit = rng.gen::<bool>();
                let basis = if passive { Basis::from_bit(rng.gen::<bool>()) } else { r.basis };
                (bit, basis)
            }
        };
        key.pulses.push(r.pulse);
        key.bits.push(bit);
        key.bases.push(basis.bit());
    }
    key
}

/// Alice's side of key sift: keeps the pulses Bob announced, in his order.
pub fn alice_key_sift(records: &[AliceRecord], pulses: &[u64]) -> Result<RawKey> {
    let mut key = RawKey {
        pulses: Vec::with_capacity(pulses.len()),
        bits: BitString::with_capacity(pulses.len()),
        bases: BitString::with_capacity(pulses.len()),
    };
    let mut it = records.iter().peekable();
    let mut last = None;
    for &p in pulses {
        if last.is_some_and(|l| p <= l) {
            return Err(Error::Protocol("announced pulses are not increasing".into()));
        }
        last = Some(p);
        while it.peek().is_some_and(|r| r.pulse < p) {
            it.next();
        }
        match it.peek() {
            Some(r) if r.pulse == p => {
                key.pulses.push(p);
                key.bits.push(r.bit);
                key.bases.push(r.basis.bit());
            }
            _ => return Err(Error::Protocol(format!("announced pulse {p} was never sent"))),
        }
    }
    Ok(key)
}

/// Both raw keys from joint records, for local runs and tests.
pub fn key_sift<R: RngCore + ?Sized>(detections: &[RawDetection], passive: bool, rng: &mut R) -> (RawKey, RawKey) {
    let (alice, bob): (Vec<AliceRecord>, Vec<BobRecord>) = detections.iter().map(RawDetection::split).unzip();
    let bob_key = bob_key_sift(&bob, passive, rng);
    let alice_key = alice_key_sift(&alice, &bob_key.pulses).expect("joint records are consistent");
    (alice_key, bob_key)
}

/// One party's key split by the rounds where both bases agreed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisSplit {
    pub x: BitString,
    pub z: BitString,
    /// Raw-key positions of the X bits.
    pub x_index: Vec<usize>,
    pub z_index: Vec<usize>,
}

impl BasisSplit {
    pub fn get(&self, basis: Basis) -> &BitString {
        match basis {
            Basis::X => &self.x,
            Basis::Z => &self.z,
        }
    }

    pub fn get_mut(&mut self, basis: Basis) -> &mut BitString {
        match basis {
            Basis::X => &mut self.x,
            Basis::Z => &mut self.z,
        }
    }

    /// X block followed by Z block.
    pub fn concat(&self) -> BitString {
        self.x.concat(&self.z)
    }
}

pub fn split_by_basis(bits: &BitString, own_bases: &BitString, other_bases: &BitString) -> Result<BasisSplit> {
    for other in [own_bases, other_bases] {
        if other.len() != bits.len() {
            return Err(Error::LengthMismatch {
                expected: bits.len(),
                actual: other.len(),
            });
        }
    }
    let mut out = BasisSplit {
        x: BitString::new(),
        z: BitString::new(),
        x_index: Vec::new(),
        z_index: Vec::new(),
    };
    for i in 0..bits.len() {
        match (own_bases.get(i), other_bases.get(i)) {
            (false, false) => {
                out.x.push(bits.get(i));
                out.x_index.push(i);
            }
            (true, true) => {
                out.z.push(bits.get(i));
                out.z_index.push(i);
            }
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiftedKeys {
    pub alice: BasisSplit,
    pub bob: BasisSplit,
}

impl SiftedKeys {
    pub fn n_x(&self) -> usize {
        self.alice.x.len()
    }

    pub fn n_z(&self) -> usize {
        self.alice.z.len()
    }

    /// `n_x / (n_x + n_z)`; 0 when nothing survived.
    pub fn q_x(&self) -> f64 {
        let total = self.n_x() + self.n_z();
        if total == 0 {
            0.0
        } else {
            self.n_x() as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BasisSiftResult {
    Sifted(SiftedKeys),
    AuthFail,
}

/// Runs the basis sift between two local parties. Bob's bases go first,
/// then Alice's; each message carries a `k_bs`-bit tag under one shared
/// matrix key per party, so each pool spends `2 k_bs` pad bits.
pub fn basis_sift(alice: &RawKey, bob: &RawKey, k_bs: usize, alice_pool: &mut KeyPool, bob_pool: &mut KeyPool) -> Result<BasisSiftResult> {
    if alice.pulses != bob.pulses {
        return Err(Error::Protocol("raw keys refer to different pulses".into()));
    }
    let ka = TagKey::reserve(alice_pool, k_bs, KeyPurpose::BasisSiftMatrix, KeyPurpose::BasisSiftPad)?;
    let kb = TagKey::reserve(bob_pool, k_bs, KeyPurpose::BasisSiftMatrix, KeyPurpose::BasisSiftPad)?;

    let bob_tag = kb.seal(&bob.bases, bob_pool)?;
    if !ka.open(&bob.bases, &bob_tag, alice_pool)?.accepted() {
        return Ok(BasisSiftResult::AuthFail);
    }
    let alice_tag = ka.seal(&alice.bases, alice_pool)?;
    if !kb.open(&alice.bases, &alice_tag, bob_pool)?.accepted() {
        return Ok(BasisSiftResult::AuthFail);
    }
    Ok(BasisSiftResult::Sifted(SiftedKeys {
        alice: split_by_basis(&alice.bits, &alice.bases, &bob.bases)?,
        bob: split_by_basis(&bob.bits, &bob.bases, &alice.bases)?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn detections(n: usize, p_x: f64, p_double: f64, rng: &mut ChaCha8Rng) -> Vec<RawDetection> {
        (0..n)
            .map(|i| {
                let bit = rng.gen::<bool>();
                let click = if rng.gen::<f64>() < p_double { Click::Double } else { Click::Single(bit) };
                RawDetection {
                    pulse: i as u64,
                    alice_bit: bit,
                    alice_basis: Basis::random(p_x, rng),
                    bob_click: click,
                    bob_basis: Basis::random(p_x, rng),
                }
            })
            .collect()
    }

    fn within_4_sigma(count: f64, n: f64, p: f64) -> bool {
        (count - n * p).abs() <= 4.0 * (n * p * (1.0 - p)).sqrt()
    }

    #[test]
    fn all_no_click_gives_empty_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = detections(100, 0.5, 0.0, &mut rng);
        for r in &mut d {
            r.bob_click = Click::None;
        }
        let (a, b) = key_sift(&d, false, &mut rng);
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn single_clicks_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = detections(500, 0.5, 0.0, &mut rng);
        let (a, b) = key_sift(&d, false, &mut rng);
        assert_eq!(b.len(), 500);
        assert_eq!(a.bits, b.bits);
        for (i, r) in d.iter().enumerate() {
            assert_eq!(b.bases.get(i), r.bob_basis.bit());
            assert_eq!(a.bases.get(i), r.alice_basis.bit());
        }
    }

    #[test]
    fn double_clicks_get_fair_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = detections(10_000, 0.5, 1.0, &mut rng);
        let (_, b) = key_sift(&d, false, &mut rng);
        let frac = b.bits.count_ones() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
        // active mode keeps Bob's chosen basis
        for (i, r) in d.iter().enumerate() {
            assert_eq!(b.bases.get(i), r.bob_basis.bit());
        }
    }

    #[test]
    fn passive_mode_randomises_double_click_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = detections(10_000, 0.5, 1.0, &mut rng);
        for r in &mut d {
            r.bob_basis = Basis::X;
        }
        let (_, b) = key_sift(&d, true, &mut rng);
        assert!(within_4_sigma(b.bases.count_ones() as f64, 10_000.0, 0.5));
    }

    #[test]
    fn alice_rejects_unknown_or_unordered_pulses() {
        let recs = [AliceRecord { pulse: 3, bit: true, basis: Basis::X }];
        assert!(alice_key_sift(&recs, &[4]).is_err());
        assert!(alice_key_sift(&recs, &[3, 3]).is_err());
        assert_eq!(alice_key_sift(&recs, &[3]).unwrap().bits.len(), 1);
    }

    fn sift_all(d: &[RawDetection], rng: &mut ChaCha8Rng) -> SiftedKeys {
        let (a, b) = key_sift(d, false, rng);
        let mut pa = KeyPool::random(200, rng);
        let mut pb = pa.clone();
        match basis_sift(&a, &b, 20, &mut pa, &mut pb).unwrap() {
            BasisSiftResult::Sifted(s) => {
                assert_eq!(pa.charged_for(KeyPurpose::BasisSiftPad), 40);
                assert_eq!(pb.charged_for(KeyPurpose::BasisSiftPad), 40);
                assert_eq!(pa.reserved_total(), 40);
                s
            }
            BasisSiftResult::AuthFail => panic!("honest sift rejected"),
        }
    }

    #[test]
    fn identical_bases_keep_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = detections(1000, 0.5, 0.0, &mut rng);
        for r in &mut d {
            r.bob_basis = r.alice_basis;
        }
        let s = sift_all(&d, &mut rng);
        assert_eq!(s.n_x() + s.n_z(), 1000);
        assert_eq!(s.alice, s.bob);
    }

    #[test]
    fn uniform_bases_keep_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = detections(100_000, 0.5, 0.0, &mut rng);
        let s = sift_all(&d, &mut rng);
        assert!(within_4_sigma((s.n_x() + s.n_z()) as f64, 1e5, 0.5));
    }

    #[test]
    fn biased_bases_give_expected_q_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = detections(100_000, 0.96, 0.0, &mut rng);
        let s = sift_all(&d, &mut rng);
        let q = 0.96f64.powi(2) / (0.96f64.powi(2) + 0.04f64.powi(2));
        assert!((q - 0.998).abs() < 5e-4);
        let kept = (s.n_x() + s.n_z()) as f64;
        assert!(within_4_sigma(s.n_x() as f64, kept, q));
        assert_eq!(s.q_x(), s.n_x() as f64 / kept);
    }

    #[test]
    fn index_maps_point_at_matching_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = detections(2000, 0.7, 0.1, &mut rng);
        let (a, b) = key_sift(&d, false, &mut rng);
        let s = sift_all(&d, &mut ChaCha8Rng::seed_from_u64(8));
        let s2 = SiftedKeys {
            alice: split_by_basis(&a.bits, &a.bases, &b.bases).unwrap(),
            bob: split_by_basis(&b.bits, &b.bases, &a.bases).unwrap(),
        };
        assert_eq!(s.alice.x_index.len(), s2.alice.x_index.len());
        assert_eq!(s2.alice.x_index, s2.bob.x_index);
        for (k, &i) in s2.alice.x_index.iter().enumerate() {
            assert!(!a.bases.get(i) && !b.bases.get(i));
            assert_eq!(s2.alice.x.get(k), a.bits.get(i));
            assert_eq!(s2.bob.x.get(k), b.bits.get(i));
        }
        for &i in &s2.alice.z_index {
            assert!(a.bases.get(i) && b.bases.get(i));
        }
    }

    #[test]
    fn mismatched_pools_fail_authentication() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = detections(100, 0.5, 0.0, &mut rng);
        let (a, b) = key_sift(&d, false, &mut rng);
        let mut pa = KeyPool::random(200, &mut rng);
        let mut pb = KeyPool::random(200, &mut rng);
        assert_eq!(basis_sift(&a, &b, 20, &mut pa, &mut pb).unwrap(), BasisSiftResult::AuthFail);
    }
}
