//! Error correction over an encrypted channel, and error verification.
//!
//! Bob drives the correction. Every bit Alice reveals about her key (block
//! parities, or the filler of the Shannon-limit codec) is one-time-pad
//! encrypted with pool bits and metered as `k_ec`; Bob's requests and error
//! counts are public.

mod cascade;

use std::collections::VecDeque;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use cascade::{pass_permutation, run_cascade, CascadeConfig, CascadeCorrector, CascadeResponder, Query};

use crate::auth::{AuthTag, TagKey, Verdict};
use crate::budget::{KeyPool, KeyPurpose};
use crate::error::{Error, Result};
use crate::gf2::{xor_otp, BitString};
use crate::phase::h2;
use crate::sift::{Basis, BasisSplit};

/// Reconciliation strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Codec {
    /// Interactive parity bisection, four passes.
    Cascade,
    /// Simulation-only codec at efficiency `f`: Bob learns Alice's key through
    /// a side channel and Alice spends `ceil(f n H2(e))` encrypted bits.
    ShannonOracle { f: f64 },
}

/// Error-correction traffic seen by one party.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageMeter {
    /// All error-correction payload bits, public or not.
    pub bits_sent: u64,
    /// Encrypted bits sent or received; each consumed one pool bit.
    pub k_ec: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub n_x: u64,
    pub n_z: u64,
    pub errors_x: u64,
    pub errors_z: u64,
    pub converged_x: bool,
    pub converged_z: bool,
}

impl ErrorCounts {
    fn rate(errors: u64, n: u64) -> f64 {
        if n == 0 {
            0.0
        } else {
            errors as f64 / n as f64
        }
    }

    pub fn e_bx(&self) -> f64 {
        Self::rate(self.errors_x, self.n_x)
    }

    pub fn e_bz(&self) -> f64 {
        Self::rate(self.errors_z, self.n_z)
    }

    fn add(&mut self, basis: Basis, errors: u64, converged: bool) {
        match basis {
            Basis::X => {
                self.errors_x += errors;
                self.converged_x = converged;
            }
            Basis::Z => {
                self.errors_z += errors;
                self.converged_z = converged;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EcMessage {
    /// Bob to Alice: start correcting `basis` with the public shuffle seed.
    Setup { basis: Basis, seed: u64, attempt: u32 },
    Request { basis: Basis, queries: Vec<Query> },
    /// Alice to Bob: encrypted parities.
    Parities { basis: Basis, bits: BitString },
    /// Bob to Alice: correction of `basis` finished after `flips` flips.
    Done { basis: Basis, flips: u64, converged: bool },
    /// Alice to Bob, simulation side channel of the oracle codec.
    OracleReveal { basis: Basis, key: BitString },
    /// Alice to Bob: the oracle codec's encrypted filler.
    OracleSyndrome { basis: Basis, bits: BitString },
}

fn basis_byte(b: Basis) -> u8 {
    b.bit() as u8
}

fn read_basis(v: u8) -> Result<Basis> {
    match v {
        0 => Ok(Basis::X),
        1 => Ok(Basis::Z),
        _ => Err(Error::Decode(format!("bad basis byte {v}"))),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Decode("truncated message".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bits(&mut self) -> Result<BitString> {
        let (b, used) = BitString::from_wire(&self.buf[self.pos..])?;
        self.pos += used;
        Ok(b)
    }
}

impl EcMessage {
    pub fn basis(&self) -> Basis {
        match self {
            EcMessage::Setup { basis, .. }
            | EcMessage::Request { basis, .. }
            | EcMessage::Parities { basis, .. }
            | EcMessage::Done { basis, .. }
            | EcMessage::OracleReveal { basis, .. }
            | EcMessage::OracleSyndrome { basis, .. } => *basis,
        }
    }

    /// Payload bits that travel one-time-pad encrypted.
    pub fn encrypted_bits(&self) -> u64 {
        match self {
            EcMessage::Parities { bits, .. } | EcMessage::OracleSyndrome { bits, .. } => bits.len() as u64,
            _ => 0,
        }
    }

    /// Little-endian layout: kind byte, basis byte, then the fields in order;
    /// bit strings use their wire form, queries are `(u8, u32, u32)`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let (kind, basis) = match self {
            EcMessage::Setup { basis, .. } => (0u8, basis),
            EcMessage::Request { basis, .. } => (1, basis),
            EcMessage::Parities { basis, .. } => (2, basis),
            EcMessage::Done { basis, .. } => (3, basis),
            EcMessage::OracleReveal { basis, .. } => (4, basis),
            EcMessage::OracleSyndrome { basis, .. } => (5, basis),
        };
        out.push(kind);
        out.push(basis_byte(*basis));
        match self {
            EcMessage::Setup { seed, attempt, .. } => {
                out.extend_from_slice(&seed.to_le_bytes());
                out.extend_from_slice(&attempt.to_le_bytes());
            }
            EcMessage::Request { queries, .. } => {
                out.extend_from_slice(&(queries.len() as u32).to_le_bytes());
                for q in queries {
                    out.push(q.pass);
                    out.extend_from_slice(&q.start.to_le_bytes());
                    out.extend_from_slice(&q.end.to_le_bytes());
                }
            }
            EcMessage::Parities { bits, .. } | EcMessage::OracleReveal { key: bits, .. } | EcMessage::OracleSyndrome { bits, .. } => {
                out.extend_from_slice(&bits.to_wire());
            }
            EcMessage::Done { flips, converged, .. } => {
                out.extend_from_slice(&flips.to_le_bytes());
                out.push(*converged as u8);
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<EcMessage> {
        let mut r = Reader { buf, pos: 0 };
        let kind = r.u8()?;
        let basis = read_basis(r.u8()?)?;
        let msg = match kind {
            0 => EcMessage::Setup {
                basis,
                seed: r.u64()?,
                attempt: r.u32()?,
            },
            1 => {
                let count = r.u32()? as usize;
                if count.saturating_mul(9) > buf.len() {
                    return Err(Error::Decode("query count exceeds message".into()));
                }
                let mut queries = Vec::with_capacity(count);
                for _ in 0..count {
                    queries.push(Query {
                        pass: r.u8()?,
                        start: r.u32()?,
                        end: r.u32()?,
                    });
                }
                EcMessage::Request { basis, queries }
            }
            2 => EcMessage::Parities { basis, bits: r.bits()? },
            3 => EcMessage::Done {
                basis,
                flips: r.u64()?,
                converged: r.u8()? != 0,
            },
            4 => EcMessage::OracleReveal { basis, key: r.bits()? },
            5 => EcMessage::OracleSyndrome { basis, bits: r.bits()? },
            k => return Err(Error::Decode(format!("unknown error-correction message kind {k}"))),
        };
        if r.pos != buf.len() {
            return Err(Error::Decode("trailing bytes in error-correction message".into()));
        }
        Ok(msg)
    }
}

/// Alice's side of error correction: answers for both bases.
#[derive(Debug)]
pub struct EcAlice {
    codec: Codec,
    keys: BasisSplit,
    responder: Option<(Basis, CascadeResponder)>,
    pub meter: LeakageMeter,
    pub counts: ErrorCounts,
}

impl EcAlice {
    pub fn new(codec: Codec, keys: BasisSplit) -> Self {
        let counts = ErrorCounts {
            n_x: keys.x.len() as u64,
            n_z: keys.z.len() as u64,
            ..Default::default()
        };
        EcAlice {
            codec,
            keys,
            responder: None,
            meter: LeakageMeter::default(),
            counts,
        }
    }

    pub fn keys(&self) -> &BasisSplit {
        &self.keys
    }

    fn send(&mut self, msg: EcMessage) -> EcMessage {
        self.meter.bits_sent += 8 * msg.encode().len() as u64;
        self.meter.k_ec += msg.encrypted_bits();
        msg
    }

    pub fn handle<R: RngCore + ?Sized>(&mut self, msg: &EcMessage, pool: &mut KeyPool, rng: &mut R) -> Result<Vec<EcMessage>> {
        match (self.codec, msg) {
            (Codec::Cascade, EcMessage::Setup { basis, seed, .. }) => {
                self.responder = Some((*basis, CascadeResponder::new(self.keys.get(*basis).clone(), *seed)));
                Ok(Vec::new())
            }
            (Codec::Cascade, EcMessage::Request { basis, queries }) => {
                let responder = match &mut self.responder {
                    Some((b, r)) if b == basis => r,
                    _ => return Err(Error::Protocol("parity request before setup".into())),
                };
                let plain = responder.answer(queries)?;
                let pad = pool.draw(plain.len(), KeyPurpose::EcParity)?;
                let bits = xor_otp(&plain, &pad)?;
                Ok(vec![self.send(EcMessage::Parities { basis: *basis, bits })])
            }
            (Codec::ShannonOracle { .. }, EcMessage::Setup { basis, .. }) => {
                let key = self.keys.get(*basis).clone();
                // side channel: no pool cost, not counted as leakage
                Ok(vec![EcMessage::OracleReveal { basis: *basis, key }])
            }
            (codec, EcMessage::Done { basis, flips, converged }) => {
                let n = self.keys.get(*basis).len() as u64;
                if *flips > n {
                    return Err(Error::Protocol(format!("{flips} corrections in a {n}-bit key")));
                }
                self.counts.add(*basis, *flips, *converged);
                self.responder = None;
                if let Codec::ShannonOracle { f } = codec {
                    let len = oracle_syndrome_len(n, *flips, f);
                    let filler = BitString::random(len, rng);
                    let pad = pool.draw(len, KeyPurpose::EcParity)?;
                    let bits = xor_otp(&filler, &pad)?;
                    return Ok(vec![self.send(EcMessage::OracleSyndrome { basis: *basis, bits })]);
                }
                Ok(Vec::new())
            }
            (_, other) => Err(Error::Protocol(format!("unexpected message for Alice: {other:?}"))),
        }
    }
}

/// Encrypted bits the oracle codec spends on an `n`-bit key with `errors` errors.
pub fn oracle_syndrome_len(n: u64, errors: u64, f: f64) -> usize {
    if n == 0 {
        return 0;
    }
    (f * n as f64 * h2(errors as f64 / n as f64)).ceil() as usize
}

#[derive(Debug)]
enum BobStage {
    Idle,
    Cascade(Basis, Box<CascadeCorrector>),
    AwaitReveal(Basis),
    AwaitSyndrome(Basis),
}

/// Bob's side of error correction.
#[derive(Debug)]
pub struct EcBob {
    codec: Codec,
    keys: BasisSplit,
    e_cal: (f64, f64),
    attempt: u32,
    stage: BobStage,
    queue: VecDeque<Basis>,
    pub meter: LeakageMeter,
    pub counts: ErrorCounts,
}

impl EcBob {
    /// `e_cal` are the calibrated X and Z error rates used to size the first blocks.
    pub fn new(codec: Codec, keys: BasisSplit, e_cal: (f64, f64)) -> Self {
        let counts = ErrorCounts {
            n_x: keys.x.len() as u64,
            n_z: keys.z.len() as u64,
            ..Default::default()
        };
        EcBob {
            codec,
            keys,
            e_cal,
            attempt: 0,
            stage: BobStage::Idle,
            queue: VecDeque::new(),
            meter: LeakageMeter::default(),
            counts,
        }
    }

    pub fn keys(&self) -> &BasisSplit {
        &self.keys
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.stage, BobStage::Idle) && self.queue.is_empty()
    }

    fn send(&mut self, msg: EcMessage) -> EcMessage {
        self.meter.bits_sent += 8 * msg.encode().len() as u64;
        self.meter.k_ec += msg.encrypted_bits();
        msg
    }

    /// Starts a correction attempt over both bases, X first.
    pub fn begin<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<EcMessage>> {
        if !self.is_finished() {
            return Err(Error::Protocol("correction already running".into()));
        }
        self.attempt += 1;
        self.queue = VecDeque::from([Basis::X, Basis::Z]);
        self.next_basis(rng)
    }

    fn next_basis<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<EcMessage>> {
        let Some(basis) = self.queue.pop_front() else {
            self.stage = BobStage::Idle;
            return Ok(Vec::new());
        };
        let seed = rng.gen::<u64>();
        let setup = self.send(EcMessage::Setup { basis, seed, attempt: self.attempt });
        match self.codec {
            Codec::Cascade => {
                let key = self.keys.get(basis).clone();
                let e = match basis {
                    Basis::X => self.e_cal.0,
                    Basis::Z => self.e_cal.1,
                };
                let config = CascadeConfig::for_error_rate(e, key.len());
                let corrector = CascadeCorrector::new(key, config, seed);
                self.stage = BobStage::Cascade(basis, Box::new(corrector));
                let mut out = vec![setup];
                out.extend(self.advance(rng)?);
                Ok(out)
            }
            Codec::ShannonOracle { .. } => {
                self.stage = BobStage::AwaitReveal(basis);
                Ok(vec![setup])
            }
        }
    }

    fn advance<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<EcMessage>> {
        let BobStage::Cascade(basis, corrector) = &mut self.stage else {
            return Ok(Vec::new());
        };
        let basis = *basis;
        if let Some(queries) = corrector.next_queries() {
            return Ok(vec![self.send(EcMessage::Request { basis, queries })]);
        }
        let flips = corrector.flips();
        let converged = corrector.converged();
        let stage = std::mem::replace(&mut self.stage, BobStage::Idle);
        if let BobStage::Cascade(_, c) = stage {
            *self.keys.get_mut(basis) = c.into_key();
        }
        self.counts.add(basis, flips, converged);
        let mut out = vec![self.send(EcMessage::Done { basis, flips, converged })];
        out.extend(self.next_basis(rng)?);
        Ok(out)
    }

    pub fn handle<R: RngCore + ?Sized>(&mut self, msg: &EcMessage, pool: &mut KeyPool, rng: &mut R) -> Result<Vec<EcMessage>> {
        match (&mut self.stage, msg) {
            (BobStage::Cascade(b, corrector), EcMessage::Parities { basis, bits }) if b == basis => {
                let pad = pool.draw(bits.len(), KeyPurpose::EcParity)?;
                corrector.absorb(&xor_otp(bits, &pad)?)?;
                self.meter.k_ec += bits.len() as u64;
                self.advance(rng)
            }
            (BobStage::AwaitReveal(b), EcMessage::OracleReveal { basis, key }) if b == basis => {
                let basis = *basis;
                let own = self.keys.get_mut(basis);
                let flips = own.hamming_distance(key)? as u64;
                *own = key.clone();
                self.counts.add(basis, flips, true);
                self.stage = BobStage::AwaitSyndrome(basis);
                Ok(vec![self.send(EcMessage::Done { basis, flips, converged: true })])
            }
            (BobStage::AwaitSyndrome(b), EcMessage::OracleSyndrome { basis, bits }) if b == basis => {
                // the filler carries no information; drawing the pad keeps pools aligned
                pool.draw(bits.len(), KeyPurpose::EcParity)?;
                self.meter.k_ec += bits.len() as u64;
                self.stage = BobStage::Idle;
                self.next_basis(rng)
            }
            (_, other) => Err(Error::Protocol(format!("unexpected message for Bob: {other:?}"))),
        }
    }
}

/// Result of a local two-party correction.
#[derive(Clone, Debug, PartialEq)]
pub struct EcOutcome {
    pub alice: BasisSplit,
    pub bob: BasisSplit,
    pub counts: ErrorCounts,
    /// Alice's and Bob's meters agree on `k_ec`.
    pub meter: LeakageMeter,
}

/// Runs one correction attempt between local parties.
pub fn correct_errors<R: RngCore + ?Sized>(
    alice: &mut EcAlice,
    bob: &mut EcBob,
    alice_pool: &mut KeyPool,
    bob_pool: &mut KeyPool,
    rng: &mut R,
) -> Result<()> {
    let mut to_alice: VecDeque<EcMessage> = bob.begin(rng)?.into();
    let mut to_bob: VecDeque<EcMessage> = VecDeque::new();
    while !(to_alice.is_empty() && to_bob.is_empty()) {
        while let Some(m) = to_alice.pop_front() {
            to_bob.extend(alice.handle(&m, alice_pool, rng)?);
        }
        while let Some(m) = to_bob.pop_front() {
            to_alice.extend(bob.handle(&m, bob_pool, rng)?);
        }
    }
    if !bob.is_finished() {
        return Err(Error::Protocol("correction stalled".into()));
    }
    Ok(())
}

/// Convenience wrapper: fresh parties, one attempt.
pub fn correct_once<R: RngCore + ?Sized>(
    codec: Codec,
    alice_keys: BasisSplit,
    bob_keys: BasisSplit,
    e_cal: (f64, f64),
    alice_pool: &mut KeyPool,
    bob_pool: &mut KeyPool,
    rng: &mut R,
) -> Result<EcOutcome> {
    let mut alice = EcAlice::new(codec, alice_keys);
    let mut bob = EcBob::new(codec, bob_keys, e_cal);
    correct_errors(&mut alice, &mut bob, alice_pool, bob_pool, rng)?;
    Ok(EcOutcome {
        alice: alice.keys.clone(),
        bob: bob.keys.clone(),
        counts: bob.counts,
        meter: alice.meter,
    })
}

/// Verification of the corrected keys: Alice tags her X-then-Z key, Bob
/// checks against his own.
#[derive(Clone, Debug)]
pub struct Verifier {
    tag_key: TagKey,
}

impl Verifier {
    /// Reserves the matrix key once per session; every attempt then spends a
    /// fresh `k_ev`-bit pad.
    pub fn new(pool: &mut KeyPool, k_ev: usize) -> Result<Self> {
        Ok(Verifier {
            tag_key: TagKey::reserve(pool, k_ev, KeyPurpose::EvMatrix, KeyPurpose::EvPad)?,
        })
    }

    pub fn k_ev(&self) -> usize {
        self.tag_key.k()
    }

    pub fn tag(&self, key: &BasisSplit, pool: &mut KeyPool) -> Result<AuthTag> {
        self.tag_key.seal(&key.concat(), pool)
    }

    pub fn check(&self, key: &BasisSplit, tag: &AuthTag, pool: &mut KeyPool) -> Result<Verdict> {
        self.tag_key.open(&key.concat(), tag, pool)
    }
}

/// `(n_x + n_z) 2^(1 - k_ev)`, unclamped.
pub fn eps_ev(verified_len: u64, k_ev: u64) -> f64 {
    crate::budget::tag_failure(verified_len as f64, k_ev)
}

/// Local verification between two parties.
pub fn error_verify(
    alice_key: &BasisSplit,
    bob_key: &BasisSplit,
    k_ev: usize,
    alice_pool: &mut KeyPool,
    bob_pool: &mut KeyPool,
) -> Result<(Verdict, f64)> {
    let va = Verifier::new(alice_pool, k_ev)?;
    let vb = Verifier::new(bob_pool, k_ev)?;
    let tag = va.tag(alice_key, alice_pool)?;
    let verdict = vb.check(bob_key, &tag, bob_pool)?;
    let m = (alice_key.x.len() + alice_key.z.len()) as u64;
    Ok((verdict, eps_ev(m, k_ev as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::auth_failure_prob;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn split(x: BitString, z: BitString) -> BasisSplit {
        BasisSplit {
            x_index: (0..x.len()).collect(),
            z_index: (0..z.len()).collect(),
            x,
            z,
        }
    }

    fn with_errors(key: &BitString, errors: usize, rng: &mut ChaCha8Rng) -> BitString {
        let mut out = key.clone();
        let mut idx: Vec<usize> = (0..key.len()).collect();
        idx.shuffle(rng);
        for &i in &idx[..errors] {
            out.flip(i);
        }
        out
    }

    #[test]
    fn cascade_corrects_both_bases_and_meters_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ax = BitString::random(8000, &mut rng);
        let az = BitString::random(2000, &mut rng);
        let bx = with_errors(&ax, 320, &mut rng);
        let bz = with_errors(&az, 80, &mut rng);
        let mut pa = KeyPool::random(20_000, &mut rng);
        let mut pb = pa.clone();
        let out = correct_once(Codec::Cascade, split(ax.clone(), az.clone()), split(bx, bz), (0.04, 0.04), &mut pa, &mut pb, &mut rng).unwrap();
        assert_eq!(out.bob.x, ax);
        assert_eq!(out.bob.z, az);
        assert_eq!(out.counts.errors_x, 320);
        assert_eq!(out.counts.errors_z, 80);
        assert_eq!(out.counts.e_bx(), 0.04);
        assert_eq!(pa.charged_for(KeyPurpose::EcParity) as u64, out.meter.k_ec);
        assert_eq!(pb.charged_for(KeyPurpose::EcParity) as u64, out.meter.k_ec);
        assert_eq!(pa.drawn(), pb.drawn());
    }

    #[test]
    fn zero_errors_cost_only_top_level_parities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ax = BitString::random(1000, &mut rng);
        let mut pa = KeyPool::random(5000, &mut rng);
        let mut pb = pa.clone();
        let out = correct_once(Codec::Cascade, split(ax.clone(), BitString::new()), split(ax, BitString::new()), (0.04, 0.04), &mut pa, &mut pb, &mut rng).unwrap();
        assert_eq!(out.counts.errors_x, 0);
        // blocks of 19, 38, 76, 152 bits
        let expected: u64 = [19usize, 38, 76, 152].iter().map(|k| 1000usize.div_ceil(*k) as u64).sum();
        assert_eq!(out.meter.k_ec, expected);
    }

    #[test]
    fn oracle_codec_spends_shannon_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ax = BitString::random(10_000, &mut rng);
        let az = BitString::random(500, &mut rng);
        let bx = with_errors(&ax, 400, &mut rng);
        let bz = with_errors(&az, 20, &mut rng);
        let mut pa = KeyPool::random(20_000, &mut rng);
        let mut pb = pa.clone();
        let out = correct_once(Codec::ShannonOracle { f: 1.0 }, split(ax.clone(), az.clone()), split(bx, bz), (0.04, 0.04), &mut pa, &mut pb, &mut rng).unwrap();
        let expected = (10_000.0 * h2(0.04)).ceil() as u64 + (500.0 * h2(0.04)).ceil() as u64;
        assert_eq!(out.meter.k_ec, expected);
        assert_eq!(out.bob.x, ax);
        assert_eq!(out.counts.errors_x, 400);
        assert_eq!(pa.drawn(), pb.drawn());
    }

    #[test]
    fn messages_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let msgs = vec![
            EcMessage::Setup { basis: Basis::Z, seed: 99, attempt: 2 },
            EcMessage::Request { basis: Basis::X, queries: vec![Query { pass: 1, start: 3, end: 9 }, Query { pass: 0, start: 0, end: 1 }] },
            EcMessage::Parities { basis: Basis::X, bits: BitString::random(13, &mut rng) },
            EcMessage::Done { basis: Basis::Z, flips: 7, converged: true },
            EcMessage::OracleReveal { basis: Basis::X, key: BitString::random(70, &mut rng) },
            EcMessage::OracleSyndrome { basis: Basis::X, bits: BitString::new() },
        ];
        for m in msgs {
            assert_eq!(EcMessage::decode(&m.encode()).unwrap(), m);
        }
        assert!(EcMessage::decode(&[9, 0]).is_err());
        assert!(EcMessage::decode(&[1, 0, 255, 255, 255, 255]).is_err());
    }

    #[test]
    fn unexpected_messages_are_protocol_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pool = KeyPool::random(100, &mut rng);
        let mut alice = EcAlice::new(Codec::Cascade, split(BitString::zeros(10), BitString::new()));
        let req = EcMessage::Request { basis: Basis::X, queries: vec![Query { pass: 0, start: 0, end: 5 }] };
        assert!(alice.handle(&req, &mut pool, &mut rng).is_err());
        let done = EcMessage::Done { basis: Basis::X, flips: 11, converged: true };
        assert!(alice.handle(&done, &mut pool, &mut rng).is_err());
    }

    #[test]
    fn verification_accepts_identical_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = split(BitString::random(300, &mut rng), BitString::random(50, &mut rng));
        let mut pa = KeyPool::random(1000, &mut rng);
        let mut pb = pa.clone();
        let (v, eps) = error_verify(&k, &k, 40, &mut pa, &mut pb).unwrap();
        assert!(v.accepted());
        assert_eq!(eps, 350.0 * 2f64.powi(-39));
        assert_eq!(pa.charged_for(KeyPurpose::EvPad), 40);
        assert_eq!(pa.reserved_total(), 80);
    }

    #[test]
    fn verification_rejects_one_bit_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 10_000;
        let mut rejected = 0;
        for _ in 0..trials {
            let a = split(BitString::random(48, &mut rng), BitString::random(16, &mut rng));
            let mut b = a.clone();
            let i = rng.gen_range(0..64);
            if i < 48 {
                b.x.flip(i);
            } else {
                b.z.flip(i - 48);
            }
            let mut pa = KeyPool::random(64, &mut rng);
            let mut pb = pa.clone();
            if !error_verify(&a, &b, 16, &mut pa, &mut pb).unwrap().0.accepted() {
                rejected += 1;
            }
        }
        let floor = 1.0 - auth_failure_prob(64, 16);
        assert!(rejected as f64 / trials as f64 >= floor);
    }

    #[test]
    fn eps_ev_at_example_scale() {
        assert!((eps_ev(10_000_000, 57) - 1.387_778_780_781_445_7e-10).abs() < 1e-22);
    }
}
