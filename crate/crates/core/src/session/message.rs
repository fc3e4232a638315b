use serde::{Deserialize, Serialize};

use crate::auth::AuthTag;
use crate::error::{Error, Result};
use crate::gf2::BitString;
use crate::reconcile::EcMessage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn peer(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    BasisSift,
    ErrorCorrection,
    ErrorVerification,
    PrivacyAmplification,
}

/// Classical messages. Key sift needs none: the click record is part of
/// the quantum exchange.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    BasisInfo { bases: BitString, tag: AuthTag },
    Ec(EcMessage),
    EvTag { tag: AuthTag },
    EvResult { accepted: bool },
    PaSeed { seed: BitString, tag: AuthTag },
}

impl Message {
    pub fn step(&self) -> Step {
        match self {
            Message::BasisInfo { .. } => Step::BasisSift,
            Message::Ec(_) => Step::ErrorCorrection,
            Message::EvTag { .. } | Message::EvResult { .. } => Step::ErrorVerification,
            Message::PaSeed { .. } => Step::PrivacyAmplification,
        }
    }

    pub fn authenticated(&self) -> bool {
        matches!(self, Message::BasisInfo { .. } | Message::EvTag { .. } | Message::PaSeed { .. })
    }

    /// Bits on the wire that were one-time-pad encrypted with pool bits.
    pub fn encrypted_bits(&self) -> u64 {
        match self {
            Message::BasisInfo { tag, .. } | Message::EvTag { tag } | Message::PaSeed { tag, .. } => tag.k() as u64,
            Message::Ec(m) => m.encrypted_bits(),
            Message::EvResult { .. } => 0,
        }
    }

    /// Kind byte, then: bases or seed in bit-string wire form followed by
    /// the tag; an error-correction message in its own layout; a lone tag;
    /// or one verdict byte.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::BasisInfo { bases, tag } => {
                out.push(0);
                out.extend_from_slice(&bases.to_wire());
                out.extend_from_slice(&tag.to_wire());
            }
            Message::Ec(m) => {
                out.push(1);
                out.extend_from_slice(&m.encode());
            }
            Message::EvTag { tag } => {
                out.push(2);
                out.extend_from_slice(&tag.to_wire());
            }
            Message::EvResult { accepted } => {
                out.push(3);
                out.push(*accepted as u8);
            }
            Message::PaSeed { seed, tag } => {
                out.push(4);
                out.extend_from_slice(&seed.to_wire());
                out.extend_from_slice(&tag.to_wire());
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Message> {
        let (&kind, body) = buf.split_first().ok_or_else(|| Error::Decode("empty message".into()))?;
        let finish = |used: usize| {
            if used == body.len() {
                Ok(())
            } else {
                Err(Error::Decode("trailing bytes in message".into()))
            }
        };
        match kind {
            0 | 4 => {
                let (bits, a) = BitString::from_wire(body)?;
                let (tag, b) = AuthTag::from_wire(&body[a..])?;
                finish(a + b)?;
                Ok(if kind == 0 {
                    Message::BasisInfo { bases: bits, tag }
                } else {
                    Message::PaSeed { seed: bits, tag }
                })
            }
            1 => Ok(Message::Ec(EcMessage::decode(body)?)),
            2 => {
                let (tag, used) = AuthTag::from_wire(body)?;
                finish(used)?;
                Ok(Message::EvTag { tag })
            }
            3 => match body {
                [v @ (0 | 1)] => Ok(Message::EvResult { accepted: *v == 1 }),
                _ => Err(Error::Decode("bad verdict".into())),
            },
            k => Err(Error::Decode(format!("unknown message kind {k}"))),
        }
    }

    fn body_mut(&mut self) -> Option<&mut BitString> {
        match self {
            Message::BasisInfo { bases: b, .. } | Message::PaSeed { seed: b, .. } => Some(b),
            Message::Ec(EcMessage::Parities { bits: b, .. })
            | Message::Ec(EcMessage::OracleSyndrome { bits: b, .. })
            | Message::Ec(EcMessage::OracleReveal { key: b, .. }) => Some(b),
            _ => None,
        }
    }

    fn tag_mut(&mut self) -> Option<&mut AuthTag> {
        match self {
            Message::BasisInfo { tag, .. } | Message::EvTag { tag } | Message::PaSeed { tag, .. } => Some(tag),
            _ => None,
        }
    }
}

/// In-flight change to one message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    /// Flip payload bit `i` (LSB-first, taken modulo the payload size).
    FlipBit(usize),
    /// XOR `pattern` into the payload at byte `offset`, truncated at the end.
    XorPattern { offset: usize, pattern: Vec<u8> },
    /// Flip bit `i` (modulo length) of the carried bit string: bases,
    /// parities or seed. Messages without one pass unchanged.
    FlipBodyBit(usize),
    /// Flip bit `i` (modulo length) of the encrypted tag.
    FlipTagBit(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tamper {
    /// Transcript index of the message to change.
    pub index: usize,
    pub mutation: Mutation,
}

/// Applies `mutation` to an encoded message; returns whether anything changed.
pub fn apply_mutation(payload: &mut Vec<u8>, mutation: &Mutation) -> bool {
    match mutation {
        Mutation::FlipBit(i) => {
            if payload.is_empty() {
                return false;
            }
            let i = i % (8 * payload.len());
            payload[i / 8] ^= 1 << (i % 8);
            true
        }
        Mutation::XorPattern { offset, pattern } => {
            let mut changed = false;
            for (b, p) in payload.iter_mut().skip(*offset).zip(pattern) {
                *b ^= p;
                changed |= *p != 0;
            }
            changed
        }
        Mutation::FlipBodyBit(i) | Mutation::FlipTagBit(i) => {
            let Ok(mut msg) = Message::decode(payload) else {
                return false;
            };
            let target = match mutation {
                Mutation::FlipBodyBit(_) => msg.body_mut(),
                _ => msg.tag_mut().map(|t| t.ciphertext_mut()),
            };
            match target {
                Some(bits) if !bits.is_empty() => {
                    let n = bits.len();
                    bits.flip(i % n);
                }
                _ => return false,
            }
            *payload = msg.encode();
            true
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub step: Step,
    pub from: Party,
    /// Bytes as delivered, after any tampering.
    pub payload: Vec<u8>,
    pub authenticated: bool,
    pub encrypted_bits: u64,
    pub tampered: bool,
}

impl Record {
    pub fn bits_on_wire(&self) -> u64 {
        8 * self.payload.len() as u64
    }
}

/// Ordered log of the classical channel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub seed: u64,
    records: Vec<Record>,
}

const TRANSCRIPT_MAGIC: &[u8; 4] = b"QKDT";
const TRANSCRIPT_VERSION: u16 = 1;
/// Amplification input order written to the header: X block, then Z.
const ORDER_X_THEN_Z: u8 = 0;

fn step_byte(s: Step) -> u8 {
    match s {
        Step::BasisSift => 0,
        Step::ErrorCorrection => 1,
        Step::ErrorVerification => 2,
        Step::PrivacyAmplification => 3,
    }
}

impl Transcript {
    pub fn new(seed: u64) -> Self {
        Transcript { seed, records: Vec::new() }
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn encrypted_bits(&self, step: Option<Step>) -> u64 {
        self.records.iter().filter(|r| step.is_none_or(|s| r.step == s)).map(|r| r.encrypted_bits).sum()
    }

    /// Decodes every record; tampered payloads may fail.
    pub fn messages(&self) -> Vec<Result<Message>> {
        self.records.iter().map(|r| Message::decode(&r.payload)).collect()
    }

    /// `QKDT`, u16 version, order byte, u64 seed, u32 record count; each
    /// record is step byte, sender byte (0 Alice), flag byte (bit 0
    /// authenticated, bit 1 tampered), u64 encrypted bits, u32 payload
    /// length and the payload. Little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TRANSCRIPT_MAGIC);
        out.extend_from_slice(&TRANSCRIPT_VERSION.to_le_bytes());
        out.push(ORDER_X_THEN_Z);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.push(step_byte(r.step));
            out.push(matches!(r.from, Party::Bob) as u8);
            out.push(r.authenticated as u8 | (r.tampered as u8) << 1);
            out.extend_from_slice(&r.encrypted_bits.to_le_bytes());
            out.extend_from_slice(&(r.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&r.payload);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Transcript> {
        let bad = |m: &str| Error::Decode(format!("transcript: {m}"));
        if buf.len() < 19 || &buf[..4] != TRANSCRIPT_MAGIC {
            return Err(bad("bad magic"));
        }
        if u16::from_le_bytes([buf[4], buf[5]]) != TRANSCRIPT_VERSION {
            return Err(bad("unsupported version"));
        }
        if buf[6] != ORDER_X_THEN_Z {
            return Err(bad("unknown concatenation order"));
        }
        let seed = u64::from_le_bytes(buf[7..15].try_into().unwrap());
        let count = u32::from_le_bytes(buf[15..19].try_into().unwrap());
        let mut pos = 19;
        let mut t = Transcript::new(seed);
        for _ in 0..count {
            let head = buf.get(pos..pos + 15).ok_or_else(|| bad("truncated record"))?;
            let step = match head[0] {
                0 => Step::BasisSift,
                1 => Step::ErrorCorrection,
                2 => Step::ErrorVerification,
                3 => Step::PrivacyAmplification,
                _ => return Err(bad("unknown step")),
            };
            let from = match head[1] {
                0 => Party::Alice,
                1 => Party::Bob,
                _ => return Err(bad("unknown sender")),
            };
            if head[2] & !3 != 0 {
                return Err(bad("reserved flags set"));
            }
            let encrypted_bits = u64::from_le_bytes(head[3..11].try_into().unwrap());
            let len = u32::from_le_bytes(head[11..15].try_into().unwrap()) as usize;
            pos += 15;
            let payload = buf.get(pos..pos + len).ok_or_else(|| bad("truncated payload"))?.to_vec();
            pos += len;
            t.push(Record {
                step,
                from,
                payload,
                authenticated: head[2] & 1 != 0,
                encrypted_bits,
                tampered: head[2] & 2 != 0,
            });
        }
        if pos != buf.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(t)
    }
}
