use rand_chacha::ChaCha8Rng;

use super::message::Message;
use super::Status;
use crate::auth::TagKey;
use crate::budget::{optimize_plan, KeyPool, KeyPurpose, Observed, PlanInput, PlanResult, ProtocolParams};
use crate::error::Error;
use crate::gf2::BitString;
use crate::privamp::{pa_compress, pa_seed_receive, pa_seed_send};
use crate::reconcile::{Codec, EcAlice, EcBob, EcMessage, ErrorCounts, Verifier};
use crate::sift::{split_by_basis, Basis, BasisSplit, RawKey};

/// Public agreements both parties derive before the first message.
#[derive(Clone, Debug)]
pub(crate) struct Agreement {
    pub params: ProtocolParams,
    pub codec: Codec,
    pub n: u64,
    pub k_bs: u64,
    pub k_ev: u64,
}

impl Agreement {
    /// Plan from the verified statistics; identical on both sides unless the
    /// public messages were altered.
    fn plan(&self, counts: &ErrorCounts, k_ec: u64) -> Result<PlanResult, Halt> {
        let mut params = self.params.clone();
        params.k_bs = Some(self.k_bs);
        params.k_ev = Some(self.k_ev);
        params.optimize_p_x = false;
        let observed = Observed {
            n: self.n,
            n_x: counts.n_x,
            n_z: counts.n_z,
            e_bx: counts.e_bx(),
            e_bz: counts.e_bz(),
            k_ec,
            k_bs: Some(self.k_bs),
        };
        optimize_plan(&params, &PlanInput::Observed(observed)).map_err(Halt::from)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Halt {
    pub status: Status,
    pub reason: String,
}

impl Halt {
    fn new(status: Status, reason: impl Into<String>) -> Self {
        Halt { status, reason: reason.into() }
    }
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::PoolExhausted { .. } => Status::PoolExhausted,
            Error::Infeasible(_) => Status::Infeasible,
            _ => Status::ProtocolViolation,
        };
        Halt::new(status, e.to_string())
    }
}

fn amplification_input(keys: &BasisSplit, plan: &PlanResult) -> BitString {
    let mut out = BitString::new();
    if plan.use_x {
        out.extend_from(&keys.x);
    }
    if plan.use_z {
        out.extend_from(&keys.z);
    }
    out
}

fn require_feasible(plan: &PlanResult) -> Result<(), Halt> {
    if plan.feasible {
        Ok(())
    } else {
        Err(Halt::new(Status::Infeasible, plan.diagnostics.join("; ")))
    }
}

#[derive(Debug)]
pub(crate) enum Phase {
    Start,
    BasisSift,
    Correcting,
    Verifying,
    Amplifying,
    Done,
    Failed(Halt),
}

/// State shared by the two party types.
#[derive(Debug)]
pub(crate) struct Core {
    pub agreement: Agreement,
    pub raw: RawKey,
    pub pool: KeyPool,
    pub rng: ChaCha8Rng,
    pub phase: Phase,
    pub bs_key: Option<TagKey>,
    pub verifier: Option<Verifier>,
    /// Verification tags exchanged so far.
    pub ev_attempts: u32,
    pub plan: Option<PlanResult>,
    pub final_key: Option<BitString>,
}

impl Core {
    fn new(agreement: Agreement, raw: RawKey, pool: KeyPool, rng: ChaCha8Rng) -> Self {
        Core {
            agreement,
            raw,
            pool,
            rng,
            phase: Phase::Start,
            bs_key: None,
            verifier: None,
            ev_attempts: 0,
            plan: None,
            final_key: None,
        }
    }

    /// One matrix key serves both basis messages.
    fn ensure_bs_key(&mut self) -> Result<(), Halt> {
        if self.bs_key.is_none() {
            let k = TagKey::reserve(&mut self.pool, self.agreement.k_bs as usize, KeyPurpose::BasisSiftMatrix, KeyPurpose::BasisSiftPad)?;
            self.bs_key = Some(k);
        }
        Ok(())
    }

    /// Reserved at the first verification, reused by retries.
    fn ensure_verifier(&mut self) -> Result<(), Halt> {
        if self.verifier.is_none() {
            self.verifier = Some(Verifier::new(&mut self.pool, self.agreement.k_ev as usize)?);
        }
        Ok(())
    }

    fn pa_key(&mut self, plan: &PlanResult) -> Result<TagKey, Halt> {
        Ok(TagKey::reserve(&mut self.pool, plan.costs.k_pa as usize, KeyPurpose::PaMatrix, KeyPurpose::PaPad)?)
    }

    fn retries_exhausted(&self) -> bool {
        self.ev_attempts > self.agreement.params.max_ec_retries
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    pub fn failure(&self) -> Option<&Halt> {
        match &self.phase {
            Phase::Failed(h) => Some(h),
            _ => None,
        }
    }

    fn unexpected(&self, msg: &Message) -> Halt {
        Halt::new(Status::ProtocolViolation, format!("unexpected {:?} message during {:?}", msg.step(), self.phase))
    }
}

#[derive(Debug)]
pub(crate) struct Alice {
    pub core: Core,
    pub ec: Option<EcAlice>,
}

impl Alice {
    pub fn new(agreement: Agreement, raw: RawKey, pool: KeyPool, rng: ChaCha8Rng) -> Self {
        let mut core = Core::new(agreement, raw, pool, rng);
        core.phase = Phase::BasisSift;
        Alice { core, ec: None }
    }

    pub fn handle(&mut self, msg: Message) -> Vec<Message> {
        match self.step(msg) {
            Ok(out) => out,
            Err(h) => {
                self.core.phase = Phase::Failed(h);
                Vec::new()
            }
        }
    }

    fn step(&mut self, msg: Message) -> Result<Vec<Message>, Halt> {
        let c = &mut self.core;
        match (&c.phase, msg) {
            (Phase::BasisSift, Message::BasisInfo { bases, tag }) => {
                c.ensure_bs_key()?;
                let verdict = c.bs_key.as_ref().unwrap().open(&bases, &tag, &mut c.pool)?;
                if !verdict.accepted() {
                    return Err(Halt::new(Status::AuthFail, "Bob's basis message failed authentication"));
                }
                let own = c.raw.bases.clone();
                let reply_tag = c.bs_key.as_ref().unwrap().seal(&own, &mut c.pool)?;
                let split = split_by_basis(&c.raw.bits, &own, &bases)?;
                self.ec = Some(EcAlice::new(c.agreement.codec, split));
                c.phase = Phase::Correcting;
                Ok(vec![Message::BasisInfo { bases: own, tag: reply_tag }])
            }
            (Phase::Correcting, Message::Ec(m)) => {
                let ec = self.ec.as_mut().expect("set after basis sift");
                let mut out: Vec<Message> = ec.handle(&m, &mut c.pool, &mut c.rng)?.into_iter().map(Message::Ec).collect();
                if matches!(m, EcMessage::Done { basis: Basis::Z, .. }) {
                    let keys = ec.keys().clone();
                    c.ensure_verifier()?;
                    let tag = c.verifier.as_ref().unwrap().tag(&keys, &mut c.pool)?;
                    c.ev_attempts += 1;
                    c.phase = Phase::Verifying;
                    out.push(Message::EvTag { tag });
                }
                Ok(out)
            }
            (Phase::Verifying, Message::EvResult { accepted: false }) => {
                if c.retries_exhausted() {
                    return Err(Halt::new(Status::VerifyFailRetryExceeded, format!("{} verification attempts failed", c.ev_attempts)));
                }
                c.phase = Phase::Correcting;
                Ok(Vec::new())
            }
            (Phase::Verifying, Message::EvResult { accepted: true }) => {
                let ec = self.ec.as_ref().expect("set after basis sift");
                let plan = c.agreement.plan(&ec.counts, ec.meter.k_ec)?;
                c.plan = Some(plan.clone());
                require_feasible(&plan)?;
                let input = amplification_input(ec.keys(), &plan);
                let tag_key = c.pa_key(&plan)?;
                let (seed, tag) = pa_seed_send(input.len() as u64, plan.l, &tag_key, &mut c.pool, &mut c.rng)?;
                c.final_key = Some(pa_compress(&input, &seed)?);
                c.phase = Phase::Done;
                Ok(vec![Message::PaSeed { seed, tag }])
            }
            (_, m) => Err(c.unexpected(&m)),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Bob {
    pub core: Core,
    pub ec: Option<EcBob>,
}

impl Bob {
    pub fn new(agreement: Agreement, raw: RawKey, pool: KeyPool, rng: ChaCha8Rng) -> Self {
        Bob {
            core: Core::new(agreement, raw, pool, rng),
            ec: None,
        }
    }

    /// Bob opens the classical exchange with his bases.
    pub fn start(&mut self) -> Vec<Message> {
        let r = (|| {
            let c = &mut self.core;
            let bases = c.raw.bases.clone();
            c.ensure_bs_key()?;
            let tag = c.bs_key.as_ref().unwrap().seal(&bases, &mut c.pool)?;
            c.phase = Phase::BasisSift;
            Ok(vec![Message::BasisInfo { bases, tag }])
        })();
        self.settle(r)
    }

    pub fn handle(&mut self, msg: Message) -> Vec<Message> {
        let r = self.step(msg);
        self.settle(r)
    }

    fn settle(&mut self, r: Result<Vec<Message>, Halt>) -> Vec<Message> {
        match r {
            Ok(out) => out,
            Err(h) => {
                self.core.phase = Phase::Failed(h);
                Vec::new()
            }
        }
    }

    fn correction_finished(&mut self, out: Vec<Message>) -> Vec<Message> {
        if self.ec.as_ref().is_some_and(EcBob::is_finished) {
            self.core.phase = Phase::Verifying;
        }
        out
    }

    fn step(&mut self, msg: Message) -> Result<Vec<Message>, Halt> {
        let c = &mut self.core;
        match (&c.phase, msg) {
            (Phase::BasisSift, Message::BasisInfo { bases, tag }) => {
                c.ensure_bs_key()?;
                let verdict = c.bs_key.as_ref().unwrap().open(&bases, &tag, &mut c.pool)?;
                if !verdict.accepted() {
                    return Err(Halt::new(Status::AuthFail, "Alice's basis message failed authentication"));
                }
                let split = split_by_basis(&c.raw.bits, &c.raw.bases, &bases)?;
                let p = &c.agreement.params;
                let mut ec = EcBob::new(c.agreement.codec, split, (p.e_bx, p.e_bz));
                let out = ec.begin(&mut c.rng)?.into_iter().map(Message::Ec).collect();
                self.ec = Some(ec);
                c.phase = Phase::Correcting;
                Ok(self.correction_finished(out))
            }
            (Phase::Correcting, Message::Ec(m)) => {
                let ec = self.ec.as_mut().expect("set after basis sift");
                let out = ec.handle(&m, &mut c.pool, &mut c.rng)?.into_iter().map(Message::Ec).collect();
                Ok(self.correction_finished(out))
            }
            (Phase::Verifying, Message::EvTag { tag }) => {
                let ec = self.ec.as_mut().expect("set after basis sift");
                let keys = ec.keys().clone();
                c.ensure_verifier()?;
                let verdict = c.verifier.as_ref().unwrap().check(&keys, &tag, &mut c.pool)?;
                c.ev_attempts += 1;
                if !verdict.accepted() {
                    if c.retries_exhausted() {
                        return Err(Halt::new(Status::VerifyFailRetryExceeded, format!("{} verification attempts failed", c.ev_attempts)));
                    }
                    let mut out = vec![Message::EvResult { accepted: false }];
                    out.extend(ec.begin(&mut c.rng)?.into_iter().map(Message::Ec));
                    c.phase = Phase::Correcting;
                    return Ok(self.correction_finished(out));
                }
                let plan = c.agreement.plan(&ec.counts, ec.meter.k_ec)?;
                c.plan = Some(plan.clone());
                require_feasible(&plan)?;
                c.phase = Phase::Amplifying;
                Ok(vec![Message::EvResult { accepted: true }])
            }
            (Phase::Amplifying, Message::PaSeed { seed, tag }) => {
                let plan = c.plan.clone().expect("planned before amplification");
                let ec = self.ec.as_ref().expect("set after basis sift");
                let input = amplification_input(ec.keys(), &plan);
                let tag_key = c.pa_key(&plan)?;
                let verdict = pa_seed_receive(&seed, &tag, input.len() as u64, plan.l, &tag_key, &mut c.pool)?;
                if !verdict.accepted() {
                    return Err(Halt::new(Status::AuthFail, "amplification seed failed authentication"));
                }
                c.final_key = Some(pa_compress(&input, &seed)?);
                c.phase = Phase::Done;
                Ok(Vec::new())
            }
            (_, m) => Err(c.unexpected(&m)),
        }
    }

    pub fn counts(&self) -> Option<ErrorCounts> {
        self.ec.as_ref().map(|e| e.counts)
    }

    pub fn k_ec(&self) -> u64 {
        self.ec.as_ref().map_or(0, |e| e.meter.k_ec)
    }
}
