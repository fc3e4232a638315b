//! End-to-end sessions: simulated quantum exchange, the two parties as
//! message-driven state machines, and a scheduler that records (and can
//! tamper with) every classical message.

mod channel;
mod message;
mod party;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use channel::{detections_from_bytes, detections_to_bytes, simulate_quantum_exchange, ChannelModel};
pub use message::{apply_mutation, Message, Mutation, Party, Record, Step, Tamper, Transcript};

use crate::auth::required_tag_len;
use crate::budget::{net_key_length, optimize_plan, Costs, FailureBudget, KeyPool, PlanInput, PlanResult, ProtocolParams};
use crate::error::{Error, Result};
use crate::gf2::BitString;
use crate::reconcile::{eps_ev, Codec};
use crate::sift::{alice_key_sift, bob_key_sift, RawDetection};
use party::{Agreement, Alice, Bob, Halt};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Success,
    AuthFail,
    VerifyFailRetryExceeded,
    Infeasible,
    PoolExhausted,
    /// Malformed or out-of-order message.
    ProtocolViolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub params: ProtocolParams,
    #[serde(default = "default_codec")]
    pub codec: Codec,
    /// Passive basis choice: double clicks also get a random basis.
    #[serde(default)]
    pub passive: bool,
    /// Seeds both parties' random number generators.
    pub seed: u64,
}

fn default_codec() -> Codec {
    Codec::Cascade
}

impl SessionConfig {
    pub fn new(params: ProtocolParams, codec: Codec, seed: u64) -> Self {
        SessionConfig {
            params,
            codec,
            passive: false,
            seed,
        }
    }
}

/// Numbers a third party needs to re-check the session's key growth and
/// failure probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub status: Status,
    pub reason: Option<String>,
    pub failed_party: Option<Party>,
    pub p_x: f64,
    /// Raw key length after key sift.
    pub n: u64,
    pub n_x: u64,
    pub n_z: u64,
    pub errors_x: u64,
    pub errors_z: u64,
    pub k_bs: u64,
    /// Tag length of one verification attempt.
    pub k_ev: u64,
    pub ev_attempts: u32,
    pub k_ec: u64,
    /// Spent key; `k_ev` here sums all verification attempts.
    pub costs: Option<Costs>,
    pub l: u64,
    pub net_key: i64,
    /// `eps_ev` sums all verification attempts.
    pub budget: Option<FailureBudget>,
    pub plan: Option<PlanResult>,
    pub alice_charged: u64,
    pub bob_charged: u64,
    pub alice_reserved: u64,
    pub bob_reserved: u64,
    pub messages: usize,
    pub transcript_encrypted_bits: u64,
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub report: SessionReport,
    pub alice_key: Option<BitString>,
    pub bob_key: Option<BitString>,
    pub transcript: Transcript,
    pub alice_pool: KeyPool,
    pub bob_pool: KeyPool,
}

impl SessionOutcome {
    pub fn status(&self) -> Status {
        self.report.status
    }
}

/// `p_x` to run with: the planner's choice for the expected detection count
/// when asked to optimize and a feasible plan exists, else the configured one.
pub fn choose_p_x(params: &ProtocolParams) -> Result<f64> {
    if !params.optimize_p_x {
        params.validate()?;
        return Ok(params.p_x);
    }
    let plan = optimize_plan(params, &PlanInput::Expected { n: params.expected_detections().max(1.0) })?;
    Ok(if plan.feasible { plan.p_x } else { params.p_x })
}

/// Tag lengths fixed before any message: explicit values win, otherwise the
/// plan for the actual raw key length supplies them.
fn agree_tags(params: &ProtocolParams, n: u64) -> std::result::Result<(u64, u64), Halt> {
    if let (Some(k_bs), Some(k_ev)) = (params.k_bs, params.k_ev) {
        return Ok((k_bs, k_ev));
    }
    let plan = optimize_plan(params, &PlanInput::Expected { n: n as f64 }).map_err(Halt::from)?;
    let k_bs = params.k_bs.unwrap_or(plan.costs.k_bs);
    let k_ev = params.k_ev.unwrap_or(plan.costs.k_ev);
    if k_bs == 0 || k_ev == 0 {
        return Err(Halt {
            status: Status::Infeasible,
            reason: format!("no tag lengths for n = {n}: {}", plan.diagnostics.join("; ")),
        });
    }
    Ok((k_bs, k_ev))
}

/// Verification tag length meeting `eps_ev <= eps` for `m` verified bits.
pub fn k_ev_for(m: u64, eps: f64) -> u64 {
    required_tag_len(m, eps) as u64
}

/// Runs the classical post-processing on recorded detections.
///
/// Both pools must be identical copies. `params.p_x` is taken as the basis
/// probability that was used; `optimize_p_x` is ignored here. `Err` means an
/// invalid configuration; protocol failures come back as a status.
pub fn run_session(config: &SessionConfig, detections: &[RawDetection], alice_pool: KeyPool, bob_pool: KeyPool, tampers: &[Tamper]) -> Result<SessionOutcome> {
    let mut params = config.params.clone();
    params.optimize_p_x = false;
    params.validate()?;
    if let Codec::ShannonOracle { f } = config.codec {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Domain(format!("oracle efficiency {f} must be positive")));
        }
    }

    let mut alice_rng = ChaCha8Rng::seed_from_u64(config.seed);
    alice_rng.set_stream(1);
    let mut bob_rng = ChaCha8Rng::seed_from_u64(config.seed);
    bob_rng.set_stream(2);

    // key sift: local to each side, no classical message
    let (alice_records, bob_records): (Vec<_>, Vec<_>) = detections.iter().map(RawDetection::split).unzip();
    let bob_raw = bob_key_sift(&bob_records, config.passive, &mut bob_rng);
    let alice_raw = alice_key_sift(&alice_records, &bob_raw.pulses)?;
    let n = bob_raw.len() as u64;

    let mut transcript = Transcript::new(config.seed);
    let halt_early = |h: Halt, transcript: Transcript, alice_pool: KeyPool, bob_pool: KeyPool| SessionOutcome {
        report: SessionReport {
            status: h.status,
            reason: Some(h.reason),
            failed_party: None,
            p_x: params.p_x,
            n,
            n_x: 0,
            n_z: 0,
            errors_x: 0,
            errors_z: 0,
            k_bs: 0,
            k_ev: 0,
            ev_attempts: 0,
            k_ec: 0,
            costs: None,
            l: 0,
            net_key: 0,
            budget: None,
            plan: None,
            alice_charged: 0,
            bob_charged: 0,
            alice_reserved: 0,
            bob_reserved: 0,
            messages: 0,
            transcript_encrypted_bits: 0,
        },
        alice_key: None,
        bob_key: None,
        transcript,
        alice_pool,
        bob_pool,
    };
    if n == 0 {
        let h = Halt {
            status: Status::Infeasible,
            reason: "no detections".into(),
        };
        return Ok(halt_early(h, transcript, alice_pool, bob_pool));
    }
    let (k_bs, k_ev) = match agree_tags(&params, n) {
        Ok(t) => t,
        Err(h) => return Ok(halt_early(h, transcript, alice_pool, bob_pool)),
    };
    let agreement = Agreement {
        params: params.clone(),
        codec: config.codec,
        n,
        k_bs,
        k_ev,
    };
    let mut alice = Alice::new(agreement.clone(), alice_raw, alice_pool, alice_rng);
    let mut bob = Bob::new(agreement, bob_raw, bob_pool, bob_rng);

    let mut queue: VecDeque<(Party, Message)> = bob.start().into_iter().map(|m| (Party::Bob, m)).collect();
    let mut failure: Option<(Party, Halt)> = bob.core.failure().map(|h| (Party::Bob, h.clone()));
    while failure.is_none() {
        let Some((from, msg)) = queue.pop_front() else { break };
        let mut payload = msg.encode();
        let mut tampered = false;
        for t in tampers.iter().filter(|t| t.index == transcript.len()) {
            tampered |= apply_mutation(&mut payload, &t.mutation);
        }
        transcript.push(Record {
            step: msg.step(),
            from,
            authenticated: msg.authenticated(),
            encrypted_bits: msg.encrypted_bits(),
            payload: payload.clone(),
            tampered,
        });
        let to = from.peer();
        let delivered = match Message::decode(&payload) {
            Ok(m) => m,
            Err(e) => {
                failure = Some((to, Halt::from(e)));
                break;
            }
        };
        let replies = match to {
            Party::Alice => alice.handle(delivered),
            Party::Bob => bob.handle(delivered),
        };
        queue.extend(replies.into_iter().map(|m| (to, m)));
        let core = match to {
            Party::Alice => &alice.core,
            Party::Bob => &bob.core,
        };
        failure = core.failure().map(|h| (to, h.clone()));
    }
    if failure.is_none() && !(alice.core.is_done() && bob.core.is_done()) {
        failure = Some((
            Party::Bob,
            Halt {
                status: Status::ProtocolViolation,
                reason: "exchange stalled".into(),
            },
        ));
    }
    Ok(finish(&params, alice, bob, transcript, failure))
}

fn finish(params: &ProtocolParams, alice: Alice, bob: Bob, transcript: Transcript, failure: Option<(Party, Halt)>) -> SessionOutcome {
    let counts = bob.counts().unwrap_or_default();
    let agreement = &bob.core.agreement;
    let plan = bob.core.plan.clone();
    let attempts = bob.core.ev_attempts.max(alice.core.ev_attempts);
    let status = failure.as_ref().map_or(Status::Success, |(_, h)| h.status);

    let (costs, budget, l, net_key) = match (&plan, status) {
        (Some(p), Status::Success) => {
            let costs = Costs {
                k_ev: attempts as u64 * agreement.k_ev,
                ..p.costs
            };
            let m = counts.n_x + counts.n_z;
            let budget = FailureBudget::new(p.budget.eps_bs, attempts as f64 * eps_ev(m, agreement.k_ev), p.budget.eps_ph, p.budget.eps_pa);
            (Some(costs), Some(budget), p.l, net_key_length(p.l, &costs))
        }
        _ => (None, None, 0, 0),
    };
    let report = SessionReport {
        status,
        reason: failure.as_ref().map(|(_, h)| h.reason.clone()),
        failed_party: failure.as_ref().map(|(p, _)| *p),
        p_x: params.p_x,
        n: agreement.n,
        n_x: counts.n_x,
        n_z: counts.n_z,
        errors_x: counts.errors_x,
        errors_z: counts.errors_z,
        k_bs: agreement.k_bs,
        k_ev: agreement.k_ev,
        ev_attempts: attempts,
        k_ec: bob.k_ec(),
        costs,
        l,
        net_key,
        budget,
        plan,
        alice_charged: alice.core.pool.charged_total() as u64,
        bob_charged: bob.core.pool.charged_total() as u64,
        alice_reserved: alice.core.pool.reserved_total() as u64,
        bob_reserved: bob.core.pool.reserved_total() as u64,
        messages: transcript.len(),
        transcript_encrypted_bits: transcript.encrypted_bits(None),
    };
    let success = status == Status::Success;
    SessionOutcome {
        report,
        alice_key: if success { alice.core.final_key } else { None },
        bob_key: if success { bob.core.final_key } else { None },
        transcript,
        alice_pool: alice.core.pool,
        bob_pool: bob.core.pool,
    }
}

/// Simulates the quantum exchange with `model`, then runs the session. With
/// `optimize_p_x` the basis probability comes from [`choose_p_x`].
pub fn simulate_session(config: &SessionConfig, model: &ChannelModel, alice_pool: KeyPool, bob_pool: KeyPool, tampers: &[Tamper]) -> Result<SessionOutcome> {
    let p_x = choose_p_x(&config.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let detections = simulate_quantum_exchange(config.params.pulses, p_x, model, &mut rng)?;
    let mut config = config.clone();
    config.params.p_x = p_x;
    config.params.optimize_p_x = false;
    run_session(&config, &detections, alice_pool, bob_pool, tampers)
}
