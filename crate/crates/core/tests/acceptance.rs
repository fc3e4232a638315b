//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails.

use std::time::Instant;

use qkd_post::auth::{auth_failure_prob, bare_hash};
use qkd_post::budget::{eps3, k3_shortcut, k3_shortcut_real, key_length_estimate, log2_a, optimize_plan, KeyPool, PlanInput, ProtocolParams};
use qkd_post::gf2::{toeplitz_from_lfsr, toeplitz_multiply, BitString};
use qkd_post::phase::tail_soundness_scan;
use qkd_post::reconcile::Codec;
use qkd_post::session::{k_ev_for, simulate_session, ChannelModel, Message, Mutation, SessionConfig, Status, Step, Tamper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn c1_worked_example() -> Outcome {
    let start = Instant::now();
    let params = ProtocolParams::example(10_000_000_000, 1e-3);
    let plan = optimize_plan(&params, &PlanInput::Expected { n: 1e7 }).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let net = plan.net_key as f64;
    let b = plan.budget.eps_total;
    let pass = plan.feasible
        && (net / 4.41e6 - 1.0).abs() <= 0.05
        && (0.95e-7..=1.05e-7).contains(&b)
        && within(plan.theta_x * 100.0, 1.07, 0.15)
        && within(plan.theta_z * 100.0, 0.84, 0.15)
        && plan.q_x >= 0.995
        && secs <= 60.0;
    outcome(
        pass,
        format!(
            "net {net:.0} (l {}), eps {b:.4e}, theta_x {:.4}%, theta_z {:.4}%, q_x {:.4}, p_x {:.4}, {secs:.2}s",
            plan.l,
            plan.theta_x * 100.0,
            plan.theta_z * 100.0,
            plan.q_x,
            plan.p_x
        ),
    )
}

fn c2_asymptotic() -> Outcome {
    let n = 1e7;
    let key = key_length_estimate(n, 0.0, 0.04, 0.04, 0.0, 0.0, 1.0, 0.0);
    let rate = key / n;
    let pass = within(rate, 0.51541, 1e-4) && within(key, 5.15e6, 5e3);
    outcome(pass, format!("rate {rate:.6}, key {key:.0}"))
}

fn c3_k3_shortcut() -> Outcome {
    let la = log2_a(1e7, 1e7, 1e7, 4.41e6);
    let e259 = eps3(259.0, la);
    let k = k3_shortcut(1e-7, 1e7);
    let k_big = k3_shortcut(1e-30, 1e30);
    let e_big = eps3(k_big as f64, log2_a(1e30, 1e30, 1e30, 1e30));
    let pass = within(e259, 9.5e-10, 0.95e-10) && (259..=260).contains(&k) && k_big <= 948 && e_big < 1e-31;
    outcome(
        pass,
        format!(
            "eps3(259) {e259:.4e}, shortcut {k} ({:.3}), extreme k3 {k_big} ({:.3}) eps3 {e_big:.3e}",
            k3_shortcut_real(1e-7, 1e7),
            k3_shortcut_real(1e-30, 1e30)
        ),
    )
}

fn c4_fixed_costs_small() -> Outcome {
    let plan = optimize_plan(&ProtocolParams::example(10_000_000_000, 1e-3), &PlanInput::Expected { n: 1e7 }).unwrap();
    let k3_frac = plan.costs.k3() as f64 / plan.n;
    let b = plan.budget;
    let e3 = 2.0 * b.eps_bs + b.eps_ev + b.eps_pa;
    let e3_frac = e3 / plan.budget.eps_total;
    let pass = plan.feasible && k3_frac <= 1e-3 && e3_frac <= 1e-2;
    outcome(pass, format!("k3 {} -> k3/n {k3_frac:.3e}, eps3 {e3:.3e} -> eps3/eps {e3_frac:.3e}", plan.costs.k3()))
}

fn c5_tail_soundness() -> Outcome {
    let pcts: Vec<u32> = (1..=99).collect();
    let cases = tail_soundness_scan(24, &pcts).unwrap();
    let bad: Vec<_> = cases.iter().filter(|c| c.violated()).collect();
    let worst = bad.iter().map(|c| c.exact / c.bound).fold(0.0, f64::max);
    let substitution = bad.iter().filter(|c| c.worst_k == 0).count();
    outcome(
        bad.is_empty(),
        format!(
            "{} cases, {} violations ({} at zero sample errors), worst exact/bound {worst:.3}",
            cases.len(),
            bad.len(),
            substitution
        ),
    )
}

/// Largest fraction of matrix keys under which two distinct `m`-bit
/// messages share a hash, over every pair and every `2k`-bit key.
fn max_collision_fraction(k: usize, m: usize) -> f64 {
    let keys = 1u128 << (2 * k);
    let per_key: Vec<Vec<u32>> = (0..keys)
        .into_par_iter()
        .map(|key| {
            let spec = toeplitz_from_lfsr(&BitString::from_u128(key, 2 * k), k, m).unwrap();
            // hashes are linear, so a pair collides exactly when its xor hashes to zero
            let mut zero = vec![0u32; 1 << m];
            for d in 1..(1u128 << m) {
                if toeplitz_multiply(&spec, &BitString::from_u128(d, m)).unwrap().is_zero() {
                    zero[d as usize] = 1;
                }
            }
            zero
        })
        .collect();
    let mut worst = 0u32;
    for d in 1..(1usize << m) {
        worst = worst.max(per_key.iter().map(|z| z[d]).sum());
    }
    worst as f64 / keys as f64
}

fn c6_authentication() -> Outcome {
    // direct cross-check of the linearity shortcut on one pair
    let key = BitString::from_u128(0xbeef, 16);
    let (a, b) = (BitString::from_u128(0x5a, 8), BitString::from_u128(0xa3, 8));
    let lin = bare_hash(&a, &key).unwrap().xor(&bare_hash(&b, &key).unwrap()).unwrap() == bare_hash(&a.xor(&b).unwrap(), &key).unwrap();
    let small = max_collision_fraction(4, 8);
    let big = max_collision_fraction(8, 8);
    let pass = lin && small <= auth_failure_prob(8, 4) && big <= auth_failure_prob(8, 8);
    outcome(
        pass,
        format!(
            "k=4 m=8 max {small:.4} (bound {}), k=8 m=8 max {big:.5} (bound {})",
            auth_failure_prob(8, 4),
            auth_failure_prob(8, 8)
        ),
    )
}

fn pools(len: usize, seed: u64) -> (KeyPool, KeyPool) {
    let p = KeyPool::random(len, &mut ChaCha8Rng::seed_from_u64(seed));
    (p.clone(), p)
}

fn c7_end_to_end() -> Outcome {
    let mut params = ProtocolParams::example(100_000_000, 1e-3);
    params.f_ec = 1.2;
    params.k_ev = Some(k_ev_for(params.expected_detections() as u64 * 2, 1e-12));
    let runs = 100u64;
    let mut ok = 0;
    let mut problems = Vec::new();
    for seed in 0..runs {
        let config = SessionConfig::new(params.clone(), Codec::Cascade, seed);
        let (a, b) = pools(200_000, 1000 + seed);
        let out = simulate_session(&config, &ChannelModel::new(1e-3, 0.04, 5000 + seed), a, b, &[]).unwrap();
        let r = &out.report;
        if out.status() != Status::Success {
            problems.push(format!("seed {seed}: {:?} {:?}", r.status, r.reason));
            continue;
        }
        let costs = r.costs.unwrap();
        let budget = r.budget.unwrap();
        let conserved = out.alice_key.is_some()
            && out.alice_key == out.bob_key
            && out.alice_key.as_ref().unwrap().len() as u64 == r.l
            && r.alice_charged == costs.charged()
            && r.bob_charged == costs.charged()
            && r.transcript_encrypted_bits == costs.charged()
            && out.transcript.encrypted_bits(Some(Step::ErrorCorrection)) == r.k_ec
            && r.net_key == r.l as i64 - costs.charged() as i64
            && budget.eps_total == 2.0 * budget.eps_bs + budget.eps_ev + budget.eps_ph + budget.eps_pa
            && budget.eps_ev <= 1e-12 * r.ev_attempts as f64
            && budget.eps_total <= params.eps_target;
        if conserved {
            ok += 1;
        } else {
            problems.push(format!("seed {seed}: accounting mismatch"));
        }
    }

    let (bs_rate, bs_bound, bs_runs) = basis_tamper_rate();
    let (pa_rate, pa_bound, pa_runs) = seed_tamper_rate();
    let sigma = |p: f64, n: u64| (p * (1.0 - p) / n as f64).sqrt();
    let bs_ok = bs_rate >= bs_bound - 3.0 * sigma(bs_bound, bs_runs);
    let pa_ok = pa_rate >= pa_bound - 3.0 * sigma(pa_bound, pa_runs);
    let pass = ok == runs && bs_ok && pa_ok;
    let mut detail = format!(
        "{ok}/{runs} sessions consistent; basis tamper caught {bs_rate:.4} (floor {bs_bound:.4}, {bs_runs} runs); seed tamper caught {pa_rate:.4} (floor {pa_bound:.4}, {pa_runs} runs)"
    );
    if !problems.is_empty() {
        detail.push_str(&format!("; {}", problems.into_iter().take(3).collect::<Vec<_>>().join("; ")));
    }
    outcome(pass, detail)
}

/// Flips one random bit of Bob's basis list under 16-bit tags. Returns the
/// AuthFail frequency and the mean of `1 - m 2^(1-k)`.
fn basis_tamper_rate() -> (f64, f64, u64) {
    let mut params = ProtocolParams::example(64, 1.0);
    params.optimize_p_x = false;
    params.k_bs = Some(16);
    params.k_ev = Some(16);
    let runs = 10_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut caught = 0u64;
    let mut floor = 0.0;
    for seed in 0..runs {
        let config = SessionConfig::new(params.clone(), Codec::ShannonOracle { f: 1.2 }, seed);
        let tamper = Tamper {
            index: 0,
            mutation: Mutation::FlipBodyBit(rng.gen_range(0..64)),
        };
        let (a, b) = pools(4096, 90_000 + seed);
        let out = simulate_session(&config, &ChannelModel::new(1.0, 0.04, seed), a, b, &[tamper]).unwrap();
        floor += 1.0 - auth_failure_prob(out.report.n, 16);
        if out.status() == Status::AuthFail {
            caught += 1;
        }
    }
    (caught as f64 / runs as f64, floor / runs as f64, runs)
}

/// Flips one random bit of the amplification seed under 16-bit tags.
fn seed_tamper_rate() -> (f64, f64, u64) {
    let mut params = ProtocolParams::example(2_000, 1.0);
    params.optimize_p_x = false;
    params.e_bx = 0.01;
    params.e_bz = 0.01;
    params.eps_target = 1e-2;
    params.k_bs = Some(16);
    params.k_ev = Some(16);
    params.k_pa = Some(16);
    let runs = 2_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let mut caught = 0u64;
    let mut floor = 0.0;
    let mut counted = 0u64;
    for seed in 0..runs {
        let config = SessionConfig::new(params.clone(), Codec::ShannonOracle { f: 1.2 }, seed);
        let model = ChannelModel::new(1.0, 0.01, seed);
        let (a, b) = pools(20_000, 70_000 + seed);
        let clean = simulate_session(&config, &model, a.clone(), b.clone(), &[]).unwrap();
        if clean.status() != Status::Success {
            continue;
        }
        let last = clean.transcript.len() - 1;
        let seed_bits = match &clean.transcript.messages()[last] {
            Ok(Message::PaSeed { seed, .. }) => seed.len() as u64,
            other => panic!("last message is {other:?}"),
        };
        let tamper = Tamper {
            index: last,
            mutation: Mutation::FlipBodyBit(rng.gen_range(0..seed_bits as usize)),
        };
        let out = simulate_session(&config, &model, a, b, &[tamper]).unwrap();
        counted += 1;
        floor += 1.0 - auth_failure_prob(seed_bits, 16);
        if out.status() == Status::AuthFail {
            caught += 1;
        }
    }
    (caught as f64 / counted.max(1) as f64, floor / counted.max(1) as f64, counted)
}

fn c8_scale() -> Outcome {
    // full-scale runs are covered arithmetically; check the planner agrees
    // between the pulse-count and detection-count views of the example
    let params = ProtocolParams::example(10_000_000_000, 1e-3);
    let by_pulses = optimize_plan(&params, &PlanInput::Expected { n: params.expected_detections() }).unwrap();
    let by_n = optimize_plan(&params, &PlanInput::Expected { n: 1e7 }).unwrap();
    let diff = (by_pulses.net_key - by_n.net_key).abs();
    outcome(by_pulses.feasible && diff <= 1, format!("N=1e10 planned arithmetically only; net {} vs {}", by_pulses.net_key, by_n.net_key))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("worked example reproduced", c1_worked_example),
        ("asymptotic rate", c2_asymptotic),
        ("k3 shortcut and eps3", c3_k3_shortcut),
        ("fixed costs negligible", c4_fixed_costs_small),
        ("tail bound soundness", c5_tail_soundness),
        ("authentication collision bound", c6_authentication),
        ("end-to-end sessions and tamper detection", c7_end_to_end),
        ("full-scale claims scoped", c8_scale),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        println!(
            "criterion {} {}: {} ({:.1}s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
