use proptest::prelude::*;
use qkd_post::budget::{KeyPool, KeyPurpose, ProtocolParams};
use qkd_post::reconcile::Codec;
use qkd_post::session::{detections_from_bytes, detections_to_bytes, simulate_quantum_exchange, simulate_session, ChannelModel, SessionConfig, Status, Step, Transcript};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(pulses: u64, qber: f64) -> ProtocolParams {
    let mut p = ProtocolParams::example(pulses, 1.0);
    p.e_bx = qber;
    p.e_bz = qber;
    p.eps_target = 1e-4;
    p.optimize_p_x = false;
    p
}

fn pools(seed: u64) -> (KeyPool, KeyPool) {
    let p = KeyPool::random(60_000, &mut ChaCha8Rng::seed_from_u64(seed));
    (p.clone(), p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn success_conserves_key_and_agrees(seed in 0u64..1_000, qber in 0.0f64..0.05, oracle in any::<bool>()) {
        let codec = if oracle { Codec::ShannonOracle { f: 1.2 } } else { Codec::Cascade };
        let config = SessionConfig::new(params(20_000, 0.05), codec, seed);
        let (a, b) = pools(seed);
        let out = simulate_session(&config, &ChannelModel::new(1.0, qber, seed ^ 0xabc), a, b, &[]).unwrap();
        prop_assert_eq!(out.status(), Status::Success, "{:?}", out.report.reason);
        let r = &out.report;
        let costs = r.costs.unwrap();
        prop_assert_eq!(&out.alice_key, &out.bob_key);
        prop_assert_eq!(out.alice_pool.charged_total() as u64, costs.charged());
        prop_assert_eq!(out.bob_pool.charged_total() as u64, costs.charged());
        prop_assert_eq!(out.alice_pool.charged_for(KeyPurpose::EcParity) as u64, r.k_ec);
        prop_assert_eq!(out.transcript.encrypted_bits(None), costs.charged());
        prop_assert_eq!(out.transcript.encrypted_bits(Some(Step::ErrorCorrection)), r.k_ec);
        prop_assert_eq!(r.net_key, r.l as i64 - costs.charged() as i64);
        prop_assert!(r.budget.unwrap().eps_total <= 1e-4);
    }

    #[test]
    fn detections_file_round_trips(seed in any::<u64>(), pulses in 1u64..5_000, eta in 0.01f64..1.0) {
        let model = ChannelModel::new(eta, 0.03, seed);
        let det = simulate_quantum_exchange(pulses, 0.5, &model, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let bytes = detections_to_bytes(pulses, &det);
        prop_assert_eq!(detections_from_bytes(&bytes).unwrap(), (pulses, det));
    }
}

#[test]
fn transcript_file_round_trips_and_replays_identically() {
    let config = SessionConfig::new(params(10_000, 0.03), Codec::Cascade, 11);
    let model = ChannelModel::new(1.0, 0.03, 12);
    let (a, b) = pools(13);
    let first = simulate_session(&config, &model, a.clone(), b.clone(), &[]).unwrap();
    let again = simulate_session(&config, &model, a, b, &[]).unwrap();
    let bytes = first.transcript.to_bytes();
    assert_eq!(bytes, again.transcript.to_bytes());
    let back = Transcript::from_bytes(&bytes).unwrap();
    assert_eq!(back.len(), first.transcript.len());
    assert_eq!(back.to_bytes(), bytes);
    assert!(back.messages().iter().all(|m| m.is_ok()));
}
