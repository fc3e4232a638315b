//! Where the exact sampling tail exceeds the bound, and where it never does.

use qkd_post::phase::{hypergeometric_tail_oracle, p_theta_bound, tail_soundness_scan, TailCase};
use num_rational::Ratio;

fn grid() -> Vec<TailCase> {
    let pcts: Vec<u32> = (1..=99).collect();
    tail_soundness_scan(24, &pcts).unwrap()
}

/// The target holds only errors and the event needs a sample rate above 0.99.
fn corner(c: &TailCase) -> bool {
    c.total_errors - c.worst_k == c.n_t && c.worst_k as f64 / c.n_s as f64 + c.theta_pct as f64 / 100.0 > 0.99
}

#[test]
fn violations_come_only_from_zero_sample_errors_or_saturated_targets() {
    let cases = grid();
    assert_eq!(cases.len(), 227_160);
    let bad: Vec<_> = cases.iter().filter(|c| c.violated()).collect();
    let others: Vec<_> = bad.iter().filter(|c| c.worst_k != 0 && !corner(c)).collect();
    assert!(others.is_empty(), "{others:?}");
    assert_eq!(bad.len(), 576);
    assert_eq!(bad.iter().filter(|c| c.worst_k == 0).count(), 344);
}

#[test]
fn bound_holds_away_from_zero_errors_and_saturation() {
    for c in grid() {
        let e_s = c.worst_k as f64 / c.n_s as f64;
        if c.worst_k > 0 && e_s + c.theta_pct as f64 / 100.0 <= 0.99 {
            assert!(!c.violated(), "{c:?}");
        }
    }
}

#[test]
fn violations_stay_within_a_small_factor() {
    let worst = grid().iter().filter(|c| c.violated()).map(|c| c.exact / c.bound).fold(0.0, f64::max);
    assert!(worst < 5.3, "{worst}");
}

#[test]
fn known_violation_one_sample_position() {
    // one sample position, eleven target positions, one error
    let exact = hypergeometric_tail_oracle(1, 11, 1, Ratio::new(1, 100)).unwrap();
    assert_eq!(exact, Ratio::new(11, 12));
    let case = grid().into_iter().find(|c| c.n_s == 1 && c.n_t == 11 && c.total_errors == 1 && c.theta_pct == 1).unwrap();
    assert_eq!(case.worst_k, 0);
    assert_eq!(case.bound, p_theta_bound(1.0, 11.0, 0.0, 0.01).unwrap());
}
