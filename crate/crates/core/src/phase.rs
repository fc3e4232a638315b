//! Phase-error-rate estimation by random sampling.
//!
//! The bit error rate observed in one basis bounds the phase error rate of
//! the other. `theta_x` is the deviation added to the X-basis bit error rate
//! and bounds the Z-basis phase errors; `theta_z` the reverse.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n_s + n_t` accepted by [`hypergeometric_tail_oracle`].
pub const ORACLE_MAX_POSITIONS: u64 = 30;

fn check_unit(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {p} is outside [0, 1]")))
    }
}

/// `H2(p)` in bits, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_unit("p", p)?;
    Ok(h2(p))
}

/// Binary entropy for arguments already known to lie in `[0, 1]`.
pub(crate) fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (-p).ln_1p() / std::f64::consts::LN_2
}

/// `ln(1 + x) - x`, accurate also for tiny `|x|`.
fn ln1p_minus_x(x: f64) -> f64 {
    if x.abs() < 0.05 {
        // -x^2/2 + x^3/3 - ...; 16 terms reach double precision at |x| = 0.05
        let mut term = x;
        let mut sum = 0.0;
        for j in 2..18 {
            term *= -x;
            sum += term / j as f64;
        }
        sum
    } else {
        x.ln_1p() - x
    }
}

/// Kullback-Leibler divergence `D(a || b)` between Bernoulli laws, in nats.
///
/// Written so that every term is second order in `a - b`; the direct form
/// loses all significant digits when `a` and `b` agree to many places.
fn kl_nats(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a == 0.0 {
        return -(-b).ln_1p();
    }
    if a == 1.0 {
        return -b.ln();
    }
    let d = a - b;
    a * ln1p_minus_x(d / b) + (1.0 - a) * ln1p_minus_x(-d / (1.0 - b)) + d * d / (b * (1.0 - b))
}

/// The exponent `H2(e + theta - q theta) - q H2(e) - (1 - q) H2(e + theta)`.
///
/// Evaluated as the Jensen gap `q D(e || m) + (1 - q) D(e + theta || m)` with
/// `m = e + (1 - q) theta`, which has no cancellation even when the result is
/// eight orders of magnitude below the individual entropies.
pub fn xi(theta: f64, e: f64, q: f64) -> Result<f64> {
    check_unit("e", e)?;
    if !(theta >= 0.0 && e + theta <= 1.0) {
        return Err(Error::Domain(format!("need theta >= 0 and e + theta <= 1, got e = {e}, theta = {theta}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("q = {q} is outside (0, 1)")));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let hi = e + theta;
    let m = e + (1.0 - q) * theta;
    let nats = q * kl_nats(e, m) + (1.0 - q) * kl_nats(hi, m);
    Ok(nats / std::f64::consts::LN_2)
}

fn check_sizes(n_s: f64, n_t: f64) -> Result<()> {
    if n_s >= 1.0 && n_t >= 1.0 && n_s.is_finite() && n_t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("sample and target sizes must be >= 1, got {n_s}, {n_t}")))
    }
}

/// `log2` of the sampling tail bound
/// `sqrt(n) / sqrt(n_s n_t e (1 - e)) 2^(-n xi(theta))`, `n = n_s + n_t`,
/// `q = n_s / n`, capped at 0 (probability 1).
///
/// An observed rate `e = 0` is replaced by `1 / n_s`. If the replaced rate
/// plus `theta` exceeds 1 the bound is vacuous. Otherwise a target rate above
/// 1 is impossible and the result is `-inf`.
pub fn log2_p_theta_bound(n_s: f64, n_t: f64, e_sample: f64, theta: f64) -> Result<f64> {
    check_sizes(n_s, n_t)?;
    check_unit("e_sample", e_sample)?;
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let substituted = e_sample == 0.0;
    let e = if substituted { 1.0 / n_s } else { e_sample };
    if e + theta > 1.0 {
        return Ok(if substituted { 0.0 } else { f64::NEG_INFINITY });
    }
    if e >= 1.0 {
        return Ok(0.0);
    }
    let n = n_s + n_t;
    let x = xi(theta, e, n_s / n)?;
    let prefactor = 0.5 * (n.log2() - n_s.log2() - n_t.log2() - e.log2() - (-e).ln_1p() / std::f64::consts::LN_2);
    Ok((prefactor - n * x).min(0.0))
}

/// The sampling tail bound as a probability, see [`log2_p_theta_bound`].
pub fn p_theta_bound(n_s: f64, n_t: f64, e_sample: f64, theta: f64) -> Result<f64> {
    Ok(log2_p_theta_bound(n_s, n_t, e_sample, theta)?.exp2())
}

/// Both deviations and their tail bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub theta_x: f64,
    pub theta_z: f64,
    pub p_theta_x: f64,
    pub p_theta_z: f64,
    pub eps_ph: f64,
}

impl PhaseEstimate {
    /// `theta_x` is tested on the X sample against the Z target and vice versa.
    pub fn compute(n_x: f64, n_z: f64, e_bx: f64, e_bz: f64, theta_x: f64, theta_z: f64) -> Result<Self> {
        let p_theta_x = p_theta_bound(n_x, n_z, e_bx, theta_x)?;
        let p_theta_z = p_theta_bound(n_z, n_x, e_bz, theta_z)?;
        Ok(PhaseEstimate {
            theta_x,
            theta_z,
            p_theta_x,
            p_theta_z,
            eps_ph: eps_ph_total(p_theta_x, p_theta_z),
        })
    }
}

pub fn eps_ph_total(p_theta_x: f64, p_theta_z: f64) -> f64 {
    p_theta_x + p_theta_z
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// Exact probability that, with `total_errors` errors placed uniformly among
/// `n_s + n_t` positions, the target error rate exceeds the sample error
/// rate plus `theta`.
pub fn hypergeometric_tail_oracle(n_s: u64, n_t: u64, total_errors: u64, theta: Ratio<u128>) -> Result<Ratio<u128>> {
    let n = n_s + n_t;
    if n > ORACLE_MAX_POSITIONS {
        return Err(Error::OracleTooLarge {
            limit: ORACLE_MAX_POSITIONS,
            requested: n,
        });
    }
    if n_s == 0 || n_t == 0 || total_errors > n {
        return Err(Error::Domain(format!(
            "need n_s, n_t >= 1 and E <= n_s + n_t, got {n_s}, {n_t}, {total_errors}"
        )));
    }
    let lo = total_errors.saturating_sub(n_t);
    let hi = total_errors.min(n_s);
    let favourable: u128 = (lo..=hi)
        .filter(|&k| {
            let sample = Ratio::new(k as u128, n_s as u128);
            let target = Ratio::new((total_errors - k) as u128, n_t as u128);
            target > sample + theta
        })
        .map(|k| binomial(n_s, k) * binomial(n_t, total_errors - k))
        .sum();
    Ok(Ratio::new(favourable, binomial(n, total_errors)))
}

/// One `(n_s, n_t, E, theta)` point of the soundness scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCase {
    pub n_s: u64,
    pub n_t: u64,
    pub total_errors: u64,
    /// `theta` in hundredths.
    pub theta_pct: u32,
    /// Exact probability of the deviation event.
    pub exact: f64,
    /// Largest bound over the sample error counts inside the event.
    pub bound: f64,
    /// Sample error count attaining `bound`.
    pub worst_k: u64,
}

impl TailCase {
    pub fn violated(&self) -> bool {
        self.exact > self.bound
    }
}

/// Compares the exact tail with the bound for every split with
/// `n_s + n_t <= max_positions`, every error total and every
/// `theta = pct / 100`. The bound for a case is the largest value it takes at
/// the sample rates `k / n_s` of outcomes inside the event. Cases whose
/// event is empty are skipped.
pub fn tail_soundness_scan(max_positions: u64, theta_pcts: &[u32]) -> Result<Vec<TailCase>> {
    let mut out = Vec::new();
    for n in 2..=max_positions {
        for n_s in 1..n {
            let n_t = n - n_s;
            for total in 0..=n {
                for &pct in theta_pcts {
                    let theta = Ratio::new(pct as u128, 100);
                    let in_event = |k: u64| Ratio::new((total - k) as u128, n_t as u128) > Ratio::new(k as u128, n_s as u128) + theta;
                    let ks: Vec<u64> = (total.saturating_sub(n_t)..=total.min(n_s)).filter(|&k| in_event(k)).collect();
                    if ks.is_empty() {
                        continue;
                    }
                    let exact = hypergeometric_tail_oracle(n_s, n_t, total, theta)?;
                    let mut bound = f64::NEG_INFINITY;
                    let mut worst_k = ks[0];
                    for &k in &ks {
                        let b = p_theta_bound(n_s as f64, n_t as f64, k as f64 / n_s as f64, pct as f64 / 100.0)?;
                        if b > bound {
                            bound = b;
                            worst_k = k;
                        }
                    }
                    out.push(TailCase {
                        n_s,
                        n_t,
                        total_errors: total,
                        theta_pct: pct,
                        exact: *exact.numer() as f64 / *exact.denom() as f64,
                        bound,
                        worst_k,
                    });
                }
            }
        }
    }
    Ok(out)
}
