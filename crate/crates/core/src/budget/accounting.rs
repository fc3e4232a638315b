use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pre-shared key spent by one session, in bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Costs {
    /// Tag length of each of the two basis-sift messages.
    pub k_bs: u64,
    /// Encrypted error-correction traffic.
    pub k_ec: u64,
    /// Error-verification tag length.
    pub k_ev: u64,
    /// Tag length for the privacy-amplification seed.
    pub k_pa: u64,
    /// Length reduction buying the `2^-t_oe` term of the amplification failure.
    pub t_oe: u64,
}

impl Costs {
    /// `2 k_bs + k_ev + k_pa + t_oe`: everything except error correction.
    pub fn k3(&self) -> u64 {
        2 * self.k_bs + self.k_ev + self.k_pa + self.t_oe
    }

    /// Pool bits charged: `2 k_bs + k_ec + k_ev + k_pa`.
    pub fn charged(&self) -> u64 {
        2 * self.k_bs + self.k_ec + self.k_ev + self.k_pa
    }
}

/// `l - 2 k_bs - k_ec - k_ev - k_pa`; negative means the session consumed
/// more pre-shared key than it produced.
pub fn net_key_length(l: u64, costs: &Costs) -> i64 {
    l as i64 - costs.charged() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureBudget {
    pub eps_bs: f64,
    pub eps_ev: f64,
    pub eps_ph: f64,
    pub eps_pa: f64,
    pub eps_total: f64,
}

impl FailureBudget {
    pub fn new(eps_bs: f64, eps_ev: f64, eps_ph: f64, eps_pa: f64) -> Self {
        FailureBudget {
            eps_bs,
            eps_ev,
            eps_ph,
            eps_pa,
            eps_total: 2.0 * eps_bs + eps_ev + eps_ph + eps_pa,
        }
    }
}

/// `log2 A` with `A = n^2 m (s + l - 1)`, where `n` is the basis-sift message
/// length, `m` the verified length and `s` the amplification input length.
pub fn log2_a(n: f64, m: f64, s: f64, l: f64) -> f64 {
    2.0 * n.log2() + m.log2() + (s + l - 1.0).max(1.0).log2()
}

/// Integer costs derived from a `k3` budget by equalising the five
/// authentication and amplification failure terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedCosts {
    pub t_oe_real: f64,
    pub t_oe: u64,
    pub k_bs: u64,
    pub k_ev: u64,
    pub k_pa: u64,
}

impl GroupedCosts {
    pub fn sum(&self) -> u64 {
        2 * self.k_bs + self.k_ev + self.k_pa + self.t_oe
    }
}

/// `t_oe = (k3 - 4 - log2 A) / 5` and `k_* = t_oe + 1 + log2(message length)`,
/// each rounded up independently. `n`: basis-sift message length, `m`:
/// verified length, `s`: amplification input length.
pub fn grouped_costs(k3: f64, n: f64, m: f64, s: f64, l: f64) -> Result<GroupedCosts> {
    if !(n >= 1.0 && m >= 1.0 && s >= 1.0 && l >= 0.0) {
        return Err(Error::Domain(format!("bad lengths n={n} m={m} s={s} l={l}")));
    }
    let t_oe_real = (k3 - 4.0 - log2_a(n, m, s, l)) / 5.0;
    if t_oe_real < 1.0 {
        return Err(Error::Infeasible(format!(
            "k3 = {k3} leaves t_oe = {t_oe_real:.3} < 1"
        )));
    }
    let up = |x: f64| x.ceil() as u64;
    Ok(GroupedCosts {
        t_oe_real,
        t_oe: up(t_oe_real),
        k_bs: up(t_oe_real + 1.0 + n.log2()),
        k_ev: up(t_oe_real + 1.0 + m.log2()),
        k_pa: up(t_oe_real + 1.0 + (s + l - 1.0).max(1.0).log2()),
    })
}

/// `5 A^(1/5) 2^(-(k3 - 4) / 5)`, from `log2 A`.
pub fn eps3(k3: f64, log2_a: f64) -> f64 {
    5.0 * ((log2_a - (k3 - 4.0)) / 5.0).exp2()
}

/// Real-valued `-5 log2 eps + 4 log2 n + 50`.
pub fn k3_shortcut_real(eps: f64, n: f64) -> f64 {
    -5.0 * eps.log2() + 4.0 * n.log2() + 50.0
}

/// Rounded-up `k3` for target `eps` and `n` detections.
pub fn k3_shortcut(eps: f64, n: f64) -> u64 {
    k3_shortcut_real(eps, n).ceil() as u64
}

/// Authentication failure of a `k`-bit tag over `m` bits, as a real `m 2^(1-k)`
/// (unclamped, so budget identities stay exact).
pub(crate) fn tag_failure(m: f64, k: u64) -> f64 {
    m * (1.0 - k as f64).exp2()
}
