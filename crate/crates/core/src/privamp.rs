//! Privacy amplification: final-length arithmetic, Toeplitz compression and
//! the authenticated seed transfer.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::auth::{AuthTag, TagKey, Verdict};
use crate::budget::KeyPool;
use crate::error::{Error, Result};
use crate::gf2::{lfsr_stream, toeplitz_multiply, BitString, LfsrSpec, ToeplitzSource, ToeplitzSpec};
use crate::phase::h2;

/// Entropy of a phase-error-rate bound. Rates past 1/2 carry no secrecy, so
/// the entropy saturates at 1 there.
pub(crate) fn phase_entropy(rate: f64) -> f64 {
    h2(rate.min(0.5))
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Real-valued final length before flooring:
/// `n_x (1 - H2(e_bz + theta_z)) + n_z (1 - H2(e_bx + theta_x)) - t_oe`.
pub fn pa_length_real(n_x: f64, n_z: f64, e_bx: f64, e_bz: f64, theta_x: f64, theta_z: f64, t_oe: f64) -> Result<f64> {
    check_rate("e_bx + theta_x", e_bx + theta_x)?;
    check_rate("e_bz + theta_z", e_bz + theta_z)?;
    if t_oe < 0.0 {
        return Err(Error::Domain(format!("t_oe must be nonnegative, got {t_oe}")));
    }
    Ok(n_x * (1.0 - phase_entropy(e_bz + theta_z)) + n_z * (1.0 - phase_entropy(e_bx + theta_x)) - t_oe)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalLength {
    pub l: u64,
    pub raw: f64,
    pub infeasible: bool,
}

/// Floored final length; a nonpositive result is reported as infeasible with `l = 0`.
pub fn pa_final_length(n_x: f64, n_z: f64, e_bx: f64, e_bz: f64, theta_x: f64, theta_z: f64, t_oe: f64) -> Result<FinalLength> {
    let raw = pa_length_real(n_x, n_z, e_bx, e_bz, theta_x, theta_z, t_oe)?;
    let infeasible = raw < 1.0;
    Ok(FinalLength {
        l: if infeasible { 0 } else { raw.floor() as u64 },
        raw,
        infeasible,
    })
}

/// `(s + l - 1) 2^(1 - k_pa) + 2^(-t_oe)` for an `s`-bit input and `l`-bit output.
pub fn pa_failure(input_len: u64, l: u64, k_pa: u32, t_oe: f64) -> f64 {
    seed_len(input_len, l) as f64 * (1.0 - k_pa as f64).exp2() + (-t_oe).exp2()
}

/// Seed length `s + l - 1` for an `s`-bit input and `l`-bit output.
pub fn seed_len(input_len: u64, l: u64) -> u64 {
    (input_len + l).saturating_sub(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaPlan {
    pub l: u64,
    pub t_oe: u64,
    pub k_pa: u32,
    pub eps_pa: f64,
}

/// Compresses `key` to `l = seed.len() - key.len() + 1` bits with the
/// Toeplitz matrix whose diagonal is `seed`.
pub fn pa_compress(key: &BitString, seed: &BitString) -> Result<BitString> {
    if key.is_empty() {
        return Err(Error::Dimension("cannot compress an empty key".into()));
    }
    if seed.len() < key.len() {
        return Err(Error::Dimension(format!(
            "seed of {} bits is too short for a {}-bit key",
            seed.len(),
            key.len()
        )));
    }
    let l = seed.len() + 1 - key.len();
    let spec = ToeplitzSpec::new(l, key.len(), seed.clone(), ToeplitzSource::ExplicitRandom)?;
    toeplitz_multiply(&spec, key)
}

/// Compression with a diagonal stretched from a short pre-shared LFSR key
/// instead of a transmitted seed.
///
/// Experimental: no failure probability or output length is established for
/// this mode, so nothing it produces enters the budget.
pub fn experimental_lfsr_compress(key: &BitString, lfsr_key: &BitString, l: usize) -> Result<BitString> {
    if l == 0 || key.is_empty() {
        return Err(Error::Dimension("empty input or output".into()));
    }
    let lfsr = LfsrSpec::from_key(lfsr_key)?;
    let diagonal = lfsr_stream(&lfsr, key.len() + l - 1)?;
    let spec = ToeplitzSpec::new(l, key.len(), diagonal, ToeplitzSource::LfsrGenerated)?;
    toeplitz_multiply(&spec, key)
}

/// Sender side of the seed transfer: draws a fresh random seed and tags it.
pub fn pa_seed_send<R: RngCore + ?Sized>(
    input_len: u64,
    l: u64,
    tag_key: &TagKey,
    pool: &mut KeyPool,
    rng: &mut R,
) -> Result<(BitString, AuthTag)> {
    let seed = BitString::random(seed_len(input_len, l) as usize, rng);
    let tag = tag_key.seal(&seed, pool)?;
    Ok((seed, tag))
}

/// Receiver side: checks the tag and that the seed has the length both sides
/// derived independently from the verified statistics.
pub fn pa_seed_receive(
    seed: &BitString,
    tag: &AuthTag,
    input_len: u64,
    l: u64,
    tag_key: &TagKey,
    pool: &mut KeyPool,
) -> Result<Verdict> {
    let verdict = tag_key.open(seed, tag, pool)?;
    if seed.len() as u64 != seed_len(input_len, l) {
        return Ok(Verdict::Reject);
    }
    Ok(verdict)
}
