use rand::{Rng, RngCore};
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sift::{Basis, Click, RawDetection};

/// Simulated source, channel and detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    /// Transmittance including detector efficiency.
    pub eta: f64,
    pub qber_x: f64,
    pub qber_z: f64,
    /// Chance that a transmitted pulse fires both detectors.
    #[serde(default)]
    pub double_click_prob: f64,
    /// Chance that a lost pulse still produces a click with a random bit.
    #[serde(default)]
    pub dark_like_noise: f64,
    pub seed: u64,
}

impl ChannelModel {
    pub fn new(eta: f64, qber: f64, seed: u64) -> Self {
        ChannelModel {
            eta,
            qber_x: qber,
            qber_z: qber,
            double_click_prob: 0.0,
            dark_like_noise: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("eta", self.eta),
            ("qber_x", self.qber_x),
            ("qber_z", self.qber_z),
            ("double_click_prob", self.double_click_prob),
            ("dark_like_noise", self.dark_like_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn click_prob(&self) -> f64 {
        self.eta + (1.0 - self.eta) * self.dark_like_noise
    }
}

/// Sends `pulses` BB84 states with X-basis probability `p_x` on both sides.
/// Only clicked pulses are returned; the gaps between clicks are drawn
/// geometrically so that low transmittance costs nothing per lost pulse.
pub fn simulate_quantum_exchange<R: RngCore + ?Sized>(pulses: u64, p_x: f64, model: &ChannelModel, rng: &mut R) -> Result<Vec<RawDetection>> {
    model.validate()?;
    if !(0.0..=1.0).contains(&p_x) {
        return Err(Error::Domain(format!("p_x = {p_x} outside [0, 1]")));
    }
    let p_click = model.click_prob();
    let mut out = Vec::new();
    if p_click <= 0.0 {
        return Ok(out);
    }
    let gap = Geometric::new(p_click).map_err(|e| Error::Domain(e.to_string()))?;
    let signal_share = model.eta / p_click;
    let mut pulse = 0u64;
    loop {
        pulse = match pulse.checked_add(gap.sample(rng)) {
            Some(p) if p < pulses => p,
            _ => break,
        };
        let alice_bit = rng.gen::<bool>();
        let alice_basis = Basis::random(p_x, rng);
        let bob_basis = Basis::random(p_x, rng);
        let bob_click = if rng.gen::<f64>() < signal_share {
            if rng.gen::<f64>() < model.double_click_prob {
                Click::Double
            } else if alice_basis == bob_basis {
                let qber = match alice_basis {
                    Basis::X => model.qber_x,
                    Basis::Z => model.qber_z,
                };
                Click::Single(alice_bit ^ (rng.gen::<f64>() < qber))
            } else {
                Click::Single(rng.gen())
            }
        } else {
            Click::Single(rng.gen())
        };
        out.push(RawDetection {
            pulse,
            alice_bit,
            alice_basis,
            bob_click,
            bob_basis,
        });
        pulse += 1;
    }
    Ok(out)
}

const DETECTIONS_MAGIC: &[u8; 4] = b"QKDD";
const DETECTIONS_VERSION: u16 = 1;

/// Detection file: `QKDD`, u16 version, u64 pulses sent, u64 record count,
/// then 9-byte records (u64 pulse index, flag byte), all little-endian.
///
/// Flag bits: 0 Alice's bit, 1 Alice's basis (set = Z), 2..=3 click kind
/// (0 none, 1 single, 2 double), 4 clicked bit, 5 Bob's basis.
pub fn detections_to_bytes(pulses: u64, detections: &[RawDetection]) -> Vec<u8> {
    let mut out = Vec::with_capacity(22 + 9 * detections.len());
    out.extend_from_slice(DETECTIONS_MAGIC);
    out.extend_from_slice(&DETECTIONS_VERSION.to_le_bytes());
    out.extend_from_slice(&pulses.to_le_bytes());
    out.extend_from_slice(&(detections.len() as u64).to_le_bytes());
    for d in detections {
        let (kind, bit) = match d.bob_click {
            Click::None => (0u8, false),
            Click::Single(b) => (1, b),
            Click::Double => (2, false),
        };
        let flags = d.alice_bit as u8 | (d.alice_basis.bit() as u8) << 1 | kind << 2 | (bit as u8) << 4 | (d.bob_basis.bit() as u8) << 5;
        out.extend_from_slice(&d.pulse.to_le_bytes());
        out.push(flags);
    }
    out
}

pub fn detections_from_bytes(buf: &[u8]) -> Result<(u64, Vec<RawDetection>)> {
    if buf.len() < 22 || &buf[..4] != DETECTIONS_MAGIC {
        return Err(Error::Decode("not a detection file".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != DETECTIONS_VERSION {
        return Err(Error::Decode(format!("unsupported detection file version {version}")));
    }
    let pulses = u64::from_le_bytes(buf[6..14].try_into().unwrap());
    let count = u64::from_le_bytes(buf[14..22].try_into().unwrap());
    let body = &buf[22..];
    if count.checked_mul(9) != Some(body.len() as u64) {
        return Err(Error::Decode(format!("{count} records do not fit {} bytes", body.len())));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut last: Option<u64> = None;
    for rec in body.chunks_exact(9) {
        let pulse = u64::from_le_bytes(rec[..8].try_into().unwrap());
        let flags = rec[8];
        if flags & 0xC0 != 0 {
            return Err(Error::Decode(format!("reserved flag bits set in record for pulse {pulse}")));
        }
        if pulse >= pulses || last.is_some_and(|l| pulse <= l) {
            return Err(Error::Decode(format!("pulse index {pulse} out of order or range")));
        }
        last = Some(pulse);
        let bob_click = match (flags >> 2) & 3 {
            0 => Click::None,
            1 => Click::Single(flags & 0x10 != 0),
            2 => Click::Double,
            _ => return Err(Error::Decode("bad click kind".into())),
        };
        out.push(RawDetection {
            pulse,
            alice_bit: flags & 1 != 0,
            alice_basis: Basis::from_bit(flags & 2 != 0),
            bob_click,
            bob_basis: Basis::from_bit(flags & 0x20 != 0),
        });
    }
    Ok((pulses, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sift::key_sift;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn detection_count_follows_transmittance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = simulate_quantum_exchange(100_000, 0.5, &ChannelModel::new(1e-3, 0.0, 0), &mut rng).unwrap();
        let mean = 100.0;
        assert!((d.len() as f64 - mean).abs() <= 4.0 * (mean * (1.0 - 1e-3)).sqrt(), "{}", d.len());
    }

    #[test]
    fn clean_channel_sifts_to_identical_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = simulate_quantum_exchange(2000, 0.5, &ChannelModel::new(1.0, 0.0, 0), &mut rng).unwrap();
        assert_eq!(d.len(), 2000);
        let (a, b) = key_sift(&d, false, &mut rng);
        for i in 0..a.len() {
            if a.bases.get(i) == b.bases.get(i) {
                assert_eq!(a.bits.get(i), b.bits.get(i));
            }
        }
    }

    #[test]
    fn matched_basis_error_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = simulate_quantum_exchange(100_000, 0.5, &ChannelModel::new(1.0, 0.04, 0), &mut rng).unwrap();
        let (mut n, mut errors) = (0.0, 0.0);
        for r in &d {
            if let Click::Single(b) = r.bob_click {
                if r.alice_basis == r.bob_basis {
                    n += 1.0;
                    errors += (b != r.alice_bit) as u8 as f64;
                }
            }
        }
        assert!((errors - 0.04 * n).abs() <= 4.0 * (n * 0.04 * 0.96f64).sqrt());
    }

    #[test]
    fn double_clicks_and_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = ChannelModel {
            double_click_prob: 0.1,
            dark_like_noise: 0.5,
            ..ChannelModel::new(0.5, 0.0, 0)
        };
        let d = simulate_quantum_exchange(20_000, 0.5, &model, &mut rng).unwrap();
        let p_click = 0.75;
        assert!((d.len() as f64 - 20_000.0 * p_click).abs() <= 4.0 * (20_000.0 * p_click * (1.0 - p_click)).sqrt());
        let doubles = d.iter().filter(|r| r.bob_click == Click::Double).count() as f64;
        let expect = 20_000.0 * 0.5 * 0.1;
        assert!((doubles - expect).abs() <= 4.0 * (expect * 0.95).sqrt());
        assert!(simulate_quantum_exchange(10, 0.5, &ChannelModel::new(1.5, 0.0, 0), &mut rng).is_err());
    }

    #[test]
    fn detection_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ChannelModel {
            double_click_prob: 0.2,
            ..ChannelModel::new(0.3, 0.1, 0)
        };
        let d = simulate_quantum_exchange(500, 0.7, &model, &mut rng).unwrap();
        let bytes = detections_to_bytes(500, &d);
        assert_eq!(bytes.len(), 22 + 9 * d.len());
        assert_eq!(detections_from_bytes(&bytes).unwrap(), (500, d));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(detections_from_bytes(&bad).is_err());
        assert!(detections_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut late = detections_to_bytes(10, &[]);
        late[14] = 1;
        late.extend_from_slice(&10u64.to_le_bytes());
        late.push(0b0100);
        assert!(detections_from_bytes(&late).is_err());
    }
}
