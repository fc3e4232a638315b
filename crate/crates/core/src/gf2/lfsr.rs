use crate::error::{Error, Result};
use crate::gf2::poly::is_irreducible;
use crate::gf2::BitString;

/// Largest LFSR degree (tag length) supported by the u128 register.
pub const MAX_LFSR_DEGREE: usize = 128;

/// A Fibonacci LFSR of degree `k`.
///
/// The output sequence `s` starts with the initial state (`s_0 .. s_{k-1}`)
/// and continues with `s_{t+k} = XOR_{i<k} c_i s_{t+i}`, where `c_i` are the
/// bits of `connection_poly`. The characteristic polynomial is
/// `x^k + sum_i c_i x^i`; the leading coefficient is implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LfsrSpec {
    degree: usize,
    initial_state: BitString,
    connection_poly: BitString,
}

impl LfsrSpec {
    /// Validates lengths and irreducibility. A zero initial state is accepted
    /// here and rejected by [`lfsr_stream`].
    pub fn new(initial_state: BitString, connection_poly: BitString) -> Result<Self> {
        let degree = initial_state.len();
        if degree == 0 || degree > MAX_LFSR_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        if connection_poly.len() != degree {
            return Err(Error::LengthMismatch {
                expected: degree,
                actual: connection_poly.len(),
            });
        }
        if !is_irreducible(connection_poly.to_u128(), degree) {
            return Err(Error::ReduciblePolynomial);
        }
        Ok(LfsrSpec {
            degree,
            initial_state,
            connection_poly,
        })
    }

    /// Seeds an LFSR from `2k` key bits: the first half is the initial state,
    /// the second half a candidate connection polynomial.
    ///
    /// Repairs are deterministic. An all-zero state becomes the integer 1
    /// (bit 0 set). The candidate gets its constant term forced to 1 and is
    /// then incremented as a k-bit integer (wrapping, constant term kept at 1)
    /// until it is irreducible.
    pub fn from_key(key: &BitString) -> Result<Self> {
        if key.len() % 2 != 0 || key.is_empty() {
            return Err(Error::Dimension(format!(
                "LFSR key must have even positive length, got {}",
                key.len()
            )));
        }
        let k = key.len() / 2;
        if k > MAX_LFSR_DEGREE {
            return Err(Error::UnsupportedDegree(k));
        }
        let mut state = key.slice(0..k);
        if state.is_zero() {
            state.set(0, true);
        }
        let mask = if k == 128 { u128::MAX } else { (1u128 << k) - 1 };
        let mut poly = key.slice(k..2 * k).to_u128() | 1;
        while !is_irreducible(poly, k) {
            poly = poly.wrapping_add(2) & mask | 1;
        }
        LfsrSpec::new(state, BitString::from_u128(poly, k))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn initial_state(&self) -> &BitString {
        &self.initial_state
    }

    pub fn connection_poly(&self) -> &BitString {
        &self.connection_poly
    }
}

/// First `n_out` output bits of the register.
pub fn lfsr_stream(spec: &LfsrSpec, n_out: usize) -> Result<BitString> {
    if spec.initial_state.is_zero() {
        return Err(Error::ZeroLfsrState);
    }
    let k = spec.degree;
    let taps = spec.connection_poly.to_u128();
    let mut state = spec.initial_state.to_u128();
    let mut out = BitString::zeros(n_out);
    for t in 0..n_out {
        if state & 1 == 1 {
            out.set(t, true);
        }
        let feedback = ((state & taps).count_ones() & 1) as u128;
        state = (state >> 1) | (feedback << (k - 1));
    }
    Ok(out)
}
