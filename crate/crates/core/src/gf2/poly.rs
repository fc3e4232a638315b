//! Just enough GF(2)[x] arithmetic to decide irreducibility of LFSR
//! connection polynomials.

/// Polynomial over GF(2), coefficient `i` in bit `i`. Trailing zero words are trimmed.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Poly(Vec<u64>);

impl Poly {
    fn from_u128(v: u128) -> Self {
        let mut p = Poly(vec![v as u64, (v >> 64) as u64]);
        p.trim();
        p
    }

    fn monomial(deg: usize) -> Self {
        let mut w = vec![0u64; deg / 64 + 1];
        w[deg / 64] = 1 << (deg % 64);
        Poly(w)
    }

    fn trim(&mut self) {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn degree(&self) -> Option<usize> {
        self.0
            .last()
            .map(|w| 64 * (self.0.len() - 1) + 63 - w.leading_zeros() as usize)
    }

    fn xor_shifted(&mut self, other: &Poly, shift: usize) {
        let ws = shift / 64;
        let bs = shift % 64;
        let need = other.0.len() + ws + 1;
        if self.0.len() < need {
            self.0.resize(need, 0);
        }
        for (i, &w) in other.0.iter().enumerate() {
            self.0[i + ws] ^= w << bs;
            if bs != 0 {
                self.0[i + ws + 1] ^= w >> (64 - bs);
            }
        }
        self.trim();
    }

    fn rem(&self, m: &Poly) -> Poly {
        let dm = m.degree().expect("division by zero polynomial");
        let mut r = self.clone();
        while let Some(dr) = r.degree() {
            if dr < dm {
                break;
            }
            r.xor_shifted(m, dr - dm);
        }
        r
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly(Vec::new());
        if let Some(d) = other.degree() {
            for i in 0..=d {
                if (other.0[i / 64] >> (i % 64)) & 1 == 1 {
                    out.xor_shifted(self, i);
                }
            }
        }
        out
    }

    fn mulmod(&self, other: &Poly, m: &Poly) -> Poly {
        self.mul(other).rem(m)
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        out.xor_shifted(other, 0);
        out
    }

    fn gcd(a: &Poly, b: &Poly) -> Poly {
        let (mut a, mut b) = (a.clone(), b.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a
    }

    fn is_one(&self) -> bool {
        self.0 == [1]
    }
}

/// Whether `x^degree + sum_i low_coeffs[i] x^i` is irreducible over GF(2).
///
/// Polynomials divisible by `x` (zero constant term) are reported reducible,
/// including `x` itself: an LFSR with such a connection polynomial loses state.
/// Uses Ben-Or's test: `p` is irreducible iff `gcd(p, x^(2^i) - x mod p) = 1`
/// for every `1 <= i <= degree/2`.
pub fn is_irreducible(low_coeffs: u128, degree: usize) -> bool {
    assert!((1..=128).contains(&degree));
    if degree < 128 {
        assert!(low_coeffs >> degree == 0, "coefficients exceed degree");
    }
    if low_coeffs & 1 == 0 {
        return false;
    }
    if degree == 1 {
        return true;
    }
    let p = Poly::from_u128(low_coeffs).add(&Poly::monomial(degree));
    let x = Poly::monomial(1);
    let mut power = x.clone(); // x^(2^i) mod p
    for _ in 1..=degree / 2 {
        power = power.mulmod(&power, &p);
        let g = Poly::gcd(&p, &power.add(&x));
        if !g.is_one() {
            return false;
        }
    }
    true
}

/// Multiplicative order of `x` modulo the polynomial (brute force, small degrees only).
pub fn order_of_x(low_coeffs: u128, degree: usize) -> Option<u64> {
    assert!(degree <= 24, "brute-force order only for small degrees");
    let p = Poly::from_u128(low_coeffs).add(&Poly::monomial(degree));
    let x = Poly::monomial(1);
    let mut acc = x.rem(&p);
    let one = Poly::monomial(0);
    for e in 1..=(1u64 << degree) {
        if acc == one {
            return Some(e);
        }
        acc = acc.mulmod(&x, &p);
    }
    None
}
