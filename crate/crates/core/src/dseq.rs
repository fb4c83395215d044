//! Binary decimal sequences (d-sequences).
//!
//! The d-sequence of a prime `q` is the base-2 expansion of `1/q`. Its digits
//! are `a_i = (2^i mod q) mod 2` for `i = 1, 2, ...`, and the sequence repeats
//! with period equal to the multiplicative order of 2 modulo `q`. When that
//! order is `q - 1` the sequence is maximum-length.
//!
//! Chips are the symmetric form of the digits: 0 maps to `-sigma_u` and 1 to
//! `+sigma_u`.

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::scalar::{fmt17, pairwise_sum_by, Scalar};
use crate::{Error, Result};

/// Keys must be strictly below this bound.
pub const MAX_KEY: u64 = 1 << 31;

/// Largest period [`generate`] will store in memory.
pub const MAX_MATERIALIZED_PERIOD: u64 = 1 << 26;

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    // Operands are < 2^32 here; the product fits in u64, but go through
    // u128 so the helper stays correct for any u64 modulus.
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Deterministic Miller-Rabin; the first twelve primes as witnesses are
/// exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn check_key(q: u64) -> Result<()> {
    if q >= MAX_KEY {
        return Err(Error::KeyOutOfRange(q));
    }
    if q.is_multiple_of(2) || q <= 5 {
        // 2, 3 and 5 are primes but not usable keys; everything else small
        // or even is simply not prime.
        return Err(if is_prime(q) { Error::UnsupportedPrime(q) } else { Error::NotPrime(q) });
    }
    if !is_prime(q) {
        return Err(Error::NotPrime(q));
    }
    Ok(())
}

fn distinct_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n.is_multiple_of(f) {
            out.push(f);
            while n.is_multiple_of(f) {
                n /= f;
            }
        }
        f += if f == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Multiplicative order of 2 modulo `q`: the least `t >= 1` with `2^t = 1 (mod q)`.
pub fn period(q: u64) -> Result<u64> {
    check_key(q)?;
    let mut order = q - 1;
    for f in distinct_prime_factors(q - 1) {
        while order.is_multiple_of(f) && pow_mod(2, order / f, q) == 1 {
            order /= f;
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: u64) -> Self {
        if n.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Period-divisor classification of a prime: `period = (q - 1) / n_divisor`.
/// Even divisors mark the low-gain candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub n_divisor: u64,
    pub parity: Parity,
}

/// One full period of the binary d-sequence of a prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DSequence {
    q: u64,
    period: u64,
    digits: Vec<u8>,
    n_divisor: u64,
}

/// Builds the d-sequence for `q`.
pub fn generate(q: u64) -> Result<DSequence> {
    let period = period(q)?;
    if period > MAX_MATERIALIZED_PERIOD {
        return Err(Error::PeriodTooLong { q, period });
    }
    let mut digits = Vec::with_capacity(period as usize);
    let mut r = 1u64;
    for _ in 0..period {
        r = (r * 2) % q;
        digits.push((r & 1) as u8);
    }
    Ok(DSequence { q, period, digits, n_divisor: (q - 1) / period })
}

impl DSequence {
    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Digits `a_1 ..= a_p`, stored at indices `0 .. p`.
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn n_divisor(&self) -> u64 {
        self.n_divisor
    }

    pub fn is_max_length(&self) -> bool {
        self.n_divisor == 1
    }

    pub fn classify(&self) -> Classification {
        classify(self)
    }

    /// Digit at zero-based position `i` of the periodic extension.
    #[inline]
    pub fn digit_at(&self, i: usize) -> u8 {
        self.digits[i % self.digits.len()]
    }

    /// `len` digits of the periodic extension as a `0`/`1` string.
    pub fn digits_line(&self, len: usize) -> String {
        (0..len).map(|i| if self.digit_at(i) == 1 { '1' } else { '0' }).collect()
    }
}

pub fn classify(seq: &DSequence) -> Classification {
    Classification { n_divisor: seq.n_divisor, parity: Parity::of(seq.n_divisor) }
}

/// A `±sigma_u` spreading signal: the symmetric form of a d-sequence,
/// extended periodically from digit index 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSequence<T> {
    source_q: u64,
    source_period: u64,
    amplitude: T,
    chips: Vec<T>,
}

pub fn chips<T: Scalar>(seq: &DSequence, length: usize, sigma_u: T) -> Result<ChipSequence<T>> {
    if length == 0 {
        return Err(Error::InvalidParameter("chip length must be at least 1".into()));
    }
    if !(sigma_u > T::zero() && sigma_u.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma_u must be positive, got {sigma_u}")));
    }
    let chips = (0..length)
        .map(|i| if seq.digit_at(i) == 1 { sigma_u } else { -sigma_u })
        .collect();
    Ok(ChipSequence { source_q: seq.q, source_period: seq.period, amplitude: sigma_u, chips })
}

impl<T: Scalar> ChipSequence<T> {
    pub fn source_q(&self) -> u64 {
        self.source_q
    }

    pub fn source_period(&self) -> u64 {
        self.source_period
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.chips
    }

    /// One chip per line, 17 significant digits.
    pub fn export_lines(&self) -> String {
        let mut out = String::with_capacity(self.chips.len() * 24);
        for c in &self.chips {
            out.push_str(&fmt17(c.as_f64()));
            out.push('\n');
        }
        out
    }
}

impl<T> std::ops::Deref for ChipSequence<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.chips
    }
}

/// Periodic cross-correlation `(1/L) * sum_i a[i] * b[(i + shift) mod L]`.
pub fn cross_correlation<T: Scalar>(a: &[T], b: &[T], shift: i64) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let len = a.len();
    if len == 0 {
        return Err(Error::InvalidParameter("empty sequences".into()));
    }
    let offset = shift.rem_euclid(len as i64) as usize;
    let sum = pairwise_sum_by(0, len, |i| a[i] * b[(i + offset) % len]);
    Ok(sum / T::lit(len as f64))
}

/// Result of the period-ratio compatibility test for a pair of primes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCompatibility {
    pub q1: u64,
    pub q2: u64,
    pub period1: u64,
    pub period2: u64,
    /// `period1 / period2` in lowest terms.
    pub reduced: (u64, u64),
    pub compatible: bool,
    /// Set when either sequence is not maximum-length, where the
    /// zero-correlation guarantee is not established.
    pub not_max_length: bool,
}

impl PairCompatibility {
    /// Length over which the full-period cross-correlation is taken.
    pub fn common_period(&self) -> u64 {
        self.period1.lcm(&self.period2)
    }
}

/// Two d-sequences are compatible when the ratio of their periods, reduced
/// to `n1/n2`, has an even numerator or denominator.
pub fn compatible_pair(q1: u64, q2: u64) -> Result<PairCompatibility> {
    let p1 = period(q1)?;
    let p2 = period(q2)?;
    let g = p1.gcd(&p2);
    let (n1, n2) = (p1 / g, p2 / g);
    Ok(PairCompatibility {
        q1,
        q2,
        period1: p1,
        period2: p2,
        reduced: (n1, n2),
        compatible: n1 % 2 == 0 || n2 % 2 == 0,
        not_max_length: p1 != q1 - 1 || p2 != q2 - 1,
    })
}
