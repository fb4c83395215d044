//! Floating-point scalar abstraction shared by the signal-level code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real scalar type the watermarking math is written against.
///
/// Implemented for `f32` and `f64`. `erfc` is the FreeBSD msun
/// implementation (via `libm`), accurate to about one ulp, which keeps the
/// tail probabilities of the detector model usable down to ~1e-300 in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn erfc(self) -> Self;

    /// One draw from N(0, 1) (ziggurat sampler from `rand_distr`).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        <StandardNormal as Distribution<f32>>::sample(&StandardNormal, rng)
    }
}

impl Scalar for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    }
}

const PAIRWISE_BLOCK: usize = 128;

/// Pairwise (cascade) summation. The split points depend only on the
/// length, so the result is reproducible regardless of how callers
/// parallelize around it.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().copied().fold(T::zero(), |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..len` without materializing the terms.
pub fn pairwise_sum_by<T: Scalar, F: Fn(usize) -> T + Copy>(start: usize, len: usize, f: F) -> T {
    if len <= PAIRWISE_BLOCK {
        return (start..start + len).fold(T::zero(), |acc, i| acc + f(i));
    }
    let half = len / 2;
    pairwise_sum_by(start, half, f) + pairwise_sum_by(start + half, len - half, f)
}

/// Formats a real with 17 significant digits, the text form used by every
/// exported table.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with mpmath at 50 digits.
    #[allow(clippy::excessive_precision)]
    const ERFC_TABLE: &[(f64, f64)] = &[
        (0.0, 1.0),
        (0.5, 0.47950012218695346232),
        (1.0, 0.15729920705028513066),
        (2.0, 0.0046777349810472658379),
        (3.5, 7.4309837234141274552e-7),
        (5.0, 1.5374597944280348502e-12),
        (7.5, 2.7766493860305691007e-26),
        (10.0, 2.0884875837625447570e-45),
    ];

    #[test]
    fn erfc_matches_high_precision_table() {
        for &(x, want) in ERFC_TABLE {
            let got = <f64 as Scalar>::erfc(x);
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-12, "erfc({x}) = {got:e}, want {want:e} (rel {rel:e})");
        }
    }

    #[test]
    fn erfc_f32_is_close() {
        for &(x, want) in &ERFC_TABLE[..5] {
            let got = <f32 as Scalar>::erfc(x as f32) as f64;
            assert!(((got - want) / want).abs() < 1e-5);
        }
    }

    #[test]
    fn pairwise_sum_agrees_with_naive_on_integers() {
        let v: Vec<f64> = (0..10_000).map(|i| (i % 17) as f64).collect();
        let naive: f64 = v.iter().sum();
        assert_eq!(pairwise_sum(&v), naive);
        assert_eq!(pairwise_sum_by(0, v.len(), |i| v[i]), naive);
    }

    #[test]
    fn fmt17_has_seventeen_significant_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(-2.5), "-2.5000000000000000e0");
    }
}
