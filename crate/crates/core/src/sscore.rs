//! Spread-spectrum core: inner products, traditional and improved (ISS)
//! embedding, correlation detection and the Gaussian detector model.
//!
//! All inner products are normalized by the vector length,
//! `<x, u> = (1/N) * sum x_i u_i`, and `norm_power(x) = <x, x>`. With chips
//! of amplitude `sigma_u`, `<u, u> = sigma_u^2` for every length.
//!
//! The ISS embedder adds `g * u` to the host with `g = mu * b - lambda * x_bar`,
//! where `x_bar = <x, u> / <u, u>` is the host's projection on the chips. A
//! noiseless detector then sees `r = mu * b + (1 - lambda) * x_bar`.

use serde::{Deserialize, Serialize};

use crate::scalar::{pairwise_sum_by, Scalar};
use crate::{Error, Result};

/// An embedded bit, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Bit {
    Plus,
    Minus,
}

impl Bit {
    #[inline]
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Bit::Plus => T::one(),
            Bit::Minus => -T::one(),
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Bit::Plus => 1,
            Bit::Minus => -1,
        }
    }

    /// Decision rule `sign(r)`, with `r = 0` mapped to `Plus`.
    #[inline]
    pub fn from_statistic<T: Scalar>(r: T) -> Self {
        if r < T::zero() {
            Bit::Minus
        } else {
            Bit::Plus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Bit::Plus => Bit::Minus,
            Bit::Minus => Bit::Plus,
        }
    }
}

impl From<Bit> for i8 {
    fn from(b: Bit) -> i8 {
        b.as_i8()
    }
}

impl TryFrom<i8> for Bit {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Bit::Plus),
            -1 => Ok(Bit::Minus),
            other => Err(format!("bit must be +1 or -1, got {other}")),
        }
    }
}

/// A finite, non-empty real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector<T>(Vec<T>);

impl<T: Scalar> SignalVector<T> {
    pub fn new(samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("signal must not be empty".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
        }
        Ok(SignalVector(samples))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> std::ops::Deref for SignalVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

fn same_len<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("empty signal".into()));
    }
    Ok(())
}

/// `(1/N) * sum x_i u_i`.
pub fn inner<T: Scalar>(x: &[T], u: &[T]) -> Result<T> {
    same_len(x, u)?;
    Ok(pairwise_sum_by(0, x.len(), |i| x[i] * u[i]) / T::lit(x.len() as f64))
}

pub fn norm_power<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    pairwise_sum_by(0, x.len(), |i| x[i] * x[i]) / T::lit(x.len() as f64)
}

/// `x_bar = <x, u> / <u, u>`. Applied to a noise vector this is `n_bar`.
pub fn host_projection<T: Scalar>(x: &[T], u: &[T]) -> Result<T> {
    let xu = inner(x, u)?;
    let uu = norm_power(u);
    if uu == T::zero() {
        return Err(Error::InvalidParameter("chip sequence has zero power".into()));
    }
    Ok(xu / uu)
}

/// `s = x + g * u`.
pub fn add_scaled<T: Scalar>(x: &[T], u: &[T], g: T) -> Result<Vec<T>> {
    same_len(x, u)?;
    Ok(x.iter().zip(u).map(|(&xi, &ui)| xi + g * ui).collect())
}

/// Traditional spread spectrum, `s = x + b * u`.
pub fn embed_traditional<T: Scalar>(x: &[T], u: &[T], b: Bit) -> Result<Vec<T>> {
    add_scaled(x, u, b.sign())
}

/// Resolved ISS gain parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams<T> {
    /// Bit gain `mu`.
    pub mu: T,
    /// Host-rejection coefficient `lambda`.
    pub lambda: T,
    /// Chip amplitude (the traditional gain `delta`).
    pub sigma_u: T,
    /// Distortion budget as a fraction of `sigma_u^2` that `mu` was derived
    /// from, when it was derived rather than given.
    pub budget_alpha: Option<T>,
}

impl<T: Scalar> EmbedParams<T> {
    pub fn new(mu: T, lambda: T, sigma_u: T) -> Result<Self> {
        if !(sigma_u > T::zero() && sigma_u.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_u must be positive, got {sigma_u}")));
        }
        if !(mu >= T::zero() && mu.is_finite()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("bad gains mu = {mu}, lambda = {lambda}")));
        }
        Ok(EmbedParams { mu, lambda, sigma_u, budget_alpha: None })
    }

    /// Chooses `mu` so the expected distortion equals `alpha * sigma_u^2`.
    pub fn for_budget(lambda: T, alpha: T, stats: &ModelStats<T>) -> Result<Self> {
        let mu = mu_for_budget(lambda, alpha, stats)?;
        let mut p = Self::new(mu, lambda, stats.sigma_u2.sqrt())?;
        p.budget_alpha = Some(alpha);
        Ok(p)
    }

    pub fn to_f64(&self) -> EmbedParams<f64> {
        EmbedParams {
            mu: self.mu.as_f64(),
            lambda: self.lambda.as_f64(),
            sigma_u: self.sigma_u.as_f64(),
            budget_alpha: self.budget_alpha.map(Scalar::as_f64),
        }
    }
}

/// Result of an ISS embedding: the marked signal and the applied gain `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct IssEmbedding<T> {
    pub signal: Vec<T>,
    pub gain: T,
}

pub fn embed_iss<T: Scalar>(
    x: &[T],
    u: &[T],
    b: Bit,
    params: &EmbedParams<T>,
) -> Result<IssEmbedding<T>> {
    let x_bar = host_projection(x, u)?;
    let gain = params.mu * b.sign() - params.lambda * x_bar;
    Ok(IssEmbedding { signal: add_scaled(x, u, gain)?, gain })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    /// Normalized correlation `r = <y, u> / <u, u>`.
    pub r: T,
    pub bit: Bit,
    /// `r` was exactly zero and the decision defaulted to `+1`.
    pub tie: bool,
}

pub fn detect<T: Scalar>(y: &[T], u: &[T]) -> Result<Detection<T>> {
    let r = host_projection(y, u)?;
    Ok(Detection { r, bit: Bit::from_statistic(r), tie: r == T::zero() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Presence<T> {
    pub c: T,
    pub present: bool,
}

/// Whole-signal presence test `C(y, u) > tau`.
pub fn presence_statistic<T: Scalar>(y: &[T], u: &[T], tau: T) -> Result<Presence<T>> {
    if tau.is_nan() || tau <= T::zero() {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {tau}")));
    }
    let c = host_projection(y, u)?;
    Ok(Presence { c, present: c > tau })
}

/// Second-order statistics of the Gaussian host/noise model for one bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStats<T> {
    /// Host variance.
    pub sigma_x2: T,
    /// Channel noise variance.
    pub sigma_n2: T,
    /// Samples per embedded bit.
    pub n: usize,
    /// Chip power.
    pub sigma_u2: T,
}

impl<T: Scalar> ModelStats<T> {
    pub fn new(sigma_x2: T, sigma_n2: T, n: usize, sigma_u2: T) -> Result<Self> {
        let ok = |v: T| v.is_finite() && v >= T::zero();
        if !ok(sigma_x2) || !ok(sigma_n2) || !(sigma_u2 > T::zero() && sigma_u2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad model statistics: sigma_x2 = {sigma_x2}, sigma_n2 = {sigma_n2}, sigma_u2 = {sigma_u2}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("block length must be at least 1".into()));
        }
        Ok(ModelStats { sigma_x2, sigma_n2, n, sigma_u2 })
    }

    pub fn with_block_len(self, n: usize) -> Self {
        ModelStats { n, ..self }
    }

    /// `N * sigma_u^2`.
    fn energy(&self) -> T {
        T::lit(self.n as f64) * self.sigma_u2
    }

    /// Variance of `x_bar` for an i.i.d. host: `sigma_x^2 / (N sigma_u^2)`.
    pub fn host_projection_variance(&self) -> T {
        self.sigma_x2 / self.energy()
    }

    /// Variance of `n_bar`: `sigma_n^2 / (N sigma_u^2)`.
    pub fn noise_projection_variance(&self) -> T {
        self.sigma_n2 / self.energy()
    }
}

/// `E[D] = (mu^2 + lambda^2 sigma_x^2 / (N sigma_u^2)) * sigma_u^2`.
pub fn expected_distortion<T: Scalar>(params: &EmbedParams<T>, stats: &ModelStats<T>) -> T {
    let l2 = params.lambda * params.lambda;
    (params.mu * params.mu + l2 * stats.host_projection_variance()) * stats.sigma_u2
}

/// `mu = sqrt(alpha - lambda^2 sigma_x^2 / (N sigma_u^2))`: the bit gain that
/// spends the remainder of a distortion budget `alpha * sigma_u^2` after host
/// rejection. `alpha = 1` matches the traditional scheme's distortion.
pub fn mu_for_budget<T: Scalar>(lambda: T, alpha: T, stats: &ModelStats<T>) -> Result<T> {
    if !(alpha > T::zero() && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {alpha}")));
    }
    let rejection = lambda * lambda * stats.host_projection_variance();
    let radicand = alpha - rejection;
    if radicand < T::zero() || !radicand.is_finite() {
        return Err(Error::BudgetInfeasible { alpha: alpha.as_f64(), rejection: rejection.as_f64() });
    }
    Ok(radicand.sqrt())
}

/// Error-minimizing `lambda` at equal distortion (`alpha = 1`).
pub fn lambda_opt<T: Scalar>(stats: &ModelStats<T>) -> T {
    lambda_opt_for_budget(stats, T::one())
}

/// Error-minimizing `lambda` for a distortion budget `alpha`.
///
/// With `c = alpha * N sigma_u^2 / sigma_x^2` and `A = 1 + sigma_n^2/sigma_x^2 + c`
/// the optimum is the smaller root `(A - sqrt(A^2 - 4c)) / 2`, evaluated as
/// `2c / (A + sqrt(A^2 - 4c))` to avoid cancellation. A host with zero
/// variance has nothing to reject and yields 0.
pub fn lambda_opt_for_budget<T: Scalar>(stats: &ModelStats<T>, alpha: T) -> T {
    if stats.sigma_x2 == T::zero() {
        return T::zero();
    }
    let two = T::lit(2.0);
    let c = alpha * stats.energy() / stats.sigma_x2;
    let big_a = T::one() + stats.sigma_n2 / stats.sigma_x2 + c;
    let disc = (big_a * big_a - T::lit(4.0) * c).max(T::zero());
    if c.is_infinite() {
        // Vanishing host: full rejection.
        return T::one();
    }
    if big_a.is_infinite() {
        return T::zero();
    }
    two * c / (big_a + disc.sqrt())
}

/// Mean and variance of the detection statistic (signed by the bit):
/// `m_r = mu`, `sigma_r^2 = (sigma_n^2 + (1 - lambda)^2 sigma_x^2) / (N sigma_u^2)`.
/// With `mu = 1, lambda = 0` this is the traditional model.
pub fn detection_moments<T: Scalar>(mu: T, lambda: T, stats: &ModelStats<T>) -> (T, T) {
    let one_minus = T::one() - lambda;
    let var = stats.noise_projection_variance()
        + one_minus * one_minus * stats.host_projection_variance();
    (mu, var)
}

/// `p = erfc(m_r / (sigma_r sqrt 2)) / 2` for arbitrary `mu`, `lambda`.
pub fn predicted_error<T: Scalar>(mu: T, lambda: T, stats: &ModelStats<T>) -> T {
    let (m, var) = detection_moments(mu, lambda, stats);
    let half = T::lit(0.5);
    if var == T::zero() {
        return if m > T::zero() { T::zero() } else { half };
    }
    half * (m / (var.sqrt() * T::lit(std::f64::consts::SQRT_2))).erfc()
}

/// Closed-form bit error probability at equal distortion (`alpha = 1`):
///
/// `p = erfc( sqrt( (a - lambda^2) / (sigma_n^2/sigma_x^2 + (1 - lambda)^2) ) / sqrt 2 ) / 2`
/// with `a = N sigma_u^2 / sigma_x^2`.
pub fn error_probability<T: Scalar>(lambda: T, stats: &ModelStats<T>) -> Result<T> {
    // Reuses the feasibility check on the implied mu.
    mu_for_budget(lambda, T::one(), stats)?;
    let half = T::lit(0.5);
    if stats.sigma_x2 == T::zero() {
        return Ok(predicted_error(T::one(), lambda, stats));
    }
    let a = stats.energy() / stats.sigma_x2;
    let num = a - lambda * lambda;
    let one_minus = T::one() - lambda;
    let den = stats.sigma_n2 / stats.sigma_x2 + one_minus * one_minus;
    if num <= T::zero() {
        return Ok(half);
    }
    if den == T::zero() {
        return Ok(T::zero());
    }
    Ok(half * ((num / den).sqrt() / T::lit(std::f64::consts::SQRT_2)).erfc())
}
