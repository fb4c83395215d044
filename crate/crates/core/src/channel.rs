//! AWGN channel and Monte Carlo estimation of the detector's bit error rate.
//!
//! Randomness comes from ChaCha8 streams: a base seed selects the key and a
//! stream index (trial number, grid point, ...) selects an independent
//! stream, so every draw is a pure function of `(seed, index)`. Gaussian
//! samples use the ziggurat sampler from `rand_distr`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dseq;
use crate::scalar::Scalar;
use crate::sscore::{
    embed_iss, error_probability, host_projection, mu_for_budget, predicted_error, Bit, EmbedParams,
    ModelStats,
};
use crate::{Error, Result};

/// Prime whose d-sequence supplies the Monte Carlo chips unless overridden.
pub const DEFAULT_CHIP_PRIME: u64 = 2467;

const TRIALS_PER_TASK: u64 = 4096;

/// Deterministic generator for stream `stream` under `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_n: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_n: f64, seed: u64) -> Result<Self> {
        if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_n must be non-negative, got {sigma_n}")));
        }
        Ok(NoiseSpec { sigma_n, seed })
    }
}

/// Adds i.i.d. `N(0, sigma_n^2)` noise drawn from `rng`.
pub fn add_noise<T: Scalar, R: Rng + ?Sized>(s: &[T], sigma_n: T, rng: &mut R) -> Vec<T> {
    if sigma_n == T::zero() {
        return s.to_vec();
    }
    s.iter().map(|&v| v + sigma_n * T::standard_normal(rng)).collect()
}

/// `y = s + n` with noise from stream 0 of `spec.seed`.
pub fn awgn<T: Scalar>(s: &[T], spec: &NoiseSpec) -> Vec<T> {
    awgn_stream(s, spec, 0)
}

/// Like [`awgn`] but on an explicit stream, for independent realizations
/// under one seed.
pub fn awgn_stream<T: Scalar>(s: &[T], spec: &NoiseSpec, stream: u64) -> Vec<T> {
    let mut rng = seeded_rng(spec.seed, stream);
    add_noise(s, T::lit(spec.sigma_n), &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig<T> {
    pub stats: ModelStats<T>,
    pub lambda: T,
    pub alpha: T,
    pub trials: u64,
    pub seed: u64,
    /// Key of the chip sequence.
    pub prime: u64,
}

impl<T: Scalar> MonteCarloConfig<T> {
    pub fn new(stats: ModelStats<T>, lambda: T, alpha: T, trials: u64, seed: u64) -> Self {
        MonteCarloConfig { stats, lambda, alpha, trials, seed, prime: DEFAULT_CHIP_PRIME }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloParams {
    pub n: usize,
    pub sigma_x2: f64,
    pub sigma_n2: f64,
    pub sigma_u2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub mu: f64,
    pub prime: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: u64,
    pub errors: u64,
    pub empirical_ber: f64,
    pub predicted_p: f64,
    /// `(empirical - predicted) / sqrt(p (1 - p) / trials)`; `null` when
    /// `predicted_p` is 0 or 1.
    pub z_score: Option<f64>,
    /// Sample mean of `b * r`.
    pub signed_r_mean: f64,
    /// Sample variance of `b * r`.
    pub signed_r_var: f64,
    pub params: MonteCarloParams,
}

impl MonteCarloResult {
    /// Binomial standard error of the empirical rate under the prediction.
    pub fn predicted_std_error(&self) -> f64 {
        (self.predicted_p * (1.0 - self.predicted_p) / self.trials as f64).sqrt()
    }
}

/// Running count, mean and centered sum of squares (Chan et al. merge).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    errors: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64, error: bool) {
        self.count += 1;
        self.errors += error as u64;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let frac = other.count as f64 / count as f64;
        Moments {
            count,
            errors: self.errors + other.errors,
            mean: self.mean + d * frac,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * frac,
        }
    }
}

/// Simulates embed, AWGN and detect on Gaussian hosts.
///
/// Each trial draws its bit, host and noise from stream `trial` of the seed,
/// and per-task partial statistics are merged in trial order, so the result
/// is independent of the thread count.
pub fn monte_carlo_ber<T: Scalar>(cfg: &MonteCarloConfig<T>) -> Result<MonteCarloResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let stats = cfg.stats;
    let mu = mu_for_budget(cfg.lambda, cfg.alpha, &stats)?;
    let sigma_u = stats.sigma_u2.sqrt();
    let params = EmbedParams::new(mu, cfg.lambda, sigma_u)?;
    let u = dseq::chips(&dseq::generate(cfg.prime)?, stats.n, sigma_u)?;
    let sigma_x = stats.sigma_x2.sqrt();
    let sigma_n = stats.sigma_n2.sqrt();

    let trial = |t: u64| -> Result<(f64, bool)> {
        let mut rng = seeded_rng(cfg.seed, t);
        let b = if rng.random::<bool>() { Bit::Plus } else { Bit::Minus };
        let x: Vec<T> = (0..stats.n).map(|_| sigma_x * T::standard_normal(&mut rng)).collect();
        let s = embed_iss(&x, &u, b, &params)?.signal;
        let y = add_noise(&s, sigma_n, &mut rng);
        let r = host_projection(&y, &u)?;
        Ok(((b.sign::<T>() * r).as_f64(), Bit::from_statistic(r) != b))
    };

    let tasks = cfg.trials.div_ceil(TRIALS_PER_TASK);
    let partials = (0..tasks)
        .into_par_iter()
        .map(|k| -> Result<Moments> {
            let mut m = Moments::default();
            let end = ((k + 1) * TRIALS_PER_TASK).min(cfg.trials);
            for t in k * TRIALS_PER_TASK..end {
                let (v, err) = trial(t)?;
                m.push(v, err);
            }
            Ok(m)
        })
        .collect::<Result<Vec<Moments>>>()?;
    let total = partials.into_iter().fold(Moments::default(), Moments::merge);

    let predicted_p = if cfg.alpha == T::one() {
        error_probability(cfg.lambda, &stats)?
    } else {
        predicted_error(mu, cfg.lambda, &stats)
    }
    .as_f64();
    let empirical_ber = total.errors as f64 / cfg.trials as f64;
    let se = (predicted_p * (1.0 - predicted_p) / cfg.trials as f64).sqrt();
    let z_score = (se > 0.0).then(|| (empirical_ber - predicted_p) / se);
    let signed_r_var = if total.count > 1 { total.m2 / (total.count - 1) as f64 } else { 0.0 };

    Ok(MonteCarloResult {
        trials: cfg.trials,
        errors: total.errors,
        empirical_ber,
        predicted_p,
        z_score,
        signed_r_mean: total.mean,
        signed_r_var,
        params: MonteCarloParams {
            n: stats.n,
            sigma_x2: stats.sigma_x2.as_f64(),
            sigma_n2: stats.sigma_n2.as_f64(),
            sigma_u2: stats.sigma_u2.as_f64(),
            lambda: cfg.lambda.as_f64(),
            alpha: cfg.alpha.as_f64(),
            mu: mu.as_f64(),
            prime: cfg.prime,
            seed: cfg.seed,
        },
    })
}

/// Pooled two-proportion z statistic for `a.empirical_ber - b.empirical_ber`.
/// Positive when `a` has the higher error rate.
pub fn two_proportion_z(a: &MonteCarloResult, b: &MonteCarloResult) -> f64 {
    let (na, nb) = (a.trials as f64, b.trials as f64);
    let pooled = (a.errors + b.errors) as f64 / (na + nb);
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (a.empirical_ber - b.empirical_ber) / se
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sscore::lambda_opt;

    #[test]
    fn zero_noise_is_identity() {
        let s = vec![1.5, -2.0, 0.25];
        assert_eq!(awgn(&s, &NoiseSpec::new(0.0, 9).unwrap()), s);
    }

    #[test]
    fn noise_statistics() {
        let spec = NoiseSpec::new(3.0, 20_241_014).unwrap();
        let y = awgn(&vec![0.0f64; 1_000_000], &spec);
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 * 3.0 / 1e3, "mean {mean}");
        assert!((var / 9.0 - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn noise_is_deterministic() {
        let spec = NoiseSpec::new(1.0, 5).unwrap();
        let s = vec![0.0f64; 100];
        assert_eq!(awgn(&s, &spec), awgn(&s, &spec));
        assert_ne!(awgn_stream(&s, &spec, 0), awgn_stream(&s, &spec, 1));
    }

    #[test]
    fn rejects_negative_sigma() {
        assert!(NoiseSpec::new(-1.0, 0).is_err());
        assert!(NoiseSpec::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn full_rejection_without_noise_is_error_free() {
        let stats = ModelStats::new(16.0, 0.0, 16, 1.0).unwrap();
        let cfg = MonteCarloConfig::new(stats, 1.0, 2.0, 20_000, 1);
        let res = monte_carlo_ber(&cfg).unwrap();
        assert_eq!(res.errors, 0);
        assert!((res.signed_r_mean - res.params.mu).abs() < 1e-12);
    }

    #[test]
    fn infeasible_budget_is_reported() {
        let stats = ModelStats::new(16.0, 4.0, 16, 1.0).unwrap();
        let cfg = MonteCarloConfig::new(stats, 1.0, 0.5, 10, 1);
        assert!(matches!(monte_carlo_ber(&cfg), Err(Error::BudgetInfeasible { .. })));
        let cfg = MonteCarloConfig::new(stats, 0.0, 1.0, 0, 1);
        assert!(monte_carlo_ber(&cfg).is_err());
    }

    #[test]
    fn independent_of_thread_count() {
        let stats = ModelStats::new(16.0, 4.0, 16, 1.0).unwrap();
        let cfg = MonteCarloConfig::new(stats, lambda_opt(&stats), 1.0, 10_000, 77);
        let a = monte_carlo_ber(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| monte_carlo_ber(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn moments_agree_with_model() {
        let stats = ModelStats::new(16.0, 4.0, 16, 1.0).unwrap();
        let lambda = 0.5;
        let cfg = MonteCarloConfig::new(stats, lambda, 1.0, 200_000, 3);
        let res = monte_carlo_ber(&cfg).unwrap();
        let var = (4.0 + 0.25 * 16.0) / 16.0;
        let mu = res.params.mu;
        assert!((res.signed_r_mean - mu).abs() < 4.0 * (var / 200_000.0f64).sqrt());
        assert!((res.signed_r_var / var - 1.0).abs() < 0.02, "{}", res.signed_r_var);
    }

    #[test]
    fn json_fields() {
        let stats = ModelStats::new(16.0, 4.0, 16, 1.0).unwrap();
        let res = monte_carlo_ber(&MonteCarloConfig::new(stats, 0.0, 1.0, 100, 1)).unwrap();
        let v = serde_json::to_value(&res).unwrap();
        for key in ["trials", "errors", "empirical_ber", "predicted_p", "z_score", "params"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
