//! Gain sweeps, minimal-gain search and capacity comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn_stream, NoiseSpec};
use crate::dseq::{self, Classification, Parity};
use crate::imaging::{
    embed_image, extract_image, DetectSettings, EmbedSettings, FloatImage, GainPolicy, GrayImage,
    LambdaPolicy, WatermarkBits, MID_GRAY,
};
use crate::scalar::fmt17;
use crate::sscore::{lambda_opt_for_budget, mu_for_budget, predicted_error, ModelStats};
use crate::{Error, Result};

/// Ratio reported when the traditional scheme cannot meet the error
/// ceiling at any block length that fits.
pub const CAPACITY_RATIO_CAP: f64 = 1e9;

/// A uniform `mu` grid, `from, from + step, ...` up to and including `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuGrid {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl MuGrid {
    pub fn new(from: f64, to: f64, step: f64) -> Result<Self> {
        if !(from > 0.0 && from <= to && to.is_finite()) || !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad gain grid from {from} to {to} step {step}"
            )));
        }
        Ok(MuGrid { from, to, step })
    }

    /// Grid points, snapped to 12 decimals so `0.1 + 3 * 0.05` prints as `0.25`.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((self.from + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl Default for MuGrid {
    fn default() -> Self {
        MuGrid { from: 0.1, to: 1.0, step: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub lambda: f64,
    pub sigma_u: f64,
    pub quantize: bool,
    pub host_offset: f64,
    pub noise: Option<NoiseSpec>,
    /// Noise realizations per grid point; BER is pooled over them.
    pub trials: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            lambda: 1.0,
            sigma_u: 1.0,
            quantize: true,
            host_offset: MID_GRAY,
            noise: None,
            trials: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub ber: f64,
    /// Model error probability for this `mu` on the measured host.
    pub predicted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSweepResult {
    pub prime: u64,
    pub classification: Classification,
    pub bits: usize,
    pub block_len: usize,
    pub sweep: Vec<SweepPoint>,
    pub minimal_perfect_mu: Option<f64>,
    /// `1 / mu^2` at the minimal perfect gain.
    pub distortion_factor: Option<f64>,
}

impl GainSweepResult {
    /// `mu,ber` table with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mu,ber\n");
        for p in &self.sweep {
            out.push_str(&format!("{},{}\n", fmt17(p.mu), fmt17(p.ber)));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "prime": self.prime,
            "classification": self.classification,
            "bits": self.bits,
            "block_len": self.block_len,
            "minimal_perfect_mu": self.minimal_perfect_mu,
            "distortion_factor": self.distortion_factor,
        })
    }
}

pub fn distortion_factor(mu: f64) -> f64 {
    1.0 / (mu * mu)
}

/// Embeds and extracts `wm` at every grid gain and records the BER.
pub fn gain_sweep(
    cover: &GrayImage,
    wm: &WatermarkBits,
    q: u64,
    grid: &MuGrid,
    settings: &SweepSettings,
) -> Result<GainSweepResult> {
    if settings.trials == 0 {
        return Err(Error::InvalidParameter("at least one trial per grid point is required".into()));
    }
    let classification = dseq::generate(q)?.classify();
    let cover = FloatImage::<f64>::from_gray(cover);
    let sigma_n = settings.noise.map_or(0.0, |n| n.sigma_n);
    let detect = DetectSettings { sigma_u: settings.sigma_u, host_offset: settings.host_offset, low_margin: 0.0 };
    let mus = grid.points();
    let trials = settings.trials;

    let sweep = mus
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| -> Result<(SweepPoint, usize, usize)> {
            let embed_settings = EmbedSettings {
                gain: GainPolicy::Mu(mu),
                lambda: LambdaPolicy::Fixed(settings.lambda),
                sigma_u: settings.sigma_u,
                quantize: settings.quantize,
                global_xbar: false,
                host_offset: settings.host_offset,
            };
            let marked = embed_image(&cover, wm, q, &embed_settings)?;
            let report = &marked.report;
            let stats = ModelStats::new(
                report.model.sigma_x2,
                sigma_n * sigma_n,
                report.block_len,
                report.model.sigma_u2,
            )?;
            let mut wrong = 0.0;
            for t in 0..trials {
                let received = match settings.noise {
                    Some(spec) if spec.sigma_n > 0.0 => {
                        let stream = (i * trials + t) as u64;
                        let y = awgn_stream(marked.image.samples(), &spec, stream);
                        FloatImage::new(cover.width(), cover.height(), y)?
                    }
                    _ => marked.image.clone(),
                };
                let det = extract_image(&received, q, wm.len(), &detect, Some(wm))?;
                wrong += det.ber.unwrap_or(0.0);
                if settings.noise.is_none_or(|n| n.sigma_n == 0.0) && t == 0 {
                    // Deterministic channel: further trials are identical.
                    wrong *= trials as f64;
                    break;
                }
            }
            let point = SweepPoint {
                mu,
                ber: wrong / trials as f64,
                predicted_p: predicted_error(mu, settings.lambda, &stats),
            };
            Ok((point, report.bits, report.block_len))
        })
        .collect::<Result<Vec<_>>>()?;

    let (bits, block_len) = sweep.first().map(|s| (s.1, s.2)).unwrap_or_default();
    let sweep: Vec<SweepPoint> = sweep.into_iter().map(|s| s.0).collect();
    let minimal_perfect_mu = sweep.iter().find(|p| p.ber == 0.0).map(|p| p.mu);
    Ok(GainSweepResult {
        prime: q,
        classification,
        bits,
        block_len,
        sweep,
        minimal_perfect_mu,
        distortion_factor: minimal_perfect_mu.map(distortion_factor),
    })
}

/// Soft check over a batch: no even-`n` prime should need a larger gain than
/// the worst odd-`n` prime. Returns one warning per violation.
pub fn gain_warnings(results: &[GainSweepResult]) -> Vec<String> {
    let worst_odd = results
        .iter()
        .filter(|r| r.classification.parity == Parity::Odd)
        .filter_map(|r| r.minimal_perfect_mu)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));
    let Some(worst_odd) = worst_odd else {
        return Vec::new();
    };
    results
        .iter()
        .filter(|r| r.classification.parity == Parity::Even)
        .filter_map(|r| match r.minimal_perfect_mu {
            Some(m) if m > worst_odd => Some(format!(
                "prime {} (even n = {}) needs mu = {m}, above the worst odd-n prime ({worst_odd})",
                r.prime, r.classification.n_divisor
            )),
            None => Some(format!(
                "prime {} (even n = {}) never reached perfect detection",
                r.prime, r.classification.n_divisor
            )),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityComparison {
    pub alpha: f64,
    pub ber_ceiling: f64,
    pub total_samples: usize,
    /// Shortest ISS block meeting the ceiling, with its `lambda` and `mu`.
    pub iss_block_len: usize,
    pub iss_lambda: f64,
    pub iss_mu: f64,
    pub bits_at_budget: usize,
    /// `None` when the traditional scheme misses the ceiling at every length.
    pub traditional_block_len: Option<usize>,
    pub traditional_bits: usize,
    pub vs_traditional_ratio: f64,
    /// Set when the ratio is the [`CAPACITY_RATIO_CAP`] sentinel.
    pub capped: bool,
}

fn iss_error(alpha: f64, stats: &ModelStats<f64>) -> Result<(f64, f64, f64)> {
    let lambda = lambda_opt_for_budget(stats, alpha);
    let mu = mu_for_budget(lambda, alpha, stats)?;
    Ok((predicted_error(mu, lambda, stats), lambda, mu))
}

/// Smallest `n` in `1..=max` with `p(n) <= ceiling`, assuming `p` is
/// non-increasing in `n`.
fn min_block_len(max: usize, ceiling: f64, p: impl Fn(usize) -> Result<f64>) -> Result<Option<usize>> {
    if p(max)? > ceiling {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1usize, max);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if p(mid)? <= ceiling {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

/// How many bits fit in `total_samples` at distortion `alpha * sigma_u^2`
/// with per-bit error at most `ber_ceiling`: ISS with its optimal `lambda`
/// against the traditional scheme (`lambda = 0`, `mu = sqrt(alpha)`).
/// `stats.n` is ignored; the block length is what is solved for.
pub fn capacity_comparison(
    alpha: f64,
    ber_ceiling: f64,
    total_samples: usize,
    stats: &ModelStats<f64>,
) -> Result<CapacityComparison> {
    if !(ber_ceiling > 0.0 && ber_ceiling < 0.5) {
        return Err(Error::InvalidParameter(format!("BER ceiling must lie in (0, 0.5), got {ber_ceiling}")));
    }
    if total_samples == 0 {
        return Err(Error::InvalidParameter("no samples to embed in".into()));
    }
    mu_for_budget(0.0, alpha, stats)?;
    let at = |n: usize| stats.with_block_len(n);

    let iss_len = min_block_len(total_samples, ber_ceiling, |n| Ok(iss_error(alpha, &at(n))?.0))?
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "BER ceiling {ber_ceiling} is unreachable within {total_samples} samples"
            ))
        })?;
    let (_, iss_lambda, iss_mu) = iss_error(alpha, &at(iss_len))?;
    let trad_len = min_block_len(total_samples, ber_ceiling, |n| {
        Ok(predicted_error(alpha.sqrt(), 0.0, &at(n)))
    })?;

    let bits_at_budget = total_samples / iss_len;
    let traditional_bits = trad_len.map_or(0, |l| total_samples / l);
    let (ratio, capped) = if traditional_bits == 0 {
        (CAPACITY_RATIO_CAP, true)
    } else {
        (bits_at_budget as f64 / traditional_bits as f64, false)
    };
    Ok(CapacityComparison {
        alpha,
        ber_ceiling,
        total_samples,
        iss_block_len: iss_len,
        iss_lambda,
        iss_mu,
        bits_at_budget,
        traditional_block_len: trad_len,
        traditional_bits,
        vs_traditional_ratio: ratio,
        capped,
    })
}
