//! Image-level watermarking: block layout, bit mapping, embed/extract
//! pipelines, PSNR and sequential multi-watermark embedding.
//!
//! The cover is flattened row-major and cut into `M` contiguous blocks of
//! `L = floor(N / M)` pixels, one block per watermark bit. Trailing pixels
//! beyond `M * L` are never touched. Chips always start at pixel 0, so every
//! watermark sharing a cover is spread over the same pixels.
//!
//! Pixels are measured from a host origin (`host_offset`, mid-gray by
//! default) so the host signal is approximately zero-mean, as the detector
//! model assumes. The offset is a public constant of the scheme, not a
//! property of the cover, so detection stays blind.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::seeded_rng;
use crate::dseq::{self, compatible_pair, PairCompatibility};
use crate::scalar::{pairwise_sum_by, Scalar};
use crate::sscore::{
    add_scaled, embed_iss, expected_distortion, host_projection, lambda_opt, lambda_opt_for_budget,
    Bit, EmbedParams, ModelStats,
};
use crate::{Error, Result};

/// Default host origin for 8-bit images.
pub const MID_GRAY: f64 = 128.0;

const PEAK: f64 = 255.0;

/// An 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch { left: pixels.len(), right: width * height });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// A real-valued image, used between embedding and quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage<T> {
    width: usize,
    height: usize,
    samples: Vec<T>,
}

impl<T: Scalar> FloatImage<T> {
    pub fn new(width: usize, height: usize, samples: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("empty image {width}x{height}")));
        }
        if samples.len() != width * height {
            return Err(Error::LengthMismatch { left: samples.len(), right: width * height });
        }
        Ok(FloatImage { width, height, samples })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        FloatImage {
            width: img.width,
            height: img.height,
            samples: img.pixels.iter().map(|&p| T::lit(p as f64)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Rounds half away from zero and clamps to `[0, 255]`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.samples.iter().map(|&v| quantize_sample(v).to_u8().unwrap_or(0)).collect(),
        }
    }

    pub fn to_f64(&self) -> FloatImage<f64> {
        FloatImage {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn same_shape(&self, other: &FloatImage<T>) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }
}

#[inline]
fn quantize_sample<T: Scalar>(v: T) -> T {
    // `round` is half-away-from-zero.
    let r = v.round();
    if r.is_nan() {
        T::zero()
    } else {
        r.max(T::zero()).min(T::lit(PEAK))
    }
}

/// The embedded message: a row-major bitmap of `±1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkBits {
    width: usize,
    height: usize,
    bits: Vec<Bit>,
}

impl WatermarkBits {
    pub fn new(width: usize, height: usize, bits: Vec<Bit>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("empty watermark {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(Error::LengthMismatch { left: bits.len(), right: width * height });
        }
        Ok(WatermarkBits { width, height, bits })
    }

    /// Uniformly random bits from a seeded stream.
    pub fn random(width: usize, height: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed, 0);
        let bits = (0..width * height)
            .map(|_| if rng.random::<bool>() { Bit::Plus } else { Bit::Minus })
            .collect();
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Dark pixels (< 128) are ink and map to `+1`; light pixels map to `-1`.
pub fn bits_from_bitmap(wm: &GrayImage) -> WatermarkBits {
    let bits = wm.pixels.iter().map(|&p| if p < 128 { Bit::Plus } else { Bit::Minus }).collect();
    WatermarkBits { width: wm.width, height: wm.height, bits }
}

/// `+1` renders black (0), `-1` white (255).
pub fn bitmap_from_bits(bits: &WatermarkBits) -> GrayImage {
    let pixels = bits.bits.iter().map(|b| if *b == Bit::Plus { 0 } else { 255 }).collect();
    GrayImage { width: bits.width, height: bits.height, pixels }
}

/// Partition of the flattened cover into one block per bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub total: usize,
    pub bits: usize,
    pub block_len: usize,
    pub remainder: usize,
}

impl BlockLayout {
    pub fn block(&self, j: usize) -> Range<usize> {
        j * self.block_len..(j + 1) * self.block_len
    }

    /// Number of pixels covered by blocks.
    pub fn span(&self) -> usize {
        self.bits * self.block_len
    }
}

pub fn layout(total: usize, bits: usize) -> Result<BlockLayout> {
    if bits == 0 {
        return Err(Error::InvalidParameter("watermark must carry at least one bit".into()));
    }
    if bits > total {
        return Err(Error::TooManyBits { bits, pixels: total });
    }
    let block_len = total / bits;
    Ok(BlockLayout { total, bits, block_len, remainder: total - bits * block_len })
}

/// How the bit gain `mu` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainPolicy<T> {
    Mu(T),
    /// Expected distortion `alpha * sigma_u^2` per block.
    Budget(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy<T> {
    Fixed(T),
    /// Error-minimizing `lambda` for the measured host and this noise level.
    Optimal { sigma_n: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedSettings<T> {
    pub gain: GainPolicy<T>,
    pub lambda: LambdaPolicy<T>,
    pub sigma_u: T,
    pub quantize: bool,
    /// Use one host projection for the whole image instead of one per block.
    pub global_xbar: bool,
    pub host_offset: T,
}

impl<T: Scalar> Default for EmbedSettings<T> {
    fn default() -> Self {
        EmbedSettings {
            gain: GainPolicy::Budget(T::lit(0.1)),
            lambda: LambdaPolicy::Fixed(T::one()),
            sigma_u: T::one(),
            quantize: true,
            global_xbar: false,
            host_offset: T::lit(MID_GRAY),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedReport {
    pub prime: u64,
    pub bits: usize,
    pub block_len: usize,
    /// Measured against the original cover. `None` encodes an infinite PSNR.
    pub psnr_db: Option<f64>,
    pub measured_mse: f64,
    /// Model distortion of this stage over the whole image.
    pub predicted_mse: f64,
    pub predicted_psnr_db: Option<f64>,
    pub per_bit_g: Vec<f64>,
    pub params_used: EmbedParams<f64>,
    /// Host statistics the parameters were resolved against.
    pub model: ModelStats<f64>,
    pub quantized: bool,
    pub host_offset: f64,
    pub global_xbar: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Embedded<T> {
    pub image: FloatImage<T>,
    pub report: EmbedReport,
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn mse_float<T: Scalar>(a: &FloatImage<T>, b: &FloatImage<T>) -> Result<T> {
    a.same_shape(b)?;
    let (x, y) = (&a.samples, &b.samples);
    let sum = pairwise_sum_by(0, x.len(), |i| {
        let d = x[i] - y[i];
        d * d
    });
    Ok(sum / T::lit(x.len() as f64))
}

pub fn psnr_float<T: Scalar>(a: &FloatImage<T>, b: &FloatImage<T>) -> Result<f64> {
    Ok(psnr_from_mse(mse_float(a, b)?.as_f64()))
}

/// PSNR of two 8-bit images; `f64::INFINITY` when they are identical.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    psnr_float::<f64>(&FloatImage::from_gray(a), &FloatImage::from_gray(b))
}

/// Population mean and variance of a slice.
fn mean_variance<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::lit(x.len() as f64);
    let mean = pairwise_sum_by(0, x.len(), |i| x[i]) / n;
    let var = pairwise_sum_by(0, x.len(), |i| {
        let d = x[i] - mean;
        d * d
    }) / n;
    (mean, var)
}

struct Prepared<T> {
    layout: BlockLayout,
    chips: dseq::ChipSequence<T>,
}

fn prepare<T: Scalar>(total: usize, bits: usize, q: u64, sigma_u: T) -> Result<Prepared<T>> {
    let layout = layout(total, bits)?;
    let seq = dseq::generate(q)?;
    let chips = dseq::chips(&seq, layout.span(), sigma_u)?;
    Ok(Prepared { layout, chips })
}

fn centered<T: Scalar>(block: &[T], offset: T) -> Vec<T> {
    block.iter().map(|&v| v - offset).collect()
}

/// Resolves the embedding parameters against the measured cover.
pub fn resolve_params<T: Scalar>(
    settings: &EmbedSettings<T>,
    host_variance: T,
    block_len: usize,
) -> Result<(EmbedParams<T>, ModelStats<T>)> {
    let sigma_n = match settings.lambda {
        LambdaPolicy::Optimal { sigma_n } => sigma_n,
        LambdaPolicy::Fixed(_) => T::zero(),
    };
    let sigma_u2 = settings.sigma_u * settings.sigma_u;
    let stats = ModelStats::new(host_variance, sigma_n * sigma_n, block_len, sigma_u2)?;
    let lambda = match (settings.lambda, settings.gain) {
        (LambdaPolicy::Fixed(l), _) => l,
        (LambdaPolicy::Optimal { .. }, GainPolicy::Budget(alpha)) => lambda_opt_for_budget(&stats, alpha),
        (LambdaPolicy::Optimal { .. }, GainPolicy::Mu(_)) => lambda_opt(&stats),
    };
    let params = match settings.gain {
        GainPolicy::Mu(mu) => EmbedParams::new(mu, lambda, settings.sigma_u)?,
        GainPolicy::Budget(alpha) => EmbedParams::for_budget(lambda, alpha, &stats)?,
    };
    Ok((params, stats))
}

/// Embeds one watermark. PSNR and MSE in the report are measured against
/// `cover`.
pub fn embed_image<T: Scalar>(
    cover: &FloatImage<T>,
    wm: &WatermarkBits,
    q: u64,
    settings: &EmbedSettings<T>,
) -> Result<Embedded<T>> {
    let Prepared { layout, chips } = prepare(cover.len(), wm.len(), q, settings.sigma_u)?;
    let region = &cover.samples[..layout.span()];
    let (_, host_var) = mean_variance(region);
    let (params, stats) = resolve_params(settings, host_var, layout.block_len)?;
    let offset = settings.host_offset;

    let global = if settings.global_xbar {
        Some(host_projection(&centered(region, offset), &chips)?)
    } else {
        None
    };

    let mut samples = cover.samples.clone();
    let gains = samples[..layout.span()]
        .par_chunks_mut(layout.block_len)
        .zip(chips.par_chunks(layout.block_len))
        .zip(wm.bits.par_iter())
        .map(|((block, u), &b)| -> Result<T> {
            let x = centered(block, offset);
            let (signal, gain) = match global {
                None => {
                    let e = embed_iss(&x, u, b, &params)?;
                    (e.signal, e.gain)
                }
                Some(xg) => {
                    let g = params.mu * b.sign() - params.lambda * xg;
                    (add_scaled(&x, u, g)?, g)
                }
            };
            for (dst, s) in block.iter_mut().zip(signal) {
                let v = s + offset;
                *dst = if settings.quantize { quantize_sample(v) } else { v };
            }
            Ok(gain)
        })
        .collect::<Result<Vec<T>>>()?;

    let image = FloatImage { width: cover.width, height: cover.height, samples };
    let measured_mse = mse_float(&image, cover)?.as_f64();
    let predicted_mse = expected_distortion(&params, &stats).as_f64() * layout.span() as f64
        / layout.total as f64;
    let report = EmbedReport {
        prime: q,
        bits: layout.bits,
        block_len: layout.block_len,
        psnr_db: finite_or_none(psnr_from_mse(measured_mse)),
        measured_mse,
        predicted_mse,
        predicted_psnr_db: finite_or_none(psnr_from_mse(predicted_mse)),
        per_bit_g: gains.iter().map(|g| g.as_f64()).collect(),
        params_used: params.to_f64(),
        model: ModelStats {
            sigma_x2: stats.sigma_x2.as_f64(),
            sigma_n2: stats.sigma_n2.as_f64(),
            n: stats.n,
            sigma_u2: stats.sigma_u2.as_f64(),
        },
        quantized: settings.quantize,
        host_offset: offset.as_f64(),
        global_xbar: global.map(Scalar::as_f64),
    };
    Ok(Embedded { image, report })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectSettings<T> {
    pub sigma_u: T,
    pub host_offset: T,
    /// Decisions with `|r|` below this are flagged.
    pub low_margin: T,
}

impl<T: Scalar> Default for DetectSettings<T> {
    fn default() -> Self {
        DetectSettings { sigma_u: T::one(), host_offset: T::lit(MID_GRAY), low_margin: T::lit(0.01) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub prime: u64,
    pub bits: usize,
    pub r: Vec<f64>,
    pub decisions: Vec<Bit>,
    pub ber: Option<f64>,
    #[serde(rename = "presence_C")]
    pub presence_c: f64,
    /// `tie:<j>` for `r_j = 0`, `low_margin:<j>` for `|r_j|` under the margin.
    pub flags: Vec<String>,
}

impl DetectionReport {
    pub fn recovered(&self, width: usize, height: usize) -> Result<WatermarkBits> {
        WatermarkBits::new(width, height, self.decisions.clone())
    }
}

/// Blind extraction: needs only the marked image and the key layout.
pub fn extract_image<T: Scalar>(
    marked: &FloatImage<T>,
    q: u64,
    bits: usize,
    settings: &DetectSettings<T>,
    reference: Option<&WatermarkBits>,
) -> Result<DetectionReport> {
    if let Some(rf) = reference {
        if rf.len() != bits {
            return Err(Error::LengthMismatch { left: rf.len(), right: bits });
        }
    }
    let Prepared { layout, chips } = prepare(marked.len(), bits, q, settings.sigma_u)?;
    let offset = settings.host_offset;
    let region = &marked.samples[..layout.span()];

    let r = region
        .par_chunks(layout.block_len)
        .zip(chips.par_chunks(layout.block_len))
        .map(|(block, u)| host_projection(&centered(block, offset), u))
        .collect::<Result<Vec<T>>>()?;
    let presence = host_projection(&centered(region, offset), &chips)?;

    let decisions: Vec<Bit> = r.iter().map(|&v| Bit::from_statistic(v)).collect();
    let mut flags = Vec::new();
    for (j, &v) in r.iter().enumerate() {
        if v == T::zero() {
            flags.push(format!("tie:{j}"));
        } else if v.abs() < settings.low_margin {
            flags.push(format!("low_margin:{j}"));
        }
    }
    let ber = reference.map(|rf| {
        let wrong = rf.bits.iter().zip(&decisions).filter(|(a, b)| a != b).count();
        wrong as f64 / bits as f64
    });
    Ok(DetectionReport {
        prime: q,
        bits,
        r: r.iter().map(|v| v.as_f64()).collect(),
        decisions,
        ber,
        presence_c: presence.as_f64(),
        flags,
    })
}

#[derive(Debug, Clone)]
pub struct MarkSpec<T> {
    pub wm: WatermarkBits,
    pub q: u64,
    pub settings: EmbedSettings<T>,
}

#[derive(Debug, Clone)]
pub struct MultiEmbedded<T> {
    pub image: FloatImage<T>,
    /// One per stage, PSNR measured against the original cover.
    pub reports: Vec<EmbedReport>,
    /// `compatibility[i][j]` for `i != j`; the diagonal is `false`.
    pub compatibility: Vec<Vec<bool>>,
    pub pairs: Vec<PairCompatibility>,
    pub warnings: Vec<String>,
}

/// Embeds the marks one after another, each stage taking the previous
/// stage's output as its cover.
pub fn multi_embed<T: Scalar>(cover: &FloatImage<T>, marks: &[MarkSpec<T>]) -> Result<MultiEmbedded<T>> {
    if marks.is_empty() {
        return Err(Error::InvalidParameter("no watermarks given".into()));
    }
    for (i, m) in marks.iter().enumerate() {
        if marks[..i].iter().any(|o| o.q == m.q) {
            return Err(Error::DuplicatePrime(m.q));
        }
        layout(cover.len(), m.wm.len())?;
    }
    let k = marks.len();
    let mut compatibility = vec![vec![false; k]; k];
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let c = compatible_pair(marks[i].q, marks[j].q)?;
            compatibility[i][j] = c.compatible;
            compatibility[j][i] = c.compatible;
            if !c.compatible {
                warnings.push(format!(
                    "primes {} and {} are not cross-correlation compatible (period ratio {}/{})",
                    c.q1, c.q2, c.reduced.0, c.reduced.1
                ));
            } else if c.not_max_length {
                warnings.push(format!(
                    "primes {} and {}: zero cross-correlation only holds for maximum-length sequences",
                    c.q1, c.q2
                ));
            }
            pairs.push(c);
        }
    }

    let mut current = cover.clone();
    let mut reports = Vec::with_capacity(k);
    for m in marks {
        let Embedded { image, mut report } = embed_image(&current, &m.wm, m.q, &m.settings)?;
        report.measured_mse = mse_float(&image, cover)?.as_f64();
        report.psnr_db = finite_or_none(psnr_from_mse(report.measured_mse));
        reports.push(report);
        current = image;
    }
    Ok(MultiEmbedded { image: current, reports, compatibility, pairs, warnings })
}

/// Gaussian test cover: `N(mean, sigma_x^2)` samples rounded and clipped to 8 bits.
pub fn synthetic_cover(width: usize, height: usize, mean: f64, sigma_x: f64, seed: u64) -> Result<GrayImage> {
    let mut rng = seeded_rng(seed, 0);
    let pixels = (0..width * height)
        .map(|_| {
            let v = mean + sigma_x * <f64 as Scalar>::standard_normal(&mut rng);
            quantize_sample(v) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}
