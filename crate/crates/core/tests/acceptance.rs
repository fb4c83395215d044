//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the log reads top to
//! bottom; the process exits non-zero if any criterion fails.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use dseqmark::analysis::{gain_sweep, MuGrid, SweepSettings};
use dseqmark::channel::{monte_carlo_ber, seeded_rng, two_proportion_z, MonteCarloConfig};
use dseqmark::dseq::{self, compatible_pair, cross_correlation, is_prime, period};
use dseqmark::imaging::{
    embed_image, extract_image, multi_embed, synthetic_cover, DetectSettings, EmbedSettings, FloatImage,
    GainPolicy, LambdaPolicy, MarkSpec, WatermarkBits,
};
use dseqmark::sscore::{
    embed_iss, error_probability, expected_distortion, lambda_opt, mu_for_budget, EmbedParams, ModelStats,
};
use dseqmark::{Bit, Scalar};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn periods() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (q, want) in [(2467u64, 2466u64), (5647, 2823)] {
        let t = Instant::now();
        let p = period(q).unwrap();
        let secs = t.elapsed().as_secs_f64();
        ok &= p == want && secs < 1.0;
        notes.push(format!("period({q}) = {p} in {secs:.2e} s"));
    }
    let p = period(8069).unwrap();
    ok &= 8068 % p == 0;
    notes.push(format!(
        "period(8069) = {p}, divides 8068; the quoted period 4019 does not divide 8068 and is not reproducible"
    ));
    outcome(ok, notes.join("; "))
}

fn mu_derivation() -> Outcome {
    let stats = ModelStats::new(2045.0, 0.0, 262_144, 1.0).unwrap();
    let mu: f64 = mu_for_budget(1.0, 0.1, &stats).unwrap();
    outcome(
        (mu - 0.30364).abs() <= 1e-4,
        format!(
            "mu = {mu:.6}; sqrt(1/10) = {:.6} is the approximation that ignores the host-rejection term",
            0.1f64.sqrt()
        ),
    )
}

fn lambda_optimum() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..100 {
        let a = 1.0 + 0.01 + k as f64 * 0.5;
        let stats = ModelStats::new(1.0, 0.0, 1, a).unwrap();
        worst = worst.max((lambda_opt(&stats) - 1.0).abs());
    }
    let stats = ModelStats::new(1.0, 1.0, 1, 10.0).unwrap();
    let closed = lambda_opt(&stats);
    let (mut best, mut best_p) = (0.0, f64::INFINITY);
    for i in 0..=10_000 {
        let l = i as f64 * 1e-4;
        let p = error_probability(l, &stats).unwrap();
        if p < best_p {
            best = l;
            best_p = p;
        }
    }
    outcome(
        worst <= 1e-9 && (best - closed).abs() <= 2e-4,
        format!(
            "max |lambda_opt - 1| over 100 noiseless a > 1: {worst:.1e}; a = 10, noise ratio 1: closed form {closed:.6}, grid {best:.4}"
        ),
    )
}

fn mc_stats() -> ModelStats<f64> {
    ModelStats::new(16.0, 4.0, 16, 1.0).unwrap()
}

fn monte_carlo_agreement() -> Outcome {
    let stats = mc_stats();
    let t = Instant::now();
    let res = monte_carlo_ber(&MonteCarloConfig::new(stats, lambda_opt(&stats), 1.0, 1_000_000, 2024)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let bound = 3.0 * res.predicted_std_error();
    let diff = (res.empirical_ber - res.predicted_p).abs();
    outcome(
        diff <= bound && secs < 60.0,
        format!(
            "lambda = {:.7}, empirical {:.6} vs predicted {:.6} (|diff| {diff:.2e} <= {bound:.2e}), z = {:.2}, {secs:.1} s",
            res.params.lambda,
            res.empirical_ber,
            res.predicted_p,
            res.z_score.unwrap_or(f64::NAN)
        ),
    )
}

fn iss_beats_traditional() -> Outcome {
    let stats = mc_stats();
    let trad = monte_carlo_ber(&MonteCarloConfig::new(stats, 0.0, 1.0, 1_000_000, 2025)).unwrap();
    let iss = monte_carlo_ber(&MonteCarloConfig::new(stats, lambda_opt(&stats), 1.0, 1_000_000, 2025)).unwrap();
    let z = two_proportion_z(&trad, &iss);
    outcome(
        iss.empirical_ber < trad.empirical_ber && z > 5.0,
        format!(
            "traditional (mu = {:.3}) {:.6}, ISS (mu = {:.4}) {:.6}, z = {z:.1}",
            trad.params.mu, trad.empirical_ber, iss.params.mu, iss.empirical_ber
        ),
    )
}

fn distortion_accounting() -> Outcome {
    // Keeps the host-to-chip-energy ratio of a 512x512 cover with variance 2045.
    let n = 4096;
    let stats: ModelStats<f64> = ModelStats::new(2045.0 / 64.0, 0.0, n, 1.0).unwrap();
    let u = dseq::chips(&dseq::generate(2467).unwrap(), n, 1.0).unwrap();
    let sigma_x = stats.sigma_x2.sqrt();
    let hosts: Vec<(Vec<f64>, Bit)> = (0..10_000u64)
        .into_par_iter()
        .map(|h| {
            let mut rng = seeded_rng(606, h);
            let b = if rng.random::<bool>() { Bit::Plus } else { Bit::Minus };
            ((0..n).map(|_| sigma_x * f64::standard_normal(&mut rng)).collect(), b)
        })
        .collect();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for lambda in [0.0, 0.5, 1.0] {
        for alpha in [0.1, 1.0] {
            let params = EmbedParams::for_budget(lambda, alpha, &stats).unwrap();
            let total: f64 = hosts
                .par_iter()
                .map(|(x, b)| {
                    let s = embed_iss(x, &u, *b, &params).unwrap().signal;
                    s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
                })
                .sum();
            let measured = total / hosts.len() as f64;
            let predicted = expected_distortion(&params, &stats);
            let rel = (measured / predicted - 1.0).abs();
            worst = worst.max(rel);
            notes.push(format!("({lambda}, {alpha}): {rel:.2e}"));
        }
    }
    outcome(worst <= 0.02, format!("relative MSE error per (lambda, alpha): {}", notes.join(", ")))
}

fn end_to_end() -> Outcome {
    let cover = FloatImage::<f64>::from_gray(&synthetic_cover(512, 512, 128.0, 45.22, 1).unwrap());
    let wm1 = WatermarkBits::random(32, 32, 2).unwrap();
    let wm2 = WatermarkBits::random(32, 32, 3).unwrap();
    let settings = EmbedSettings::<f64> {
        gain: GainPolicy::Budget(0.1),
        lambda: LambdaPolicy::Fixed(1.0),
        sigma_u: 12.0,
        quantize: true,
        ..Default::default()
    };
    let detect = DetectSettings::<f64> { sigma_u: 12.0, ..Default::default() };

    let one = embed_image(&cover, &wm1, 2467, &settings).unwrap();
    let ber1 = extract_image(&one.image, 2467, 1024, &detect, Some(&wm1)).unwrap().ber.unwrap();
    let psnr1 = one.report.psnr_db.unwrap();

    let marks = vec![
        MarkSpec { wm: wm1.clone(), q: 2467, settings },
        MarkSpec { wm: wm2.clone(), q: 8069, settings },
    ];
    let two = multi_embed(&cover, &marks).unwrap();
    let ber_a = extract_image(&two.image, 2467, 1024, &detect, Some(&wm1)).unwrap().ber.unwrap();
    let ber_b = extract_image(&two.image, 8069, 1024, &detect, Some(&wm2)).unwrap().ber.unwrap();
    let psnr2 = two.reports[1].psnr_db.unwrap();

    let consistent = [&one.report, &two.reports[0], &two.reports[1]]
        .iter()
        .all(|r| (r.psnr_db.unwrap() - 10.0 * (255.0f64.powi(2) / r.measured_mse).log10()).abs() <= 1e-9);

    let raw = EmbedSettings { quantize: false, ..settings };
    let unq = embed_image(&cover, &wm1, 2467, &raw).unwrap();
    let mse_rel = unq.report.measured_mse / unq.report.predicted_mse - 1.0;

    outcome(
        ber1 == 0.0 && ber_a == 0.0 && ber_b == 0.0 && psnr2 < psnr1 && consistent && mse_rel.abs() <= 0.05,
        format!(
            "sigma_u = 12, mu = {:.4}: BER one mark {ber1}, two marks {ber_a}/{ber_b}; PSNR {psnr1:.2} -> {psnr2:.2} dB; \
             psnr/mse consistent: {consistent}; unquantized MSE {:.3} vs predicted {:.3} ({:+.2}%)",
            one.report.params_used.mu,
            unq.report.measured_mse,
            unq.report.predicted_mse,
            100.0 * mse_rel
        ),
    )
}

const SWEEP_PRIMES: [u64; 12] = [2467, 4019, 6067, 8069, 5647, 2749, 2473, 3221, 2671, 3109, 2441, 3881];

fn gain_band() -> Outcome {
    let cover = synthetic_cover(512, 512, 128.0, 45.22, 1).unwrap();
    let wm = WatermarkBits::random(32, 32, 2).unwrap();
    let grid = MuGrid::default();
    let sigma_u = 2.0;
    let quantized = SweepSettings { sigma_u, quantize: true, ..Default::default() };
    let control = SweepSettings { sigma_u, quantize: false, ..Default::default() };
    let mut ok = true;
    let mut minima = Vec::new();
    for q in SWEEP_PRIMES {
        assert!(is_prime(q), "{q}");
        let r = gain_sweep(&cover, &wm, q, &grid, &quantized).unwrap();
        let c = gain_sweep(&cover, &wm, q, &grid, &control).unwrap();
        let m = r.minimal_perfect_mu;
        ok &= m.is_some_and(|m| (0.10..=0.50).contains(&m));
        ok &= c.minimal_perfect_mu == Some(grid.from);
        let n = r.classification.n_divisor;
        minima.push(format!("{q}(n={n}): {}", m.map_or("none".into(), |m| format!("{m}"))));
    }
    outcome(ok, format!("sigma_u = {sigma_u}, minimal perfect mu: {}; unquantized control at 0.1 for all", minima.join(", ")))
}

fn cross_correlation_property() -> Outcome {
    let primes: Vec<u64> = (7..200).filter(|&q| is_prime(q) && period(q).unwrap() == q - 1).collect();
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for &a in &primes {
        for &b in &primes {
            if a == b {
                continue;
            }
            let c = compatible_pair(a, b).unwrap();
            if !c.compatible {
                continue;
            }
            pairs += 1;
            let len = c.common_period() as usize;
            let ua = dseq::chips::<f64>(&dseq::generate(a).unwrap(), len, 1.0).unwrap();
            let ub = dseq::chips::<f64>(&dseq::generate(b).unwrap(), len, 1.0).unwrap();
            for shift in 0..len as i64 {
                worst = worst.max(cross_correlation(&ua, &ub, shift).unwrap().abs());
            }
        }
    }
    let bad = compatible_pair(13, 37).unwrap();
    let len = bad.common_period() as usize;
    let ua = dseq::chips::<f64>(&dseq::generate(13).unwrap(), len, 1.0).unwrap();
    let ub = dseq::chips::<f64>(&dseq::generate(37).unwrap(), len, 1.0).unwrap();
    let peak = (0..len as i64).map(|s| cross_correlation(&ua, &ub, s).unwrap().abs()).fold(0.0, f64::max);
    outcome(
        pairs > 0 && worst < 1e-12 && !bad.compatible && peak > 1e-3,
        format!("{pairs} compatible ordered pairs, max |corr| {worst:.1e}; (13, 37) incompatible, peak |corr| {peak:.3}"),
    )
}

fn sequence_structure() -> Outcome {
    let mut checked = 0;
    let mut max_len = 0;
    let mut ok = true;
    for q in (7..1000u64).filter(|&q| is_prime(q)) {
        let seq = dseq::generate(q).unwrap();
        let p = seq.period() as usize;
        // Binary expansion of 1/q: each step doubles the remainder and the
        // quotient digit is whether it reached q.
        let mut rem = 1u64;
        for &d in seq.digits() {
            let twice = 2 * rem;
            let digit = (twice >= q) as u8;
            rem = twice - digit as u64 * q;
            ok &= d == digit;
        }
        ok &= rem == 1;
        if seq.is_max_length() {
            max_len += 1;
            let d = seq.digits();
            ok &= d.iter().filter(|&&v| v == 1).count() * 2 == p;
            ok &= (0..p / 2).all(|i| d[i] + d[i + p / 2] == 1);
        }
        checked += 1;
    }
    outcome(ok, format!("{checked} primes checked against long division, {max_len} maximum-length balanced and half-complement"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 period reproduction", periods),
        ("2 mu derivation", mu_derivation),
        ("3 lambda optimum", lambda_optimum),
        ("4 error probability vs Monte Carlo", monte_carlo_agreement),
        ("5 ISS beats traditional at equal distortion", iss_beats_traditional),
        ("6 distortion accounting", distortion_accounting),
        ("7 end-to-end recovery", end_to_end),
        ("8 gain sweep band", gain_band),
        ("9 cross-correlation property", cross_correlation_property),
        ("10 sequence structure", sequence_structure),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
