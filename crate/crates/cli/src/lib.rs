//! Command-line front end. [`run_with`] is the whole program; `main` only
//! wires it to the process streams.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or malformed input file,
//! 3 domain error, 4 verification failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dseqmark::analysis::{gain_sweep, gain_warnings, MuGrid, SweepSettings};
use dseqmark::channel::{monte_carlo_ber, MonteCarloConfig, NoiseSpec, DEFAULT_CHIP_PRIME};
use dseqmark::imaging::{
    bitmap_from_bits, bits_from_bitmap, embed_image, extract_image, multi_embed, psnr_float, synthetic_cover,
    DetectSettings, EmbedReport, EmbedSettings, GainPolicy, GrayImage, LambdaPolicy, MarkSpec, WatermarkBits,
    MID_GRAY,
};
use dseqmark::sscore::{lambda_opt_for_budget, ModelStats};
use dseqmark::{dseq, pgmio, Error};

#[derive(Debug, Parser)]
#[command(name = "dseqmark", version, about = "Spread-spectrum image watermarking keyed by d-sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Period and classification of a prime key.
    Info {
        #[arg(long)]
        prime: u64,
    },
    /// Print the d-sequence digits, or the chip sequence with --chips.
    Gen {
        #[arg(long)]
        prime: u64,
        #[arg(long)]
        len: usize,
        #[arg(long)]
        chips: bool,
        #[arg(long, default_value_t = 1.0)]
        sigma_u: f64,
    },
    /// Cross-correlation compatibility of two keys.
    Pair {
        #[arg(long)]
        p1: u64,
        #[arg(long)]
        p2: u64,
    },
    Embed(EmbedArgs),
    Extract(ExtractArgs),
    /// PSNR between two images (PGM or float container).
    Psnr { a: PathBuf, b: PathBuf },
    Sweep(SweepArgs),
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    cover: PathBuf,
    /// Watermark bitmap; repeat together with --prime for several marks.
    #[arg(long, required = true)]
    wm: Vec<PathBuf>,
    #[arg(long, required = true)]
    prime: Vec<u64>,
    #[arg(long, conflicts_with = "budget")]
    mu: Option<f64>,
    /// Distortion budget as a fraction of sigma_u^2 [default: 0.1].
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, conflicts_with = "lambda_opt")]
    lambda: Option<f64>,
    #[arg(long, requires = "sigma_n")]
    lambda_opt: bool,
    #[arg(long)]
    sigma_n: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma_u: f64,
    /// Keep real-valued samples and write the float container.
    #[arg(long)]
    no_quantize: bool,
    #[arg(long)]
    global_xbar: bool,
    #[arg(long, default_value_t = MID_GRAY)]
    host_offset: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, required = true)]
    prime: Vec<u64>,
    #[arg(long)]
    wm_width: usize,
    #[arg(long)]
    wm_height: usize,
    /// Reference bitmap, one per --prime.
    #[arg(long = "ref")]
    reference: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    sigma_u: f64,
    #[arg(long, default_value_t = MID_GRAY)]
    host_offset: f64,
    #[arg(long, default_value_t = 0.01)]
    low_margin: f64,
    /// Fail with exit code 4 when any BER exceeds this.
    #[arg(long, requires = "reference")]
    max_ber: Option<f64>,
    /// Recovered bitmap, one per --prime.
    #[arg(long)]
    out: Vec<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, required = true)]
    prime: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    mu_from: f64,
    #[arg(long, default_value_t = 1.0)]
    mu_to: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_u: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_n: f64,
    #[arg(long)]
    no_quantize: bool,
    #[arg(long, default_value_t = MID_GRAY)]
    host_offset: f64,
    /// Cover image; a synthetic Gaussian cover is used when absent.
    #[arg(long)]
    cover: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 45.22)]
    sigma_x: f64,
    /// Watermark bitmap; random bits are used when absent.
    #[arg(long)]
    wm: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    wm_width: usize,
    #[arg(long, default_value_t = 32)]
    wm_height: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV path; with several primes the prime is inserted before the extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sigma_x: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_n: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_u: f64,
    #[arg(long, conflicts_with = "lambda_opt", required_unless_present = "lambda_opt")]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_opt: bool,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CHIP_PRIME)]
    prime: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Domain(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Domain(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Domain(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::BadMagic
            | Error::BadHeader(_)
            | Error::UnsupportedMaxval(_)
            | Error::TruncatedPayload { .. } => Failure::Io(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn io<T>(path: &Path, r: dseqmark::Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes()).map_err(|e| Failure::Io(e.to_string()))
}

/// Runs the program on `args` (including the program name).
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Info { prime } => info(prime, out),
        Command::Gen { prime, len, chips, sigma_u } => gen(prime, len, chips, sigma_u, out),
        Command::Pair { p1, p2 } => pair(p1, p2, out),
        Command::Embed(a) => embed(a, out, err),
        Command::Extract(a) => extract(a, out, err),
        Command::Psnr { a, b } => {
            let ia = io(&a, pgmio::load_any(&a))?;
            let ib = io(&b, pgmio::load_any(&b))?;
            let p = psnr_float(&ia, &ib)?;
            emit(out, &if p.is_infinite() { "inf\n".to_string() } else { format!("{p:.6}\n") })
        }
        Command::Sweep(a) => sweep(a, out, err),
        Command::Montecarlo(a) => montecarlo(a, out),
    }
}

fn info(prime: u64, out: &mut dyn Write) -> Outcome {
    let seq = dseq::generate(prime)?;
    let c = seq.classify();
    emit(
        out,
        &json(&serde_json::json!({
            "prime": prime,
            "period": seq.period(),
            "n_divisor": c.n_divisor,
            "parity": c.parity,
            "max_length": seq.is_max_length(),
        })),
    )
}

fn gen(prime: u64, len: usize, chips: bool, sigma_u: f64, out: &mut dyn Write) -> Outcome {
    if len == 0 {
        return Err(Failure::Usage("--len must be at least 1".into()));
    }
    let seq = dseq::generate(prime)?;
    if chips {
        emit(out, &dseq::chips::<f64>(&seq, len, sigma_u)?.export_lines())
    } else {
        emit(out, &format!("{}\n", seq.digits_line(len)))
    }
}

fn pair(p1: u64, p2: u64, out: &mut dyn Write) -> Outcome {
    let c = dseq::compatible_pair(p1, p2)?;
    let mut v = serde_json::to_value(c).expect("serializable");
    v["common_period"] = c.common_period().into();
    emit(out, &json(&v))
}

fn load_bits(path: &Path) -> std::result::Result<WatermarkBits, Failure> {
    Ok(bits_from_bitmap(&io(path, pgmio::load_pgm(path))?))
}

fn embed_settings(a: &EmbedArgs) -> std::result::Result<EmbedSettings<f64>, Failure> {
    let gain = match (a.mu, a.budget) {
        (Some(mu), _) => GainPolicy::Mu(mu),
        (None, b) => GainPolicy::Budget(b.unwrap_or(0.1)),
    };
    let lambda = if a.lambda_opt {
        LambdaPolicy::Optimal { sigma_n: a.sigma_n.unwrap_or(0.0) }
    } else {
        if a.sigma_n.is_some() {
            return Err(Failure::Usage("--sigma-n only applies with --lambda-opt".into()));
        }
        LambdaPolicy::Fixed(a.lambda.unwrap_or(1.0))
    };
    Ok(EmbedSettings {
        gain,
        lambda,
        sigma_u: a.sigma_u,
        quantize: !a.no_quantize,
        global_xbar: a.global_xbar,
        host_offset: a.host_offset,
    })
}

/// Adds the chip amplitude that would make an infeasible budget feasible.
fn explain_budget(e: Error, sigma_u: f64) -> Failure {
    if let Error::BudgetInfeasible { alpha, rejection } = e {
        let needed = sigma_u * (rejection / alpha).sqrt();
        return Failure::Domain(format!("{e}; raise --sigma-u above {needed:.4}, lower --lambda or raise --budget"));
    }
    e.into()
}

fn describe(r: &EmbedReport) -> String {
    let fmt = |p: Option<f64>| p.map_or("inf".to_string(), |v| format!("{v:.4}"));
    format!(
        "prime {}: {} bits x {} px, mu {:.6}, lambda {:.6}, sigma_u {}, PSNR {} dB (model {} dB)\n",
        r.prime,
        r.bits,
        r.block_len,
        r.params_used.mu,
        r.params_used.lambda,
        r.params_used.sigma_u,
        fmt(r.psnr_db),
        fmt(r.predicted_psnr_db)
    )
}

fn embed(a: EmbedArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    if a.wm.len() != a.prime.len() {
        return Err(Failure::Usage(format!(
            "{} --wm given for {} --prime; they must pair up",
            a.wm.len(),
            a.prime.len()
        )));
    }
    let settings = embed_settings(&a)?;
    let cover = io(&a.cover, pgmio::load_any(&a.cover))?;
    let marks = a
        .wm
        .iter()
        .zip(&a.prime)
        .map(|(w, &q)| Ok(MarkSpec { wm: load_bits(w)?, q, settings }))
        .collect::<std::result::Result<Vec<_>, Failure>>()?;

    let (image, report_json) = if marks.len() == 1 {
        let m = &marks[0];
        let e = embed_image(&cover, &m.wm, m.q, &settings).map_err(|e| explain_budget(e, a.sigma_u))?;
        emit(out, &describe(&e.report))?;
        (e.image, json(&e.report))
    } else {
        let e = multi_embed(&cover, &marks).map_err(|e| explain_budget(e, a.sigma_u))?;
        for w in &e.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
        for r in &e.reports {
            emit(out, &describe(r))?;
        }
        let doc = serde_json::json!({
            "reports": e.reports,
            "compatibility": e.compatibility,
            "pairs": e.pairs,
            "warnings": e.warnings,
        });
        (e.image, json(&doc))
    };

    if settings.quantize {
        io(&a.out, pgmio::save_pgm(&a.out, &image.to_gray()))?;
    } else {
        io(&a.out, pgmio::save_float_image(&a.out, &image))?;
    }
    if let Some(path) = &a.report {
        write_text(path, &report_json)?;
    }
    Ok(())
}

fn extract(a: ExtractArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let k = a.prime.len();
    if !a.reference.is_empty() && a.reference.len() != k {
        return Err(Failure::Usage(format!("{} --ref given for {k} --prime", a.reference.len())));
    }
    if !a.out.is_empty() && a.out.len() != k {
        return Err(Failure::Usage(format!("{} --out given for {k} --prime", a.out.len())));
    }
    if a.wm_width == 0 || a.wm_height == 0 {
        return Err(Failure::Usage("watermark dimensions must be positive".into()));
    }
    let image = io(&a.image, pgmio::load_any(&a.image))?;
    let detect = DetectSettings { sigma_u: a.sigma_u, host_offset: a.host_offset, low_margin: a.low_margin };
    let bits = a.wm_width * a.wm_height;

    let mut reports = Vec::with_capacity(k);
    let mut worst = 0.0f64;
    for (i, &q) in a.prime.iter().enumerate() {
        let reference = match a.reference.get(i) {
            Some(p) => {
                let r = load_bits(p)?;
                if (r.width(), r.height()) != (a.wm_width, a.wm_height) {
                    return Err(Failure::Domain(format!(
                        "reference {} is {}x{}, expected {}x{}",
                        p.display(),
                        r.width(),
                        r.height(),
                        a.wm_width,
                        a.wm_height
                    )));
                }
                Some(r)
            }
            None => None,
        };
        let rep = extract_image(&image, q, bits, &detect, reference.as_ref())?;
        if let Some(path) = a.out.get(i) {
            let rec: GrayImage = bitmap_from_bits(&rep.recovered(a.wm_width, a.wm_height)?);
            io(path, pgmio::save_pgm(path, &rec))?;
        }
        let ties = rep.flags.iter().filter(|f| f.starts_with("tie:")).count();
        let low = rep.flags.len() - ties;
        if !rep.flags.is_empty() {
            let _ = writeln!(err, "warning: prime {q}: {ties} tied and {low} low-margin decisions");
        }
        let ber = rep.ber.map_or("n/a".to_string(), |b| format!("{b}"));
        emit(out, &format!("prime {q}: {bits} bits, BER {ber}, presence C {:.6}\n", rep.presence_c))?;
        worst = worst.max(rep.ber.unwrap_or(0.0));
        reports.push(rep);
    }
    if let Some(path) = &a.report {
        let text = if k == 1 { json(&reports[0]) } else { json(&reports) };
        write_text(path, &text)?;
    }
    if let Some(max) = a.max_ber {
        if worst > max {
            return Err(Failure::Verification(format!("BER {worst} exceeds --max-ber {max}")));
        }
    }
    Ok(())
}

fn csv_path(base: &Path, q: u64, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-{q}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{q}"),
    };
    base.with_file_name(name)
}

fn sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let grid = MuGrid::new(a.mu_from, a.mu_to, a.step).map_err(|e| Failure::Usage(e.to_string()))?;
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let cover = match &a.cover {
        Some(p) => io(p, pgmio::load_pgm(p))?,
        None => synthetic_cover(a.width, a.height, 128.0, a.sigma_x, a.seed)?,
    };
    let wm = match &a.wm {
        Some(p) => load_bits(p)?,
        None => WatermarkBits::random(a.wm_width, a.wm_height, a.seed.wrapping_add(1))?,
    };
    let noise = if a.sigma_n > 0.0 { Some(NoiseSpec::new(a.sigma_n, a.seed.wrapping_add(2))?) } else { None };
    let settings = SweepSettings {
        lambda: a.lambda,
        sigma_u: a.sigma_u,
        quantize: !a.no_quantize,
        host_offset: a.host_offset,
        noise,
        trials: a.trials,
    };
    let several = a.prime.len() > 1;
    let mut results = Vec::with_capacity(a.prime.len());
    for &q in &a.prime {
        let r = gain_sweep(&cover, &wm, q, &grid, &settings)?;
        write_text(&csv_path(&a.out, q, several), &r.to_csv())?;
        results.push(r);
    }
    for w in gain_warnings(&results) {
        let _ = writeln!(err, "warning: {w}");
    }
    let summaries: Vec<_> = results.iter().map(|r| r.summary_json()).collect();
    let text = if several { json(&summaries) } else { json(&summaries[0]) };
    match &a.summary {
        Some(p) => write_text(p, &text),
        None => emit(out, &text),
    }
}

fn montecarlo(a: MonteCarloArgs, out: &mut dyn Write) -> Outcome {
    let stats = ModelStats::new(a.sigma_x * a.sigma_x, a.sigma_n * a.sigma_n, a.n, a.sigma_u * a.sigma_u)?;
    let lambda = match a.lambda {
        Some(l) => l,
        None => lambda_opt_for_budget(&stats, a.alpha),
    };
    let mut cfg = MonteCarloConfig::new(stats, lambda, a.alpha, a.trials, a.seed);
    cfg.prime = a.prime;
    let res = monte_carlo_ber(&cfg)?;
    let text = json(&res);
    if let Some(p) = &a.report {
        write_text(p, &text)?;
    }
    emit(out, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("dseqmark").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(&[]).0, 1);
        assert_eq!(run(&["info"]).0, 1);
        assert_eq!(run(&["bogus"]).0, 1);
        assert_eq!(run(&["gen", "--prime", "11", "--len", "0"]).0, 1);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("embed"));
    }

    #[test]
    fn domain_errors_exit_3() {
        let (code, _, err) = run(&["info", "--prime", "2468"]);
        assert_eq!(code, 3);
        assert!(err.contains("not prime"));
    }

    #[test]
    fn csv_naming() {
        assert_eq!(csv_path(Path::new("out/s.csv"), 11, true), PathBuf::from("out/s-11.csv"));
        assert_eq!(csv_path(Path::new("s.csv"), 11, false), PathBuf::from("s.csv"));
    }

    #[test]
    fn budget_hint_names_the_needed_amplitude() {
        let f = explain_budget(Error::BudgetInfeasible { alpha: 0.1, rejection: 0.4 }, 1.0);
        assert_eq!(f.code(), 3);
        assert!(f.message().contains("2.0000"), "{}", f.message());
    }
}
