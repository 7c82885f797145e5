//! Self-check suites comparing the CIC engine against independent models.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::arith::{cla_add, cla_block_add, max_value, min_value, Adder, BitWord};
use crate::cic::{
    default_schedule, exact_recursive_cic, impulse_response, pipeline_latency, reference_fir_decimate,
    register_growth, run_cic, truncation_error_bound, CicConfig, CicParams, Precision, RunOptions,
    TruncationSchedule,
};
use crate::error::{Error, Result};
use crate::spectral::{cic_magnitude, to_db};
use crate::stream::SampleStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(Error::config(format!("unknown suite '{other}' (expected fast or full)"))),
        }
    }
}

/// Deliberate defects used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// First integrator one bit narrower than the register growth requires.
    WidthOffByOne,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width-off-by-one" => Ok(Fault::WidthOffByOne),
            other => Err(Error::config(format!("unknown fault '{other}' (expected width-off-by-one)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            suite: Suite::Fast,
            seed: 1,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<24} {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(name: &'static str, check: impl FnOnce() -> std::result::Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Runs every check of `opts.suite` against `cfg`.
pub fn run_suite(cfg: &CicConfig, opts: VerifyOptions) -> Vec<CheckResult> {
    let full = opts.suite == Suite::Full;
    let cfg = match opts.fault {
        None => cfg.clone(),
        Some(Fault::WidthOffByOne) => inject_width_fault(cfg),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seeds = || rng.random::<u64>();
    let (s1, s2, s3, s4) = (seeds(), seeds(), seeds(), seeds());
    vec![
        timed("cla", check_cla_exhaustive),
        timed("design_math", || check_design_math(&cfg)),
        timed("fir_oracle", || {
            let (configs, streams) = if full { (50, 40) } else { (20, 50) };
            check_fir_oracle(&cfg, configs, streams, s1)
        }),
        timed("pipeline", || check_pipeline(&cfg, 10, s2)),
        timed("wraparound", || check_wraparound(&cfg, s3)),
        timed("frequency_response", || check_frequency_response(cfg.params(), 4096)),
        timed("truncation_bound", || {
            check_truncation_bound(&cfg, if full { 1_000_000 } else { 200_000 }, s4)
        }),
    ]
}

/// Same parameters with the first integrator (and every wider stage) one
/// bit short of the required register width.
pub fn inject_width_fault(cfg: &CicConfig) -> CicConfig {
    let w = cfg.register_width() - 1;
    let widths: Vec<u32> = cfg.schedule().widths().iter().map(|&x| x.min(w)).collect();
    let comb = cfg.schedule().comb_width().min(w);
    let sched = TruncationSchedule::new(widths, comb).expect("still non-increasing");
    CicConfig::with_schedule_unchecked(*cfg.params(), sched).expect("widths in range")
}

/// Exhaustive 8-bit `cla_add` against modular addition, plus the 512
/// single-block lookahead identities.
pub fn check_cla_exhaustive() -> std::result::Result<String, String> {
    let mut mismatches = 0u32;
    let mut cases = 0u32;
    for a in -128i64..128 {
        for b in -128i64..128 {
            for c0 in [false, true] {
                let x = BitWord::new(8, a).unwrap();
                let y = BitWord::new(8, b).unwrap();
                let (sum, carry) = cla_add(x, y, c0).unwrap();
                let ua = (a as u16) & 0xff;
                let ub = (b as u16) & 0xff;
                let native = ua + ub + c0 as u16;
                if sum.bits() != u64::from(native & 0xff) || carry != (native > 0xff) {
                    mismatches += 1;
                }
                cases += 1;
            }
        }
    }
    let mut block_failures = 0u32;
    for a in 0u8..16 {
        for b in 0u8..16 {
            for c0 in [false, true] {
                if !block_identities_hold(a, b, c0) {
                    block_failures += 1;
                }
            }
        }
    }
    if mismatches == 0 && block_failures == 0 {
        Ok(format!("{cases} word cases, 512 block cases, 0 mismatches"))
    } else {
        Err(format!("{mismatches} word mismatches, {block_failures} block failures"))
    }
}

/// Checks one 4-bit block against the propagate/generate equations written
/// out term by term, and against ripple-carry addition.
pub fn block_identities_hold(a: u8, b: u8, c0: bool) -> bool {
    let blk = cla_block_add(a, b, c0);
    let bit = |v: u8, i: usize| (v >> i) & 1 == 1;
    let p: Vec<bool> = (0..4).map(|i| bit(a, i) ^ bit(b, i)).collect();
    let g: Vec<bool> = (0..4).map(|i| bit(a, i) & bit(b, i)).collect();
    let c1 = g[0] | (p[0] & c0);
    let c2 = g[1] | (p[1] & g[0]) | (p[1] & p[0] & c0);
    let c3 = g[2] | (p[2] & g[1]) | (p[2] & p[1] & g[0]) | (p[2] & p[1] & p[0] & c0);
    let pg = p[0] & p[1] & p[2] & p[3];
    let gg = g[3] | (p[3] & g[2]) | (p[3] & p[2] & g[1]) | (p[3] & p[2] & p[1] & g[0]);
    let c4 = gg | (pg & c0);
    let carries = [c0, c1, c2, c3, c4];
    let sum: u8 = (0..4).map(|i| ((p[i] ^ carries[i]) as u8) << i).sum();
    let ripple = a as u16 + b as u16 + c0 as u16;
    blk.p.as_slice() == p.as_slice()
        && blk.g.as_slice() == g.as_slice()
        && blk.carries == carries
        && blk.group_propagate == pg
        && blk.group_generate == gg
        && blk.sum == sum
        && u16::from(sum) == ripple & 0xf
        && c4 == (ripple > 0xf)
}

/// Growth and width arithmetic recomputed independently.
pub fn check_design_math(cfg: &CicConfig) -> std::result::Result<String, String> {
    let p = cfg.params();
    let report = register_growth(p).map_err(|e| e.to_string())?;
    let mut g: u128 = 1;
    for _ in 0..p.stages {
        g *= p.rm() as u128;
    }
    // smallest b with 2^b >= g
    let mut bits = 0u32;
    while (1u128 << bits) < g {
        bits += 1;
    }
    let expected_width = bits + p.input_width;
    let mut problems = Vec::new();
    if report.g_max != g {
        problems.push(format!("g_max {} != {g}", report.g_max));
    }
    if report.register_width != expected_width || report.b_max + 1 != report.register_width {
        problems.push(format!(
            "register width {} (b_max {}) != {expected_width}",
            report.register_width, report.b_max
        ));
    }
    let widths = cfg.schedule().widths();
    if widths.first() != Some(&report.register_width) {
        problems.push(format!("first stage width {:?} != {}", widths.first(), report.register_width));
    }
    if widths.windows(2).any(|w| w[1] > w[0]) || cfg.schedule().comb_width() > *widths.last().unwrap() {
        problems.push(format!("schedule {} is not non-increasing", cfg.schedule()));
    }
    if *p == CicParams::BASELINE {
        let baseline = default_schedule(p, 16).map_err(|e| e.to_string())?;
        if baseline.widths() != [25, 22, 20, 18, 16] || baseline.comb_width() != 16 {
            problems.push(format!("baseline schedule {baseline}"));
        }
        if report.g_max != 1_048_576 || report.register_width != 25 {
            problems.push("baseline growth".into());
        }
    }
    if problems.is_empty() {
        Ok(format!(
            "g_max {} width {} schedule {}",
            report.g_max,
            report.register_width,
            cfg.schedule()
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn random_stream(rng: &mut ChaCha8Rng, width: u32, len: usize) -> Vec<i64> {
    let (lo, hi) = (min_value(width), max_value(width));
    (0..len).map(|_| rng.random_range(lo..=hi)).collect()
}

fn int_stream(width: u32, values: Vec<i64>) -> SampleStream {
    SampleStream::int(1.0, width, values).expect("values in range")
}

/// Small random configuration: N ≤ 4, M ≤ 2, R ≤ 8, B_in ≤ 4.
pub fn random_small_params(rng: &mut ChaCha8Rng) -> CicParams {
    CicParams::new(
        rng.random_range(1..=4),
        rng.random_range(1..=2),
        rng.random_range(2..=8),
        rng.random_range(1..=4),
    )
}

fn full_options(adder: Adder) -> RunOptions {
    RunOptions {
        precision: Precision::Full,
        pipelined: false,
        adder,
        trace_cycles: None,
    }
}

/// Full-precision engine output == direct convolution, bit-exact, over
/// `configs` random small configurations plus `cfg`.
pub fn check_fir_oracle(
    cfg: &CicConfig,
    configs: usize,
    streams: usize,
    seed: u64,
) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<CicParams> = (0..configs).map(|_| random_small_params(&mut rng)).collect();
    all.push(*cfg.params());
    let mut total = 0usize;
    for (i, params) in all.iter().enumerate() {
        let c = CicConfig::new(*params, register_growth(params).map_err(|e| e.to_string())?.register_width)
            .map_err(|e| e.to_string())?;
        for s in 0..streams {
            let len = rng.random_range(1..=400);
            let x = random_stream(&mut rng, params.input_width, len);
            let adder = if s % 2 == 0 { Adder::Wrap } else { Adder::Cla };
            let run = run_cic(&c, &int_stream(params.input_width, x.clone()), full_options(adder))
                .map_err(|e| e.to_string())?;
            let got: Vec<i128> = run.values().iter().map(|&v| v as i128).collect();
            if got != reference_fir_decimate(params, &x) {
                return Err(format!("config #{i} {params:?} stream {s} (len {len}) mismatch"));
            }
            total += 1;
        }
    }
    Ok(format!("{total} streams over {} configs, 0 mismatches", all.len()))
}

/// Random configuration with some truncation: N ≤ 5, R ≤ 16, B_in ≤ 8.
pub fn random_pipeline_config(rng: &mut ChaCha8Rng) -> CicConfig {
    let params = CicParams::new(
        rng.random_range(1..=5),
        rng.random_range(1..=2),
        rng.random_range(1..=16),
        rng.random_range(1..=8),
    );
    let rw = register_growth(&params).expect("small config").register_width;
    let out = rw - rng.random_range(0..=(rw - 1).min(6));
    CicConfig::new(params, out).expect("valid output width")
}

/// Pipelined output == direct-form output delayed by the pipeline latency,
/// in both precisions and with both adders.
pub fn check_pipeline(cfg: &CicConfig, random_configs: usize, seed: u64) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = vec![cfg.clone()];
    all.extend((0..random_configs).map(|_| random_pipeline_config(&mut rng)));
    let mut runs = 0;
    for c in &all {
        let p = c.params();
        let latency = pipeline_latency(p);
        let len = p.decimation as usize * 200 + rng.random_range(0..64);
        let x = random_stream(&mut rng, p.input_width, len);
        let input = int_stream(p.input_width, x);
        for precision in [Precision::Full, Precision::Truncated] {
            for adder in [Adder::Wrap, Adder::Cla] {
                let opts = RunOptions {
                    precision,
                    pipelined: false,
                    adder,
                    trace_cycles: None,
                };
                let direct = run_cic(c, &input, opts).map_err(|e| e.to_string())?;
                let piped = run_cic(c, &input, RunOptions { pipelined: true, ..opts }).map_err(|e| e.to_string())?;
                let (d, q) = (direct.values(), piped.values());
                if q[..latency.min(q.len())].iter().any(|&v| v != 0) {
                    return Err(format!("{p:?}: pipeline fill is not zero"));
                }
                // the later capture phase can drop the final output sample
                if q.len() + 1 < d.len() || q.len() > d.len() {
                    return Err(format!("{p:?}: {} pipelined vs {} direct outputs", q.len(), d.len()));
                }
                if let Some(m) = (latency..q.len()).find(|&m| q[m] != d[m - latency]) {
                    return Err(format!(
                        "{p:?} {precision:?} {}: output {m} differs from direct output {}",
                        adder.name(),
                        m - latency
                    ));
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs over {} configs, latency {} for the first", all.len(), pipeline_latency(cfg.params())))
}

/// Full-precision output vs unbounded recursion on inputs pinned at the
/// range extremes, where wraparound would first show up.
pub fn check_wraparound(cfg: &CicConfig, seed: u64) -> std::result::Result<String, String> {
    let p = cfg.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (min_value(p.input_width), max_value(p.input_width));
    let seg = (p.rm() as usize) * p.stages as usize * 4;
    let mut x = Vec::new();
    for _ in 0..8 {
        let v = if rng.random::<bool>() { lo } else { hi };
        x.extend(std::iter::repeat_n(v, seg + rng.random_range(0..seg)));
    }
    x.extend(random_stream(&mut rng, p.input_width, 20_000));
    let run = run_cic(cfg, &int_stream(p.input_width, x.clone()), full_options(Adder::Wrap))
        .map_err(|e| e.to_string())?;
    let exact = exact_recursive_cic(p, &x);
    match run.values().iter().zip(&exact).position(|(&a, &b)| a as i128 != b) {
        None => Ok(format!("{} outputs match unbounded arithmetic", exact.len())),
        Some(i) => Err(format!("output {i}: {} vs exact {}", run.values()[i], exact[i])),
    }
}

/// Analytic magnitude vs FFT of the impulse response on `bins` bins.
pub fn check_frequency_response(params: &CicParams, bins: usize) -> std::result::Result<String, String> {
    let h = impulse_response(params);
    if h.len() > bins {
        return Err(format!("impulse response ({} taps) longer than {bins} bins", h.len()));
    }
    let mut buf: Vec<Complex<f64>> = (0..bins)
        .map(|i| Complex::new(h.get(i).map_or(0.0, |&v| v as f64), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(bins).process(&mut buf);
    let dc = params.rm().pow(params.stages) as f64;
    let fs = 1.0;
    let mut worst = 0.0f64;
    for (k, c) in buf.iter().enumerate() {
        let f = k as f64 / bins as f64 * fs;
        let err = (cic_magnitude(params, f, fs) - c.norm()).abs() / dc;
        worst = worst.max(err);
    }
    let dc_analytic = cic_magnitude(params, 0.0, fs);
    let rm = params.rm() as f64;
    let null_db = (1..params.rm())
        .map(|k| to_db(cic_magnitude(params, k as f64 / rm, fs) / dc))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut problems = Vec::new();
    if worst > 1e-9 {
        problems.push(format!("max relative error {worst:.3e}"));
    }
    if dc_analytic != dc {
        problems.push(format!("DC gain {dc_analytic} != {dc}"));
    }
    if params.rm() > 1 && null_db > -250.0 {
        problems.push(format!("null depth {null_db:.1} dB"));
    }
    if problems.is_empty() {
        Ok(format!("max rel err {worst:.2e}, DC {dc}, nulls <= {null_db:.0} dB"))
    } else {
        Err(problems.join("; "))
    }
}

/// Truncated output (rescaled) vs exact convolution never deviates by more
/// than the analytic bound. The input mixes uniform noise with full-scale
/// DC segments so the register extremes are exercised.
pub fn check_truncation_bound(cfg: &CicConfig, samples: usize, seed: u64) -> std::result::Result<String, String> {
    let p = cfg.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A sustained most-negative input sits exactly at the output range limit,
    // where the floor bias of truncation wraps the result; stay one step inside.
    let (lo, hi) = (min_value(p.input_width) + 1, max_value(p.input_width));
    let seg = (p.rm() as usize - 1) * p.stages as usize + p.decimation as usize * 4;
    let mut x = Vec::with_capacity(samples);
    x.extend(std::iter::repeat_n(lo, seg));
    x.extend(std::iter::repeat_n(hi, seg));
    while x.len() < samples {
        if rng.random_range(0..8) == 0 {
            let v = if rng.random::<bool>() { lo } else { hi };
            x.extend(std::iter::repeat_n(v, seg));
        } else {
            let n = rng.random_range(1..=4 * seg);
            x.extend(random_stream(&mut rng, p.input_width, n));
        }
    }
    x.truncate(samples);
    let opts = RunOptions {
        precision: Precision::Truncated,
        ..RunOptions::default()
    };
    let run = run_cic(cfg, &int_stream(p.input_width, x.clone()), opts).map_err(|e| e.to_string())?;
    let exact = reference_fir_decimate(p, &x);
    let bound = truncation_error_bound(cfg);
    let mut worst = 0u128;
    let mut worst_at = 0;
    for (i, (t, e)) in run.full_scale_values().iter().zip(&exact).enumerate() {
        let dev = (t - e).unsigned_abs();
        if dev > worst {
            worst = dev;
            worst_at = i;
        }
    }
    if worst <= bound {
        Ok(format!("{samples} samples, max deviation {worst} <= bound {bound} LSB"))
    } else {
        Err(format!("max deviation {worst} at output {worst_at} exceeds bound {bound} LSB"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suite_passes_on_baseline_config() {
        let results = run_suite(&CicConfig::baseline(), VerifyOptions::default());
        for r in &results {
            assert!(r.passed, "{r}");
        }
        assert_eq!(results.len(), 7);
    }

    #[test]
    fn width_fault_breaks_truncation_bound() {
        let faulty = inject_width_fault(&CicConfig::baseline());
        assert_eq!(faulty.schedule().widths(), &[24, 22, 20, 18, 16]);
        assert!(check_truncation_bound(&faulty, 20_000, 3).is_err());
        let opts = VerifyOptions {
            fault: Some(Fault::WidthOffByOne),
            ..VerifyOptions::default()
        };
        let results = run_suite(&CicConfig::baseline(), opts);
        let trunc = results.iter().find(|r| r.name == "truncation_bound").unwrap();
        assert!(!trunc.passed, "{trunc}");
    }

    #[test]
    fn parse_names() {
        assert_eq!("fast".parse::<Suite>().unwrap(), Suite::Fast);
        assert!("".parse::<Suite>().is_err());
        assert_eq!("width-off-by-one".parse::<Fault>().unwrap(), Fault::WidthOffByOne);
    }

    #[test]
    fn block_identities_reject_wrong_sum() {
        assert!(block_identities_hold(0b1011, 0b0110, true));
    }
}
