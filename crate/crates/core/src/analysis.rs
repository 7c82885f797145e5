//! Whole-chain sine measurements: end-to-end SNR, dynamic range with a
//! high-resolution input, and the noise added by CIC truncation.

use crate::chain::{run_chain, Chain, Stage, StageKind};
use crate::cic::{CicConfig, CicParams, Precision};
use crate::config::{AnalysisSection, ChainPlan};
use crate::error::{Error, Result};
use crate::source::{gen_sine, quantize, SdModulator};
use crate::spectral::{coherent_frequency, measure_snr, psd, SnrExclusions, SnrReport, Window};
use crate::stream::SampleStream;

/// Input width of the high-resolution dynamic-range measurement.
pub const HIGH_RES_INPUT_WIDTH: u32 = 16;
/// Comb width paired with [`HIGH_RES_INPUT_WIDTH`]: the same 9 pruned bits
/// as the 5-bit plan.
pub const HIGH_RES_OUTPUT_WIDTH: u32 = 27;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineTest {
    /// Lands on an FFT bin centre at the chain output rate.
    pub f0: f64,
    pub amplitude: f64,
    pub band_hz: f64,
    pub n_fft: usize,
    pub settle: usize,
}

impl SineTest {
    pub fn new(a: &AnalysisSection, chain: &Chain) -> Self {
        SineTest {
            f0: coherent_frequency(a.signal_hz, chain.output_rate(), a.n_fft),
            amplitude: a.amplitude,
            band_hz: a.band_hz,
            n_fft: a.n_fft,
            settle: a.settle,
        }
    }

    /// Input samples needed for `settle + n_fft` output samples.
    pub fn input_len(&self, chain: &Chain) -> usize {
        (self.settle + self.n_fft) * chain.total_decimation()
    }

    /// Real-valued sine at the chain input rate.
    pub fn signal(&self, chain: &Chain) -> Result<SampleStream> {
        gen_sine(self.f0, self.amplitude, chain.input_rate(), self.input_len(chain), 0.0)
    }

    /// SNR of the last `n_fft` output samples.
    pub fn measure(&self, output: &SampleStream) -> Result<SnrReport> {
        measure_snr(
            &output.tail(self.n_fft),
            self.f0,
            (0.0, self.band_hz),
            SnrExclusions::default(),
            self.n_fft,
        )
    }
}

/// CIC input for a plan: modulator output when enabled, otherwise the sine
/// rounded to the CIC input width.
pub fn chain_input(plan: &ChainPlan, test: &SineTest) -> Result<SampleStream> {
    let sine = test.signal(&plan.chain)?;
    match plan.modulator {
        Some(coeffs) => SdModulator::new(coeffs).modulate(&sine),
        None => {
            let (cfg, _) = plan.chain.cic().ok_or_else(|| Error::config("chain has no CIC stage"))?;
            quantize(&sine, cfg.params().input_width)
        }
    }
}

#[derive(Debug, Clone)]
pub struct EndToEnd {
    pub test: SineTest,
    pub output: SampleStream,
    pub report: SnrReport,
}

/// Sine through the modulator (if any) and the whole chain.
pub fn end_to_end(plan: &ChainPlan) -> Result<EndToEnd> {
    let test = SineTest::new(&plan.analysis, &plan.chain);
    let input = chain_input(plan, &test)?;
    let output = run_chain(&plan.chain, &input)?.output;
    let report = test.measure(&output)?;
    Ok(EndToEnd { test, output, report })
}

/// The same chain with the CIC replaced by `cic` (run options kept).
pub fn with_cic(chain: &Chain, cic: CicConfig) -> Result<Chain> {
    let stages = chain
        .stages()
        .iter()
        .map(|s| match &s.kind {
            StageKind::Cic { opts, .. } => Stage::cic(s.name.clone(), s.fs_in, cic.clone(), *opts),
            StageKind::Fir(_) => s.clone(),
        })
        .collect();
    Chain::new(chain.input_rate(), stages)
}

/// Modulator bypassed: the sine is rounded to `input_width` bits and fed to
/// a CIC widened accordingly, pruned down to `output_width`.
pub fn high_resolution_dynamic_range(plan: &ChainPlan, input_width: u32, output_width: u32) -> Result<SnrReport> {
    let (cfg, _) = plan.chain.cic().ok_or_else(|| Error::config("chain has no CIC stage"))?;
    let p = cfg.params();
    let params = CicParams::new(p.stages, p.diff_delay, p.decimation, input_width);
    let chain = with_cic(&plan.chain, CicConfig::new(params, output_width)?)?;
    let test = SineTest::new(&plan.analysis, &chain);
    let input = quantize(&test.signal(&chain)?, input_width)?;
    test.measure(&run_chain(&chain, &input)?.output)
}

#[derive(Debug, Clone)]
pub struct TruncationNoise {
    /// In-band power of (truncated − full precision) output, dBFS.
    pub noise_dbfs: f64,
    pub full: SnrReport,
    pub truncated: SnrReport,
}

/// Runs the plan input through the chain twice, with full-precision and
/// truncated CIC registers, and measures the in-band power of the
/// difference relative to a full-scale sine. DC bins are excluded.
pub fn truncation_noise(plan: &ChainPlan) -> Result<TruncationNoise> {
    let test = SineTest::new(&plan.analysis, &plan.chain);
    let input = chain_input(plan, &test)?;
    let (_, opts) = plan.chain.cic().ok_or_else(|| Error::config("chain has no CIC stage"))?;
    let run = |precision| {
        let chain = plan.chain.clone().with_cic_options(crate::cic::RunOptions { precision, ..*opts });
        run_chain(&chain, &input).map(|r| r.output.tail(test.n_fft))
    };
    let full = run(Precision::Full)?;
    let truncated = run(Precision::Truncated)?;
    let diff: Vec<f64> = truncated
        .to_full_scale()
        .iter()
        .zip(full.to_full_scale())
        .map(|(t, f)| t - f)
        .collect();
    let spec = psd(&SampleStream::real(full.rate_hz, diff), Window::Hann, test.n_fft)?;
    let last = spec.bin_of(test.band_hz).min(test.n_fft / 2);
    let dc = SnrExclusions::default().dc_bins;
    let noise: f64 = spec.power[dc + 1..=last].iter().sum();
    Ok(TruncationNoise {
        noise_dbfs: 10.0 * (noise / (0.5 * spec.window_power)).log10(),
        full: test.measure(&full)?,
        truncated: test.measure(&truncated)?,
    })
}
