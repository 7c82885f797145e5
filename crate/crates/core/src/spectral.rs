//! Analytic CIC response, PSD, SNR and cascade-gain measurement.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::cic::CicParams;
use crate::error::{Error, Result};
use crate::stream::SampleStream;

/// dB value reported for bins with exactly zero power.
pub const NO_POWER_DB: f64 = -400.0;

pub const SPECTRUM_CSV_VERSION: u32 = 1;

/// Anything with a magnitude response at a physical frequency.
pub trait FrequencyResponse {
    fn magnitude(&self, f_hz: f64) -> f64;
}

pub fn to_db(linear: f64) -> f64 {
    if linear > 0.0 {
        20.0 * linear.log10()
    } else {
        NO_POWER_DB
    }
}

fn power_db(p: f64) -> f64 {
    if p > 0.0 {
        10.0 * p.log10()
    } else {
        NO_POWER_DB
    }
}

/// |sin(π f RM / fs) / sin(π f / fs)|^N, with the removable singularity
/// (RM)^N at multiples of fs.
pub fn cic_magnitude(params: &CicParams, f_hz: f64, fs_hz: f64) -> f64 {
    let rm = params.rm() as f64;
    let x = PI * f_hz / fs_hz;
    let den = x.sin();
    let ratio = if den.abs() < 1e-300 {
        rm
    } else {
        ((rm * x).sin() / den).abs()
    };
    ratio.powi(params.stages as i32)
}

/// [`cic_magnitude`] divided by the DC gain (RM)^N.
pub fn cic_magnitude_normalized(params: &CicParams, f_hz: f64, fs_hz: f64) -> f64 {
    let rm = params.rm() as f64;
    let x = PI * f_hz / fs_hz;
    let den = rm * x.sin();
    let ratio = if den.abs() < 1e-300 { 1.0 } else { ((rm * x).sin() / den).abs() };
    ratio.powi(params.stages as i32)
}

/// CIC as a response stage: normalized magnitude at the CIC input rate.
#[derive(Debug, Clone, Copy)]
pub struct CicResponse {
    pub params: CicParams,
    pub fs_hz: f64,
}

impl FrequencyResponse for CicResponse {
    fn magnitude(&self, f_hz: f64) -> f64 {
        cic_magnitude_normalized(&self.params, f_hz, self.fs_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rect,
    /// Periodic Hann, so a tone on a bin centre leaks into ±1 bin only.
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rect => "rect",
            Window::Hann => "hann",
        }
    }
}

/// One-sided power spectrum of a single windowed FFT frame.
///
/// `power[k]` is in units of mean-square (full scale = 1): the bins sum to
/// the mean square of the windowed frame. `psd_db` is relative to a
/// full-scale sine seen through the same window, so a full-scale tone on a
/// bin centre with the rectangular window reads 0 dBFS.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub rate_hz: f64,
    pub n_fft: usize,
    pub window: Window,
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub psd_db: Vec<f64>,
    /// Mean of the squared window.
    pub window_power: f64,
}

impl SpectrumReport {
    pub fn bin_width(&self) -> f64 {
        self.rate_hz / self.n_fft as f64
    }

    pub fn bin_of(&self, f_hz: f64) -> usize {
        (f_hz / self.bin_width()).round() as usize
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# decim-spectrum v{SPECTRUM_CSV_VERSION}")?;
        writeln!(
            out,
            "# window={} n_fft={} fs_hz={}",
            self.window.name(),
            self.n_fft,
            self.rate_hz
        )?;
        writeln!(out, "freq_hz,psd_db")?;
        for (f, p) in self.freqs.iter().zip(&self.psd_db) {
            writeln!(out, "{f},{p:.6}")?;
        }
        Ok(())
    }
}

/// PSD of the first `n_fft` samples of `input`.
pub fn psd(input: &SampleStream, window: Window, n_fft: usize) -> Result<SpectrumReport> {
    if n_fft < 2 || !n_fft.is_power_of_two() {
        return Err(Error::contract(format!("n_fft {n_fft} must be a power of two >= 2")));
    }
    if input.len() < n_fft {
        return Err(Error::contract(format!(
            "stream has {} samples, fewer than n_fft = {n_fft}",
            input.len()
        )));
    }
    let x = input.to_full_scale();
    let w = window.coefficients(n_fft);
    let window_power = w.iter().map(|v| v * v).sum::<f64>() / n_fft as f64;
    let mut buf: Vec<Complex<f64>> = x[..n_fft]
        .iter()
        .zip(&w)
        .map(|(&s, &wi)| Complex::new(s * wi, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    let n2 = (n_fft as f64) * (n_fft as f64);
    let half = n_fft / 2;
    let power: Vec<f64> = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / n2;
            if k == 0 || k == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let reference = 0.5 * window_power;
    let psd_db = power.iter().map(|&p| power_db(p / reference)).collect();
    let df = input.rate_hz / n_fft as f64;
    Ok(SpectrumReport {
        rate_hz: input.rate_hz,
        n_fft,
        window,
        freqs: (0..=half).map(|k| k as f64 * df).collect(),
        power,
        psd_db,
        window_power,
    })
}

/// Bins removed from the noise sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnrExclusions {
    /// Bins on each side of the signal bin counted as signal.
    pub signal_half_width: usize,
    /// Bins 0..=dc_bins are discarded.
    pub dc_bins: usize,
}

impl Default for SnrExclusions {
    fn default() -> Self {
        SnrExclusions {
            signal_half_width: 3,
            dc_bins: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SnrReport {
    /// `-inf` when no signal power is present, `+inf` for a noiseless band.
    pub snr_db: f64,
    pub signal_power: f64,
    pub noise_power: f64,
    pub signal_bin: usize,
    pub noise_bins: usize,
    pub spectrum: SpectrumReport,
}

impl SnrReport {
    pub fn has_signal(&self) -> bool {
        self.snr_db != f64::NEG_INFINITY
    }

    /// In-band noise power relative to a full-scale sine, dB.
    pub fn noise_floor_dbfs(&self) -> f64 {
        power_db(self.noise_power / (0.5 * self.spectrum.window_power))
    }
}

/// SNR of a tone at `f0` against the remaining power in `band`.
pub fn measure_snr(
    input: &SampleStream,
    f0: f64,
    band: (f64, f64),
    exclusions: SnrExclusions,
    n_fft: usize,
) -> Result<SnrReport> {
    let (lo, hi) = band;
    if !(lo <= f0 && f0 <= hi) {
        return Err(Error::contract(format!("signal {f0} Hz outside band [{lo}, {hi}] Hz")));
    }
    if hi > input.rate_hz / 2.0 + 1e-9 {
        return Err(Error::contract(format!("band edge {hi} Hz beyond Nyquist")));
    }
    let spectrum = psd(input, Window::Hann, n_fft)?;
    let df = spectrum.bin_width();
    let first = (lo / df).ceil() as usize;
    let last = ((hi / df).floor() as usize).min(n_fft / 2);
    let k0 = spectrum.bin_of(f0);
    let sig_lo = k0.saturating_sub(exclusions.signal_half_width);
    let sig_hi = k0 + exclusions.signal_half_width;

    let (mut signal, mut noise, mut noise_bins) = (0.0, 0.0, 0usize);
    for k in first..=last {
        if (sig_lo..=sig_hi).contains(&k) {
            signal += spectrum.power[k];
        } else if k > exclusions.dc_bins {
            noise += spectrum.power[k];
            noise_bins += 1;
        }
    }
    if noise_bins == 0 {
        return Err(Error::contract("band contains no bins outside the exclusions"));
    }
    let snr_db = if signal == 0.0 {
        f64::NEG_INFINITY
    } else if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    };
    Ok(SnrReport {
        snr_db,
        signal_power: signal,
        noise_power: noise,
        signal_bin: k0,
        noise_bins,
        spectrum,
    })
}

/// Nearest frequency to `target` that falls on an FFT bin centre.
pub fn coherent_frequency(target: f64, fs: f64, n_fft: usize) -> f64 {
    let df = fs / n_fft as f64;
    (target / df).round().max(1.0) * df
}

/// Uniform grid of `points` frequencies on [0, f_max].
pub fn linear_grid(f_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| f_max * i as f64 / (points - 1) as f64).collect()
}

/// Logarithmic grid from `f_min` to `f_max`.
pub fn log_grid(f_min: f64, f_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let (a, b) = (f_min.ln(), f_max.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Row of a cascade gain table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint {
    pub freq_hz: f64,
    pub gain_db: f64,
}

/// Composite magnitude of `stages` (in cascade) on `grid`.
pub fn droop_report(stages: &[&dyn FrequencyResponse], grid: &[f64]) -> Vec<GainPoint> {
    grid.iter()
        .map(|&f| {
            let g: f64 = stages.iter().map(|s| s.magnitude(f)).product();
            GainPoint {
                freq_hz: f,
                gain_db: to_db(g),
            }
        })
        .collect()
}

pub fn write_gain_csv<W: Write>(rows: &[GainPoint], meta: &str, mut out: W) -> Result<()> {
    writeln!(out, "# decim-response v{SPECTRUM_CSV_VERSION}")?;
    writeln!(out, "# {meta}")?;
    writeln!(out, "freq_hz,gain_db")?;
    for r in rows {
        writeln!(out, "{},{:.6}", r.freq_hz, r.gain_db)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cic::impulse_response;
    use crate::source::gen_noise;

    fn sine(f: f64, amp: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn cic_dc_and_nulls() {
        let p = CicParams::BASELINE;
        assert_eq!(cic_magnitude(&p, 0.0, 6.144e6), 1_048_576.0);
        for k in 1..8 {
            let f = k as f64 * 6.144e6 / 16.0;
            assert!(to_db(cic_magnitude_normalized(&p, f, 6.144e6)) < -250.0);
        }
    }

    #[test]
    fn cic_droop_at_32k() {
        // exact value 0.944571668616015 (-0.495302 dB), high-precision evaluation
        let m = cic_magnitude_normalized(&CicParams::BASELINE, 32_000.0, 6.144e6);
        assert!((m - 0.944_571_668_616_015).abs() < 1e-12);
        assert!((to_db(m) + 0.495_302).abs() < 1e-5);
    }

    #[test]
    fn analytic_matches_fft_of_impulse_response() {
        let p = CicParams::new(3, 1, 8, 4);
        let h = impulse_response(&p);
        let n = 256;
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(h.get(i).copied().unwrap_or(0) as f64, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak = cic_magnitude(&p, 0.0, 1.0);
        for (k, v) in buf.iter().enumerate().take(n / 2 + 1) {
            let a = cic_magnitude(&p, k as f64 / n as f64, 1.0);
            assert!((a - v.norm()).abs() <= 1e-12 * peak, "bin {k}");
        }
    }

    #[test]
    fn full_scale_bin_centred_sine_rect() {
        let n = 1024;
        let s = SampleStream::real(1024.0, sine(64.0, 1.0, 1024.0, n));
        let r = psd(&s, Window::Rect, n).unwrap();
        assert!(r.psd_db[64].abs() < 1e-9);
        for (k, &p) in r.psd_db.iter().enumerate() {
            if k != 64 {
                assert!(p <= -250.0, "bin {k}: {p}");
            }
        }
    }

    #[test]
    fn parseval() {
        let x = gen_noise(5, 0.1, 4096, 1.0).as_real().unwrap().to_vec();
        for window in [Window::Rect, Window::Hann] {
            let r = psd(&SampleStream::real(1.0, x.clone()), window, 4096).unwrap();
            let w = window.coefficients(4096);
            let ms = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum::<f64>() / 4096.0;
            assert!((r.total_power() - ms).abs() <= 1e-9 * ms);
        }
    }

    #[test]
    fn noise_level_matches_variance() {
        let sigma = 1e-3;
        let n = 1 << 16;
        let r = psd(&gen_noise(9, sigma, n, 1.0), Window::Hann, n).unwrap();
        let est = r.total_power() / r.window_power;
        assert!((10.0 * (est / (sigma * sigma)).log10()).abs() < 0.1);
    }

    #[test]
    fn zero_input_floor_sentinel() {
        let r = psd(&SampleStream::real(1.0, vec![0.0; 64]), Window::Hann, 64).unwrap();
        assert!(r.psd_db.iter().all(|&p| p == NO_POWER_DB));
    }

    #[test]
    fn psd_preconditions() {
        let s = SampleStream::real(1.0, vec![0.0; 100]);
        assert!(psd(&s, Window::Hann, 128).is_err());
        assert!(psd(&s, Window::Hann, 96).is_err());
    }

    #[test]
    fn snr_of_constructed_signal() {
        let n = 1 << 16;
        let fs = 48_000.0;
        let f0 = coherent_frequency(1000.0, fs, n);
        let amp = 0.5;
        // noise power = signal power * 1e-8 over the full band
        let sigma = (amp * amp / 2.0 * 1e-8f64).sqrt();
        let noise = gen_noise(1, sigma, n, fs);
        let x: Vec<f64> = sine(f0, amp, fs, n)
            .into_iter()
            .zip(noise.as_real().unwrap())
            .map(|(v, e)| v + e)
            .collect();
        let r = measure_snr(&SampleStream::real(fs, x), f0, (0.0, fs / 2.0), SnrExclusions::default(), n).unwrap();
        assert!((r.snr_db - 80.0).abs() < 0.5, "{}", r.snr_db);
    }

    #[test]
    fn snr_floor_and_scaling() {
        let n = 1 << 14;
        let fs = 48_000.0;
        let f0 = coherent_frequency(1000.0, fs, n);
        let x = sine(f0, 0.5, fs, n);
        let band = (0.0, 24_000.0);
        let r = measure_snr(&SampleStream::real(fs, x.clone()), f0, band, SnrExclusions::default(), n).unwrap();
        assert!(r.snr_db >= 140.0, "{}", r.snr_db);

        let noise = gen_noise(2, 1e-5, n, fs);
        let noisy: Vec<f64> = x.iter().zip(noise.as_real().unwrap()).map(|(v, e)| v + e).collect();
        let a = measure_snr(&SampleStream::real(fs, noisy.clone()), f0, band, SnrExclusions::default(), n).unwrap();
        let scaled: Vec<f64> = noisy.iter().map(|v| v * 0.37).collect();
        let b = measure_snr(&SampleStream::real(fs, scaled), f0, band, SnrExclusions::default(), n).unwrap();
        assert!((a.snr_db - b.snr_db).abs() < 1e-9);
    }

    #[test]
    fn snr_errors_and_sentinel() {
        let fs = 48_000.0;
        let s = SampleStream::real(fs, vec![0.0; 1024]);
        let df = fs / 1024.0;
        assert!(measure_snr(&s, 30_000.0, (0.0, 24_000.0), SnrExclusions::default(), 1024).is_err());
        // band covered entirely by the exclusions
        let f0 = 10.0 * df;
        assert!(measure_snr(&s, f0, (7.0 * df, 13.0 * df), SnrExclusions::default(), 1024).is_err());
        let r = measure_snr(&s, f0, (0.0, 24_000.0), SnrExclusions::default(), 1024).unwrap();
        assert_eq!(r.snr_db, f64::NEG_INFINITY);
        assert!(!r.has_signal());
    }

    #[test]
    fn droop_table() {
        let cic = CicResponse { params: CicParams::BASELINE, fs_hz: 6.144e6 };
        let rows = droop_report(&[&cic], &[0.0, 32_000.0]);
        assert_eq!(rows[0].gain_db, 0.0);
        assert!((rows[1].gain_db + 0.495).abs() < 0.005);
    }
}
