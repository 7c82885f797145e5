//! Test-signal generators and a 3rd-order, 5-bit sigma-delta modulator.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stream::SampleStream;

/// Feedback coefficients of the cascade-of-integrators feedback loop.
///
/// With unit inter-stage gains the loop realizes
/// `NTF(z) = ((z - 1) / (z - a))^3` with `feedback = [k^3, 3k^2, 3k]`,
/// `k = 1 - a` and input gain `k^3`, giving `STF(z) = k^3 / (z - a)^3`
/// (unity at DC).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdmCoefficients {
    /// Feedback into integrators 1, 2, 3.
    pub feedback: [f64; 3],
    /// Input gain into integrator 1.
    pub input_gain: f64,
}

impl SdmCoefficients {
    /// Triple NTF pole at `a`; out-of-band gain is `8 / (1 + a)^3`.
    pub fn from_pole(a: f64) -> Self {
        let k = 1.0 - a;
        SdmCoefficients {
            feedback: [k * k * k, 3.0 * k * k, 3.0 * k],
            input_gain: k * k * k,
        }
    }

    /// Pole at 4^(1/3) - 1, i.e. out-of-band NTF gain exactly 2. These values
    /// are also written out in `configs/baseline.chain`.
    pub fn frozen() -> Self {
        SdmCoefficients {
            feedback: [
                0.070_239_975_120_084_28,
                0.510_713_675_750_845_3,
                1.237_796_844_095_401_6,
            ],
            input_gain: 0.070_239_975_120_084_28,
        }
    }

    /// Pole location implied by the third feedback coefficient.
    pub fn pole(&self) -> f64 {
        1.0 - self.feedback[2] / 3.0
    }

    /// |NTF| at normalized frequency f/fs.
    pub fn ntf_magnitude(&self, f_norm: f64) -> f64 {
        let a = self.pole();
        let w = 2.0 * PI * f_norm;
        let num = 2.0 * (w / 2.0).sin().abs();
        let den = (1.0 - 2.0 * a * w.cos() + a * a).sqrt();
        (num / den).powi(3)
    }
}

/// Single-loop 3rd-order modulator with a 32-level mid-tread quantizer.
///
/// Outputs are integers in [-16, 15]; an output `v` represents `v / 16` of
/// full scale.
#[derive(Debug, Clone)]
pub struct SdModulator {
    coeffs: SdmCoefficients,
    states: [f64; 3],
    index: usize,
}

impl SdModulator {
    pub const OUTPUT_WIDTH: u32 = 5;
    pub const LEVELS: i64 = 32;
    /// Largest input magnitude accepted, as a fraction of full scale.
    pub const MAX_INPUT: f64 = 0.8;
    /// Integrator state magnitude treated as divergence.
    pub const STATE_LIMIT: f64 = 64.0;

    pub fn new(coeffs: SdmCoefficients) -> Self {
        SdModulator {
            coeffs,
            states: [0.0; 3],
            index: 0,
        }
    }

    pub fn coefficients(&self) -> &SdmCoefficients {
        &self.coeffs
    }

    pub fn states(&self) -> [f64; 3] {
        self.states
    }

    pub fn reset(&mut self) {
        self.states = [0.0; 3];
        self.index = 0;
    }

    fn quantize(y: f64) -> i64 {
        let half = Self::LEVELS / 2;
        ((y * half as f64).round() as i64).clamp(-half, half - 1)
    }

    /// One modulator clock.
    pub fn step(&mut self, u: f64) -> Result<i64> {
        let index = self.index;
        if !u.is_finite() || u.abs() > Self::MAX_INPUT {
            return Err(Error::contract(format!(
                "modulator input {u} at sample {index} exceeds {} of full scale",
                Self::MAX_INPUT
            )));
        }
        let [x1, x2, x3] = self.states;
        let v = Self::quantize(x3);
        let fb = v as f64 / (Self::LEVELS / 2) as f64;
        let [a1, a2, a3] = self.coeffs.feedback;
        self.states = [
            x1 + self.coeffs.input_gain * u - a1 * fb,
            x2 + x1 - a2 * fb,
            x3 + x2 - a3 * fb,
        ];
        let magnitude = self.states.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if !(magnitude <= Self::STATE_LIMIT) {
            return Err(Error::Unstable { index, magnitude });
        }
        self.index += 1;
        Ok(v)
    }

    pub fn modulate(&mut self, input: &SampleStream) -> Result<SampleStream> {
        let x = input
            .as_real()
            .ok_or_else(|| Error::contract("modulator input must be a real-valued stream"))?;
        let out = x.iter().map(|&u| self.step(u)).collect::<Result<Vec<_>>>()?;
        SampleStream::int(input.rate_hz, Self::OUTPUT_WIDTH, out)
    }

    /// Applies the signal transfer function `k^3 / (z - a)^3` to `x`.
    pub fn signal_transfer(&self, x: &[f64]) -> Vec<f64> {
        let a = self.coeffs.pole();
        let g = self.coeffs.input_gain;
        let mut s = [0.0f64; 3];
        x.iter()
            .map(|&u| {
                let y = s[2];
                s = [a * s[0] + g * u, a * s[1] + s[0], a * s[2] + s[1]];
                y
            })
            .collect()
    }
}

impl Default for SdModulator {
    fn default() -> Self {
        SdModulator::new(SdmCoefficients::frozen())
    }
}

/// `amp · sin(2π f n / fs + phase)`.
pub fn gen_sine(freq: f64, amp: f64, fs: f64, n: usize, phase: f64) -> Result<SampleStream> {
    if !(freq >= 0.0 && freq < fs / 2.0) {
        return Err(Error::contract(format!("sine at {freq} Hz is not below fs/2 = {} Hz", fs / 2.0)));
    }
    let w = 2.0 * PI * freq / fs;
    Ok(SampleStream::real(
        fs,
        (0..n).map(|i| amp * (w * i as f64 + phase).sin()).collect(),
    ))
}

/// `amplitude` at index 0, zeros elsewhere.
pub fn gen_impulse(n: usize, fs: f64, width: u32, amplitude: i64) -> Result<SampleStream> {
    let mut v = vec![0i64; n];
    if let Some(first) = v.first_mut() {
        *first = amplitude;
    }
    SampleStream::int(fs, width, v)
}

pub fn gen_step(n: usize, fs: f64, width: u32, amplitude: i64) -> Result<SampleStream> {
    SampleStream::int(fs, width, vec![amplitude; n])
}

/// Feedback polynomial of the 16-bit Galois LFSR, x^16 + x^14 + x^13 + x^11 + 1.
pub const PRBS_TAPS: u16 = 0xB400;

/// Bipolar ±1 sequence from a 16-bit Galois LFSR (output = LSB, 1 → +1).
/// Seed 1 starts `+1, -1, -1, -1, -1, -1, -1, -1`.
pub fn gen_prbs(seed: u16, n: usize, fs: f64) -> Result<SampleStream> {
    if seed == 0 {
        return Err(Error::contract("PRBS seed must be nonzero"));
    }
    let mut state = seed;
    let v = (0..n)
        .map(|_| {
            let bit = state & 1;
            state >>= 1;
            if bit == 1 {
                state ^= PRBS_TAPS;
                1
            } else {
                -1
            }
        })
        .collect();
    SampleStream::int(fs, 2, v)
}

/// Gaussian white noise with standard deviation `sigma`.
pub fn gen_noise(seed: u64, sigma: f64, n: usize, fs: f64) -> SampleStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SampleStream::real(
        fs,
        (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}

/// Integers drawn uniformly over the full `width`-bit range.
pub fn gen_uniform(seed: u64, n: usize, fs: f64, width: u32) -> Result<SampleStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (crate::arith::min_value(width), crate::arith::max_value(width));
    SampleStream::int(fs, width, (0..n).map(|_| rng.random_range(lo..=hi)).collect())
}

/// Rounds a real stream to `width`-bit integers (full scale ±1 maps to
/// ±2^(width-1)), saturating.
pub fn quantize(input: &SampleStream, width: u32) -> Result<SampleStream> {
    let x = input
        .as_real()
        .ok_or_else(|| Error::contract("quantize expects a real-valued stream"))?;
    let scale = 2f64.powi(width as i32 - 1);
    let (lo, hi) = (crate::arith::min_value(width), crate::arith::max_value(width));
    SampleStream::int(
        input.rate_hz,
        width,
        x.iter().map(|&v| ((v * scale).round() as i64).clamp(lo, hi)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{coherent_frequency, measure_snr, SnrExclusions};

    #[test]
    fn frozen_coefficients_match_pole_formula() {
        let derived = SdmCoefficients::from_pole(4f64.cbrt() - 1.0);
        let frozen = SdmCoefficients::frozen();
        for i in 0..3 {
            assert!((derived.feedback[i] - frozen.feedback[i]).abs() < 1e-15);
        }
        assert!((frozen.ntf_magnitude(0.5) - 2.0).abs() < 1e-12);
        assert!(frozen.ntf_magnitude(0.0) == 0.0);
    }

    #[test]
    fn zero_input_zero_mean() {
        let mut m = SdModulator::default();
        let n = 1 << 20;
        let out = m.modulate(&SampleStream::real(6.144e6, vec![0.0; n])).unwrap();
        let mean = out.as_int().unwrap().iter().sum::<i64>() as f64 / n as f64 / 16.0;
        assert!(mean.abs() <= 2f64.powi(-14));
    }

    #[test]
    fn dc_fidelity() {
        let mut m = SdModulator::default();
        let n = 1 << 20;
        let out = m.modulate(&SampleStream::real(6.144e6, vec![0.5; n])).unwrap();
        let v = out.as_int().unwrap();
        assert!(v.iter().all(|&s| (-16..=15).contains(&s)));
        let mean = v.iter().sum::<i64>() as f64 / n as f64 / 16.0;
        assert!((mean - 0.5).abs() <= 2f64.powi(-14), "{mean}");
    }

    #[test]
    fn stays_bounded_up_to_the_stability_limit() {
        for dc in [-0.8, -0.5, 0.3, 0.8] {
            let mut m = SdModulator::default();
            let mut peak = 0.0f64;
            for _ in 0..200_000 {
                m.step(dc).unwrap();
                peak = m.states().iter().fold(peak, |p, s| p.max(s.abs()));
            }
            assert!(peak < 4.0, "dc {dc}: {peak}");
        }
        let mut m = SdModulator::default();
        assert!(matches!(m.step(0.81), Err(Error::Contract(_))));
    }

    #[test]
    fn divergence_is_reported() {
        // positive-feedback loop: unstable by construction
        let mut m = SdModulator::new(SdmCoefficients { feedback: [-0.5, -1.0, -1.0], input_gain: 0.1 });
        let err = (0..10_000).map(|_| m.step(0.5)).find_map(|r| r.err()).unwrap();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    #[test]
    fn sine_is_never_stuck() {
        let s = gen_sine(1000.0, 0.01, 6.144e6, 20_000, 0.0).unwrap();
        let out = SdModulator::default().modulate(&s).unwrap();
        let v = out.as_int().unwrap();
        assert!(v.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn in_band_snr_of_modulator() {
        let fs = 6.144e6;
        let n = 1 << 20;
        let f0 = coherent_frequency(1000.0, fs, n);
        let s = gen_sine(f0, 0.5, fs, n, 0.0).unwrap();
        let out = SdModulator::default().modulate(&s).unwrap();
        let r = measure_snr(&out, f0, (0.0, 24_000.0), SnrExclusions::default(), n).unwrap();
        assert!(r.snr_db >= 98.0, "{}", r.snr_db);
    }

    #[test]
    fn output_is_deterministic() {
        let s = gen_sine(1234.5, 0.4, 6.144e6, 5000, 0.3).unwrap();
        let a = SdModulator::default().modulate(&s).unwrap();
        let b = SdModulator::default().modulate(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generators() {
        let z = gen_sine(1000.0, 0.0, 48_000.0, 64, 0.0).unwrap();
        assert!(z.as_real().unwrap().iter().all(|&x| x == 0.0));
        assert!(gen_sine(24_000.0, 0.5, 48_000.0, 8, 0.0).is_err());
        let imp = gen_impulse(8, 1.0, 5, 7).unwrap();
        assert_eq!(imp.as_int().unwrap(), &[7, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(gen_step(3, 1.0, 5, -2).unwrap().as_int().unwrap(), &[-2, -2, -2]);
        assert!(gen_impulse(2, 1.0, 5, 16).is_err());
    }

    #[test]
    fn prbs_golden() {
        let p = gen_prbs(1, 16, 1.0).unwrap();
        assert_eq!(
            p.as_int().unwrap(),
            &[1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 1, -1, 1, 1, -1]
        );
        assert!(gen_prbs(0, 4, 1.0).is_err());
        // maximal length: period 2^16 - 1
        let long = gen_prbs(1, 65_536, 1.0).unwrap();
        let v = long.as_int().unwrap();
        assert_eq!(v[65_535], v[0]);
        assert_eq!(gen_prbs(1, 200, 1.0).unwrap(), gen_prbs(1, 200, 1.0).unwrap());
    }

    #[test]
    fn quantizer_saturates() {
        let s = SampleStream::real(1.0, vec![1.0, -1.0, 0.5, -0.25]);
        assert_eq!(quantize(&s, 5).unwrap().as_int().unwrap(), &[15, -16, 8, -4]);
    }
}
