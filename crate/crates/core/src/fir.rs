//! Half-band and droop-correction FIR stages.
//!
//! Half-bands are Kaiser-windowed sinc designs symmetric about fs/4. The
//! droop corrector is a weighted least-squares linear-phase fit to the
//! inverse of the normalized CIC magnitude over its passband.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::cic::CicParams;
use crate::error::{Error, Result};
use crate::spectral::{cic_magnitude_normalized, FrequencyResponse};
use crate::stream::SampleStream;

/// Longest half-band the designer will produce.
pub const MAX_HALFBAND_TAPS: usize = 4097;

/// Passband deviation allowed for the CIC × droop cascade.
pub const DROOP_FLATNESS_DB: f64 = 0.1;

/// Relative stopband weight of the droop least-squares fit.
const DROOP_STOP_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirKind {
    HalfBand,
    DroopCorrection,
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub coeffs: Vec<f64>,
    /// Coefficient word width when quantized.
    pub coeff_width: Option<u32>,
    pub fs_in: f64,
    pub decim: usize,
    pub kind: FirKind,
}

impl FirFilter {
    pub fn new(coeffs: Vec<f64>, fs_in: f64, decim: usize) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::contract("FIR filter needs at least one tap"));
        }
        if decim == 0 {
            return Err(Error::contract("decimation factor must be at least 1"));
        }
        Ok(FirFilter {
            coeffs,
            coeff_width: None,
            fs_in,
            decim,
            kind: FirKind::Generic,
        })
    }

    pub fn taps(&self) -> usize {
        self.coeffs.len()
    }

    pub fn fs_out(&self) -> f64 {
        self.fs_in / self.decim as f64
    }

    pub fn center(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn dc_gain(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.coeffs.len();
        (0..n / 2).all(|i| self.coeffs[i] == self.coeffs[n - 1 - i])
    }

    /// Rounds coefficients to `width`-bit signed fractions (1 sign bit,
    /// `width - 1` fraction bits).
    pub fn quantized(&self, width: u32) -> Result<FirFilter> {
        if !(2..=53).contains(&width) {
            return Err(Error::contract(format!("coefficient width {width} outside 2..=53")));
        }
        let scale = 2f64.powi(width as i32 - 1);
        let (lo, hi) = (-scale, scale - 1.0);
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| (c * scale).round().clamp(lo, hi) / scale)
            .collect();
        Ok(FirFilter {
            coeffs,
            coeff_width: Some(width),
            ..self.clone()
        })
    }

    /// Zero-phase amplitude for odd-length symmetric filters, otherwise |H|.
    pub fn amplitude(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / self.fs_in;
        if self.coeffs.len() % 2 == 1 && self.is_symmetric() {
            let c = self.center();
            let mut a = self.coeffs[c];
            for k in 1..=c {
                let h = self.coeffs[c + k];
                if h != 0.0 {
                    a += 2.0 * h * (w * k as f64).cos();
                }
            }
            a
        } else {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &h) in self.coeffs.iter().enumerate() {
                re += h * (w * n as f64).cos();
                im -= h * (w * n as f64).sin();
            }
            re.hypot(im)
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# decim-coeffs v1")?;
        writeln!(
            out,
            "# kind={:?} taps={} fs_in_hz={} decim={}",
            self.kind,
            self.taps(),
            self.fs_in,
            self.decim
        )?;
        writeln!(out, "index,value")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            writeln!(out, "{i},{c:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<FirFilter> {
        let mut fs_in = None;
        let mut decim = 1usize;
        let mut coeffs = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                for field in meta.split_whitespace() {
                    match field.split_once('=') {
                        Some(("fs_in_hz", v)) => fs_in = v.parse().ok(),
                        Some(("decim", v)) => decim = v.parse().unwrap_or(1),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line == "index,value" {
                continue;
            }
            let v = line
                .split_once(',')
                .and_then(|(_, v)| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("malformed coefficient row '{line}'")))?;
            coeffs.push(v);
        }
        let fs_in = fs_in.ok_or_else(|| Error::Format("missing fs_in_hz header".into()))?;
        FirFilter::new(coeffs, fs_in, decim)
    }
}

impl FrequencyResponse for FirFilter {
    fn magnitude(&self, f_hz: f64) -> f64 {
        self.amplitude(f_hz).abs()
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

fn halfband_taps(half_len: usize, beta: f64) -> Vec<f64> {
    let i0b = bessel_i0(beta);
    let c = half_len as f64;
    let mut h = vec![0.0; 2 * half_len + 1];
    h[half_len] = 0.5;
    for k in (1..=half_len).step_by(2) {
        let r = k as f64 / c;
        let window = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
        let v = (PI * k as f64 / 2.0).sin() / (PI * k as f64) * window;
        h[half_len + k] = v;
        h[half_len - k] = v;
    }
    h
}

/// Largest |H| over [f_lo, f_hi] sampled on `points` frequencies.
pub fn peak_magnitude<F: FrequencyResponse + ?Sized>(h: &F, f_lo: f64, f_hi: f64, points: usize) -> f64 {
    let points = points.max(2);
    (0..points)
        .map(|i| h.magnitude(f_lo + (f_hi - f_lo) * i as f64 / (points - 1) as f64))
        .fold(0.0, f64::max)
}

fn stop_grid_points(taps: usize) -> usize {
    (16 * taps).clamp(2048, 65_536)
}

/// Kaiser-window half-band decimator (÷2).
///
/// The stopband edge is `fs_in/2 − passband_edge`. Taps at even offsets from
/// the center are exactly zero and the center tap is exactly 1/2. Length is
/// 4k − 1, grown until the measured stopband attenuation meets `stop_atten_db`.
pub fn design_halfband(passband_edge: f64, fs_in: f64, stop_atten_db: f64) -> Result<FirFilter> {
    if !(passband_edge > 0.0 && passband_edge < fs_in / 4.0) {
        return Err(Error::contract(format!(
            "half-band passband edge {passband_edge} Hz must lie in (0, fs/4 = {} Hz)",
            fs_in / 4.0
        )));
    }
    let stop_edge = fs_in / 2.0 - passband_edge;
    let transition = (stop_edge - passband_edge) / fs_in;
    let beta = kaiser_beta(stop_atten_db);
    let estimate = ((stop_atten_db - 7.95) / (14.36 * transition)).ceil().max(3.0) as usize + 1;
    let mut k = estimate.div_ceil(4).max(1);
    let target = 10f64.powf(-stop_atten_db / 20.0);
    loop {
        let taps = 4 * k - 1;
        if taps > MAX_HALFBAND_TAPS {
            return Err(Error::Design(format!(
                "half-band with passband {passband_edge} Hz at fs {fs_in} Hz needs more than \
                 {MAX_HALFBAND_TAPS} taps for {stop_atten_db} dB"
            )));
        }
        let filter = FirFilter {
            coeffs: halfband_taps(2 * k - 1, beta),
            coeff_width: None,
            fs_in,
            decim: 2,
            kind: FirKind::HalfBand,
        };
        if peak_magnitude(&filter, stop_edge, fs_in / 2.0, stop_grid_points(taps)) <= target {
            return Ok(filter);
        }
        k += 1;
    }
}

/// Weighted least-squares linear-phase lowpass fitting `target(f)` on
/// [0, passband_edge] and zero on [stopband_edge, fs_in/2].
pub fn design_inverse_lowpass<T: Fn(f64) -> f64>(
    target: T,
    passband_edge: f64,
    stopband_edge: f64,
    fs_in: f64,
    taps: usize,
    decim: usize,
) -> Result<FirFilter> {
    if !(passband_edge > 0.0 && passband_edge < stopband_edge && stopband_edge <= fs_in / 2.0) {
        return Err(Error::contract(format!(
            "need 0 < passband ({passband_edge}) < stopband ({stopband_edge}) <= fs/2 ({})",
            fs_in / 2.0
        )));
    }
    if taps % 2 == 0 || taps < 3 {
        return Err(Error::contract(format!("droop corrector needs an odd tap count >= 3, got {taps}")));
    }
    let half = (taps - 1) / 2;
    let points = (12 * taps).max(400);
    let mut rows: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * points);
    for i in 0..points {
        let f = passband_edge * i as f64 / (points - 1) as f64;
        rows.push((f, target(f), 1.0));
    }
    for i in 0..points {
        let f = stopband_edge + (fs_in / 2.0 - stopband_edge) * i as f64 / (points - 1) as f64;
        rows.push((f, 0.0, DROOP_STOP_WEIGHT));
    }
    let a = DMatrix::from_fn(rows.len(), half + 1, |r, k| {
        let (f, _, wt) = rows[r];
        let basis = if k == 0 { 1.0 } else { 2.0 * (2.0 * PI * f * k as f64 / fs_in).cos() };
        wt * basis
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&(_, d, wt)| wt * d));
    let svd = a.svd(true, true);
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Design(format!("least-squares solve failed: {e}")))?;
    let mut coeffs = vec![0.0; taps];
    coeffs[half] = x[0];
    for k in 1..=half {
        coeffs[half + k] = x[k];
        coeffs[half - k] = x[k];
    }
    Ok(FirFilter {
        coeffs,
        coeff_width: None,
        fs_in,
        decim,
        kind: FirKind::Generic,
    })
}

/// Droop corrector for a CIC running at `cic_rate_hz`.
///
/// Fails with the achieved ripple when the CIC × corrector cascade deviates
/// by more than [`DROOP_FLATNESS_DB`] anywhere in [0, passband_edge].
pub fn design_droop_correction(
    cic: &CicParams,
    cic_rate_hz: f64,
    passband_edge: f64,
    stopband_edge: f64,
    fs_in: f64,
    taps: usize,
) -> Result<FirFilter> {
    let cic = *cic;
    let droop = move |f: f64| cic_magnitude_normalized(&cic, f, cic_rate_hz);
    let mut filter = design_inverse_lowpass(|f| 1.0 / droop(f), passband_edge, stopband_edge, fs_in, taps, 2)?;
    filter.kind = FirKind::DroopCorrection;
    let ripple = cascade_ripple_db(&filter, droop, passband_edge);
    if ripple > DROOP_FLATNESS_DB {
        return Err(Error::Design(format!(
            "droop corrector with {taps} taps leaves {ripple:.4} dB passband ripple \
             (limit {DROOP_FLATNESS_DB} dB); use more taps"
        )));
    }
    Ok(filter)
}

/// Largest |20·log10(|filter·droop|)| over [0, passband_edge].
pub fn cascade_ripple_db<D: Fn(f64) -> f64>(filter: &FirFilter, droop: D, passband_edge: f64) -> f64 {
    let points = 2001;
    (0..points)
        .map(|i| {
            let f = passband_edge * i as f64 / (points - 1) as f64;
            (20.0 * (filter.magnitude(f) * droop(f)).log10()).abs()
        })
        .fold(0.0, f64::max)
}

/// Direct-form convolution with zero initial state. With `decim > 1` only
/// output indices ≡ 0 (mod decim) are computed. Zero taps are skipped.
pub fn apply_fir(filter: &FirFilter, input: &SampleStream) -> Result<SampleStream> {
    check_rate(filter.fs_in, input.rate_hz)?;
    let x = input.to_full_scale();
    let nonzero: Vec<(usize, f64)> = filter
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(i, &c)| (i, c))
        .collect();
    let y = (0..x.len())
        .step_by(filter.decim)
        .map(|n| {
            nonzero
                .iter()
                .take_while(|(k, _)| *k <= n)
                .map(|&(k, c)| c * x[n - k])
                .sum()
        })
        .collect();
    Ok(SampleStream::real(filter.fs_out(), y))
}

pub(crate) fn check_rate(expected: f64, actual: f64) -> Result<()> {
    if (expected - actual).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(Error::RateMismatch { expected, actual });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn bessel_reference_values() {
        // I0(1) and I0(5) to 15 digits
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }

    #[test]
    fn halfband_structure() {
        let f = design_halfband(21_770.0, 96_000.0, 100.0).unwrap();
        let c = f.center();
        assert_eq!(f.taps() % 4, 3);
        assert_eq!(f.coeffs[c], 0.5);
        assert!(f.is_symmetric());
        for k in (2..=c).step_by(2) {
            assert_eq!(f.coeffs[c + k], 0.0);
            assert_eq!(f.coeffs[c - k], 0.0);
        }
        for k in (1..=c).step_by(2) {
            assert_ne!(f.coeffs[c + k], 0.0);
        }
        assert!((f.amplitude(24_000.0) - 0.5).abs() < 1e-12);
        assert!(f.taps() <= MAX_HALFBAND_TAPS);
    }

    #[test]
    fn hb2_band_edges_straddle_quarter_rate() {
        let (pass, stop): (f64, f64) = (21_770.0, 26_530.0);
        assert!(((pass + stop) / 2.0 - 24_000.0).abs() < 0.2 * 1000.0);
        let f = design_halfband(pass, 96_000.0, 100.0).unwrap();
        assert!(db(peak_magnitude(&f, 96_000.0 / 2.0 - pass, 48_000.0, 8192)) <= -100.0);
        let ripple = (0..=1000)
            .map(|i| db(f.magnitude(pass * i as f64 / 1000.0)).abs())
            .fold(0.0, f64::max);
        assert!(ripple < 0.001, "{ripple}");
    }

    #[test]
    fn hb1_stopband() {
        let f = design_halfband(32_000.0, 384_000.0, 100.0).unwrap();
        assert!(db(peak_magnitude(&f, 160_000.0, 192_000.0, 8192)) <= -100.0);
    }

    #[test]
    fn halfband_errors() {
        assert!(matches!(design_halfband(24_000.0, 96_000.0, 100.0), Err(Error::Contract(_))));
        assert!(matches!(design_halfband(23_990.0, 96_000.0, 100.0), Err(Error::Design(_))));
    }

    #[test]
    fn droop_target_and_flatness() {
        let p = CicParams::BASELINE;
        let f = design_droop_correction(&p, 6.144e6, 32_000.0, 70_000.0, 192_000.0, 35).unwrap();
        assert_eq!(f.kind, FirKind::DroopCorrection);
        assert!(f.is_symmetric());
        // inverse droop at 32 kHz is 1/0.944572 = 1.058681
        assert!((f.magnitude(32_000.0) - 1.058_681).abs() < 0.01 * 1.058_681);
        let droop = |x| cic_magnitude_normalized(&p, x, 6.144e6);
        assert!(cascade_ripple_db(&f, droop, 32_000.0) <= 0.1);
        assert!(db(peak_magnitude(&f, 74_230.0, 96_000.0, 4096)) <= -100.0);
    }

    #[test]
    fn flat_target_is_plain_lowpass() {
        let f = design_inverse_lowpass(|_| 1.0, 32_000.0, 70_000.0, 192_000.0, 31, 1).unwrap();
        assert!((f.dc_gain() - 1.0).abs() < 1e-3);
        assert!(f.magnitude(80_000.0) < 1e-3);
    }

    #[test]
    fn droop_too_few_taps_reports_ripple() {
        let err = design_droop_correction(&CicParams::BASELINE, 6.144e6, 32_000.0, 70_000.0, 192_000.0, 3).unwrap_err();
        assert!(matches!(err, Error::Design(ref m) if m.contains("ripple")), "{err}");
        assert!(design_droop_correction(&CicParams::BASELINE, 6.144e6, 32_000.0, 70_000.0, 192_000.0, 34).is_err());
    }

    #[test]
    fn apply_impulse_and_dc() {
        let filter = FirFilter::new(vec![0.25, 0.5, 0.25], 4.0, 1).unwrap();
        let y = apply_fir(&filter, &SampleStream::real(4.0, vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(y.as_real().unwrap(), &[0.25, 0.5, 0.25, 0.0]);
        let y = apply_fir(&filter, &SampleStream::real(4.0, vec![0.5; 6])).unwrap();
        assert_eq!(*y.as_real().unwrap().last().unwrap(), 0.5 * filter.dc_gain());
        assert!(matches!(
            apply_fir(&filter, &SampleStream::real(8.0, vec![0.0])),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn decimating_apply_drops_odd_outputs() {
        let mut filter = design_halfband(32_000.0, 384_000.0, 100.0).unwrap();
        let x: Vec<f64> = (0..301).map(|i| ((i * 37 % 101) as f64 - 50.0) / 64.0).collect();
        let input = SampleStream::real(384_000.0, x.clone());
        let decimated = apply_fir(&filter, &input).unwrap();
        filter.decim = 1;
        let full = apply_fir(&filter, &input).unwrap();
        let kept: Vec<f64> = full.as_real().unwrap().iter().step_by(2).copied().collect();
        assert_eq!(decimated.as_real().unwrap(), &kept[..]);
        assert_eq!(decimated.rate_hz, 192_000.0);
        // naive convolution, all taps
        for (m, &y) in decimated.as_real().unwrap().iter().enumerate() {
            let n = 2 * m;
            let naive: f64 = (0..=n.min(filter.taps() - 1)).map(|k| filter.coeffs[k] * x[n - k]).sum();
            assert!((y - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn quantized_coeffs() {
        let f = design_halfband(32_000.0, 384_000.0, 100.0).unwrap();
        let q = f.quantized(18).unwrap();
        assert_eq!(q.coeff_width, Some(18));
        assert_eq!(q.coeffs[q.center()], 0.5);
        assert!(q.coeffs.iter().all(|c| (c * 131_072.0).fract() == 0.0));
        assert!(f.quantized(1).is_err());
    }

    #[test]
    fn coeff_csv_round_trip() {
        let f = design_halfband(32_000.0, 384_000.0, 100.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = FirFilter::read_csv(&buf[..]).unwrap();
        assert_eq!(back.coeffs, f.coeffs);
        assert_eq!((back.fs_in, back.decim), (f.fs_in, f.decim));
    }
}
