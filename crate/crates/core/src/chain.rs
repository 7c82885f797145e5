//! Multi-stage decimation chain: CIC followed by FIR decimators.

use crate::cic::{run_cic, CicConfig, CicParams, RunOptions};
use crate::error::{Error, Result};
use crate::fir::{apply_fir, peak_magnitude, FirFilter};
use crate::spectral::{to_db, CicResponse, FrequencyResponse};
use crate::stream::SampleStream;

/// Modulator rate of the reference plan.
pub const BASELINE_INPUT_RATE: f64 = 6.144e6;
/// Overall decimation of the reference plan.
pub const BASELINE_DECIMATION: usize = 128;
/// Edge of the final signal band.
pub const FINAL_PASSBAND_HZ: f64 = 21_770.0;

/// Pass/stop edges of one stage and the rate it runs at.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEdge {
    pub name: String,
    pub passband_hz: f64,
    pub stopband_hz: f64,
    pub fs_in_hz: f64,
}

impl BandEdge {
    pub fn transition_hz(&self) -> f64 {
        self.stopband_hz - self.passband_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    pub stages: Vec<BandEdge>,
}

impl BandPlan {
    /// Band edges of the four stages (kHz): CIC 7/384, first half-band
    /// 32/170, droop 32/70, second half-band 21.77/26.53, at stage input
    /// rates 6.144 MHz, 384, 192 and 96 kHz.
    pub fn baseline() -> Self {
        let edge = |name: &str, p: f64, s: f64, fs: f64| BandEdge {
            name: name.to_string(),
            passband_hz: p,
            stopband_hz: s,
            fs_in_hz: fs,
        };
        BandPlan {
            stages: vec![
                edge("cic", 7_000.0, 384_000.0, 6.144e6),
                edge("hb1", 32_000.0, 170_000.0, 384_000.0),
                edge("droop", 32_000.0, 70_000.0, 192_000.0),
                edge("hb2", 21_770.0, 26_530.0, 96_000.0),
            ],
        }
    }

    /// Checks passband < stopband ≤ the stage's Nyquist rate.
    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            if !(s.passband_hz < s.stopband_hz && s.stopband_hz <= s.fs_in_hz / 2.0) {
                return Err(Error::config(format!(
                    "stage '{}': need passband {} < stopband {} <= fs/2 = {} Hz",
                    s.name,
                    s.passband_hz,
                    s.stopband_hz,
                    s.fs_in_hz / 2.0
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum StageKind {
    Cic { cfg: CicConfig, opts: RunOptions },
    Fir(FirFilter),
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub name: String,
    pub fs_in: f64,
    pub kind: StageKind,
}

impl Stage {
    pub fn cic(name: impl Into<String>, fs_in: f64, cfg: CicConfig, opts: RunOptions) -> Self {
        Stage {
            name: name.into(),
            fs_in,
            kind: StageKind::Cic { cfg, opts },
        }
    }

    pub fn fir(name: impl Into<String>, filter: FirFilter) -> Self {
        Stage {
            name: name.into(),
            fs_in: filter.fs_in,
            kind: StageKind::Fir(filter),
        }
    }

    pub fn decimation(&self) -> usize {
        match &self.kind {
            StageKind::Cic { cfg, .. } => cfg.params().decimation as usize,
            StageKind::Fir(f) => f.decim,
        }
    }

    pub fn fs_out(&self) -> f64 {
        self.fs_in / self.decimation() as f64
    }

    /// Number of non-trivial coefficients (CIC: impulse-response length).
    pub fn taps(&self) -> usize {
        match &self.kind {
            StageKind::Cic { cfg, .. } => {
                let p: &CicParams = cfg.params();
                (p.rm() as usize - 1) * p.stages as usize + 1
            }
            StageKind::Fir(f) => f.taps(),
        }
    }
}

impl Stage {
    /// Input-rate bands that fold onto [0, band_hz] when this stage
    /// decimates: k·fs_out ± band_hz, clipped to [0, fs_in/2].
    pub fn alias_images(&self, band_hz: f64) -> Vec<(f64, f64)> {
        let (fs_out, nyquist) = (self.fs_out(), self.fs_in / 2.0);
        let mut images = Vec::new();
        let mut k = 1.0;
        while self.decimation() > 1 && k * fs_out - band_hz < nyquist {
            images.push(((k * fs_out - band_hz).max(0.0), (k * fs_out + band_hz).min(nyquist)));
            k += 1.0;
        }
        images
    }

    /// Smallest attenuation relative to DC over the alias images, dB.
    pub fn image_attenuation_db(&self, band_hz: f64, points_per_image: usize) -> f64 {
        let dc = self.magnitude(0.0);
        self.alias_images(band_hz)
            .iter()
            .map(|&(lo, hi)| -to_db(peak_magnitude(self, lo, hi, points_per_image) / dc))
            .fold(f64::INFINITY, f64::min)
    }
}

impl FrequencyResponse for Stage {
    fn magnitude(&self, f_hz: f64) -> f64 {
        match &self.kind {
            StageKind::Cic { cfg, .. } => CicResponse {
                params: *cfg.params(),
                fs_hz: self.fs_in,
            }
            .magnitude(f_hz),
            StageKind::Fir(f) => f.magnitude(f_hz),
        }
    }
}

/// Stages whose sample rates telescope.
#[derive(Debug, Clone)]
pub struct Chain {
    input_rate: f64,
    stages: Vec<Stage>,
}

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

impl Chain {
    pub fn new(input_rate: f64, stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("chain has no stages"));
        }
        if !same_rate(stages[0].fs_in, input_rate) {
            return Err(Error::config(format!(
                "input rate {input_rate} Hz does not match stage '{}' rate {} Hz",
                stages[0].name, stages[0].fs_in
            )));
        }
        for pair in stages.windows(2) {
            if !same_rate(pair[0].fs_out(), pair[1].fs_in) {
                return Err(Error::config(format!(
                    "rate mismatch between '{}' (output {} Hz) and '{}' (input {} Hz)",
                    pair[0].name,
                    pair[0].fs_out(),
                    pair[1].name,
                    pair[1].fs_in
                )));
            }
        }
        for (i, s) in stages.iter().enumerate() {
            if matches!(s.kind, StageKind::Cic { .. }) && i != 0 {
                return Err(Error::config(format!(
                    "CIC stage '{}' must be the first stage (it consumes integer samples)",
                    s.name
                )));
            }
        }
        Ok(Chain { input_rate, stages })
    }

    pub fn input_rate(&self) -> f64 {
        self.input_rate
    }

    pub fn output_rate(&self) -> f64 {
        self.stages.last().unwrap().fs_out()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn total_decimation(&self) -> usize {
        self.stages.iter().map(Stage::decimation).product()
    }

    pub fn cic(&self) -> Option<(&CicConfig, &RunOptions)> {
        self.stages.iter().find_map(|s| match &s.kind {
            StageKind::Cic { cfg, opts } => Some((cfg, opts)),
            _ => None,
        })
    }

    /// Composite magnitude of all stages at `f_hz` (input-referred).
    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.stages.iter().map(|s| s.magnitude(f_hz)).product()
    }

    /// Largest |gain| deviation in dB over [0, passband_hz], relative to DC,
    /// of the cascade of stages `0..=index`.
    pub fn cascade_ripple_db(&self, index: usize, passband_hz: f64, points: usize) -> f64 {
        let stages = &self.stages[..=index];
        let gain = |f: f64| stages.iter().map(|s| s.magnitude(f)).product::<f64>();
        let dc = gain(0.0);
        (0..=points)
            .map(|i| to_db(gain(passband_hz * i as f64 / points as f64) / dc).abs())
            .fold(0.0, f64::max)
    }

    pub fn with_cic_options(mut self, opts: RunOptions) -> Self {
        for s in &mut self.stages {
            if let StageKind::Cic { opts: o, .. } = &mut s.kind {
                *o = opts;
            }
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct Tap {
    pub name: String,
    /// CIC taps hold the raw integer output; FIR taps are real-valued.
    pub stream: SampleStream,
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub output: SampleStream,
    pub taps: Vec<Tap>,
}

impl ChainRun {
    pub fn tap(&self, name: &str) -> Option<&SampleStream> {
        self.taps.iter().find(|t| t.name == name).map(|t| &t.stream)
    }
}

/// Runs the chain; the CIC output is rescaled to unity DC gain before the
/// FIR stages.
pub fn run_chain(chain: &Chain, input: &SampleStream) -> Result<ChainRun> {
    if !same_rate(input.rate_hz, chain.input_rate) {
        return Err(Error::RateMismatch {
            expected: chain.input_rate,
            actual: input.rate_hz,
        });
    }
    let mut current = input.clone();
    let mut taps = Vec::with_capacity(chain.stages.len());
    for stage in &chain.stages {
        current = match &stage.kind {
            StageKind::Cic { cfg, opts } => {
                let run = run_cic(cfg, &current, *opts)?;
                let normalized = run.normalized();
                taps.push(Tap {
                    name: stage.name.clone(),
                    stream: run.output,
                });
                normalized
            }
            StageKind::Fir(f) => {
                let out = apply_fir(f, &current)?;
                taps.push(Tap {
                    name: stage.name.clone(),
                    stream: out.clone(),
                });
                out
            }
        };
    }
    Ok(ChainRun {
        output: current,
        taps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::{design_droop_correction, design_halfband};
    use crate::source::gen_step;

    fn baseline_chain() -> Chain {
        let cic = CicConfig::baseline();
        let hb1 = design_halfband(32_000.0, 384_000.0, 100.0).unwrap();
        let droop = design_droop_correction(cic.params(), 6.144e6, 32_000.0, 70_000.0, 192_000.0, 35).unwrap();
        let hb2 = design_halfband(21_770.0, 96_000.0, 100.0).unwrap();
        Chain::new(
            6.144e6,
            vec![
                Stage::cic("cic", 6.144e6, cic, RunOptions::default()),
                Stage::fir("hb1", hb1),
                Stage::fir("droop", droop),
                Stage::fir("hb2", hb2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn baseline_plan_rates() {
        let chain = baseline_chain();
        let rates: Vec<f64> = chain.stages().iter().map(Stage::fs_out).collect();
        assert_eq!(rates, vec![384_000.0, 192_000.0, 96_000.0, 48_000.0]);
        assert_eq!(chain.total_decimation(), BASELINE_DECIMATION);
        let cic = &chain.stages()[0];
        assert_eq!(cic.alias_images(21_770.0).len(), 8);
        assert_eq!(cic.alias_images(21_770.0)[7], (8.0 * 384_000.0 - 21_770.0, 3.072e6));
        assert_eq!(chain.stages()[3].alias_images(21_770.0), vec![(26_230.0, 48_000.0)]);
        BandPlan::baseline().validate().unwrap();
        for (edge, stage) in BandPlan::baseline().stages.iter().zip(chain.stages()) {
            assert_eq!(edge.fs_in_hz, stage.fs_in);
        }
    }

    #[test]
    fn band_plan_rejects_edges_beyond_nyquist() {
        let mut plan = BandPlan::baseline();
        plan.stages[3].stopband_hz = 49_000.0;
        assert!(plan.validate().is_err());
        assert!((plan.stages[0].transition_hz() - 377_000.0).abs() < 1e-9);
    }

    #[test]
    fn rate_mismatch_names_stages() {
        let hb1 = design_halfband(32_000.0, 384_000.0, 100.0).unwrap();
        let hb2 = design_halfband(21_770.0, 96_000.0, 100.0).unwrap();
        let err = Chain::new(
            6.144e6,
            vec![
                Stage::cic("cic", 6.144e6, CicConfig::baseline(), RunOptions::default()),
                Stage::fir("hb1", hb1),
                Stage::fir("hb2", hb2),
            ],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'hb1'") && msg.contains("'hb2'"), "{msg}");
    }

    #[test]
    fn zero_in_zero_out_everywhere() {
        let chain = baseline_chain();
        let run = run_chain(&chain, &SampleStream::int(6.144e6, 5, vec![0; 128 * 40]).unwrap()).unwrap();
        assert_eq!(run.taps.len(), 4);
        for t in &run.taps {
            assert!(t.stream.to_full_scale().iter().all(|&v| v == 0.0), "{}", t.name);
        }
        assert_eq!(run.output.len(), 40);
    }

    #[test]
    fn dc_gain_is_product_of_stage_gains() {
        let chain = baseline_chain();
        let run = run_chain(&chain, &gen_step(128 * 400, 6.144e6, 5, 15).unwrap()).unwrap();
        let gains: f64 = chain
            .stages()
            .iter()
            .skip(1)
            .map(|s| match &s.kind {
                StageKind::Fir(f) => f.dc_gain(),
                _ => unreachable!(),
            })
            .product();
        let last = *run.output.as_real().unwrap().last().unwrap();
        let expected = gains * 15.0 / 16.0;
        assert!((last - expected).abs() < 1e-12, "{last} vs {expected}");
        assert_eq!(run.tap("cic").unwrap().width(), Some(25));
    }
}
