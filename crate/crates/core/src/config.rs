//! `decim-chain` configuration files (TOML).
//!
//! A file describes the input rate, the optional modulator, the CIC stage
//! and the FIR stages in order. Loading it designs every FIR and checks
//! that the stage rates telescope.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arith::Adder;
use crate::chain::{BandEdge, BandPlan, Chain, Stage};
use crate::cic::{CicConfig, CicParams, Precision, RunOptions, TruncationSchedule};
use crate::error::{Error, Result};
use crate::fir::{design_droop_correction, design_halfband, FirFilter, FirKind};
use crate::source::SdmCoefficients;

pub const CONFIG_FORMAT: &str = "decim-chain";
pub const CONFIG_VERSION: u32 = 1;

/// Contents of `configs/baseline.chain`.
pub const BASELINE_CHAIN: &str = include_str!("../../../configs/baseline.chain");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfigFile {
    pub format: String,
    pub version: u32,
    pub input: InputSection,
    #[serde(default)]
    pub modulator: Option<ModulatorSection>,
    pub cic: CicSection,
    #[serde(default)]
    pub fir: Vec<FirSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulatorSection {
    pub enabled: bool,
    pub feedback: [f64; 3],
    pub input_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CicSection {
    #[serde(default = "default_name_cic")]
    pub name: String,
    pub stages: u32,
    pub diff_delay: u32,
    pub decimation: u32,
    pub input_width: u32,
    pub output_width: u32,
    /// Integrator widths; defaults to the even schedule.
    #[serde(default)]
    pub schedule: Option<Vec<u32>>,
    #[serde(default)]
    pub comb_width: Option<u32>,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub pipelined: bool,
    #[serde(default = "default_adder")]
    pub adder: String,
    #[serde(default)]
    pub passband_hz: Option<f64>,
    #[serde(default)]
    pub stopband_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirSection {
    pub name: String,
    /// `halfband`, `droop` or `custom`.
    pub kind: String,
    /// Derived from the previous stage when omitted.
    #[serde(default)]
    pub fs_in_hz: Option<f64>,
    pub passband_hz: f64,
    pub stopband_hz: f64,
    #[serde(default = "default_atten")]
    pub atten_db: f64,
    #[serde(default)]
    pub taps: Option<usize>,
    #[serde(default = "default_decim")]
    pub decim: usize,
    #[serde(default)]
    pub coeff_width: Option<u32>,
    /// Inline coefficients for `custom` stages.
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_signal")]
    pub signal_hz: f64,
    /// Sine amplitude as a fraction of full scale.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_band")]
    pub band_hz: f64,
    #[serde(default = "default_n_fft")]
    pub n_fft: usize,
    /// Output samples discarded before analysis.
    #[serde(default = "default_settle")]
    pub settle: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            signal_hz: default_signal(),
            amplitude: default_amplitude(),
            band_hz: default_band(),
            n_fft: default_n_fft(),
            settle: default_settle(),
            seed: default_seed(),
        }
    }
}

fn default_name_cic() -> String {
    "cic".into()
}
fn default_mode() -> String {
    "truncated".into()
}
fn default_adder() -> String {
    "wrap".into()
}
fn default_atten() -> f64 {
    100.0
}
fn default_decim() -> usize {
    2
}
fn default_signal() -> f64 {
    1000.0
}
fn default_amplitude() -> f64 {
    0.5
}
fn default_band() -> f64 {
    21_770.0
}
fn default_n_fft() -> usize {
    65_536
}
fn default_settle() -> usize {
    512
}
fn default_seed() -> u64 {
    1
}

/// A loaded configuration: the designed chain plus run settings.
#[derive(Debug, Clone)]
pub struct ChainPlan {
    pub chain: Chain,
    pub band_plan: BandPlan,
    /// `None` when the modulator is absent or disabled.
    pub modulator: Option<SdmCoefficients>,
    pub analysis: AnalysisSection,
}

impl ChainConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ChainConfigFile =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid chain file: {}", e.message())))?;
        if file.format != CONFIG_FORMAT {
            return Err(Error::config(format!(
                "format must be \"{CONFIG_FORMAT}\", found \"{}\"",
                file.format
            )));
        }
        if file.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported version {} (expected {CONFIG_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn baseline() -> Self {
        Self::parse(BASELINE_CHAIN).expect("bundled baseline.chain is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cic_params(&self) -> CicParams {
        let c = &self.cic;
        CicParams::new(c.stages, c.diff_delay, c.decimation, c.input_width)
    }

    pub fn cic_config(&self) -> Result<CicConfig> {
        let c = &self.cic;
        let params = self.cic_params();
        let comb = c.comb_width.unwrap_or(c.output_width);
        if comb != c.output_width {
            return Err(Error::config(format!(
                "cic: comb_width {comb} differs from output_width {}",
                c.output_width
            )));
        }
        match &c.schedule {
            None => CicConfig::new(params, c.output_width),
            Some(widths) => CicConfig::with_schedule(params, TruncationSchedule::new(widths.clone(), comb)?),
        }
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        let precision: Precision = self.cic.mode.parse()?;
        let adder: Adder = self.cic.adder.parse()?;
        Ok(RunOptions {
            precision,
            pipelined: self.cic.pipelined,
            adder,
            trace_cycles: None,
        })
    }

    pub fn modulator(&self) -> Option<SdmCoefficients> {
        self.modulator.as_ref().filter(|m| m.enabled).map(|m| SdmCoefficients {
            feedback: m.feedback,
            input_gain: m.input_gain,
        })
    }

    /// Band edges of every stage; missing CIC edges default to the final
    /// band edge and the CIC output rate.
    pub fn band_plan(&self) -> Result<BandPlan> {
        let mut stages = Vec::with_capacity(self.fir.len() + 1);
        let mut fs = self.input.rate_hz;
        let cic_out = fs / self.cic.decimation as f64;
        stages.push(BandEdge {
            name: self.cic.name.clone(),
            passband_hz: self.cic.passband_hz.unwrap_or(self.analysis.band_hz),
            stopband_hz: self.cic.stopband_hz.unwrap_or(cic_out),
            fs_in_hz: fs,
        });
        fs = cic_out;
        let mut prev = self.cic.name.as_str();
        for f in &self.fir {
            let fs_in = f.fs_in_hz.unwrap_or(fs);
            if (fs_in - fs).abs() > 1e-9 * fs {
                return Err(Error::config(format!(
                    "rate mismatch between '{prev}' (output {fs} Hz) and '{}' (input {fs_in} Hz)",
                    f.name
                )));
            }
            prev = &f.name;
            stages.push(BandEdge {
                name: f.name.clone(),
                passband_hz: f.passband_hz,
                stopband_hz: f.stopband_hz,
                fs_in_hz: fs_in,
            });
            fs = fs_in / f.decim.max(1) as f64;
        }
        let plan = BandPlan { stages };
        plan.validate()?;
        Ok(plan)
    }

    /// Designs all stages and assembles the chain.
    pub fn build(&self) -> Result<ChainPlan> {
        if !(self.input.rate_hz > 0.0 && self.input.rate_hz.is_finite()) {
            return Err(Error::config(format!("input.rate_hz must be positive, found {}", self.input.rate_hz)));
        }
        let band_plan = self.band_plan()?;
        let cic = self.cic_config()?;
        let opts = self.run_options()?;
        let mut stages = vec![Stage::cic(self.cic.name.clone(), self.input.rate_hz, cic.clone(), opts)];
        for (section, edge) in self.fir.iter().zip(&band_plan.stages[1..]) {
            let filter = self.design_fir(section, edge.fs_in_hz, &cic)?;
            stages.push(Stage::fir(section.name.clone(), filter));
        }
        let chain = Chain::new(self.input.rate_hz, stages)?;
        let a = &self.analysis;
        if !(a.band_hz > 0.0 && a.band_hz <= chain.output_rate() / 2.0) {
            return Err(Error::config(format!(
                "analysis.band_hz {} must lie in (0, {}] (output Nyquist)",
                a.band_hz,
                chain.output_rate() / 2.0
            )));
        }
        if !a.n_fft.is_power_of_two() {
            return Err(Error::config(format!("analysis.n_fft {} must be a power of two", a.n_fft)));
        }
        Ok(ChainPlan {
            chain,
            band_plan,
            modulator: self.modulator(),
            analysis: a.clone(),
        })
    }

    fn design_fir(&self, s: &FirSection, fs_in: f64, cic: &CicConfig) -> Result<FirFilter> {
        let stage = |e: Error| {
            let msg = match e {
                Error::Config(m) | Error::Design(m) => m,
                other => other.to_string(),
            };
            Error::config(format!("stage '{}': {msg}", s.name))
        };
        let mut filter = match s.kind.as_str() {
            "halfband" => {
                if s.decim != 2 {
                    return Err(stage(Error::config("half-band stages decimate by 2")));
                }
                let implied_stop = fs_in / 2.0 - s.passband_hz;
                if implied_stop > s.stopband_hz + 1e-9 {
                    return Err(stage(Error::config(format!(
                        "half-band stop edge {implied_stop} Hz exceeds requested stopband {} Hz",
                        s.stopband_hz
                    ))));
                }
                design_halfband(s.passband_hz, fs_in, s.atten_db).map_err(stage)?
            }
            "droop" => {
                let taps = s
                    .taps
                    .ok_or_else(|| stage(Error::config("droop stage needs `taps`")))?;
                let mut f = design_droop_correction(
                    cic.params(),
                    self.input.rate_hz,
                    s.passband_hz,
                    s.stopband_hz,
                    fs_in,
                    taps,
                )
                .map_err(stage)?;
                f.decim = s.decim;
                f
            }
            "custom" => {
                let coeffs = s
                    .coeffs
                    .clone()
                    .ok_or_else(|| stage(Error::config("custom stage needs `coeffs`")))?;
                let mut f = FirFilter::new(coeffs, fs_in, s.decim).map_err(stage)?;
                f.kind = FirKind::Generic;
                f
            }
            other => {
                return Err(stage(Error::config(format!(
                    "unknown kind \"{other}\" (expected halfband, droop or custom)"
                ))))
            }
        };
        if let Some(w) = s.coeff_width {
            filter = filter.quantized(w).map_err(stage)?;
        }
        Ok(filter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyResponse;

    #[test]
    fn baseline_file_builds_expected_chain() {
        let file = ChainConfigFile::baseline();
        let plan = file.build().unwrap();
        let c = &plan.chain;
        assert_eq!(c.total_decimation(), 128);
        assert_eq!(c.output_rate(), 48_000.0);
        let (cic, opts) = c.cic().unwrap();
        assert_eq!(cic.schedule().widths(), &[25, 22, 20, 18, 16]);
        assert_eq!(cic.schedule().comb_width(), 16);
        assert_eq!(opts.precision, Precision::Truncated);
        assert_eq!(plan.modulator, Some(SdmCoefficients::frozen()));
        let names: Vec<&str> = c.stages().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["cic", "hb1", "droop", "hb2"]);
        assert_eq!(plan.band_plan, BandPlan::baseline());
    }

    #[test]
    fn serialization_round_trip() {
        let file = ChainConfigFile::baseline();
        assert_eq!(ChainConfigFile::parse(&file.to_toml()).unwrap(), file);
    }

    #[test]
    fn rejects_wrong_format_and_version() {
        let text = BASELINE_CHAIN.replace("format = \"decim-chain\"", "format = \"other\"");
        assert!(ChainConfigFile::parse(&text).unwrap_err().to_string().contains("format"));
        let text = BASELINE_CHAIN.replace("version = 1", "version = 2");
        assert!(ChainConfigFile::parse(&text).unwrap_err().to_string().contains("version"));
        let err = ChainConfigFile::parse("format = \"decim-chain\"\nversion = 1\nbogus = 3\n").unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Config);
    }

    #[test]
    fn rate_mismatch_is_named() {
        let mut file = ChainConfigFile::baseline();
        file.fir[2].fs_in_hz = Some(192_000.0);
        let msg = file.build().unwrap_err().to_string();
        assert!(msg.contains("'droop'") && msg.contains("'hb2'"), "{msg}");
    }

    #[test]
    fn stopband_beyond_nyquist_is_named() {
        let mut file = ChainConfigFile::baseline();
        file.fir[0].stopband_hz = 200_000.0;
        let msg = file.build().unwrap_err().to_string();
        assert!(msg.contains("'hb1'") && msg.contains("fs/2"), "{msg}");
    }

    #[test]
    fn infeasible_fir_is_a_config_error() {
        let mut file = ChainConfigFile::baseline();
        file.fir[0].passband_hz = 95_990.0;
        file.fir[0].stopband_hz = 96_010.0;
        let err = file.build().unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Config);
        assert!(err.to_string().contains("'hb1'"));
    }

    #[test]
    fn default_schedule_when_omitted() {
        let mut file = ChainConfigFile::baseline();
        file.cic.schedule = None;
        let cfg = file.cic_config().unwrap();
        assert_eq!(cfg.schedule().widths(), &[25, 22, 20, 18, 16]);
    }

    #[test]
    fn custom_stage_and_disabled_modulator() {
        let mut file = ChainConfigFile::baseline();
        file.modulator.as_mut().unwrap().enabled = false;
        file.fir.push(FirSection {
            name: "avg".into(),
            kind: "custom".into(),
            fs_in_hz: None,
            passband_hz: 1_000.0,
            stopband_hz: 24_000.0,
            atten_db: 100.0,
            taps: None,
            decim: 1,
            coeff_width: None,
            coeffs: Some(vec![0.5, 0.5]),
        });
        let plan = file.build().unwrap();
        assert!(plan.modulator.is_none());
        let avg = plan.chain.stage("avg").unwrap();
        assert!(avg.magnitude(24_000.0) < 1e-12);
    }
}
