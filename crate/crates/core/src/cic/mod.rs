//! Cascaded integrator-comb decimator.
//!
//! [`CicParams`] holds the structural parameters (N stages, differential
//! delay M, decimation R, input width). [`CicConfig`] adds the output width
//! and the per-stage truncation schedule. All widths in a schedule are
//! MSB-aligned: a stage of width `w` holds the top `w` bits of the
//! full-precision register.

mod engine;
mod reference;

pub use engine::{run_cic, CicDecimator, CicRun, CycleSnapshot, PipelineTrace, Precision, RunOptions};
pub use reference::{
    exact_recursive_cic, impulse_response, pipeline_latency, reference_fir_decimate,
    truncation_error_bound,
};

use crate::arith::MAX_WIDTH;
use crate::error::{Error, Result};

/// Structural CIC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CicParams {
    pub stages: u32,
    pub diff_delay: u32,
    pub decimation: u32,
    pub input_width: u32,
}

impl CicParams {
    /// N = 5, M = 1, R = 16 with a 5-bit modulator input.
    pub const BASELINE: CicParams = CicParams {
        stages: 5,
        diff_delay: 1,
        decimation: 16,
        input_width: 5,
    };

    pub fn new(stages: u32, diff_delay: u32, decimation: u32, input_width: u32) -> Self {
        CicParams {
            stages,
            diff_delay,
            decimation,
            input_width,
        }
    }

    /// Boxcar length R·M.
    pub fn rm(&self) -> u64 {
        self.decimation as u64 * self.diff_delay as u64
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stages (N)", self.stages),
            ("differential delay (M)", self.diff_delay),
            ("decimation (R)", self.decimation),
            ("input width (B_in)", self.input_width),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Register growth of a CIC configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthReport {
    /// (R·M)^N
    pub g_max: u128,
    /// ceil(N·log2(R·M)), computed as the bit length of `g_max - 1`.
    pub growth_bits: u32,
    /// Zero-based index of the output MSB.
    pub b_max: u32,
    /// Physical register width, `b_max + 1`.
    pub register_width: u32,
}

/// Worst-case register growth (R·M)^N and the register width it implies.
pub fn register_growth(params: &CicParams) -> Result<GrowthReport> {
    params.validate()?;
    let rm = params.rm() as u128;
    let g_max = rm.checked_pow(params.stages).ok_or_else(|| {
        Error::config(format!(
            "register growth (R*M)^N = {rm}^{} overflows; N*log2(R*M) + B_in must be <= {MAX_WIDTH}",
            params.stages
        ))
    })?;
    let growth_bits = if g_max <= 1 {
        0
    } else {
        128 - (g_max - 1).leading_zeros()
    };
    let register_width = growth_bits + params.input_width;
    if register_width > MAX_WIDTH {
        return Err(Error::config(format!(
            "register width {register_width} exceeds the {MAX_WIDTH}-bit cap \
             (N*log2(R*M) = {growth_bits}, B_in = {})",
            params.input_width
        )));
    }
    Ok(GrowthReport {
        g_max,
        growth_bits,
        b_max: register_width - 1,
        register_width,
    })
}

/// Per-stage integrator widths and the comb-section width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncationSchedule {
    widths: Vec<u32>,
    comb_width: u32,
}

impl TruncationSchedule {
    pub fn new(widths: Vec<u32>, comb_width: u32) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::config("truncation schedule is empty"));
        }
        if let Some(&bad) = widths.iter().find(|&&w| w == 0 || w > MAX_WIDTH) {
            return Err(Error::config(format!("schedule width {bad} outside 1..={MAX_WIDTH}")));
        }
        if !(1..=MAX_WIDTH).contains(&comb_width) {
            return Err(Error::config(format!("comb width {comb_width} outside 1..={MAX_WIDTH}")));
        }
        if let Some(pos) = widths.windows(2).position(|p| p[1] > p[0]) {
            return Err(Error::config(format!(
                "schedule must be non-increasing: stage {} is {} bits, stage {} is {} bits",
                pos + 1,
                widths[pos],
                pos + 2,
                widths[pos + 1]
            )));
        }
        let last = *widths.last().unwrap();
        if comb_width > last {
            return Err(Error::config(format!(
                "comb width {comb_width} exceeds last integrator width {last}"
            )));
        }
        Ok(TruncationSchedule { widths, comb_width })
    }

    pub fn widths(&self) -> &[u32] {
        &self.widths
    }

    pub fn comb_width(&self) -> u32 {
        self.comb_width
    }
}

impl std::fmt::Display for TruncationSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ws: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(f, "[{}] comb {}", ws.join(","), self.comb_width)
    }
}

/// Truncation schedule from the full register width down to `output_width`.
///
/// The first stage keeps the full register. The total drop is spread over
/// the remaining N-1 stage boundaries as evenly as possible, earlier
/// boundaries taking the larger share. For N=5, R=16, M=1, B_in=5 and a
/// 16-bit output this gives `[25, 22, 20, 18, 16]`.
pub fn default_schedule(params: &CicParams, output_width: u32) -> Result<TruncationSchedule> {
    let growth = register_growth(params)?;
    let rw = growth.register_width;
    if output_width == 0 || output_width > rw {
        return Err(Error::config(format!(
            "output width {output_width} must lie in 1..={rw} (register width)"
        )));
    }
    let n = params.stages as usize;
    let mut widths = vec![rw; n];
    if n > 1 {
        let boundaries = (n - 1) as u32;
        let drop = rw - output_width;
        let (base, extra) = (drop / boundaries, drop % boundaries);
        for k in 1..n {
            let step = base + u32::from(((k - 1) as u32) < extra);
            widths[k] = widths[k - 1] - step;
        }
    }
    TruncationSchedule::new(widths, output_width)
}

/// A complete CIC configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CicConfig {
    params: CicParams,
    growth: GrowthReport,
    schedule: TruncationSchedule,
}

impl CicConfig {
    /// Configuration with the default truncation schedule.
    pub fn new(params: CicParams, output_width: u32) -> Result<Self> {
        let schedule = default_schedule(&params, output_width)?;
        Self::with_schedule(params, schedule)
    }

    pub fn with_schedule(params: CicParams, schedule: TruncationSchedule) -> Result<Self> {
        let growth = register_growth(&params)?;
        if schedule.widths.len() != params.stages as usize {
            return Err(Error::config(format!(
                "schedule has {} widths but the filter has {} stages",
                schedule.widths.len(),
                params.stages
            )));
        }
        if schedule.widths[0] != growth.register_width {
            return Err(Error::config(format!(
                "first integrator width {} must equal the register width {}",
                schedule.widths[0], growth.register_width
            )));
        }
        Ok(CicConfig {
            params,
            growth,
            schedule,
        })
    }

    /// Skips the schedule checks. Used only to inject faults into the
    /// verification suite; the resulting filter is allowed to be wrong.
    #[doc(hidden)]
    pub fn with_schedule_unchecked(params: CicParams, schedule: TruncationSchedule) -> Result<Self> {
        let growth = register_growth(&params)?;
        Ok(CicConfig {
            params,
            growth,
            schedule,
        })
    }

    /// N=5, M=1, R=16, 5-bit input, 16-bit output, schedule 25/22/20/18/16.
    pub fn baseline() -> Self {
        Self::new(CicParams::BASELINE, 16).expect("baseline configuration is valid")
    }

    pub fn params(&self) -> &CicParams {
        &self.params
    }

    pub fn growth(&self) -> &GrowthReport {
        &self.growth
    }

    pub fn schedule(&self) -> &TruncationSchedule {
        &self.schedule
    }

    pub fn register_width(&self) -> u32 {
        self.growth.register_width
    }

    pub fn output_width(&self) -> u32 {
        self.schedule.comb_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_growth() {
        let g = register_growth(&CicParams::BASELINE).unwrap();
        assert_eq!(g.g_max, 1_048_576);
        assert_eq!(g.b_max, 24);
        assert_eq!(g.register_width, 25);
    }

    #[test]
    fn small_growth_examples() {
        let g = register_growth(&CicParams::new(1, 1, 2, 1)).unwrap();
        assert_eq!((g.g_max, g.b_max, g.register_width), (2, 1, 2));
        let g = register_growth(&CicParams::new(3, 2, 4, 4)).unwrap();
        assert_eq!((g.g_max, g.b_max, g.register_width), (512, 12, 13));
        // non power of two: 3^2 = 9 needs 4 growth bits
        let g = register_growth(&CicParams::new(2, 1, 3, 2)).unwrap();
        assert_eq!((g.g_max, g.growth_bits, g.register_width), (9, 4, 6));
        let g = register_growth(&CicParams::new(4, 1, 1, 3)).unwrap();
        assert_eq!((g.g_max, g.register_width), (1, 3));
    }

    #[test]
    fn growth_cap() {
        let err = register_growth(&CicParams::new(8, 1, 256, 1)).unwrap_err();
        assert!(err.to_string().contains("64-bit cap"), "{err}");
        assert!(register_growth(&CicParams::new(7, 1, 256, 8)).is_ok());
        assert!(register_growth(&CicParams::new(40, 2, 1 << 20, 1)).is_err());
        assert!(register_growth(&CicParams::new(0, 1, 16, 5)).is_err());
        assert!(register_growth(&CicParams::new(5, 1, 16, 0)).is_err());
    }

    #[test]
    fn baseline_schedule() {
        let s = default_schedule(&CicParams::BASELINE, 16).unwrap();
        assert_eq!(s.widths(), &[25, 22, 20, 18, 16]);
        assert_eq!(s.comb_width(), 16);
        assert_eq!(CicConfig::baseline().schedule(), &s);
    }

    #[test]
    fn schedule_rules() {
        let s = default_schedule(&CicParams::BASELINE, 25).unwrap();
        assert_eq!(s.widths(), &[25; 5]);
        // N=2: register width 10 from 2*log2(4) + 6
        let p = CicParams::new(2, 1, 4, 6);
        assert_eq!(register_growth(&p).unwrap().register_width, 10);
        let s = default_schedule(&p, 8).unwrap();
        assert_eq!((s.widths(), s.comb_width()), (&[10u32, 8][..], 8));
        let s = default_schedule(&CicParams::new(1, 1, 8, 4), 5).unwrap();
        assert_eq!((s.widths(), s.comb_width()), (&[7u32][..], 5));
        assert!(default_schedule(&CicParams::BASELINE, 26).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(TruncationSchedule::new(vec![25, 26], 16).is_err());
        assert!(TruncationSchedule::new(vec![25, 20], 21).is_err());
        assert!(TruncationSchedule::new(vec![], 1).is_err());
        let s = TruncationSchedule::new(vec![24, 22, 20, 18, 16], 16).unwrap();
        assert!(CicConfig::with_schedule(CicParams::BASELINE, s.clone()).is_err());
        assert!(CicConfig::with_schedule_unchecked(CicParams::BASELINE, s).is_ok());
        let s = TruncationSchedule::new(vec![25, 22], 16).unwrap();
        assert!(CicConfig::with_schedule(CicParams::BASELINE, s).is_err());
    }
}
