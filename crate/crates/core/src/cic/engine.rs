use std::collections::VecDeque;

use super::{pipeline_latency, CicConfig};
use crate::arith::{truncate_keep_msbs, Adder, BitWord};
use crate::error::{Error, Result};
use crate::stream::SampleStream;

/// Register word lengths used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Every register is the full register width.
    #[default]
    Full,
    /// Integrator stages follow the truncation schedule, combs run at the
    /// comb width.
    Truncated,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_precision" => Ok(Precision::Full),
            "truncated" => Ok(Precision::Truncated),
            other => Err(Error::config(format!(
                "unknown mode '{other}' (expected full or truncated)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub precision: Precision,
    pub pipelined: bool,
    pub adder: Adder,
    /// Record per-cycle register snapshots for the first `n` input cycles.
    pub trace_cycles: Option<usize>,
}

/// Register contents after one input-rate clock cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSnapshot {
    pub cycle: u64,
    pub integrators: Vec<BitWord>,
    /// Pipelined: downsampler register followed by the N comb registers.
    /// Direct form: the N comb outputs of the most recent output sample.
    pub combs: Vec<BitWord>,
    /// Input cycles since the last downsampler capture, modulo R.
    pub phase: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineTrace {
    pub cycles: Vec<CycleSnapshot>,
}

/// Cycle-level CIC state machine.
///
/// Direct form: each input cycle ripples through all N integrators, every
/// R-th integrator output (phase 0) runs combinationally through the N
/// combs. Pipelined form: integrator `k + 1` adds the previous-cycle value of
/// integrator `k`, so the accumulators double as pipeline registers; the
/// downsampler and every comb have an output register. The pipelined output
/// is the direct-form output delayed by [`pipeline_latency`] output samples.
#[derive(Debug, Clone)]
pub struct CicDecimator {
    opts: RunOptions,
    decimation: u32,
    input_width: u32,
    stage_widths: Vec<u32>,
    comb_width: u32,
    capture_phase: u32,
    integrators: Vec<BitWord>,
    comb_history: Vec<VecDeque<BitWord>>,
    /// Pipelined: downsampler register then comb registers. Direct form:
    /// last comb outputs (observability only).
    comb_regs: Vec<BitWord>,
    cycle: u64,
    trace: PipelineTrace,
}

impl CicDecimator {
    pub fn new(cfg: &CicConfig, opts: RunOptions) -> Self {
        let p = cfg.params();
        let n = p.stages as usize;
        let (stage_widths, comb_width) = match opts.precision {
            Precision::Full => (vec![cfg.register_width(); n], cfg.register_width()),
            Precision::Truncated => (cfg.schedule().widths().to_vec(), cfg.schedule().comb_width()),
        };
        let zero = |w: u32| BitWord::zero(w).expect("validated width");
        let integrators = stage_widths.iter().map(|&w| zero(w)).collect();
        let comb_history = (0..n)
            .map(|_| std::iter::repeat_n(zero(comb_width), p.diff_delay as usize).collect())
            .collect();
        let regs = if opts.pipelined { n + 1 } else { n };
        let capture_phase = if opts.pipelined {
            (p.stages - 1) % p.decimation
        } else {
            0
        };
        CicDecimator {
            opts,
            decimation: p.decimation,
            input_width: p.input_width,
            stage_widths,
            comb_width,
            capture_phase,
            integrators,
            comb_history,
            comb_regs: vec![zero(comb_width); regs],
            cycle: 0,
            trace: PipelineTrace::default(),
        }
    }

    /// Number of bits the output LSB sits above the full-precision LSB.
    pub fn output_shift(&self) -> u32 {
        self.stage_widths[0] - self.comb_width
    }

    pub fn comb_width(&self) -> u32 {
        self.comb_width
    }

    /// Feeds one input-rate sample; returns an output-rate sample on
    /// downsampler cycles.
    pub fn push(&mut self, x: i64) -> Result<Option<BitWord>> {
        let index = self.cycle as usize;
        let input = BitWord::new(self.input_width, x)
            .map_err(|_| Error::InputRange {
                index,
                value: x,
                width: self.input_width,
            })?
            .sign_extend(self.stage_widths[0])?;
        let adder = self.opts.adder;

        if self.opts.pipelined {
            // all integrators update from the previous cycle's registers
            let prev = self.integrators.clone();
            self.integrators[0] = adder.add(prev[0], input)?;
            for k in 1..prev.len() {
                let feed = truncate_keep_msbs(prev[k - 1], self.stage_widths[k])?;
                self.integrators[k] = adder.add(prev[k], feed)?;
            }
        } else {
            let mut feed = input;
            for k in 0..self.integrators.len() {
                feed = truncate_keep_msbs(feed, self.stage_widths[k])?;
                self.integrators[k] = adder.add(self.integrators[k], feed)?;
                feed = self.integrators[k];
            }
        }

        let phase = (self.cycle % self.decimation as u64) as u32;
        let out = if phase == self.capture_phase {
            let last = *self.integrators.last().unwrap();
            let captured = truncate_keep_msbs(last, self.comb_width)?;
            Some(if self.opts.pipelined {
                self.clock_comb_registers(captured)?
            } else {
                self.run_combs(captured)?
            })
        } else {
            None
        };

        if let Some(limit) = self.opts.trace_cycles {
            if (self.cycle as usize) < limit {
                self.trace.cycles.push(CycleSnapshot {
                    cycle: self.cycle,
                    integrators: self.integrators.clone(),
                    combs: self.comb_regs.clone(),
                    phase: (phase + self.decimation - self.capture_phase) % self.decimation,
                });
            }
        }
        self.cycle += 1;
        Ok(out)
    }

    fn run_combs(&mut self, sample: BitWord) -> Result<BitWord> {
        let mut x = sample;
        for (k, history) in self.comb_history.iter_mut().enumerate() {
            let delayed = history.pop_front().expect("M >= 1");
            history.push_back(x);
            x = self.opts.adder.sub(x, delayed)?;
            self.comb_regs[k] = x;
        }
        Ok(x)
    }

    /// One output-rate clock edge of the registered comb section. Returns the
    /// value presented on the output port during this cycle.
    fn clock_comb_registers(&mut self, captured: BitWord) -> Result<BitWord> {
        let n = self.comb_history.len();
        let out = self.comb_regs[n];
        for k in (0..n).rev() {
            let input = self.comb_regs[k];
            let history = &mut self.comb_history[k];
            let delayed = history.pop_front().expect("M >= 1");
            history.push_back(input);
            self.comb_regs[k + 1] = self.opts.adder.sub(input, delayed)?;
        }
        self.comb_regs[0] = captured;
        Ok(out)
    }

    pub fn take_trace(&mut self) -> PipelineTrace {
        std::mem::take(&mut self.trace)
    }
}

/// Output of [`run_cic`].
#[derive(Debug, Clone)]
pub struct CicRun {
    /// Integer output at the comb width, rate = input rate / R.
    pub output: SampleStream,
    pub trace: Option<PipelineTrace>,
    /// Output LSB weight relative to the full-precision LSB, as a shift.
    pub output_shift: u32,
    /// Multiplier mapping an output integer to a full-scale-normalized value
    /// (unity DC gain). Exact when (R·M)^N is a power of two.
    pub gain_normalization: f64,
    /// Output samples of pipeline fill, see [`pipeline_latency`].
    pub latency: usize,
}

impl CicRun {
    pub fn values(&self) -> &[i64] {
        self.output.as_int().expect("CIC output is integer")
    }

    /// Output rescaled to the full-precision LSB.
    pub fn full_scale_values(&self) -> Vec<i128> {
        self.values()
            .iter()
            .map(|&v| (v as i128) << self.output_shift)
            .collect()
    }

    pub fn normalized(&self) -> SampleStream {
        let k = self.gain_normalization;
        SampleStream::real(
            self.output.rate_hz,
            self.values().iter().map(|&v| v as f64 * k).collect(),
        )
    }
}

/// Runs a whole stream through a fresh decimator.
pub fn run_cic(cfg: &CicConfig, input: &SampleStream, opts: RunOptions) -> Result<CicRun> {
    let values = input.as_int().ok_or_else(|| {
        Error::contract("CIC input must be an integer stream; quantize real signals first")
    })?;
    let mut dec = CicDecimator::new(cfg, opts);
    let mut out = Vec::with_capacity(values.len() / cfg.params().decimation as usize + 1);
    for &x in values {
        if let Some(y) = dec.push(x)? {
            out.push(y.value());
        }
    }
    let output_shift = dec.output_shift();
    let p = cfg.params();
    let gain_normalization =
        2f64.powi(output_shift as i32) / (cfg.growth().g_max as f64 * 2f64.powi(p.input_width as i32 - 1));
    let trace = opts.trace_cycles.map(|_| dec.take_trace());
    Ok(CicRun {
        output: SampleStream::int(input.rate_hz / p.decimation as f64, dec.comb_width(), out)?,
        trace,
        output_shift,
        gain_normalization,
        latency: if opts.pipelined { pipeline_latency(p) } else { 0 },
    })
}
