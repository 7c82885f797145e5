//! Python module `decim`: CIC design and simulation, the lookahead adder,
//! FIR design, the modulator and SNR measurement.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use decim_core::arith::{cla_add as core_cla_add, Adder, BitWord};
use decim_core::cic::{self, CicParams, Precision, RunOptions, TruncationSchedule};
use decim_core::config::ChainConfigFile;
use decim_core::source::SdModulator;
use decim_core::spectral;
use decim_core::stream::SampleStream;

fn err(e: decim_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_options(mode: &str, pipelined: bool, adder: &str) -> decim_core::Result<RunOptions> {
    Ok(RunOptions {
        precision: mode.parse::<Precision>()?,
        pipelined,
        adder: adder.parse::<Adder>()?,
        trace_cycles: None,
    })
}

/// CIC decimator parameters, register widths and truncation schedule.
#[pyclass(name = "CicConfig", module = "decim", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCicConfig {
    inner: cic::CicConfig,
}

#[pymethods]
impl PyCicConfig {
    #[new]
    #[pyo3(signature = (stages=5, diff_delay=1, decimation=16, input_width=5, output_width=16, schedule=None))]
    fn new(
        stages: u32,
        diff_delay: u32,
        decimation: u32,
        input_width: u32,
        output_width: u32,
        schedule: Option<Vec<u32>>,
    ) -> PyResult<Self> {
        let params = CicParams::new(stages, diff_delay, decimation, input_width);
        let inner = match schedule {
            None => cic::CicConfig::new(params, output_width),
            Some(w) => TruncationSchedule::new(w, output_width).and_then(|s| cic::CicConfig::with_schedule(params, s)),
        }
        .map_err(err)?;
        Ok(PyCicConfig { inner })
    }

    /// N=5, M=1, R=16, 5-bit input, schedule 25/22/20/18 and 16-bit combs.
    #[staticmethod]
    fn baseline() -> Self {
        PyCicConfig {
            inner: cic::CicConfig::baseline(),
        }
    }

    #[getter]
    fn g_max(&self) -> u128 {
        self.inner.growth().g_max
    }

    #[getter]
    fn growth_bits(&self) -> u32 {
        self.inner.growth().growth_bits
    }

    #[getter]
    fn b_max(&self) -> u32 {
        self.inner.growth().b_max
    }

    #[getter]
    fn register_width(&self) -> u32 {
        self.inner.register_width()
    }

    #[getter]
    fn schedule(&self) -> Vec<u32> {
        self.inner.schedule().widths().to_vec()
    }

    #[getter]
    fn comb_width(&self) -> u32 {
        self.inner.schedule().comb_width()
    }

    #[getter]
    fn pipeline_latency(&self) -> usize {
        cic::pipeline_latency(self.inner.params())
    }

    /// Worst-case truncation error in full-precision LSBs.
    fn truncation_bound(&self) -> u128 {
        cic::truncation_error_bound(&self.inner)
    }

    #[pyo3(signature = (x, mode="full", pipelined=false, adder="wrap"))]
    fn run(&self, x: Vec<i64>, mode: &str, pipelined: bool, adder: &str) -> PyResult<Vec<i64>> {
        run_cic(self, x, mode, pipelined, adder)
    }

    fn __repr__(&self) -> String {
        let p = self.inner.params();
        format!(
            "CicConfig(stages={}, diff_delay={}, decimation={}, input_width={}, schedule={})",
            p.stages,
            p.diff_delay,
            p.decimation,
            p.input_width,
            self.inner.schedule()
        )
    }
}

/// `(g_max, growth_bits, b_max, register_width)`.
#[pyfunction]
#[pyo3(signature = (stages, diff_delay, decimation, input_width))]
fn register_growth(stages: u32, diff_delay: u32, decimation: u32, input_width: u32) -> PyResult<(u128, u32, u32, u32)> {
    let g = cic::register_growth(&CicParams::new(stages, diff_delay, decimation, input_width)).map_err(err)?;
    Ok((g.g_max, g.growth_bits, g.b_max, g.register_width))
}

/// `(integrator widths, comb width)`.
#[pyfunction]
fn default_schedule(
    stages: u32,
    diff_delay: u32,
    decimation: u32,
    input_width: u32,
    output_width: u32,
) -> PyResult<(Vec<u32>, u32)> {
    let s = cic::default_schedule(&CicParams::new(stages, diff_delay, decimation, input_width), output_width)
        .map_err(err)?;
    Ok((s.widths().to_vec(), s.comb_width()))
}

/// Integer CIC output at the comb width.
#[pyfunction]
#[pyo3(signature = (cfg, x, mode="full", pipelined=false, adder="wrap"))]
fn run_cic(cfg: &PyCicConfig, x: Vec<i64>, mode: &str, pipelined: bool, adder: &str) -> PyResult<Vec<i64>> {
    let opts = run_options(mode, pipelined, adder).map_err(err)?;
    let width = cfg.inner.params().input_width;
    let input = SampleStream::int(1.0, width, x).map_err(err)?;
    let run = cic::run_cic(&cfg.inner, &input, opts).map_err(err)?;
    Ok(run.values().to_vec())
}

/// Direct convolution with the CIC impulse response, decimated.
#[pyfunction]
fn reference_fir_decimate(cfg: &PyCicConfig, x: Vec<i64>) -> Vec<i128> {
    cic::reference_fir_decimate(cfg.inner.params(), &x)
}

/// `(sum, carry_out)` of two `width`-bit two's-complement values.
#[pyfunction]
#[pyo3(signature = (a, b, width, carry_in=false))]
fn cla_add(a: i64, b: i64, width: u32, carry_in: bool) -> PyResult<(i64, bool)> {
    let x = BitWord::new(width, a).map_err(err)?;
    let y = BitWord::new(width, b).map_err(err)?;
    let (s, c) = core_cla_add(x, y, carry_in).map_err(err)?;
    Ok((s.value(), c))
}

/// |H(f)| of the CIC at sample rate `fs`; `normalized` divides by the DC gain.
#[pyfunction]
#[pyo3(signature = (cfg, f, fs, normalized=false))]
fn cic_magnitude(cfg: &PyCicConfig, f: f64, fs: f64, normalized: bool) -> f64 {
    if normalized {
        spectral::cic_magnitude_normalized(cfg.inner.params(), f, fs)
    } else {
        spectral::cic_magnitude(cfg.inner.params(), f, fs)
    }
}

/// Half-band coefficients for the given passband edge and attenuation.
#[pyfunction]
#[pyo3(signature = (passband_hz, fs_in, atten_db=100.0))]
fn design_halfband(passband_hz: f64, fs_in: f64, atten_db: f64) -> PyResult<Vec<f64>> {
    Ok(decim_core::fir::design_halfband(passband_hz, fs_in, atten_db)
        .map_err(err)?
        .coeffs)
}

/// SNR (dB) of a tone at `f0` within `[0, band_hz]`, from the last `n_fft`
/// samples.
#[pyfunction]
fn measure_snr(x: Vec<f64>, fs: f64, f0: f64, band_hz: f64, n_fft: usize) -> PyResult<f64> {
    let s = SampleStream::real(fs, x);
    let r = spectral::measure_snr(&s.tail(n_fft), f0, (0.0, band_hz), Default::default(), n_fft).map_err(err)?;
    Ok(r.snr_db)
}

/// 5-bit modulator output for a real input (fractions of full scale).
#[pyfunction]
fn modulate(x: Vec<f64>) -> PyResult<Vec<i64>> {
    let out = SdModulator::default().modulate(&SampleStream::real(1.0, x)).map_err(err)?;
    Ok(out.as_int().expect("modulator output is integer").to_vec())
}

/// Runs integer input through a chain file (the bundled plan by default).
#[pyfunction]
#[pyo3(signature = (x, config=None))]
fn run_chain(x: Vec<i64>, config: Option<&str>) -> PyResult<Vec<f64>> {
    let file = match config {
        Some(path) => ChainConfigFile::load(path),
        None => Ok(ChainConfigFile::baseline()),
    }
    .map_err(err)?;
    let plan = file.build().map_err(err)?;
    let (cfg, _) = plan.chain.cic().expect("plan starts with a CIC");
    let input = SampleStream::int(plan.chain.input_rate(), cfg.params().input_width, x).map_err(err)?;
    let run = decim_core::chain::run_chain(&plan.chain, &input).map_err(err)?;
    Ok(run.output.to_full_scale())
}

#[pymodule]
fn decim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCicConfig>()?;
    m.add_function(wrap_pyfunction!(register_growth, m)?)?;
    m.add_function(wrap_pyfunction!(default_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_cic, m)?)?;
    m.add_function(wrap_pyfunction!(reference_fir_decimate, m)?)?;
    m.add_function(wrap_pyfunction!(cla_add, m)?)?;
    m.add_function(wrap_pyfunction!(cic_magnitude, m)?)?;
    m.add_function(wrap_pyfunction!(design_halfband, m)?)?;
    m.add_function(wrap_pyfunction!(measure_snr, m)?)?;
    m.add_function(wrap_pyfunction!(modulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_parse() {
        let o = run_options("truncated", true, "cla").unwrap();
        assert_eq!(o.precision, Precision::Truncated);
        assert!(o.pipelined);
        assert_eq!(o.adder, Adder::Cla);
        assert!(run_options("exact", false, "wrap").is_err());
    }
}
