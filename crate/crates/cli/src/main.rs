//! `decim`: design, simulate and analyse the decimation chain.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decim_core::analysis::end_to_end;
use decim_core::arith::max_value;
use decim_core::chain::{run_chain, Stage, StageKind};
use decim_core::cic::{pipeline_latency, truncation_error_bound, CicConfig, CicParams};
use decim_core::config::{ChainConfigFile, ChainPlan};
use decim_core::source::{gen_impulse, gen_prbs, gen_sine, gen_step, quantize, SdModulator};
use decim_core::spectral::{droop_report, linear_grid, log_grid, measure_snr, to_db, FrequencyResponse, GainPoint};
use decim_core::stream::SampleStream;
use decim_core::verify::{run_suite, Fault, Suite, VerifyOptions};
use decim_core::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "decim", version, about = "Sigma-delta decimation chain: design, simulation and analysis")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Chain file; defaults to the bundled four-stage plan.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, value_name = "BOOL")]
    pipelined: Option<bool>,
    #[arg(long, global = true, value_enum)]
    adder: Option<AdderArg>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AdderArg {
    Wrap,
    Cla,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Full,
    Truncated,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Bin,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print register growth, truncation schedule and FIR designs.
    Design(DesignArgs),
    /// Run an input through the chain and write the output stream.
    Simulate(SimulateArgs),
    /// Write the magnitude response of one stage or the whole chain.
    Response(ResponseArgs),
    /// Measure the SNR of a sine through the chain.
    Snr(SnrArgs),
    /// Run the oracle-equivalence checks on the configured CIC.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// CIC stages; any CIC override restricts the report to the CIC.
    #[arg(long)]
    n: Option<u32>,
    /// Differential delay.
    #[arg(long)]
    m: Option<u32>,
    /// Decimation factor.
    #[arg(long)]
    r: Option<u32>,
    /// Input width in bits.
    #[arg(long)]
    bin: Option<u32>,
    /// Output (comb) width in bits.
    #[arg(long)]
    out_width: Option<u32>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// impulse, step, prbs, sine:FREQ_HZ:AMPLITUDE or file:PATH
    #[arg(long, default_value = "impulse")]
    input: String,
    /// Input-rate samples to generate.
    #[arg(long, default_value_t = 131_072)]
    samples: usize,
    /// Also write every intermediate stage output.
    #[arg(long)]
    stage_taps: bool,
    #[arg(long, value_enum, default_value = "bin")]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct ResponseArgs {
    /// Stage name, or `chain` for the cascade.
    #[arg(long, default_value = "chain")]
    stage: String,
    /// linear:POINTS or log:POINTS
    #[arg(long, default_value = "linear:4097")]
    grid: String,
    /// Upper grid frequency; defaults to the stage's input Nyquist rate.
    #[arg(long)]
    f_max: Option<f64>,
}

#[derive(Args, Debug)]
struct SnrArgs {
    /// FREQ_HZ:AMPLITUDE (amplitude as a fraction of full scale).
    #[arg(long)]
    sine: Option<String>,
    /// Measure this stream directly instead of running the chain.
    #[arg(long, value_name = "file:PATH")]
    input: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "fast")]
    suite: SuiteArg,
    /// Deliberately break the configuration: width-off-by-one.
    #[arg(long)]
    inject_fault: Option<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
    Verify(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (prefix, msg, code) = match self {
            Failure::Config(m) => ("config-error", m, 2),
            Failure::Runtime(m) => ("runtime-error", m, 3),
            Failure::Verify(m) => ("verify-failed", m, 4),
        };
        eprintln!("{prefix}: {}", msg.replace('\n', " "));
        ExitCode::from(code)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.kind() {
            ErrorKind::Config => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("usage-error: {line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    let file = load_config(g)?;
    match &cli.command {
        Command::Design(a) => cmd_design(g, file, a),
        Command::Simulate(a) => cmd_simulate(g, &file, a),
        Command::Response(a) => cmd_response(g, &file, a),
        Command::Snr(a) => cmd_snr(g, file, a),
        Command::Verify(a) => cmd_verify(g, &file, a),
    }
}

fn load_config(g: &GlobalArgs) -> Result<ChainConfigFile, Failure> {
    let mut file = match &g.config {
        Some(path) => ChainConfigFile::load(path)?,
        None => ChainConfigFile::baseline(),
    };
    if let Some(p) = g.pipelined {
        file.cic.pipelined = p;
    }
    if let Some(a) = g.adder {
        file.cic.adder = match a {
            AdderArg::Wrap => "wrap",
            AdderArg::Cla => "cla",
        }
        .into();
    }
    if let Some(m) = g.mode {
        file.cic.mode = match m {
            ModeArg::Full => "full",
            ModeArg::Truncated => "truncated",
        }
        .into();
    }
    Ok(file)
}

fn out_dir(g: &GlobalArgs) -> Result<Option<&Path>, Failure> {
    match &g.out {
        None => Ok(None),
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
            Ok(Some(dir.as_path()))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_cic(cfg: &CicConfig) {
    let p = cfg.params();
    let gr = cfg.growth();
    println!("cic: N={} M={} R={} B_in={}", p.stages, p.diff_delay, p.decimation, p.input_width);
    println!("g_max: {}", gr.g_max);
    println!("growth_bits: {}", gr.growth_bits);
    println!("b_max: {}", gr.b_max);
    println!("register_width: {}", gr.register_width);
    let widths: Vec<String> = cfg.schedule().widths().iter().map(u32::to_string).collect();
    println!("schedule: {}", widths.join("/"));
    println!("comb_width: {}", cfg.schedule().comb_width());
    println!("truncation_bound_lsb: {}", truncation_error_bound(cfg));
    println!("pipeline_latency: {}", pipeline_latency(p));
}

fn cmd_design(g: &GlobalArgs, file: ChainConfigFile, a: &DesignArgs) -> CliResult {
    let overridden = a.n.is_some() || a.m.is_some() || a.r.is_some() || a.bin.is_some() || a.out_width.is_some();
    if overridden {
        let c = &file.cic;
        let params = CicParams::new(
            a.n.unwrap_or(c.stages),
            a.m.unwrap_or(c.diff_delay),
            a.r.unwrap_or(c.decimation),
            a.bin.unwrap_or(c.input_width),
        );
        let growth = decim_core::cic::register_growth(&params)?;
        let out = a.out_width.unwrap_or(c.output_width.min(growth.register_width));
        print_cic(&CicConfig::new(params, out)?);
        return Ok(());
    }
    let plan = file.build()?;
    let (cic, _) = plan.chain.cic().expect("plan starts with a CIC");
    print_cic(cic);
    let dir = out_dir(g)?;
    for stage in plan.chain.stages() {
        if let StageKind::Fir(f) = &stage.kind {
            let atten = stage.image_attenuation_db(plan.analysis.band_hz, 2000);
            println!(
                "fir {}: kind={:?} taps={} fs_in={} decim={} image_atten_db={:.2}",
                stage.name,
                f.kind,
                f.taps(),
                f.fs_in,
                f.decim,
                atten
            );
            if let Some(dir) = dir {
                let path = dir.join(format!("{}.coeffs.csv", stage.name));
                let mut w = create(&path)?;
                f.write_csv(&mut w)?;
                w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
            }
        }
    }
    println!(
        "chain: {} -> {} Hz, decimation {}",
        plan.chain.input_rate(),
        plan.chain.output_rate(),
        plan.chain.total_decimation()
    );
    Ok(())
}

fn parse_sine(spec: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Config(format!("bad sine spec '{spec}' (expected FREQ_HZ:AMPLITUDE)"));
    let (f, a) = spec.split_once(':').ok_or_else(bad)?;
    Ok((f.parse().map_err(|_| bad())?, a.parse().map_err(|_| bad())?))
}

fn read_stream(path: &Path) -> Result<SampleStream, Failure> {
    let f = File::open(path).map_err(|e| Failure::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(f);
    let stream = if path.extension().is_some_and(|e| e == "csv") {
        SampleStream::read_csv(reader)?
    } else {
        SampleStream::read_binary(reader)?
    };
    Ok(stream)
}

/// Integer stream at the CIC input, from an `--input` spec.
fn build_input(plan: &ChainPlan, spec: &str, samples: usize, seed: u64) -> Result<SampleStream, Failure> {
    let fs = plan.chain.input_rate();
    let (cic, _) = plan.chain.cic().expect("plan starts with a CIC");
    let width = cic.params().input_width;
    let to_cic = |real: SampleStream| -> Result<SampleStream, Failure> {
        Ok(match plan.modulator {
            Some(c) => SdModulator::new(c).modulate(&real)?,
            None => quantize(&real, width)?,
        })
    };
    let stream = match spec {
        "impulse" => gen_impulse(samples, fs, width, 1)?,
        "step" => gen_step(samples, fs, width, max_value(width))?,
        "prbs" => {
            let s = (seed % 0xffff) as u16 + 1;
            gen_prbs(s, samples, fs)?
        }
        _ if spec.starts_with("sine:") => {
            let (f, a) = parse_sine(&spec[5..])?;
            to_cic(gen_sine(f, a, fs, samples, 0.0)?)?
        }
        _ if spec.starts_with("file:") => {
            let s = read_stream(Path::new(&spec[5..]))?;
            match s.as_int() {
                Some(_) => s,
                None => to_cic(s)?,
            }
        }
        other => {
            return Err(Failure::Config(format!(
                "unknown input '{other}' (expected impulse, step, prbs, sine:F:A or file:PATH)"
            )))
        }
    };
    Ok(stream)
}

fn write_stream(dir: &Path, name: &str, s: &SampleStream, format: FormatArg) -> Result<PathBuf, Failure> {
    let path = dir.join(match format {
        FormatArg::Bin => format!("{name}.dstr"),
        FormatArg::Csv => format!("{name}.csv"),
    });
    let mut w = create(&path)?;
    match format {
        FormatArg::Bin => s.write_binary(&mut w)?,
        FormatArg::Csv => s.write_csv(&mut w)?,
    }
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(path)
}

fn cmd_simulate(g: &GlobalArgs, file: &ChainConfigFile, a: &SimulateArgs) -> CliResult {
    let plan = file.build()?;
    let input = build_input(&plan, &a.input, a.samples, g.seed)?;
    let run = run_chain(&plan.chain, &input)?;
    let dir = out_dir(g)?;
    if a.stage_taps {
        for tap in &run.taps {
            let dest = match dir {
                Some(d) => write_stream(d, &format!("tap_{}", tap.name), &tap.stream, a.format)?
                    .display()
                    .to_string(),
                None => "-".into(),
            };
            println!(
                "tap {}: {} samples at {} Hz -> {dest}",
                tap.name,
                tap.stream.len(),
                tap.stream.rate_hz
            );
        }
    }
    let dest = match dir {
        Some(d) => write_stream(d, "output", &run.output, a.format)?.display().to_string(),
        None => "-".into(),
    };
    println!("output: {} samples at {} Hz -> {dest}", run.output.len(), run.output.rate_hz);
    Ok(())
}

fn parse_grid(spec: &str, f_max: f64) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(format!("bad grid '{spec}' (expected linear:POINTS or log:POINTS)"));
    let (kind, n) = spec.split_once(':').ok_or_else(bad)?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(bad());
    }
    match kind {
        "linear" => Ok(linear_grid(f_max, n)),
        "log" => Ok(log_grid(f_max / 1e4, f_max, n)),
        _ => Err(bad()),
    }
}

fn cmd_response(g: &GlobalArgs, file: &ChainConfigFile, a: &ResponseArgs) -> CliResult {
    let plan = file.build()?;
    let stages: Vec<&Stage> = if a.stage == "chain" {
        plan.chain.stages().iter().collect()
    } else {
        let s = plan.chain.stage(&a.stage).ok_or_else(|| {
            let names: Vec<&str> = plan.chain.stages().iter().map(|s| s.name.as_str()).collect();
            Failure::Config(format!("unknown stage '{}' (stages: {}, chain)", a.stage, names.join(", ")))
        })?;
        vec![s]
    };
    let f_max = a.f_max.unwrap_or(stages[0].fs_in / 2.0);
    let grid = parse_grid(&a.grid, f_max)?;
    let responses: Vec<&dyn FrequencyResponse> = stages.iter().map(|s| *s as &dyn FrequencyResponse).collect();
    let dc_db = to_db(stages.iter().map(|s| s.magnitude(0.0)).product());
    let rows: Vec<GainPoint> = droop_report(&responses, &grid)
        .into_iter()
        .map(|p| GainPoint {
            freq_hz: p.freq_hz,
            gain_db: p.gain_db - dc_db,
        })
        .collect();
    let meta = format!("stage={} normalized=dc points={}", a.stage, rows.len());
    match out_dir(g)? {
        Some(dir) => {
            let path = dir.join(format!("response_{}.csv", a.stage));
            let mut w = create(&path)?;
            decim_core::spectral::write_gain_csv(&rows, &meta, &mut w)?;
            w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("response {}: {} points -> {}", a.stage, rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            decim_core::spectral::write_gain_csv(&rows, &meta, stdout.lock())?;
        }
    }
    Ok(())
}

fn cmd_snr(g: &GlobalArgs, mut file: ChainConfigFile, a: &SnrArgs) -> CliResult {
    if let Some(spec) = &a.sine {
        let (f, amp) = parse_sine(spec)?;
        file.analysis.signal_hz = f;
        file.analysis.amplitude = amp;
    }
    let plan = file.build()?;
    let (report, f0) = match &a.input {
        Some(spec) => {
            let path = spec
                .strip_prefix("file:")
                .ok_or_else(|| Failure::Config(format!("bad input '{spec}' (expected file:PATH)")))?;
            let stream = read_stream(Path::new(path))?;
            let an = &plan.analysis;
            let whole = match stream.len() {
                len if len.is_power_of_two() => len,
                len => len.next_power_of_two() / 2,
            };
            let n = an.n_fft.min(whole).max(2);
            let band = an.band_hz.min(stream.rate_hz / 2.0);
            let r = measure_snr(&stream.tail(n), an.signal_hz, (0.0, band), Default::default(), n)?;
            (r, an.signal_hz)
        }
        None if plan.analysis.amplitude == 0.0 => {
            // modulator idle noise would otherwise be reported as a tone
            println!("snr_db: -inf");
            return Err(Failure::Runtime("no signal (amplitude 0)".into()));
        }
        None => {
            let e = end_to_end(&plan)?;
            (e.report, e.test.f0)
        }
    };
    println!("signal_hz: {f0}");
    println!("snr_db: {:.4}", report.snr_db);
    println!("noise_floor_dbfs: {:.2}", report.noise_floor_dbfs());
    if let Some(dir) = out_dir(g)? {
        let path = dir.join("snr_spectrum.csv");
        let mut w = create(&path)?;
        report.spectrum.write_csv(&mut w)?;
        w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("spectrum: {}", path.display());
    }
    if !report.has_signal() {
        return Err(Failure::Runtime(format!("no signal at {f0} Hz")));
    }
    Ok(())
}

fn cmd_verify(g: &GlobalArgs, file: &ChainConfigFile, a: &VerifyArgs) -> CliResult {
    let cfg = file.cic_config()?;
    let fault = match &a.inject_fault {
        None => None,
        Some(name) => Some(name.parse::<Fault>()?),
    };
    let suite = match a.suite {
        SuiteArg::Fast => Suite::Fast,
        SuiteArg::Full => Suite::Full,
    };
    let results = run_suite(
        &cfg,
        VerifyOptions {
            suite,
            seed: g.seed,
            fault,
        },
    );
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    println!("verify: {}/{} passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(failed.join(",")))
    }
}
