//! `minsurf` command-line front end: `degrade`, `restore`, `metrics`, `bench`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{emit_table, read_scenarios, run_scenarios, TableFormat};
use crate::degrade::{degrade, normalize, DegradeSpec, NOISE_GENERATOR};
use crate::error::Error;
use crate::io::{read_image, write_grid, write_pgm, ReportFile, ReportMetrics};
use crate::metrics::{format_snr, snr, ssim, SsimParams};
use crate::model::{ModelParams, StopRule, DEFAULT_ALPHA};
use crate::solvers::{solve, DualUpdate, Method, SolverConfig};
use crate::spectral::{BlurSpec, Spectrum};

pub const THREADS_ENV: &str = "MINSURF_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "minsurf",
    version,
    about = "Minimal-surface regularized image restoration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize an image, blur it and add seeded Gaussian noise.
    Degrade(DegradeArgs),
    /// Restore a degraded grid with PDM, TMM or FPM.
    Restore(RestoreArgs),
    /// Print SNR and SSIM of a test image against a reference.
    Metrics(MetricsArgs),
    /// Run a scenario file and print the comparison tables.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BlurArgs {
    /// Gaussian blur support (odd); omit for no blur.
    #[arg(long)]
    pub blur_hsize: Option<usize>,
    /// Gaussian blur standard deviation in pixels.
    #[arg(long)]
    pub blur_sigma: Option<f64>,
}

impl BlurArgs {
    fn spec(&self) -> Result<BlurSpec, Error> {
        match (self.blur_hsize, self.blur_sigma) {
            (None, None) => Ok(BlurSpec::Identity),
            (Some(h), Some(s)) => BlurSpec::gaussian(h, s),
            (Some(1), None) => Ok(BlurSpec::Identity),
            _ => Err(Error::InvalidParameter(
                "--blur-hsize and --blur-sigma must be given together".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// 8-bit binary PGM or F64GRID file.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination F64GRID file.
    #[arg(long)]
    pub output: PathBuf,
    /// Noise standard deviation on the [0, 255] scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[command(flatten)]
    pub blur: BlurArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the 8-bit preview.
    #[arg(long)]
    pub no_preview: bool,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "pdm")]
    pub method: Method,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma_step: Option<f64>,
    /// PDM dual update: proximal or explicit.
    #[arg(long)]
    pub dual_update: Option<DualUpdate>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iter: Option<usize>,
    /// Blur operator K of the degradation model.
    #[command(flatten)]
    pub blur: BlurArgs,
    /// Clean image for SNR/SSIM, used as-is.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Write a JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub no_preview: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub reference: PathBuf,
    /// Image under test.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "text")]
    pub format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run scenarios concurrently (timings become less comparable).
    #[arg(long)]
    pub parallel: bool,
}

/// Exit status of a failed command.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or parameters (exit 2).
    Usage(String),
    /// I/O, format or solver failure (exit 1).
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

pub fn preview_path(output: &Path) -> PathBuf {
    output.with_extension("preview.pgm")
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    if let Ok(n) = raw.trim().parse::<usize>() {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

pub fn cmd_degrade(args: &DegradeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let blur = args.blur.spec().map_err(usage)?;
    let spec = DegradeSpec {
        noise_sigma: args.sigma,
        blur,
        seed: args.seed,
    };
    spec.validate().map_err(usage)?;
    let raw = read_image(&args.input).map_err(runtime)?;
    let clean = normalize(&raw).map_err(runtime)?;
    let degraded = degrade(&spec, &clean).map_err(runtime)?;
    write_grid(&args.output, &degraded).map_err(runtime)?;
    let _ = writeln!(
        out,
        "degrade: {}x{} sigma={} blur={} seed={} generator={} -> {}",
        clean.width(),
        clean.height(),
        spec.noise_sigma,
        spec.blur,
        spec.seed,
        NOISE_GENERATOR,
        args.output.display()
    );
    if !args.no_preview {
        let p = preview_path(&args.output);
        write_pgm(&p, &degraded).map_err(runtime)?;
        let _ = writeln!(out, "preview: {}", p.display());
    }
    Ok(())
}

pub fn restore_config(args: &RestoreArgs) -> Result<SolverConfig, Error> {
    let params = ModelParams::new(args.lambda, args.alpha)?;
    let mut cfg = SolverConfig::new(params)?;
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    if let Some(s) = args.sigma_step {
        cfg.sigma_step = s;
    }
    if let Some(d) = args.dual_update {
        cfg.dual_update = d;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    let mut stop = StopRule::default();
    if let Some(m) = args.max_iter {
        stop.max_iter = m;
    }
    if let Some(r) = args.rel_tol {
        stop.rel_tol = r;
    }
    cfg.stop = stop;
    if let Some(t) = args.cg_tol {
        cfg.cg_tol = t;
    }
    if let Some(m) = args.cg_max_iter {
        cfg.cg_max_iter = m;
    }
    cfg.validate(args.method)?;
    Ok(cfg)
}

pub fn cmd_restore(args: &RestoreArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = restore_config(args).map_err(usage)?;
    let blur = args.blur.spec().map_err(usage)?;
    let f = read_image(&args.input).map_err(runtime)?;
    let spectrum = Spectrum::from_blur(blur, f.width(), f.height()).map_err(usage)?;
    let reference = args
        .reference
        .as_ref()
        .map(read_image)
        .transpose()
        .map_err(runtime)?;

    let report = solve(args.method, &cfg, &spectrum, &f).map_err(runtime)?;
    let restored = report.final_u();
    write_grid(&args.output, restored).map_err(runtime)?;
    if !args.no_preview {
        write_pgm(preview_path(&args.output), restored).map_err(runtime)?;
    }
    let _ = writeln!(
        out,
        "method={} iterations={} converged={} time={:.4}s energy={:.6e}",
        args.method.as_str(),
        report.iterations,
        report.converged,
        report.wall_time_seconds,
        report.final_energy()
    );
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let metrics = match reference {
        Some(r) => {
            let m = ReportMetrics {
                snr_db: snr(&r, restored).map_err(runtime)?,
                ssim: ssim(&r, restored, &SsimParams::default()).map_err(runtime)?,
            };
            let _ = writeln!(out, "SNR_dB={} SSIM={:.6}", format_snr(m.snr_db), m.ssim);
            Some(m)
        }
        None => None,
    };
    if let Some(path) = &args.report {
        let doc = ReportFile::new(&cfg, blur, &report, metrics);
        std::fs::write(path, doc.to_json().map_err(runtime)? + "\n")
            .map_err(|e| runtime(e.into()))?;
    }
    Ok(())
}

pub fn cmd_metrics(args: &MetricsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let reference = read_image(&args.reference).map_err(runtime)?;
    let test = read_image(&args.input).map_err(runtime)?;
    let s = snr(&reference, &test).map_err(runtime)?;
    let q = ssim(&reference, &test, &SsimParams::default()).map_err(runtime)?;
    let _ = writeln!(out, "SNR_dB={} SSIM={:.6}", format_snr(s), q);
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let scenarios = read_scenarios(&args.input).map_err(|e| match e {
        Error::Parse { .. } => usage(e),
        other => runtime(other),
    })?;
    let results = run_scenarios(&scenarios, args.parallel);
    let table = emit_table(&results, args.format).map_err(runtime)?;
    match &args.output {
        Some(p) => std::fs::write(p, &table).map_err(|e| runtime(e.into()))?,
        None => {
            let _ = out.write_all(table.as_bytes());
        }
    }
    let failed: Vec<String> = results
        .iter()
        .flat_map(|r| {
            r.failures
                .iter()
                .map(move |f| format!("{} / {}: {}", r.scenario, f.method, f.message))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} method run(s) failed:\n  {}",
            failed.len(),
            failed.join("\n  ")
        )))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Degrade(a) => cmd_degrade(a, out),
        Command::Restore(a) => cmd_restore(a, out),
        Command::Metrics(a) => cmd_metrics(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Usage(m) => ("usage error", m),
                Failure::Runtime(m) => ("error", m),
            };
            let _ = writeln!(err, "minsurf: {kind}: {msg}");
            f.code()
        }
    }
}
