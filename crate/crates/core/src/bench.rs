//! Benchmark scenarios comparing the three solvers on a shared degraded input.
//!
//! Scenario files are line-oriented:
//!
//! ```text
//! # comment
//! [scenario denoise-128]
//! image = synthetic:shapes:128
//! sigma = 10
//! blur_hsize = 21
//! blur_sigma = 0.6
//! seed = 7
//! lambda = 0.14
//! alpha = 0.01
//! methods = tmm, fpm, pdm
//! ```
//!
//! Optional solver keys: `tau`, `sigma_step`, `dual_update`, `dt`, `max_iter`,
//! `rel_tol`.
//! `alpha` accepts a comma list, expanding into one scenario per value; the
//! `alpha = 0` member runs PDM only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degrade::{degrade, normalize, DegradeSpec};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::io::{encode_grid, lossless_f64, read_image};
use crate::metrics::{format_snr, snr, ssim, SsimParams};
use crate::model::{ModelParams, StopRule};
use crate::solvers::{solve, DualUpdate, Method, SolverConfig};
use crate::spectral::{BlurSpec, Spectrum};
use crate::synthetic;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOverrides {
    pub tau: Option<f64>,
    pub sigma_step: Option<f64>,
    pub dual_update: Option<DualUpdate>,
    pub dt: Option<f64>,
    pub max_iter: Option<usize>,
    pub rel_tol: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, params: ModelParams) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(params)?;
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(s) = self.sigma_step {
            cfg.sigma_step = s;
        }
        if let Some(d) = self.dual_update {
            cfg.dual_update = d;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        let mut stop = StopRule::default();
        if let Some(m) = self.max_iter {
            stop.max_iter = m;
        }
        if let Some(r) = self.rel_tol {
            stop.rel_tol = r;
        }
        stop.validate()?;
        cfg.stop = stop;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// File path (PGM or grid file) or `synthetic:<pattern>:<size>`.
    pub image: String,
    pub degrade: DegradeSpec,
    pub params: ModelParams,
    pub methods: Vec<Method>,
    pub overrides: SolverOverrides,
}

impl Scenario {
    pub fn load_clean(&self) -> Result<ImageGrid> {
        let raw = match synthetic::from_uri(&self.image) {
            Some(g) => g?,
            None => read_image(&self.image)?,
        };
        normalize(&raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    #[serde(with = "lossless_f64")]
    pub snr_db: f64,
    pub ssim: f64,
    pub wall_time_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SHA-256 of the degraded input handed to the solver.
    pub input_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scenario: String,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub blur: BlurSpec,
    pub lambda: f64,
    pub alpha: f64,
    #[serde(with = "lossless_f64")]
    pub input_snr_db: f64,
    #[serde(with = "lossless_f64")]
    pub input_ssim: f64,
    pub rows: Vec<MethodRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<MethodFailure>,
}

impl BenchResult {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Copy with every timing field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> BenchResult {
        let mut out = self.clone();
        out.rows.iter_mut().for_each(|r| r.wall_time_seconds = 0.0);
        out
    }
}

pub fn grid_digest(grid: &ImageGrid) -> String {
    Sha256::digest(encode_grid(grid))
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

struct Prepared {
    clean: ImageGrid,
    degraded: ImageGrid,
    spectrum: Spectrum,
    config: SolverConfig,
}

fn prepare(s: &Scenario) -> Result<Prepared> {
    let clean = s.load_clean()?;
    let degraded = degrade(&s.degrade, &clean)?;
    let spectrum = Spectrum::from_blur(s.degrade.blur, clean.width(), clean.height())?;
    let config = s.overrides.apply(s.params)?;
    Ok(Prepared {
        clean,
        degraded,
        spectrum,
        config,
    })
}

fn run_method(p: &Prepared, method: Method) -> Result<MethodRow> {
    let input_digest = grid_digest(&p.degraded);
    let report = solve(method, &p.config, &p.spectrum, &p.degraded)?;
    let restored = report.final_u();
    Ok(MethodRow {
        method,
        snr_db: snr(&p.clean, restored)?,
        ssim: ssim(&p.clean, restored, &SsimParams::default())?,
        wall_time_seconds: report.wall_time_seconds,
        iterations: report.iterations,
        converged: report.converged,
        input_digest,
    })
}

/// Degrades once, then runs every requested method on the same input.
/// Per-method failures are recorded instead of aborting the scenario.
pub fn run_scenario(s: &Scenario) -> BenchResult {
    run_scenario_with(s, false)
}

/// As [`run_scenario`]; `parallel_methods` trades timing fidelity for speed.
pub fn run_scenario_with(s: &Scenario, parallel_methods: bool) -> BenchResult {
    let mut result = BenchResult {
        scenario: s.name.clone(),
        width: 0,
        height: 0,
        noise_sigma: s.degrade.noise_sigma,
        blur: s.degrade.blur,
        lambda: s.params.lambda,
        alpha: s.params.alpha,
        input_snr_db: f64::NAN,
        input_ssim: f64::NAN,
        rows: Vec::new(),
        failures: Vec::new(),
    };
    let prepared = match prepare(s) {
        Ok(p) => p,
        Err(e) => {
            result.failures = s
                .methods
                .iter()
                .map(|&method| MethodFailure {
                    method,
                    message: e.to_string(),
                })
                .collect();
            return result;
        }
    };
    (result.width, result.height) = prepared.clean.dims();
    result.input_snr_db = snr(&prepared.clean, &prepared.degraded).unwrap_or(f64::NAN);
    result.input_ssim =
        ssim(&prepared.clean, &prepared.degraded, &SsimParams::default()).unwrap_or(f64::NAN);

    let outcomes: Vec<(Method, Result<MethodRow>)> = if parallel_methods {
        s.methods
            .par_iter()
            .map(|&m| (m, run_method(&prepared, m)))
            .collect()
    } else {
        s.methods
            .iter()
            .map(|&m| (m, run_method(&prepared, m)))
            .collect()
    };
    for (method, outcome) in outcomes {
        match outcome {
            Ok(row) => result.rows.push(row),
            Err(e) => result.failures.push(MethodFailure {
                method,
                message: e.to_string(),
            }),
        }
    }
    result
}

pub fn run_scenarios(scenarios: &[Scenario], parallel: bool) -> Vec<BenchResult> {
    if parallel {
        scenarios.par_iter().map(run_scenario).collect()
    } else {
        scenarios.iter().map(run_scenario).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown format '{other}' (expected text, csv or json)"
            ))),
        }
    }
}

pub fn emit_table(results: &[BenchResult], format: TableFormat) -> Result<String> {
    if results.is_empty() {
        return Err(Error::InvalidParameter(
            "no benchmark results to emit".into(),
        ));
    }
    match format {
        TableFormat::Text => Ok(emit_text(results)),
        TableFormat::Csv => emit_csv(results),
        TableFormat::Json => Ok(serde_json::to_string_pretty(results)? + "\n"),
    }
}

pub fn parse_json(text: &str) -> Result<Vec<BenchResult>> {
    Ok(serde_json::from_str(text)?)
}

fn emit_text(results: &[BenchResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(
            out,
            "{} ({}x{}, sigma={}, blur={}, lambda={}, alpha={})",
            r.scenario, r.width, r.height, r.noise_sigma, r.blur, r.lambda, r.alpha
        );
        let _ = writeln!(
            out,
            "degraded input: SNR={} SSIM={:.4}",
            format_snr(r.input_snr_db),
            r.input_ssim
        );
        let _ = writeln!(
            out,
            "{:<6} | {:>9} | {:>6} | {:>9} | {:>4}",
            "Method", "SNR", "SSIM", "Time(s)", "Ite"
        );
        let _ = writeln!(out, "{}", "-".repeat(45));
        for row in &r.rows {
            let _ = writeln!(
                out,
                "{:<6} | {:>9} | {:>6.4} | {:>9.4} | {:>4}{}",
                row.method.to_string(),
                format_snr(row.snr_db),
                row.ssim,
                row.wall_time_seconds,
                row.iterations,
                if row.converged { "" } else { " (cap)" }
            );
        }
        for f in &r.failures {
            let _ = writeln!(out, "{:<6} | error: {}", f.method.to_string(), f.message);
        }
        out.push('\n');
    }
    out
}

fn emit_csv(results: &[BenchResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario",
        "method",
        "snr_db",
        "ssim",
        "wall_time_seconds",
        "iterations",
        "converged",
        "input_snr_db",
        "input_ssim",
        "input_digest",
        "error",
    ])?;
    for r in results {
        for row in &r.rows {
            w.write_record([
                r.scenario.clone(),
                row.method.as_str().into(),
                row.snr_db.to_string(),
                row.ssim.to_string(),
                row.wall_time_seconds.to_string(),
                row.iterations.to_string(),
                row.converged.to_string(),
                r.input_snr_db.to_string(),
                r.input_ssim.to_string(),
                row.input_digest.clone(),
                String::new(),
            ])?;
        }
        for f in &r.failures {
            w.write_record([
                r.scenario.clone(),
                f.method.as_str().into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.input_snr_db.to_string(),
                r.input_ssim.to_string(),
                String::new(),
                f.message.clone(),
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Default)]
struct Section {
    line: usize,
    name: Option<String>,
    entries: Vec<(usize, String, String)>,
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{key}: cannot parse '{value}'"),
    })
}

fn build_scenarios(
    section: Section,
    index: usize,
    base_dir: Option<&Path>,
) -> Result<Vec<Scenario>> {
    let mut image = None;
    let mut noise_sigma = 0.0;
    let mut blur_hsize: Option<usize> = None;
    let mut blur_sigma: Option<f64> = None;
    let mut seed = 0u64;
    let mut lambda = None;
    let mut alphas = vec![crate::model::DEFAULT_ALPHA];
    let mut methods = Method::ALL.to_vec();
    let mut overrides = SolverOverrides::default();

    for (line, key, value) in &section.entries {
        let line = *line;
        let v = value.as_str();
        match key.as_str() {
            "image" => image = Some(v.to_string()),
            "sigma" => noise_sigma = parse_value(line, key, v)?,
            "blur_hsize" => blur_hsize = Some(parse_value(line, key, v)?),
            "blur_sigma" => blur_sigma = Some(parse_value(line, key, v)?),
            "seed" => seed = parse_value(line, key, v)?,
            "lambda" => lambda = Some(parse_value(line, key, v)?),
            "alpha" => {
                alphas = v
                    .split(',')
                    .map(|a| parse_value(line, key, a.trim()))
                    .collect::<Result<_>>()?;
            }
            "methods" => {
                methods = v
                    .split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(|m| {
                        m.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("methods: unknown method '{m}'"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if methods.is_empty() {
                    return Err(Error::Parse {
                        line,
                        message: "methods: empty method list".into(),
                    });
                }
            }
            "tau" => overrides.tau = Some(parse_value(line, key, v)?),
            "sigma_step" => overrides.sigma_step = Some(parse_value(line, key, v)?),
            "dual_update" => overrides.dual_update = Some(parse_value(line, key, v)?),
            "dt" => overrides.dt = Some(parse_value(line, key, v)?),
            "max_iter" => overrides.max_iter = Some(parse_value(line, key, v)?),
            "rel_tol" => overrides.rel_tol = Some(parse_value(line, key, v)?),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key '{other}'"),
                })
            }
        }
    }

    let header = section.line;
    let missing = |k: &str| Error::Parse {
        line: header,
        message: format!("scenario is missing required key '{k}'"),
    };
    let mut image = image.ok_or_else(|| missing("image"))?;
    let lambda: f64 = lambda.ok_or_else(|| missing("lambda"))?;
    if !image.starts_with("synthetic:") {
        if let Some(dir) = base_dir {
            let p = PathBuf::from(&image);
            if p.is_relative() {
                image = dir.join(p).to_string_lossy().into_owned();
            }
        }
    }
    let blur = match (blur_hsize, blur_sigma) {
        (None, None) => BlurSpec::Identity,
        (Some(h), Some(s)) => BlurSpec::gaussian(h, s).map_err(|e| Error::Parse {
            line: header,
            message: e.to_string(),
        })?,
        _ => {
            return Err(Error::Parse {
                line: header,
                message: "blur_hsize and blur_sigma must be given together".into(),
            })
        }
    };
    let degrade = DegradeSpec {
        noise_sigma,
        blur,
        seed,
    };
    degrade.validate().map_err(|e| Error::Parse {
        line: header,
        message: e.to_string(),
    })?;
    let base_name = section
        .name
        .clone()
        .unwrap_or_else(|| format!("scenario-{}", index + 1));
    let sweep = alphas.len() > 1;

    alphas
        .into_iter()
        .map(|alpha| {
            let params = ModelParams::new(lambda, alpha).map_err(|e| Error::Parse {
                line: header,
                message: e.to_string(),
            })?;
            let (name, methods) = if sweep {
                let m = if alpha == 0.0 {
                    vec![Method::Pdm]
                } else {
                    methods.clone()
                };
                (format!("{base_name} [alpha={alpha}]"), m)
            } else {
                (base_name.clone(), methods.clone())
            };
            Ok(Scenario {
                name,
                image: image.clone(),
                degrade,
                params,
                methods,
                overrides,
            })
        })
        .collect()
}

/// Parses a scenario file; relative image paths resolve against `base_dir`.
pub fn parse_scenarios(text: &str, base_dir: Option<&Path>) -> Result<Vec<Scenario>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                message: "unterminated section header".into(),
            })?;
            let mut parts = inner.trim().splitn(2, char::is_whitespace);
            if parts.next() != Some("scenario") {
                return Err(Error::Parse {
                    line,
                    message: format!("expected [scenario ...], got '[{inner}]'"),
                });
            }
            let name = parts.next().map(str::trim).filter(|n| !n.is_empty());
            sections.push(Section {
                line,
                name: name.map(String::from),
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected key = value, got '{trimmed}'"),
        })?;
        let section = sections.last_mut().ok_or_else(|| Error::Parse {
            line,
            message: "key outside of a [scenario] section".into(),
        })?;
        section
            .entries
            .push((line, key.trim().to_string(), value.trim().to_string()));
    }
    if sections.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no [scenario] sections".into(),
        });
    }
    let mut out = Vec::new();
    for (i, s) in sections.into_iter().enumerate() {
        out.extend(build_scenarios(s, i, base_dir)?);
    }
    Ok(out)
}

pub fn read_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenarios(&text, path.parent())
}
