//! File formats: the full-precision grid interchange format, binary PGM for
//! ingest and previews, and the JSON solve report.
//!
//! Grid file layout:
//!
//! ```text
//! F64GRID\n
//! <width> <height>\n
//! width·height little-endian f64, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::solvers::{DualUpdate, Method, SolveReport, SolverConfig};

pub const GRID_MAGIC: &[u8; 8] = b"F64GRID\n";

pub fn encode_grid(grid: &ImageGrid) -> Vec<u8> {
    let header = format!("{} {}\n", grid.width(), grid.height());
    let mut out = Vec::with_capacity(GRID_MAGIC.len() + header.len() + 8 * grid.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(header.as_bytes());
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<ImageGrid> {
    let rest = bytes
        .strip_prefix(GRID_MAGIC.as_slice())
        .ok_or_else(|| Error::Format("missing F64GRID magic".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated grid header".into()))?;
    let header = std::str::from_utf8(&rest[..nl])
        .map_err(|_| Error::Format("grid header is not ASCII".into()))?;
    let dims: Vec<&str> = header.split(' ').collect();
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad grid dimension '{s}'")))
    };
    let [w, h] = dims.as_slice() else {
        return Err(Error::Format(format!("bad grid header '{header}'")));
    };
    let (width, height) = (parse(w)?, parse(h)?);
    let payload = &rest[nl + 1..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "grid payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageGrid::new(width, height, values)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &ImageGrid) -> Result<()> {
    fs::write(path, encode_grid(grid))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<ImageGrid> {
    decode_grid(&fs::read(path)?)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("PGM header: bad {what}")))
    }
}

/// Binary PGM (P5, maxval 255). Byte `b` maps to the value `b`.
pub fn decode_pgm(bytes: &[u8]) -> Result<ImageGrid> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut hdr = HeaderReader { bytes, pos: 2 };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "PGM maxval must be 255, got {maxval}"
        )));
    }
    if !bytes.get(hdr.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("PGM header: missing separator".into()));
    }
    let data = &bytes[hdr.pos + 1..];
    let n = width * height;
    if data.len() < n {
        return Err(Error::Format(format!(
            "PGM data truncated: {} of {n} bytes",
            data.len()
        )));
    }
    ImageGrid::new(width, height, data[..n].iter().map(|&b| b as f64).collect())
}

/// Clamps to [0, 255] and rounds half-to-even.
pub fn to_bytes(grid: &ImageGrid) -> Vec<u8> {
    grid.values()
        .iter()
        .map(|v| v.clamp(0.0, 255.0).round_ties_even() as u8)
        .collect()
}

pub fn encode_pgm(grid: &ImageGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(to_bytes(grid));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &ImageGrid) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_pgm(grid))?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    decode_pgm(&fs::read(path)?)
}

/// Reads a grid file or a P5 PGM, sniffing the magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read '{}': {e}", path.display())))?;
    if bytes.starts_with(GRID_MAGIC) {
        decode_grid(&bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        Err(Error::Format(format!(
            "'{}' is neither a F64GRID file nor a binary PGM",
            path.display()
        )))
    }
}

/// Serializes non-finite values (infinite SNR) as strings.
pub mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    #[serde(with = "lossless_f64")]
    pub snr_db: f64,
    pub ssim: f64,
}

/// Structured record of one restore run; the config echo reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub method: Method,
    pub width: usize,
    pub height: usize,
    pub blur: crate::spectral::BlurSpec,
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub sigma_step: f64,
    #[serde(default)]
    pub dual_update: DualUpdate,
    pub dt: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub iterations: usize,
    pub converged: bool,
    pub energy_trace: Vec<f64>,
    pub rel_change_trace: Vec<f64>,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ReportMetrics>,
}

impl ReportFile {
    pub fn new(
        config: &SolverConfig,
        blur: crate::spectral::BlurSpec,
        report: &SolveReport,
        metrics: Option<ReportMetrics>,
    ) -> Self {
        let (width, height) = report.final_u.as_ref().map_or((0, 0), ImageGrid::dims);
        Self {
            method: report.method,
            width,
            height,
            blur,
            lambda: config.params.lambda,
            alpha: config.params.alpha,
            tau: config.tau,
            sigma_step: config.sigma_step,
            dual_update: config.dual_update,
            dt: config.dt,
            rel_tol: config.stop.rel_tol,
            max_iter: config.stop.max_iter,
            cg_tol: config.cg_tol,
            cg_max_iter: config.cg_max_iter,
            iterations: report.iterations,
            converged: report.converged,
            energy_trace: report.energy_trace.clone(),
            rel_change_trace: report.rel_change_trace.clone(),
            wall_time_seconds: report.wall_time_seconds,
            warnings: report.warnings.clone(),
            metrics,
        }
    }

    /// Rebuilds the solver configuration echoed in the report.
    pub fn config(&self) -> Result<SolverConfig> {
        let params = crate::model::ModelParams::new(self.lambda, self.alpha)?;
        Ok(SolverConfig {
            params,
            stop: crate::model::StopRule::new(self.rel_tol, self.max_iter)?,
            tau: self.tau,
            sigma_step: self.sigma_step,
            dual_update: self.dual_update,
            dt: self.dt,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
