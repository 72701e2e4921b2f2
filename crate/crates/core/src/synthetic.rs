//! Deterministic synthetic test images on the [0, 255] scale.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Piecewise-constant rectangles and a disc.
    Shapes,
    /// Smooth diagonal ramp with a bump.
    Ramp,
    /// Sinusoidal texture patches over a two-level background.
    Texture,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shapes" => Ok(Pattern::Shapes),
            "ramp" => Ok(Pattern::Ramp),
            "texture" => Ok(Pattern::Texture),
            other => Err(Error::InvalidParameter(format!(
                "unknown synthetic pattern '{other}'"
            ))),
        }
    }
}

pub fn generate(pattern: Pattern, width: usize, height: usize) -> Result<ImageGrid> {
    let (w, h) = (width as f64, height as f64);
    match pattern {
        Pattern::Shapes => ImageGrid::from_fn(width, height, |i, j| {
            let (y, x) = (i as f64 / h, j as f64 / w);
            let mut v = 40.0;
            if (0.15..0.55).contains(&y) && (0.1..0.45).contains(&x) {
                v = 200.0;
            }
            if (0.6..0.9).contains(&y) && (0.2..0.8).contains(&x) {
                v = 120.0;
            }
            if (y - 0.35).powi(2) + (x - 0.7).powi(2) < 0.18f64.powi(2) {
                v = 250.0;
            }
            if (y - 0.75).powi(2) + (x - 0.5).powi(2) < 0.08f64.powi(2) {
                v = 0.0;
            }
            v
        }),
        Pattern::Ramp => ImageGrid::from_fn(width, height, |i, j| {
            let (y, x) = (i as f64 / h, j as f64 / w);
            let bump = (-((y - 0.5).powi(2) + (x - 0.5).powi(2)) / 0.02).exp();
            255.0 * (0.6 * (x + y) / 2.0 + 0.4 * bump)
        }),
        Pattern::Texture => ImageGrid::from_fn(width, height, |i, j| {
            let (y, x) = (i as f64 / h, j as f64 / w);
            let base = if x < 0.5 { 70.0 } else { 170.0 };
            let stripes = if y < 0.5 {
                (2.0 * std::f64::consts::PI * 8.0 * x).sin()
            } else {
                (2.0 * std::f64::consts::PI * 6.0 * (x + y)).sin()
            };
            base + 60.0 * stripes
        }),
    }
}

/// Parses `synthetic:<pattern>:<size>` or `synthetic:<pattern>:<width>x<height>`.
pub fn from_uri(uri: &str) -> Option<Result<ImageGrid>> {
    let rest = uri.strip_prefix("synthetic:")?;
    Some((|| {
        let (name, size) = rest.split_once(':').ok_or_else(|| {
            Error::InvalidParameter(format!("expected synthetic:<pattern>:<size>, got '{uri}'"))
        })?;
        let bad = || Error::InvalidParameter(format!("bad synthetic size in '{uri}'"));
        let (w, h) = match size.split_once('x') {
            Some((a, b)) => (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?),
            None => {
                let n = size.parse().map_err(|_| bad())?;
                (n, n)
            }
        };
        generate(name.parse()?, w, h)
    })())
}
