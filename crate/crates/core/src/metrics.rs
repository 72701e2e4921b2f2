//! Restoration quality metrics: SNR (dB) and mean SSIM with a periodic
//! Gaussian window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// `10·log₁₀(‖ref − mean(ref)‖² / ‖test − ref‖²)`.
///
/// Returns `f64::INFINITY` when `test == reference`.
pub fn snr(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    reference.same_dims(test)?;
    let mean = reference.mean();
    let signal: f64 = reference
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum();
    let error: f64 = reference
        .values()
        .iter()
        .zip(test.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// Text form used by the CLI; infinite SNR prints as `inf`.
pub fn format_snr(value: f64) -> String {
    if value.is_infinite() {
        if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{value:.4}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "SSIM window size must be odd, got {}",
                self.window_size
            )));
        }
        if !(self.window_sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0)
        {
            return Err(Error::InvalidParameter(
                "SSIM constants must be positive".into(),
            ));
        }
        Ok(())
    }

    fn taps(&self) -> Vec<f64> {
        let half = (self.window_size / 2) as isize;
        let raw: Vec<f64> = (-half..=half)
            .map(|a| (-((a * a) as f64) / (2.0 * self.window_sigma * self.window_sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// Separable periodic filtering with a centered 1-D kernel on both axes.
fn periodic_filter(values: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; values.len()];
    for i in 0..h {
        let row = &values[i * w..(i + 1) * w];
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &c) in taps.iter().enumerate() {
                let jj = (j as isize + t as isize - half).rem_euclid(w as isize) as usize;
                acc += c * row[jj];
            }
            tmp[i * w + j] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &c) in taps.iter().enumerate() {
                let ii = (i as isize + t as isize - half).rem_euclid(h as isize) as usize;
                acc += c * tmp[ii * w + j];
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Per-pixel SSIM index map.
pub fn ssim_map(reference: &ImageGrid, test: &ImageGrid, params: &SsimParams) -> Result<ImageGrid> {
    reference.same_dims(test)?;
    params.validate()?;
    let (w, h) = reference.dims();
    if w < params.window_size || h < params.window_size {
        return Err(Error::InvalidGrid(format!(
            "image {w}x{h} is smaller than the {0}x{0} SSIM window",
            params.window_size
        )));
    }
    let taps = params.taps();
    let (x, y) = (reference.values(), test.values());
    let filt = |v: &[f64]| periodic_filter(v, w, h, &taps);
    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|b| b * b).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, my) = (filt(x), filt(y));
    let (exx, eyy, exy) = (filt(&xx), filt(&yy), filt(&xy));
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let values = (0..w * h)
        .map(|k| {
            let mxy = mx[k] * my[k];
            let sx = exx[k] - mx[k] * mx[k];
            let sy = eyy[k] - my[k] * my[k];
            let sxy = exy[k] - mxy;
            ((2.0 * mxy + c1) * (2.0 * sxy + c2))
                / ((mx[k] * mx[k] + my[k] * my[k] + c1) * (sx + sy + c2))
        })
        .collect();
    Ok(ImageGrid::from_raw(w, h, values))
}

/// Mean SSIM over all pixel positions.
pub fn ssim(reference: &ImageGrid, test: &ImageGrid, params: &SsimParams) -> Result<f64> {
    Ok(ssim_map(reference, test, params)?.mean())
}
