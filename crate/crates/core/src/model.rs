//! The restoration objective, its Euler–Lagrange operator, and the shared
//! stopping rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, DualField, ImageGrid};
use crate::spectral::Spectrum;

/// Smoothing parameter used throughout the reference experiments.
pub const DEFAULT_ALPHA: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Fidelity weight λ.
    pub lambda: f64,
    /// Smoothing parameter α; zero gives the ROF model.
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        let p = Self { lambda, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            rel_tol: 1e-5,
            max_iter: 500,
        }
    }
}

impl StopRule {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self> {
        let r = Self { rel_tol, max_iter };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `Σ √(α + |∇u|²)`.
pub fn regularizer(alpha: f64, u: &ImageGrid) -> f64 {
    let g = gradient(u);
    g.p1()
        .iter()
        .zip(g.p2())
        .map(|(a, b)| (alpha + a * a + b * b).sqrt())
        .sum()
}

/// `λ/2 ‖Ku − f‖² + Σ √(α + |∇u|²)`.
pub fn energy(
    params: &ModelParams,
    spectrum: &Spectrum,
    f: &ImageGrid,
    u: &ImageGrid,
) -> Result<f64> {
    f.same_dims(u)?;
    let ku = spectrum.apply(u)?;
    let fidelity: f64 = ku
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * params.lambda * fidelity + regularizer(params.alpha, u))
}

/// `∇u / √(|∇u|² + α)` pointwise.
pub(crate) fn normalized_gradient(alpha: f64, u: &ImageGrid) -> DualField {
    let g = gradient(u);
    let (w, h) = g.dims();
    let (p1, p2): (Vec<f64>, Vec<f64>) = g
        .p1()
        .iter()
        .zip(g.p2())
        .map(|(&a, &b)| {
            let s = 1.0 / (a * a + b * b + alpha).sqrt();
            (a * s, b * s)
        })
        .unzip();
    DualField::from_raw(w, h, p1, p2)
}

/// `E_α(u) = div(∇u / √(|∇u|² + α))`; the negative gradient of the regularizer.
pub fn euler_lagrange(params: &ModelParams, u: &ImageGrid) -> Result<ImageGrid> {
    if !(params.alpha > 0.0) {
        return Err(Error::InvalidParameter(
            "E_alpha is undefined for alpha = 0 (singular where the gradient vanishes)".into(),
        ));
    }
    Ok(divergence(&normalized_gradient(params.alpha, u)))
}

/// Gradient of the full objective: `λKᵀ(Ku − f) − E_α(u)`.
pub fn energy_gradient(
    params: &ModelParams,
    spectrum: &Spectrum,
    f: &ImageGrid,
    u: &ImageGrid,
) -> Result<ImageGrid> {
    let residual = spectrum.apply(u)?.zip_map(f, |a, b| a - b);
    let data = spectrum.apply_adjoint(&residual)?;
    let el = euler_lagrange(params, u)?;
    let lambda = params.lambda;
    Ok(data.zip_map(&el, |d, e| lambda * d - e))
}

/// `√(α + t²)` together with the maximizer `s*` of `t·s + √(α(1 − s²))` over `|s| ≤ 1`.
pub fn conjugate_identity(alpha: f64, t: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let value = (alpha + t * t).sqrt();
    Ok((value, t / value))
}

/// `max{‖u_next − u_prev‖/‖u_prev‖, |e_next − e_prev|/|e_prev|}`, with either
/// ratio replaced by its numerator when the denominator is zero.
pub fn relative_change(u_prev: &ImageGrid, u_next: &ImageGrid, e_prev: f64, e_next: f64) -> f64 {
    let du = u_next
        .values()
        .iter()
        .zip(u_prev.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let nu = u_prev.norm();
    let u_ratio = if nu > 0.0 { du / nu } else { du };
    let de = (e_next - e_prev).abs();
    let e_ratio = if e_prev != 0.0 { de / e_prev.abs() } else { de };
    u_ratio.max(e_ratio)
}

pub fn check_stop(
    rule: &StopRule,
    u_prev: &ImageGrid,
    u_next: &ImageGrid,
    e_prev: f64,
    e_next: f64,
    iter: usize,
) -> bool {
    iter >= rule.max_iter || relative_change(u_prev, u_next, e_prev, e_next) <= rule.rel_tol
}
