//! Iterative minimizers of the smoothed minimal-surface energy.
//!
//! * [`solve_pdm`]: primal-dual iteration with an exact FFT primal step,
//!   over-relaxation `ū = 2u^{k+1} − u^k`, and a dual step on the unit disc
//!   (see [`DualUpdate`]).
//! * [`solve_tmm`]: explicit time marching (gradient descent) on the energy.
//! * [`solve_fpm`]: lagged-diffusivity fixed point, each outer step solved by
//!   conjugate gradient.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, DualField, ImageGrid};
use crate::model::{energy, energy_gradient, relative_change, ModelParams, StopRule};
use crate::spectral::{solve_primal, Spectrum};

/// Upper bound (exclusive) on `τσ` for the primal-dual scheme.
pub const STEP_PRODUCT_BOUND: f64 = 0.125;
pub const DEFAULT_TAU: f64 = 0.35;
pub const DEFAULT_SIGMA_STEP: f64 = 0.35;
pub const DEFAULT_CG_TOL: f64 = 1e-6;
pub const DEFAULT_CG_MAX_ITER: usize = 200;

/// TMM aborts once the energy exceeds this multiple of its initial value.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pdm,
    Tmm,
    Fpm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Tmm, Method::Fpm, Method::Pdm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pdm => "pdm",
            Method::Tmm => "tmm",
            Method::Fpm => "fpm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pdm" => Ok(Method::Pdm),
            "tmm" => Ok(Method::Tmm),
            "fpm" => Ok(Method::Fpm),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected pdm, tmm or fpm)"
            ))),
        }
    }
}

/// Default TMM step `1.6 / (λ + 8/√α)`, 80% of the explicit-scheme bound
/// `2/L`. With `‖K‖ ≤ 1` and `‖∇‖² ≤ 8`, the energy gradient is Lipschitz
/// with `L ≤ λ + 8/√α`.
pub fn default_dt(params: &ModelParams) -> f64 {
    if params.alpha > 0.0 {
        1.6 / (params.lambda + 8.0 / params.alpha.sqrt())
    } else {
        1.6 / params.lambda
    }
}

/// Dual update of the primal-dual method.
///
/// Both variants share the fixed point `p = ∇u/√(α + |∇u|²)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualUpdate {
    /// Exact proximal step of the conjugate: `p` minimizes
    /// `|p − z|²/(2σ) − √α·√(1 − |p|²)` over the disc, `z = p + σ∇ū`.
    #[default]
    Proximal,
    /// Explicit step `p ← Π(p + σ(∇ū·√(1 − |p|²) − √α·p))`. Falls into a
    /// period-two cycle wherever `σ(|∇u|² + α) > 2√α`.
    Explicit,
}

impl DualUpdate {
    pub fn as_str(&self) -> &'static str {
        match self {
            DualUpdate::Proximal => "proximal",
            DualUpdate::Explicit => "explicit",
        }
    }
}

impl fmt::Display for DualUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DualUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proximal" | "prox" => Ok(DualUpdate::Proximal),
            "explicit" => Ok(DualUpdate::Explicit),
            other => Err(Error::InvalidParameter(format!(
                "unknown dual update '{other}' (expected proximal or explicit)"
            ))),
        }
    }
}

/// One record drives all three solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub params: ModelParams,
    pub stop: StopRule,
    /// Primal step τ.
    pub tau: f64,
    /// Dual step σ.
    pub sigma_step: f64,
    #[serde(default)]
    pub dual_update: DualUpdate,
    /// TMM time step.
    pub dt: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl SolverConfig {
    /// Defaults for everything except the model parameters.
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            stop: StopRule::default(),
            tau: DEFAULT_TAU,
            sigma_step: DEFAULT_SIGMA_STEP,
            dual_update: DualUpdate::default(),
            dt: default_dt(&params),
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: DEFAULT_CG_MAX_ITER,
        })
    }

    /// Primal-dual configuration; fails unless `τσ < 1/8`.
    pub fn pdm(params: ModelParams, tau: f64, sigma_step: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            sigma_step,
            ..Self::new(params)?
        };
        cfg.validate(Method::Pdm)?;
        Ok(cfg)
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_dual_update(mut self, update: DualUpdate) -> Self {
        self.dual_update = update;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_cg(mut self, tol: f64, max_iter: usize) -> Self {
        self.cg_tol = tol;
        self.cg_max_iter = max_iter;
        self
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        self.params.validate()?;
        self.stop.validate()?;
        match method {
            Method::Pdm => {
                if !(self.tau > 0.0 && self.sigma_step > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "tau and sigma_step must be positive, got {} and {}",
                        self.tau, self.sigma_step
                    )));
                }
                if !(self.tau * self.sigma_step < STEP_PRODUCT_BOUND) {
                    return Err(Error::InvalidParameter(format!(
                        "step contract violated: tau*sigma = {} must be < 1/8",
                        self.tau * self.sigma_step
                    )));
                }
            }
            Method::Tmm | Method::Fpm => {
                if !(self.params.alpha > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{method} requires alpha > 0: E_alpha is singular where the gradient vanishes"
                    )));
                }
                if method == Method::Tmm && !(self.dt > 0.0 && self.dt.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "dt must be positive, got {}",
                        self.dt
                    )));
                }
                if method == Method::Fpm && !(self.cg_tol > 0.0 && self.cg_max_iter >= 1) {
                    return Err(Error::InvalidParameter(
                        "cg_tol must be positive and cg_max_iter at least 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub iterations: usize,
    /// Energy of every iterate, starting with the initial guess.
    pub energy_trace: Vec<f64>,
    /// Stopping-rule quantity after each iteration.
    pub rel_change_trace: Vec<f64>,
    pub wall_time_seconds: f64,
    /// Tolerance met (as opposed to the iteration cap).
    pub converged: bool,
    /// Inner CG iterations per outer step (FPM only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cg_iterations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub final_u: Option<ImageGrid>,
}

impl SolveReport {
    pub fn final_energy(&self) -> f64 {
        *self
            .energy_trace
            .last()
            .expect("trace holds the initial energy")
    }

    pub fn final_u(&self) -> &ImageGrid {
        self.final_u
            .as_ref()
            .expect("solver reports carry the final iterate")
    }
}

struct Tracker {
    method: Method,
    stop: StopRule,
    start: Instant,
    energies: Vec<f64>,
    changes: Vec<f64>,
}

impl Tracker {
    fn new(method: Method, stop: StopRule, e0: f64, start: Instant) -> Self {
        Self {
            method,
            stop,
            start,
            energies: vec![e0],
            changes: Vec::new(),
        }
    }

    /// Records one step; returns true when the run should stop.
    fn step(&mut self, u_prev: &ImageGrid, u_next: &ImageGrid, e_next: f64) -> bool {
        self.step_checked(u_prev, u_next, e_next, true)
    }

    /// As [`Tracker::step`]; with `check_tolerance = false` only the
    /// iteration cap can end the run.
    fn step_checked(
        &mut self,
        u_prev: &ImageGrid,
        u_next: &ImageGrid,
        e_next: f64,
        check_tolerance: bool,
    ) -> bool {
        let e_prev = *self.energies.last().unwrap();
        let rc = relative_change(u_prev, u_next, e_prev, e_next);
        self.energies.push(e_next);
        self.changes.push(rc);
        (check_tolerance && rc <= self.stop.rel_tol) || self.changes.len() >= self.stop.max_iter
    }

    fn finish(self, u: ImageGrid, cg_iterations: Vec<usize>, warnings: Vec<String>) -> SolveReport {
        let converged = self
            .changes
            .last()
            .is_some_and(|&rc| rc <= self.stop.rel_tol);
        SolveReport {
            method: self.method,
            iterations: self.changes.len(),
            energy_trace: self.energies,
            rel_change_trace: self.changes,
            wall_time_seconds: self.start.elapsed().as_secs_f64(),
            converged,
            cg_iterations,
            warnings,
            final_u: Some(u),
        }
    }
}

fn check_inputs(spectrum: &Spectrum, f: &ImageGrid) -> Result<()> {
    if spectrum.dims() != f.dims() {
        return Err(Error::DimensionMismatch {
            left_width: spectrum.width(),
            left_height: spectrum.height(),
            right_width: f.width(),
            right_height: f.height(),
        });
    }
    Ok(())
}

/// Radius `r ∈ [0, 1)` solving `(r − m)/σ + √α·r/√(1 − r²) = 0`.
///
/// Solved for `ρ = r/√(1 − r²)`, where the equation reads
/// `σ√α·ρ + ρ/√(1 + ρ²) = m`. The left side is increasing and concave, so
/// Newton from any start lands below the root and then climbs monotonically.
pub(crate) fn prox_radius(m: f64, sigma: f64, sqrt_alpha: f64, guess: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    if sqrt_alpha == 0.0 {
        return m.min(1.0);
    }
    let k = sigma * sqrt_alpha;
    let cap = m / k;
    let r = guess.clamp(0.0, 1.0);
    let mut rho = if r < 1.0 {
        (r / (1.0 - r * r).sqrt()).min(cap)
    } else {
        cap
    };
    for _ in 0..60 {
        let q = (1.0 + rho * rho).sqrt();
        let g = k * rho + rho / q - m;
        let next = (rho - g / (k + 1.0 / (q * q * q))).max(0.0);
        // quadratic convergence: one more step would be below rounding
        let done = (next - rho).abs() <= 1e-12 * next;
        rho = next;
        if done {
            break;
        }
    }
    rho / (1.0 + rho * rho).sqrt()
}

/// Proximal dual step, in place.
pub(crate) fn dual_step_prox(p: &mut DualField, grad: &DualField, sigma: f64, sqrt_alpha: f64) {
    let (p1, p2) = p.channels_mut();
    p1.par_iter_mut()
        .zip(p2.par_iter_mut())
        .zip(grad.p1().par_iter())
        .zip(grad.p2().par_iter())
        .with_min_len(1024)
        .for_each(|(((a, b), &g1), &g2)| {
            let z1 = *a + sigma * g1;
            let z2 = *b + sigma * g2;
            let m = (z1 * z1 + z2 * z2).sqrt();
            if m == 0.0 {
                *a = 0.0;
                *b = 0.0;
                return;
            }
            let k = prox_radius(m, sigma, sqrt_alpha, (*a * *a + *b * *b).sqrt()) / m;
            *a = z1 * k;
            *b = z2 * k;
        });
}

/// Explicit dual step with projection onto the unit disc, in place.
pub(crate) fn dual_step(p: &mut DualField, grad: &DualField, sigma: f64, sqrt_alpha: f64) {
    let (p1, p2) = p.channels_mut();
    for (((a, b), &g1), &g2) in p1
        .iter_mut()
        .zip(p2.iter_mut())
        .zip(grad.p1())
        .zip(grad.p2())
    {
        let slack = 1.0 - (*a * *a + *b * *b);
        debug_assert!(slack >= -1e-12, "dual iterate left the unit disc: {slack}");
        let s = slack.max(0.0).sqrt();
        let z1 = *a + sigma * (g1 * s - sqrt_alpha * *a);
        let z2 = *b + sigma * (g2 * s - sqrt_alpha * *b);
        let d = z1.hypot(z2).max(1.0);
        *a = z1 / d;
        *b = z2 / d;
    }
}

/// Primal-dual method. Starts from `u = f`, `p = p̄ = 0`.
pub fn solve_pdm(config: &SolverConfig, spectrum: &Spectrum, f: &ImageGrid) -> Result<SolveReport> {
    solve_pdm_with_dual(config, spectrum, f).map(|(report, _)| report)
}

/// [`solve_pdm`] also returning the final dual field.
pub fn solve_pdm_with_dual(
    config: &SolverConfig,
    spectrum: &Spectrum,
    f: &ImageGrid,
) -> Result<(SolveReport, DualField)> {
    config.validate(Method::Pdm)?;
    check_inputs(spectrum, f)?;
    let start = Instant::now();
    let ModelParams { lambda, alpha } = config.params;
    let sqrt_alpha = alpha.sqrt();
    let (w, h) = f.dims();

    let ktf = spectrum.apply_adjoint(f)?;
    let mut u = f.clone();
    let mut p = DualField::zeros(w, h)?;
    let mut track = Tracker::new(
        Method::Pdm,
        config.stop,
        energy(&config.params, spectrum, f, &u)?,
        start,
    );

    for iteration in 1.. {
        let u_next = solve_primal(spectrum, &u, &ktf, &divergence(&p), lambda, config.tau)?;
        if !u_next.all_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let u_bar = u_next.zip_map(&u, |a, b| 2.0 * a - b);
        let g = gradient(&u_bar);
        match config.dual_update {
            DualUpdate::Proximal => dual_step_prox(&mut p, &g, config.sigma_step, sqrt_alpha),
            DualUpdate::Explicit => dual_step(&mut p, &g, config.sigma_step, sqrt_alpha),
        }
        if !p.all_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let e_next = energy(&config.params, spectrum, f, &u_next)?;
        // The first primal step sees p̄ = 0 and, for K = I, returns f
        // unchanged; the tolerance is only tested once the dual has moved.
        let done = track.step_checked(&u, &u_next, e_next, iteration > 1);
        u = u_next;
        if done {
            break;
        }
    }
    Ok((track.finish(u, Vec::new(), Vec::new()), p))
}

/// Time marching: `u ← u − dt·(λKᵀ(Ku − f) − E_α(u))` from `u = f`.
pub fn solve_tmm(config: &SolverConfig, spectrum: &Spectrum, f: &ImageGrid) -> Result<SolveReport> {
    config.validate(Method::Tmm)?;
    check_inputs(spectrum, f)?;
    let start = Instant::now();
    let mut u = f.clone();
    let e0 = energy(&config.params, spectrum, f, &u)?;
    let mut track = Tracker::new(Method::Tmm, config.stop, e0, start);
    let dt = config.dt;

    for iteration in 1.. {
        let g = energy_gradient(&config.params, spectrum, f, &u)?;
        let u_next = u.zip_map(&g, |a, b| a - dt * b);
        if !u_next.all_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let e_next = energy(&config.params, spectrum, f, &u_next)?;
        if !e_next.is_finite() || e_next > DIVERGENCE_FACTOR * e0.abs() {
            return Err(Error::Diverged {
                iteration,
                energy: e_next,
                initial: e0,
            });
        }
        let done = track.step(&u, &u_next, e_next);
        u = u_next;
        if done {
            break;
        }
    }
    Ok(track.finish(u, Vec::new(), Vec::new()))
}

/// `v ↦ λKᵀKv − div(c ∇v)` with `c = 1/√(|∇u|² + α)` frozen at some `u`.
pub struct LaggedOperator<'a> {
    spectrum: &'a Spectrum,
    lambda: f64,
    coefficients: ImageGrid,
}

impl<'a> LaggedOperator<'a> {
    pub fn new(params: &ModelParams, spectrum: &'a Spectrum, u: &ImageGrid) -> Result<Self> {
        if !(params.alpha > 0.0) {
            return Err(Error::InvalidParameter(
                "lagged diffusivity requires alpha > 0".into(),
            ));
        }
        let alpha = params.alpha;
        let coefficients = gradient(u)
            .magnitude()
            .map(|m| 1.0 / (m * m + alpha).sqrt());
        Ok(Self {
            spectrum,
            lambda: params.lambda,
            coefficients,
        })
    }

    pub fn coefficients(&self) -> &ImageGrid {
        &self.coefficients
    }

    /// Diffusion part only: `−div(c ∇v)`.
    pub fn apply_diffusion(&self, v: &ImageGrid) -> ImageGrid {
        divergence(&gradient(v).scale_pointwise(&self.coefficients)).map(|x| -x)
    }

    pub fn apply(&self, v: &ImageGrid) -> Result<ImageGrid> {
        let normal = self.spectrum.apply_normal(v)?;
        let diff = self.apply_diffusion(v);
        let lambda = self.lambda;
        Ok(normal.zip_map(&diff, |a, b| lambda * a + b))
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: ImageGrid,
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive definite operator.
pub fn conjugate_gradient(
    apply: impl Fn(&ImageGrid) -> Result<ImageGrid>,
    b: &ImageGrid,
    x0: ImageGrid,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let b_norm = b.norm();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut x = x0;
    let ax = apply(&x)?;
    let mut r = b.zip_map(&ax, |a, c| a - c);
    let mut rr = r.inner_product(&r)?;
    if rr.sqrt() <= tol * scale {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: rr.sqrt() / scale,
            converged: true,
        });
    }
    let mut d = r.clone();
    for step in 1..=max_iter {
        let ad = apply(&d)?;
        let curvature = d.inner_product(&ad)?;
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { step, curvature });
        }
        let a = rr / curvature;
        x = x.zip_map(&d, |xv, dv| xv + a * dv);
        r = r.zip_map(&ad, |rv, adv| rv - a * adv);
        let rr_next = r.inner_product(&r)?;
        if rr_next.sqrt() <= tol * scale {
            return Ok(CgOutcome {
                solution: x,
                iterations: step,
                relative_residual: rr_next.sqrt() / scale,
                converged: true,
            });
        }
        let beta = rr_next / rr;
        rr = rr_next;
        d = r.zip_map(&d, |rv, dv| rv + beta * dv);
    }
    Ok(CgOutcome {
        solution: x,
        iterations: max_iter,
        relative_residual: rr.sqrt() / scale,
        converged: false,
    })
}

/// Lagged-diffusivity fixed point: `(λKᵀK + L_k) u^{k+1} = λKᵀf`, from `u = f`.
pub fn solve_fpm(config: &SolverConfig, spectrum: &Spectrum, f: &ImageGrid) -> Result<SolveReport> {
    config.validate(Method::Fpm)?;
    check_inputs(spectrum, f)?;
    let start = Instant::now();
    let lambda = config.params.lambda;
    let rhs = spectrum.apply_adjoint(f)?.map(|v| lambda * v);
    let mut u = f.clone();
    let mut track = Tracker::new(
        Method::Fpm,
        config.stop,
        energy(&config.params, spectrum, f, &u)?,
        start,
    );
    let mut cg_iterations = Vec::new();
    let mut warnings = Vec::new();

    for iteration in 1.. {
        let op = LaggedOperator::new(&config.params, spectrum, &u)?;
        let cg = conjugate_gradient(
            |v| op.apply(v),
            &rhs,
            u.clone(),
            config.cg_tol,
            config.cg_max_iter,
        )?;
        cg_iterations.push(cg.iterations);
        if !cg.converged {
            warnings.push(format!(
                "outer iteration {iteration}: CG hit {} steps at relative residual {:.3e}",
                config.cg_max_iter, cg.relative_residual
            ));
        }
        let u_next = cg.solution;
        if !u_next.all_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let e_next = energy(&config.params, spectrum, f, &u_next)?;
        let done = track.step(&u, &u_next, e_next);
        u = u_next;
        if done {
            break;
        }
    }
    Ok(track.finish(u, cg_iterations, warnings))
}

pub fn solve(
    method: Method,
    config: &SolverConfig,
    spectrum: &Spectrum,
    f: &ImageGrid,
) -> Result<SolveReport> {
    match method {
        Method::Pdm => solve_pdm(config, spectrum, f),
        Method::Tmm => solve_tmm(config, spectrum, f),
        Method::Fpm => solve_fpm(config, spectrum, f),
    }
}

/// Power-iteration estimate of `‖∇‖²`, the largest eigenvalue of `−div ∇`
/// on a periodic `height × width` lattice.
pub fn operator_norm_check(width: usize, height: usize) -> Result<f64> {
    const REL_TOL: f64 = 1e-7;
    const MAX_ITER: usize = 50_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = ImageGrid::from_fn(width, height, |_, _| rng.random_range(-1.0..1.0))?;
    let mut estimate = 0.0;
    for _ in 0..MAX_ITER {
        let n = x.norm();
        x = x.map(|v| v / n);
        let ax = divergence(&gradient(&x)).map(|v| -v);
        let next = x.inner_product(&ax)?;
        let done = (next - estimate).abs() <= REL_TOL * next.abs();
        estimate = next;
        x = ax;
        if done {
            break;
        }
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BlurSpec;

    fn random_grid(w: usize, h: usize, scale: f64, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(w, h, |_, _| scale * rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn method_parsing() {
        assert_eq!("PDM".parse::<Method>().unwrap(), Method::Pdm);
        assert_eq!(" fpm ".parse::<Method>().unwrap(), Method::Fpm);
        assert!("admm".parse::<Method>().is_err());
        assert_eq!(Method::Tmm.to_string(), "TMM");
    }

    #[test]
    fn step_contract() {
        let params = ModelParams::new(0.1, 0.01).unwrap();
        assert!(SolverConfig::pdm(params, 0.35, 0.35).is_ok());
        assert!(SolverConfig::pdm(params, 0.5, 0.25).is_err());
        assert!(SolverConfig::pdm(params, 0.25, 0.6).is_err());
        assert!(SolverConfig::pdm(params, -0.1, 0.1).is_err());
    }

    #[test]
    fn alpha_zero_rejected_for_baselines() {
        let cfg = SolverConfig::new(ModelParams::new(0.1, 0.0).unwrap()).unwrap();
        assert!(cfg.validate(Method::Pdm).is_ok());
        assert!(cfg.validate(Method::Tmm).is_err());
        assert!(cfg.validate(Method::Fpm).is_err());
        let s = Spectrum::identity(4, 4).unwrap();
        let f = random_grid(4, 4, 1.0, 0);
        assert!(solve_tmm(&cfg, &s, &f).is_err());
        assert!(solve_fpm(&cfg, &s, &f).is_err());
    }

    #[test]
    fn default_dt_formula() {
        let p = ModelParams::new(0.12, 0.01).unwrap();
        assert!((default_dt(&p) - 1.6 / 80.12).abs() < 1e-15);
    }

    #[test]
    fn dual_step_stays_feasible() {
        let mut p = DualField::zeros(16, 16).unwrap();
        for seed in 0..20 {
            let g1 = random_grid(16, 16, 50.0, seed);
            let g2 = random_grid(16, 16, 50.0, seed + 100);
            let g = DualField::from_channels(g1, g2).unwrap();
            dual_step(&mut p, &g, 0.35, 0.1);
            assert!(p.max_magnitude() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn dual_step_fixed_point_is_normalized_gradient() {
        // p = ∇u / √(α + |∇u|²) makes the unprojected increment vanish
        let alpha: f64 = 0.04;
        let g = DualField::new(2, 2, vec![0.3, -2.0, 0.0, 5.0], vec![0.1, 0.5, 0.0, -1.0]).unwrap();
        let mut p = DualField::new(
            2,
            2,
            g.p1()
                .iter()
                .zip(g.p2())
                .map(|(a, b)| a / (alpha + a * a + b * b).sqrt())
                .collect(),
            g.p2()
                .iter()
                .zip(g.p1())
                .map(|(b, a)| b / (alpha + a * a + b * b).sqrt())
                .collect(),
        )
        .unwrap();
        let before = p.clone();
        dual_step(&mut p, &g, 0.35, alpha.sqrt());
        for (a, b) in p
            .p1()
            .iter()
            .chain(p.p2())
            .zip(before.p1().iter().chain(before.p2()))
        {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn prox_dual_shares_the_fixed_point() {
        let alpha: f64 = 0.04;
        let g =
            DualField::new(2, 2, vec![0.3, -2.0, 0.0, 50.0], vec![0.1, 0.5, 0.0, -1.0]).unwrap();
        let mut p = DualField::new(
            2,
            2,
            g.p1()
                .iter()
                .zip(g.p2())
                .map(|(a, b)| a / (alpha + a * a + b * b).sqrt())
                .collect(),
            g.p2()
                .iter()
                .zip(g.p1())
                .map(|(b, a)| b / (alpha + a * a + b * b).sqrt())
                .collect(),
        )
        .unwrap();
        let before = p.clone();
        dual_step_prox(&mut p, &g, 0.35, alpha.sqrt());
        for (a, b) in p
            .p1()
            .iter()
            .chain(p.p2())
            .zip(before.p1().iter().chain(before.p2()))
        {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn prox_radius_solves_its_equation() {
        for &sa in &[0.01, 0.1, 1.0] {
            for &m in &[1e-6, 0.01, 0.5, 0.99, 1.0, 1.5, 35.0, 1e4] {
                for &guess in &[0.0, 0.5, 0.999999, 1.0] {
                    let r = prox_radius(m, 0.35, sa, guess);
                    assert!((0.0..1.0).contains(&r));
                    assert!(r <= m);
                    // (r − m)/σ + √α r/√(1 − r²) = 0, written in ρ for accuracy near 1
                    let rho = r / (1.0 - r * r).sqrt();
                    let res = 0.35 * sa * rho + r - m;
                    // recovering ρ from r amplifies r's rounding by 1/(1 − r²)
                    let tol = 1e-14 * m.max(1.0) / (1.0 - r * r);
                    assert!(res.abs() <= tol, "m={m} sa={sa} res={res}");
                }
            }
        }
    }

    #[test]
    fn prox_radius_is_the_minimizer() {
        // brute force over r ∈ [0, 1] of (r − m)²/(2σ) − √α·√(1 − r²)
        let (sigma, sa) = (0.35, 0.1);
        for &m in &[0.2, 0.9, 1.3, 4.0] {
            let obj = |r: f64| (r - m) * (r - m) / (2.0 * sigma) - sa * (1.0 - r * r).sqrt();
            let best = (0..=200_000)
                .map(|k| k as f64 / 200_000.0)
                .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
                .unwrap();
            assert!((prox_radius(m, sigma, sa, 0.0) - best).abs() < 1e-4);
        }
    }

    #[test]
    fn prox_without_alpha_is_projection() {
        let mut p =
            DualField::new(2, 2, vec![0.5, 0.0, 0.9, -0.2], vec![0.0, 0.9, 0.3, 0.1]).unwrap();
        let g = DualField::new(2, 2, vec![1.0, -3.0, 0.2, 0.0], vec![2.0, 0.0, -0.1, 0.4]).unwrap();
        let (mut q1, mut q2) = (p.p1().to_vec(), p.p2().to_vec());
        for k in 0..4 {
            let z1 = q1[k] + 0.35 * g.p1()[k];
            let z2 = q2[k] + 0.35 * g.p2()[k];
            let d = z1.hypot(z2).max(1.0);
            (q1[k], q2[k]) = (z1 / d, z2 / d);
        }
        dual_step_prox(&mut p, &g, 0.35, 0.0);
        for (a, b) in p.p1().iter().chain(p.p2()).zip(q1.iter().chain(&q2)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pdm_constant_is_fixed_point() {
        let f = ImageGrid::filled(8, 8, 100.0).unwrap();
        let s = Spectrum::identity(8, 8).unwrap();
        let cfg = SolverConfig::new(ModelParams::new(0.12, 0.01).unwrap()).unwrap();
        let (report, p) = solve_pdm_with_dual(&cfg, &s, &f).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 2);
        assert_eq!(report.energy_trace.len(), 3);
        assert!(report.final_u().distance(&f).unwrap() < 1e-10);
        assert!(p.max_magnitude() < 1e-12);
    }

    #[test]
    fn tmm_constant_is_stationary() {
        let f = ImageGrid::filled(6, 6, 42.0).unwrap();
        let s = Spectrum::identity(6, 6).unwrap();
        let cfg = SolverConfig::new(ModelParams::new(0.12, 0.01).unwrap()).unwrap();
        let r = solve_tmm(&cfg, &s, &f).unwrap();
        assert!(r.converged);
        assert_eq!(r.final_u(), &f);
    }

    #[test]
    fn tmm_single_step() {
        let params = ModelParams::new(0.5, 0.01).unwrap();
        let f = random_grid(4, 4, 10.0, 77);
        let s = Spectrum::identity(4, 4).unwrap();
        let dt = 0.003;
        let cfg = SolverConfig::new(params)
            .unwrap()
            .with_dt(dt)
            .with_stop(StopRule::new(1e-5, 1).unwrap());
        let r = solve_tmm(&cfg, &s, &f).unwrap();
        assert_eq!(r.iterations, 1);
        // hand-rolled: u1 = f + dt·div(∇f/√(|∇f|²+α)) since Ku − f = 0
        let (w, h) = (4, 4);
        let mut q1 = [0.0; 16];
        let mut q2 = [0.0; 16];
        for i in 0..h {
            for j in 0..w {
                let dx = f.get((i + 1) % h, j) - f.get(i, j);
                let dy = f.get(i, (j + 1) % w) - f.get(i, j);
                let n = (dx * dx + dy * dy + 0.01f64).sqrt();
                q1[i * w + j] = dx / n;
                q2[i * w + j] = dy / n;
            }
        }
        for i in 0..h {
            for j in 0..w {
                let div = q1[i * w + j] - q1[((i + h - 1) % h) * w + j] + q2[i * w + j]
                    - q2[i * w + (j + w - 1) % w];
                let expect = f.get(i, j) + dt * div;
                assert!((r.final_u().get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tmm_divergence_is_reported() {
        let params = ModelParams::new(0.5, 0.01).unwrap();
        let f = random_grid(8, 8, 100.0, 3);
        let s = Spectrum::identity(8, 8).unwrap();
        let cfg = SolverConfig::new(params).unwrap().with_dt(5.0);
        assert!(matches!(
            solve_tmm(&cfg, &s, &f),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn lagged_operator_symmetric_psd() {
        let params = ModelParams::new(0.3, 0.01).unwrap();
        for (k, spec) in [
            BlurSpec::Identity,
            BlurSpec::Gaussian {
                hsize: 3,
                sigma: 0.7,
            },
        ]
        .into_iter()
        .enumerate()
        {
            let s = Spectrum::from_blur(spec, 8, 8).unwrap();
            let base = random_grid(8, 8, 30.0, 40 + k as u64);
            let op = LaggedOperator::new(&params, &s, &base).unwrap();
            for seed in 0..10 {
                let u = random_grid(8, 8, 1.0, seed);
                let v = random_grid(8, 8, 1.0, seed + 50);
                let luv = op.apply_diffusion(&u).inner_product(&v).unwrap();
                let ulv = u.inner_product(&op.apply_diffusion(&v)).unwrap();
                assert!((luv - ulv).abs() <= 1e-10 * (1.0 + luv.abs()));
                assert!(op.apply_diffusion(&u).inner_product(&u).unwrap() >= -1e-10);
                let a = op.apply(&u).unwrap().inner_product(&v).unwrap();
                let b = u.inner_product(&op.apply(&v).unwrap()).unwrap();
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn fpm_constant_input() {
        let f = ImageGrid::filled(8, 8, 90.0).unwrap();
        let s = Spectrum::identity(8, 8).unwrap();
        let cfg = SolverConfig::new(ModelParams::new(0.12, 0.01).unwrap()).unwrap();
        let r = solve_fpm(&cfg, &s, &f).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.final_u().distance(&f).unwrap() < 1e-9);
    }

    #[test]
    fn cg_solves_spd_system() {
        let params = ModelParams::new(0.2, 0.05).unwrap();
        let s = Spectrum::from_blur(
            BlurSpec::Gaussian {
                hsize: 5,
                sigma: 1.0,
            },
            12,
            10,
        )
        .unwrap();
        let base = random_grid(12, 10, 20.0, 5);
        let op = LaggedOperator::new(&params, &s, &base).unwrap();
        let b = random_grid(12, 10, 1.0, 6);
        let out = conjugate_gradient(
            |v| op.apply(v),
            &b,
            ImageGrid::zeros(12, 10).unwrap(),
            1e-10,
            2000,
        )
        .unwrap();
        assert!(out.converged);
        let res = op.apply(&out.solution).unwrap().distance(&b).unwrap() / b.norm();
        assert!(res <= 1e-9);
    }

    #[test]
    fn cg_detects_indefinite_operator() {
        let b = random_grid(4, 4, 1.0, 1);
        let out = conjugate_gradient(
            |v| Ok(v.map(|x| -x)),
            &b,
            ImageGrid::zeros(4, 4).unwrap(),
            1e-8,
            10,
        );
        assert!(matches!(out, Err(Error::CgBreakdown { .. })));
    }

    #[test]
    fn solvers_are_deterministic() {
        let params = ModelParams::new(0.2, 0.01).unwrap();
        let f = random_grid(16, 16, 60.0, 9).map(|v| v + 100.0);
        let s = Spectrum::from_blur(
            BlurSpec::Gaussian {
                hsize: 3,
                sigma: 0.6,
            },
            16,
            16,
        )
        .unwrap();
        let cfg = SolverConfig::new(params).unwrap();
        for m in Method::ALL {
            let a = solve(m, &cfg, &s, &f).unwrap();
            let b = solve(m, &cfg, &s, &f).unwrap();
            assert_eq!(a.energy_trace, b.energy_trace);
            assert_eq!(a.final_u, b.final_u);
        }
    }

    #[test]
    fn operator_norm_small_lattices() {
        let two = operator_norm_check(2, 2).unwrap();
        assert!((two - 8.0).abs() < 1e-6);
        let three = operator_norm_check(3, 3).unwrap();
        assert!(three > 0.0 && three <= 6.0 + 1e-6);
        assert!(operator_norm_check(1, 3).is_err());
    }
}
