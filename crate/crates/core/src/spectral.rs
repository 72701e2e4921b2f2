//! Circulant blur operators diagonalized by the 2-D DFT.
//!
//! FFT convention: forward transform unnormalized, inverse scaled by
//! `1 / (width · height)`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Imaginary residue tolerated when projecting an inverse transform back to reals.
const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Symmetric Gaussian low-pass filter `G(hsize, sigma)`, or no blur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlurSpec {
    Identity,
    Gaussian { hsize: usize, sigma: f64 },
}

impl BlurSpec {
    pub fn gaussian(hsize: usize, sigma: f64) -> Result<Self> {
        let spec = BlurSpec::Gaussian { hsize, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let BlurSpec::Gaussian { hsize, sigma } = *self {
            if hsize == 0 || hsize % 2 == 0 {
                return Err(Error::InvalidParameter(format!(
                    "blur hsize must be odd and positive, got {hsize}"
                )));
            }
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "blur sigma must be positive, got {sigma}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, BlurSpec::Identity)
    }
}

impl fmt::Display for BlurSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlurSpec::Identity => write!(f, "identity"),
            BlurSpec::Gaussian { hsize, sigma } => write!(f, "G({hsize},{sigma})"),
        }
    }
}

/// Planned forward/inverse 2-D transforms for one lattice size.
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

const ROWS_PER_TASK: usize = 16;

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn transform(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        data.par_chunks_mut(w * ROWS_PER_TASK)
            .for_each(|block| row.process(block));
        let mut cols = transpose(data, w, h);
        cols.par_chunks_mut(h * ROWS_PER_TASK)
            .for_each(|block| col.process(block));
        data.copy_from_slice(&transpose(&cols, h, w));
    }

    pub fn forward_real(&self, u: &ImageGrid) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.row_fwd, &self.col_fwd);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.width * self.height) as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Inverse transform followed by projection to the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> ImageGrid {
        self.inverse(&mut data);
        let peak = data.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
        debug_assert!(
            data.iter().all(|z| z.im.abs() <= IMAG_RESIDUE_TOL * peak),
            "imaginary residue above tolerance"
        );
        ImageGrid::from_raw(
            self.width,
            self.height,
            data.into_iter().map(|z| z.re).collect(),
        )
    }
}

fn transpose(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for i in 0..h {
        for j in 0..w {
            out[j * h + i] = data[i * w + j];
        }
    }
    out
}

/// Embeds `G(hsize, sigma)` on the lattice with its center tap at `(0, 0)`
/// and the remaining taps wrapped periodically.
pub fn build_psf(spec: BlurSpec, width: usize, height: usize) -> Result<ImageGrid> {
    spec.validate()?;
    let mut psf = ImageGrid::zeros(width, height)?;
    match spec {
        BlurSpec::Identity => psf.values_mut()[0] = 1.0,
        BlurSpec::Gaussian { hsize, sigma } => {
            if hsize > width.min(height) {
                return Err(Error::InvalidParameter(format!(
                    "blur hsize {hsize} exceeds lattice {width}x{height}"
                )));
            }
            let half = (hsize as isize - 1) / 2;
            let two_var = 2.0 * sigma * sigma;
            let mut taps = Vec::with_capacity(hsize * hsize);
            for a in -half..=half {
                for b in -half..=half {
                    taps.push((a, b, (-((a * a + b * b) as f64) / two_var).exp()));
                }
            }
            let total: f64 = taps.iter().map(|t| t.2).sum();
            let (w, h) = (width as isize, height as isize);
            let values = psf.values_mut();
            for (a, b, weight) in taps {
                let i = a.rem_euclid(h) as usize;
                let j = b.rem_euclid(w) as usize;
                values[i * width + j] += weight / total;
            }
        }
    }
    Ok(psf)
}

/// Transfer data of a circulant operator `K`: `k_hat = F(k)` and
/// `ktk_hat = |k_hat|²`, the transfer function of `KᵀK`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    width: usize,
    height: usize,
    k_hat: Vec<Complex64>,
    ktk_hat: Vec<f64>,
    identity: bool,
    fft: Arc<Fft2>,
}

impl Spectrum {
    pub fn from_psf(psf: &ImageGrid) -> Self {
        make_spectrum(psf)
    }

    pub fn from_blur(spec: BlurSpec, width: usize, height: usize) -> Result<Self> {
        let psf = build_psf(spec, width, height)?;
        Ok(make_spectrum(&psf))
    }

    pub fn identity(width: usize, height: usize) -> Result<Self> {
        Self::from_blur(BlurSpec::Identity, width, height)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn k_hat(&self) -> &[Complex64] {
        &self.k_hat
    }

    pub fn ktk_hat(&self) -> &[f64] {
        &self.ktk_hat
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    fn check(&self, u: &ImageGrid) -> Result<()> {
        if u.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: u.width(),
                right_height: u.height(),
            });
        }
        Ok(())
    }

    /// `K u`.
    pub fn apply(&self, u: &ImageGrid) -> Result<ImageGrid> {
        apply_blur(self, u)
    }

    /// `Kᵀ u`.
    pub fn apply_adjoint(&self, u: &ImageGrid) -> Result<ImageGrid> {
        apply_blur_adjoint(self, u)
    }

    /// `KᵀK u`.
    pub fn apply_normal(&self, u: &ImageGrid) -> Result<ImageGrid> {
        self.check(u)?;
        if self.identity {
            return Ok(u.clone());
        }
        Ok(self.filter(u, |k, _| Complex64::new(self.ktk_hat[k], 0.0)))
    }

    fn filter(&self, u: &ImageGrid, transfer: impl Fn(usize, Complex64) -> Complex64) -> ImageGrid {
        let mut data = self.fft.forward_real(u);
        for (k, z) in data.iter_mut().enumerate() {
            *z *= transfer(k, self.k_hat[k]);
        }
        self.fft.inverse_real(data)
    }
}

/// Forward DFT of `psf` and its power spectrum.
pub fn make_spectrum(psf: &ImageGrid) -> Spectrum {
    let fft = Arc::new(Fft2::new(psf.width(), psf.height()));
    let k_hat = fft.forward_real(psf);
    let ktk_hat = k_hat.iter().map(|z| z.norm_sqr()).collect();
    let identity = psf.values()[0] == 1.0 && psf.values()[1..].iter().all(|&v| v == 0.0);
    Spectrum {
        width: psf.width(),
        height: psf.height(),
        k_hat,
        ktk_hat,
        identity,
        fft,
    }
}

/// Circular convolution `K u = F⁻¹(k_hat · F(u))`.
pub fn apply_blur(spectrum: &Spectrum, u: &ImageGrid) -> Result<ImageGrid> {
    spectrum.check(u)?;
    if spectrum.identity {
        return Ok(u.clone());
    }
    Ok(spectrum.filter(u, |_, k| k))
}

/// Adjoint `Kᵀ u = F⁻¹(conj(k_hat) · F(u))`.
pub fn apply_blur_adjoint(spectrum: &Spectrum, u: &ImageGrid) -> Result<ImageGrid> {
    spectrum.check(u)?;
    if spectrum.identity {
        return Ok(u.clone());
    }
    Ok(spectrum.filter(u, |_, k| k.conj()))
}

/// Exact solve of `(I + λτ KᵀK) u = u_prev + λτ Kᵀf + τ div p` by bin-wise
/// division in the Fourier domain. `ktf` is the precomputed `Kᵀf`.
pub fn solve_primal(
    spectrum: &Spectrum,
    u_prev: &ImageGrid,
    ktf: &ImageGrid,
    div_p: &ImageGrid,
    lambda: f64,
    tau: f64,
) -> Result<ImageGrid> {
    spectrum.check(u_prev)?;
    spectrum.check(ktf)?;
    spectrum.check(div_p)?;
    if !(lambda > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda and tau must be positive, got {lambda} and {tau}"
        )));
    }
    let lt = lambda * tau;
    let rhs: Vec<f64> = u_prev
        .values()
        .iter()
        .zip(ktf.values())
        .zip(div_p.values())
        .map(|((u, g), d)| u + lt * g + tau * d)
        .collect();
    if spectrum.identity {
        let scale = 1.0 / (1.0 + lt);
        return Ok(ImageGrid::from_raw(
            u_prev.width(),
            u_prev.height(),
            rhs.into_iter().map(|v| v * scale).collect(),
        ));
    }
    let rhs = ImageGrid::from_raw(u_prev.width(), u_prev.height(), rhs);
    let mut data = spectrum.fft.forward_real(&rhs);
    for (z, &ktk) in data.iter_mut().zip(&spectrum.ktk_hat) {
        *z /= 1.0 + lt * ktk;
    }
    Ok(spectrum.fft.inverse_real(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn psf_validation() {
        assert!(BlurSpec::gaussian(4, 1.0).is_err());
        assert!(BlurSpec::gaussian(0, 1.0).is_err());
        assert!(BlurSpec::gaussian(3, 0.0).is_err());
        assert!(build_psf(
            BlurSpec::Gaussian {
                hsize: 9,
                sigma: 1.0
            },
            8,
            16
        )
        .is_err());
        assert!(build_psf(
            BlurSpec::Gaussian {
                hsize: 9,
                sigma: 1.0
            },
            9,
            9
        )
        .is_ok());
    }

    #[test]
    fn identity_and_single_tap_are_deltas() {
        for spec in [
            BlurSpec::Identity,
            BlurSpec::Gaussian {
                hsize: 1,
                sigma: 3.7,
            },
        ] {
            let psf = build_psf(spec, 5, 4).unwrap();
            assert_eq!(psf.values()[0], 1.0);
            assert!(psf.values()[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gaussian_three_by_three() {
        let psf = build_psf(
            BlurSpec::Gaussian {
                hsize: 3,
                sigma: 0.5,
            },
            8,
            8,
        )
        .unwrap();
        let e2 = (-2.0f64).exp();
        let e4 = (-4.0f64).exp();
        let z = 1.0 + 4.0 * e2 + 4.0 * e4;
        assert!((psf.get(0, 0) - 1.0 / z).abs() < 1e-15);
        assert!((psf.get(0, 0) - 0.619_347_03).abs() < 1e-8);
        for (i, j) in [(0, 1), (1, 0), (0, 7), (7, 0)] {
            assert!((psf.get(i, j) - e2 / z).abs() < 1e-15);
            assert!((psf.get(i, j) - 0.083_819_51).abs() < 1e-8);
        }
        for (i, j) in [(1, 1), (1, 7), (7, 1), (7, 7)] {
            assert!((psf.get(i, j) - e4 / z).abs() < 1e-15);
            assert!((psf.get(i, j) - 0.011_343_74).abs() < 1e-8);
        }
        assert!((psf.sum() - 1.0).abs() < 1e-12);
        assert!(psf.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn identity_spectrum_is_flat() {
        let s = Spectrum::identity(6, 5).unwrap();
        assert!(s
            .k_hat()
            .iter()
            .all(|z| (z.re - 1.0).abs() < 1e-15 && z.im.abs() < 1e-15));
        assert!(s.ktk_hat().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn dc_gain_is_one() {
        let s = Spectrum::from_blur(
            BlurSpec::Gaussian {
                hsize: 7,
                sigma: 1.3,
            },
            16,
            12,
        )
        .unwrap();
        assert!((s.k_hat()[0].re - 1.0).abs() < 1e-12);
        assert!(s.k_hat()[0].im.abs() < 1e-12);
        assert!(s.ktk_hat().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn power_spectrum_matches_autocorrelation() {
        let (w, h) = (8, 8);
        let psf = build_psf(
            BlurSpec::Gaussian {
                hsize: 3,
                sigma: 0.5,
            },
            w,
            h,
        )
        .unwrap();
        // periodic autocorrelation a(s) = Σ_x k(x) k(x + s)
        let auto = ImageGrid::from_fn(w, h, |si, sj| {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    acc += psf.get(i, j) * psf.get((i + si) % h, (j + sj) % w);
                }
            }
            acc
        })
        .unwrap();
        let fft = Fft2::new(w, h);
        let via_auto = fft.forward_real(&auto);
        let s = make_spectrum(&psf);
        for (a, &b) in via_auto.iter().zip(s.ktk_hat()) {
            assert!((a.re - b).abs() < 1e-10);
            assert!(a.im.abs() < 1e-10);
        }
    }

    #[test]
    fn blur_identity_and_constant() {
        let u = random_grid(7, 5, 1);
        let id = Spectrum::identity(7, 5).unwrap();
        let out = apply_blur(&id, &u).unwrap();
        assert!(out.distance(&u).unwrap() < 1e-12);
        let out = apply_blur_adjoint(&id, &u).unwrap();
        assert!(out.distance(&u).unwrap() < 1e-12);

        let g = Spectrum::from_blur(
            BlurSpec::Gaussian {
                hsize: 5,
                sigma: 1.0,
            },
            7,
            5,
        )
        .unwrap();
        let c = ImageGrid::filled(7, 5, 42.0).unwrap();
        let out = apply_blur(&g, &c).unwrap();
        assert!(out.values().iter().all(|v| (v - 42.0).abs() < 1e-10));
    }

    #[test]
    fn blur_of_delta_is_psf() {
        let spec = BlurSpec::Gaussian {
            hsize: 3,
            sigma: 0.5,
        };
        let s = Spectrum::from_blur(spec, 8, 8).unwrap();
        let psf = build_psf(spec, 8, 8).unwrap();
        let mut delta = ImageGrid::zeros(8, 8).unwrap();
        delta.values_mut()[0] = 1.0;
        let out = apply_blur(&s, &delta).unwrap();
        assert!(out.distance(&psf).unwrap() < 1e-12);
        // a one-hot elsewhere yields the shifted PSF
        let mut hot = ImageGrid::zeros(8, 8).unwrap();
        hot.values_mut()[3 * 8 + 5] = 1.0;
        let out = apply_blur(&s, &hot).unwrap();
        assert!(out.distance(&psf.circular_shift(3, 5)).unwrap() < 1e-12);
    }

    #[test]
    fn even_psf_is_self_adjoint() {
        let s = Spectrum::from_blur(
            BlurSpec::Gaussian {
                hsize: 5,
                sigma: 0.9,
            },
            10,
            9,
        )
        .unwrap();
        let u = random_grid(10, 9, 3);
        let a = apply_blur(&s, &u).unwrap();
        let b = apply_blur_adjoint(&s, &u).unwrap();
        assert!(a.distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn round_trip_odd_sizes() {
        for (w, h) in [(3, 3), (5, 7), (7, 5), (16, 9)] {
            let u = random_grid(w, h, (w * h) as u64);
            let fft = Fft2::new(w, h);
            let back = fft.inverse_real(fft.forward_real(&u));
            assert!(back.distance(&u).unwrap() < 1e-10);
        }
    }

    #[test]
    fn solve_primal_limits() {
        let (w, h) = (6, 6);
        let id = Spectrum::identity(w, h).unwrap();
        let f = random_grid(w, h, 11);
        let zero = ImageGrid::zeros(w, h).unwrap();
        let u = solve_primal(&id, &f, &f, &zero, 0.7, 0.35).unwrap();
        assert!(u.distance(&f).unwrap() < 1e-12);

        let d = random_grid(w, h, 12);
        let tau = 0.35;
        let u = solve_primal(&id, &f, &f, &d, 1e-14, tau).unwrap();
        let expect = f.zip_map(&d, |a, b| a + tau * b);
        assert!(u.distance(&expect).unwrap() < 1e-10);

        assert!(solve_primal(&id, &f, &f, &d, 0.0, tau).is_err());
        let other = ImageGrid::zeros(5, 6).unwrap();
        assert!(solve_primal(&id, &f, &other, &d, 1.0, tau).is_err());
    }
}
