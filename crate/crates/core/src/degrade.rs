//! Test-data pipeline: linear-stretch normalization, blur, and seeded
//! additive white Gaussian noise (`f = Ku + η`).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::spectral::{BlurSpec, Spectrum};

/// Noise generator family; bump when the sampling scheme changes.
pub const NOISE_GENERATOR: &str = "chacha20+ziggurat/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    /// Noise standard deviation on the [0, 255] intensity scale.
    pub noise_sigma: f64,
    pub blur: BlurSpec,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        self.blur.validate()
    }
}

/// Linear stretch onto `[0, 255]`.
pub fn normalize(raw: &ImageGrid) -> Result<ImageGrid> {
    let (lo, hi) = (raw.min(), raw.max());
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::InvalidGrid(
            "cannot normalize an image with zero dynamic range".into(),
        ));
    }
    Ok(raw.map(|v| 255.0 * ((v - lo) / range)))
}

/// i.i.d. `N(0, sigma²)` field drawn in row-major order from `seed`.
pub fn gaussian_noise(width: usize, height: usize, sigma: f64, seed: u64) -> Result<ImageGrid> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = (0..width * height)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect();
    ImageGrid::new(width, height, values)
}

/// Blur first, then add noise. The result is not clipped.
pub fn degrade(spec: &DegradeSpec, clean: &ImageGrid) -> Result<ImageGrid> {
    spec.validate()?;
    let (w, h) = clean.dims();
    let blurred = if spec.blur.is_identity() {
        clean.clone()
    } else {
        Spectrum::from_blur(spec.blur, w, h)?.apply(clean)?
    };
    if spec.noise_sigma == 0.0 {
        return Ok(blurred);
    }
    let noise = gaussian_noise(w, h, spec.noise_sigma, spec.seed)?;
    Ok(blurred.zip_map(&noise, |a, b| a + b))
}
