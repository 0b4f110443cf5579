//! Seeded synthetic training data: random 1D piecewise-constant signals with
//! Gaussian-noise measurements for denoising and MRI.
//!
//! All generation is a pure function of `(spec, seed)`. Each image draws from
//! its own ChaCha8 stream (stream id = image index), so datasets are
//! bit-reproducible across platforms and images can be generated in parallel
//! without changing the result.

use crate::error::{Error, Result};
use crate::fourier::UnitaryDft;
use crate::problems::Measurement;
use crate::scalar::{sc, Scalar};
use ndarray::Array1;
use num_complex::Complex;
use rand::distributions::uniform::SampleUniform;
use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Dataset shape: signal length, noise level, image count and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub n_pixels: usize,
    pub sigma: f64,
    pub n_images: usize,
    pub seed: u64,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pixels < 8 {
            return Err(Error::domain("signal length must be at least 8"));
        }
        if self.n_images < 1 {
            return Err(Error::domain("at least one image required"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain("sigma must be nonnegative and finite"));
        }
        Ok(())
    }
}

/// Problem family a dataset serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Denoise,
    Mri,
}

/// One training set: ground-truth signals with their measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub kind: DataKind,
    pub spec: SignalSpec,
    pub signals: Vec<Array1<T>>,
    pub measurements: Vec<Measurement<T>>,
}

/// RNG stream for image `index` under the dataset seed.
pub fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// A random piecewise-constant signal: 1 on `|j - C| < R`, 0 elsewhere, with
/// `C ~ U[N/4, 3N/4]` and `R ~ U[N/8, N/4]` drawn as continuous uniforms.
pub fn gen_signal<T: Scalar>(n_pixels: usize, rng: &mut ChaCha8Rng) -> Array1<T>
where
    T: SampleUniform,
{
    let n = n_pixels as f64;
    let center: f64 = rng.gen_range(n / 4.0..=3.0 * n / 4.0);
    let radius: f64 = rng.gen_range(n / 8.0..=n / 4.0);
    Array1::from_shape_fn(n_pixels, |j| {
        if ((j as f64) - center).abs() < radius {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Noisy denoising measurement `y = x + sigma * omega`.
pub fn gen_denoise_pair<T: Scalar>(x: &Array1<T>, sigma: T, rng: &mut ChaCha8Rng) -> Array1<T>
where
    StandardNormal: Distribution<T>,
{
    x.mapv(|v| {
        let w: T = StandardNormal.sample(rng);
        v + sigma * w
    })
}

/// Noisy MRI measurement `y = F x + sigma/sqrt(2) * omega` with complex
/// standard-Gaussian noise.
pub fn gen_mri_pair<T: Scalar>(
    x: &Array1<T>,
    sigma: T,
    rng: &mut ChaCha8Rng,
) -> Array1<Complex<T>>
where
    StandardNormal: Distribution<T>,
{
    let dft = UnitaryDft::new(x.len());
    let fx = dft.forward_real(x.view());
    let scale = sigma / sc::<T>(2.0).sqrt();
    fx.mapv(|c| {
        let wr: T = StandardNormal.sample(rng);
        let wi: T = StandardNormal.sample(rng);
        Complex::new(c.re + scale * wr, c.im + scale * wi)
    })
}

/// Generates a full dataset from a spec.
pub fn gen_dataset<T: Scalar>(spec: &SignalSpec, kind: DataKind) -> Result<Dataset<T>>
where
    T: SampleUniform,
    StandardNormal: Distribution<T>,
{
    spec.validate()?;
    let sigma = sc::<T>(spec.sigma);
    let mut signals = Vec::with_capacity(spec.n_images);
    let mut measurements = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let mut rng = image_rng(spec.seed, i);
        let x = gen_signal::<T>(spec.n_pixels, &mut rng);
        let y = match kind {
            DataKind::Denoise => Measurement::Real(gen_denoise_pair(&x, sigma, &mut rng)),
            DataKind::Mri => Measurement::Complex(gen_mri_pair(&x, sigma, &mut rng)),
        };
        signals.push(x);
        measurements.push(y);
    }
    Ok(Dataset {
        kind,
        spec: *spec,
        signals,
        measurements,
    })
}
