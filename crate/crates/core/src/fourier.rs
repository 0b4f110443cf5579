//! Unitary 1D discrete Fourier transform.
//!
//! rustfft computes unnormalized transforms; we scale by `1/sqrt(N)` in both
//! directions so that `F^H F = I` and `||F x|| = ||x||` hold exactly.

use crate::scalar::{sc, Scalar};
use ndarray::{Array1, ArrayView1};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Planned unitary DFT of a fixed length.
#[derive(Clone)]
pub struct UnitaryDft<T> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> UnitaryDft<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        UnitaryDft {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `F x` for real input.
    pub fn forward_real(&self, x: ArrayView1<T>) -> Array1<Complex<T>> {
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        let scale = T::one() / sc::<T>(self.len as f64).sqrt();
        Array1::from_iter(buf.into_iter().map(|c| c * scale))
    }

    /// `F x` for complex input.
    pub fn forward_complex(&self, x: ArrayView1<Complex<T>>) -> Array1<Complex<T>> {
        let mut buf: Vec<Complex<T>> = x.to_vec();
        self.forward.process(&mut buf);
        let scale = T::one() / sc::<T>(self.len as f64).sqrt();
        Array1::from_iter(buf.into_iter().map(|c| c * scale))
    }

    /// `F^H y` (unitary inverse).
    pub fn adjoint(&self, y: ArrayView1<Complex<T>>) -> Array1<Complex<T>> {
        let mut buf: Vec<Complex<T>> = y.to_vec();
        self.inverse.process(&mut buf);
        let scale = T::one() / sc::<T>(self.len as f64).sqrt();
        Array1::from_iter(buf.into_iter().map(|c| c * scale))
    }

    /// Real part of `F^H y`, the zero-filled reconstruction of real signals.
    pub fn adjoint_real(&self, y: ArrayView1<Complex<T>>) -> Array1<T> {
        self.adjoint(y).mapv(|c| c.re)
    }
}

impl<T> std::fmt::Debug for UnitaryDft<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("len", &self.len).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;

    #[test]
    fn unitary_round_trip_and_norm() {
        let n = 37;
        let x: Array1<f64> = Array1::from_shape_fn(n, |i| ((i * 13 % 7) as f64) - 2.5);
        let dft = UnitaryDft::new(n);
        let fx = dft.forward_real(x.view());
        let norm_x = x.dot(&x).sqrt();
        let norm_fx = fx.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm_x - norm_fx).abs() < 1e-12 * norm_x);
        let back = dft.adjoint_real(fx.view());
        for i in 0..n {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn unitarity_preserves_norms(values in proptest::collection::vec(-10.0f64..10.0, 8..80)) {
            let x = Array1::from_vec(values);
            let dft = UnitaryDft::new(x.len());
            let fx = dft.forward_real(x.view());
            let norm_x = x.dot(&x).sqrt();
            let norm_fx = fx.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm_x - norm_fx).abs() <= 1e-10 * (1.0 + norm_x));
            let back = dft.adjoint_real(fx.view());
            for i in 0..x.len() {
                prop_assert!((back[i] - x[i]).abs() <= 1e-10);
            }
        }
    }
}
