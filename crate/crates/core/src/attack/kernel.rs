use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Kernel2d;

/// Normalized isotropic Gaussian smoothing window used to blur gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel<T> {
    sigma: f64,
    kernel: Kernel2d<T>,
}

impl<T: Scalar> GaussianKernel<T> {
    pub fn side(&self) -> usize {
        self.kernel.side()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.kernel.weight(i, j)
    }

    pub fn weights(&self) -> &[T] {
        self.kernel.weights()
    }
}

impl<T> AsRef<Kernel2d<T>> for GaussianKernel<T> {
    fn as_ref(&self) -> &Kernel2d<T> {
        &self.kernel
    }
}

/// Default width: a third of the side, so the window spans about ±3σ.
pub fn default_sigma(size: usize) -> f64 {
    size as f64 / 3.0
}

/// `w[i][j] ∝ exp(−((i−r)² + (j−r)²) / 2σ²)`, `r = (size−1)/2`, summing to 1.
pub fn make_gaussian_kernel<T: Scalar>(size: usize, sigma: f64) -> Result<GaussianKernel<T>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "gaussian kernel size must be odd and positive, got {size}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gaussian kernel sigma must be positive, got {sigma}"
        )));
    }
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size * size)
        .map(|k| {
            let (i, j) = ((k / size) as f64, (k % size) as f64);
            (-((i - r).powi(2) + (j - r).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|&v| T::of(v / total)).collect();
    Ok(GaussianKernel {
        sigma,
        kernel: Kernel2d::new(size, weights)?,
    })
}
