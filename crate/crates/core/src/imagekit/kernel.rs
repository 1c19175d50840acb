use alloc::format;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::math;

/// Square convolution kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

/// Sampled Gaussian `exp(-r^2 / 2 sigma^2)` on `size` taps, normalized to sum 1.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size.is_multiple_of(2) {
        return Err(contract(format!("kernel size must be odd, got {size}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(contract(format!("sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| math::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

impl Kernel2D {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) || weights.len() != size * size {
            return Err(contract("kernel must be odd-sized with size*size weights"));
        }
        Ok(Self { size, weights })
    }

    /// Outer product of two normalized 1D Gaussians, so the weights sum to 1.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        let k = gaussian_kernel_1d(size, sigma)?;
        let mut weights = Vec::with_capacity(size * size);
        for wy in &k {
            for wx in &k {
                weights.push(wy * wx);
            }
        }
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, dx: usize, dy: usize) -> f64 {
        self.weights[dy * self.size + dx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_normalized() {
        for (size, sigma) in [(3, 0.5), (5, 1.0), (11, 1.5), (1, 3.0)] {
            let k = Kernel2D::gaussian(size, sigma).unwrap();
            let sum: f64 = k.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "{size} {sigma}: {sum}");
        }
    }

    #[test]
    fn even_size_rejected() {
        assert!(gaussian_kernel_1d(4, 1.0).is_err());
        assert!(gaussian_kernel_1d(3, 0.0).is_err());
    }
}
