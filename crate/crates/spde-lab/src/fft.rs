//! Thin d-dimensional FFT wrapper over rustfft (separable axis-by-axis
//! transforms on an `N^d` row-major array, same `N` per axis).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Plan construction is milliseconds-scale, far more than a small transform
/// itself, and the noise sampler builds an `FftNd` per increment — cache the
/// plans per size process-wide.
static PLAN_CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();

pub struct FftNd {
    n: usize,
    dim: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftNd {
    pub fn new(n: usize, dim: usize) -> Self {
        assert!(n >= 2 && (1..=3).contains(&dim));
        let cache = PLAN_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let (fwd, inv) = cache
            .lock()
            .unwrap()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            })
            .clone();
        FftNd { n, dim, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unnormalized forward DFT along every axis.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.fwd.clone());
    }

    /// Inverse DFT along every axis, normalized by `1/N^d`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inv.clone());
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Plain conjugate-exponent sum `Σ_k c_k e^{+2πi k·j/N}` without the
    /// `1/N^d` factor (spectral synthesis convention).
    pub fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inv.clone());
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        match self.dim {
            1 => plan.process(data),
            _ => {
                // Last axis: contiguous rows.
                for row in data.chunks_exact_mut(n) {
                    plan.process(row);
                }
                // Remaining axes: gather strided lines into a scratch buffer.
                let mut line = vec![Complex64::default(); n];
                for axis in 0..self.dim - 1 {
                    let stride = n.pow((self.dim - 1 - axis) as u32);
                    let lines = self.len() / n;
                    for l in 0..lines {
                        // Decompose the line index into (outer block, offset).
                        let block = l / stride;
                        let offset = l % stride;
                        let base = block * stride * n + offset;
                        for (k, slot) in line.iter_mut().enumerate() {
                            *slot = data[base + k * stride];
                        }
                        plan.process(&mut line);
                        for (k, v) in line.iter().enumerate() {
                            data[base + k * stride] = *v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_identity() {
        for dim in 1..=3usize {
            let n = 8;
            let fft = FftNd::new(n, dim);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let orig: Vec<Complex64> = (0..fft.len())
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let mut data = orig.clone();
            fft.forward(&mut data);
            fft.inverse(&mut data);
            for (a, b) in data.iter().zip(&orig) {
                assert_relative_eq!(a.re, b.re, epsilon = 1e-12);
                assert_relative_eq!(a.im, b.im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn delta_transforms_to_constant() {
        let fft = FftNd::new(4, 2);
        let mut data = vec![Complex64::default(); 16];
        data[0] = Complex64::new(1.0, 0.0);
        fft.forward(&mut data);
        for v in &data {
            assert_relative_eq!(v.re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn plane_wave_transforms_to_delta() {
        // x[j] = e^{2π i k j / N} -> N at frequency k (2-d, k = (1, 2)).
        let n = 8usize;
        let fft = FftNd::new(n, 2);
        let mut data = vec![Complex64::default(); n * n];
        for a in 0..n {
            for b in 0..n {
                let phase =
                    2.0 * std::f64::consts::PI * (a as f64 * 1.0 + b as f64 * 2.0) / n as f64;
                data[a * n + b] = Complex64::new(phase.cos(), phase.sin());
            }
        }
        fft.forward(&mut data);
        for a in 0..n {
            for b in 0..n {
                // Forward convention e^{-2πi...}: the spike sits at +k.
                let expect = if (a, b) == (1, 2) { (n * n) as f64 } else { 0.0 };
                assert_relative_eq!(data[a * n + b].re, expect, epsilon = 1e-9);
                assert_relative_eq!(data[a * n + b].im, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn parseval() {
        let fft = FftNd::new(8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data: Vec<Complex64> = (0..fft.len())
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, 0.0))
            .collect();
        let phys: f64 = data.iter().map(|v| v.norm_sqr()).sum();
        fft.forward(&mut data);
        let freq: f64 = data.iter().map(|v| v.norm_sqr()).sum();
        assert_relative_eq!(freq, phys * fft.len() as f64, max_relative = 1e-12);
    }
}
