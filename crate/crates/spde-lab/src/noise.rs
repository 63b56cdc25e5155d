//! Spatially homogeneous, white-in-time Gaussian noise on a periodic grid.
//!
//! Sampling is spectral: independent complex Gaussians per dual-lattice mode
//! with Hermitian symmetry, scaled by the square roots of the discretized
//! spectral-measure weights, then a single inverse FFT. This gives exact
//! stationarity on the torus at `O(N^d log N)` cost.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::kernels::{CovarianceSpec, Family};
use crate::quad;

/// Periodic spatial grid `[0, L]^d` with `N` points per axis, plus the solver
/// time step carried along with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub length: f64,
    pub points_per_dim: usize,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(dim: usize, length: f64, points_per_dim: usize, dt: f64) -> Self {
        GridSpec {
            dim,
            length,
            points_per_dim,
            dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 3 {
            return Err(Error::parameter(format!(
                "grid dim must be in 1..=3, got {}",
                self.dim
            )));
        }
        let n = self.points_per_dim;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::parameter(format!(
                "points_per_dim must be a power of two >= 8, got {n}"
            )));
        }
        if !(self.length > 0.0) {
            return Err(Error::parameter("grid length must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::parameter("dt must be positive"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    /// Physical spacing `L / N`.
    pub fn dx(&self) -> f64 {
        self.length / self.points_per_dim as f64
    }

    /// Signed integer lattice index of flat mode `k` along each axis
    /// (`0..N/2` nonnegative, then negative).
    pub fn signed_index(&self, flat: usize) -> Vec<i64> {
        let n = self.points_per_dim;
        let mut out = Vec::with_capacity(self.dim);
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            let stride = n.pow(axis as u32);
            let k = rem / stride;
            rem %= stride;
            let signed = if k <= n / 2 {
                k as i64
            } else {
                k as i64 - n as i64
            };
            out.push(signed);
        }
        out
    }

    /// Dual-lattice frequency `xi_k = 2π k / L` of flat mode `k`.
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let scale = 2.0 * std::f64::consts::PI / self.length;
        self.signed_index(flat)
            .into_iter()
            .map(|k| k as f64 * scale)
            .collect()
    }

    /// Flat index of the Hermitian partner `-k mod N` of flat mode `k`.
    pub fn conjugate_mode(&self, flat: usize) -> usize {
        let n = self.points_per_dim;
        let mut rem = flat;
        let mut out = 0usize;
        for axis in (0..self.dim).rev() {
            let stride = n.pow(axis as u32);
            let k = rem / stride;
            rem %= stride;
            out += ((n - k) % n) * stride;
        }
        out
    }
}

/// One white-in-time increment `W(dt·cell)` realized as a stationary real
/// Gaussian field (already scaled by `sqrt(dt)`).
#[derive(Debug, Clone)]
pub struct NoiseIncrement {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Discretized spectral-measure weights on the dual lattice:
/// `spectral_density(xi_k) · (2π/L)^d`, except that the singular `k = 0` mode
/// of the Riesz and fractional families carries the full cell integral of the
/// density over `[-π/L, π/L]^d` (the singularity is integrable and its mass
/// should not be dropped).
pub fn spectral_weights(cov: &CovarianceSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    cov.validate()?;
    grid.validate()?;
    if cov.dim != grid.dim {
        return Err(Error::parameter("covariance and grid dims differ"));
    }
    let cell = (2.0 * std::f64::consts::PI / grid.length).powi(grid.dim as i32);
    let weights = crate::exec::try_map_indexed(grid.cells(), |flat| {
        let xi = grid.frequency(flat);
        if xi.iter().all(|v| *v == 0.0) {
            zero_mode_weight(cov, grid)
        } else if cov.family == Family::Fractional && xi.iter().any(|v| *v == 0.0) {
            // Axis modes of the product density: singular coordinates take
            // their 1-D cell integral, regular ones the pointwise value.
            let hurst = cov.hurst.as_ref().unwrap();
            let h_half = std::f64::consts::PI / grid.length;
            let mut v = cell;
            let scale = 2.0 * std::f64::consts::PI / grid.length;
            for (xij, hj) in xi.iter().zip(hurst) {
                if *xij == 0.0 {
                    let a = 2.0 - 2.0 * hj;
                    v *= 2.0 * h_half.powf(a) / a / scale;
                } else {
                    v *= xij.abs().powf(1.0 - 2.0 * hj);
                }
            }
            Ok(v)
        } else {
            Ok(cov.spectral_density(&xi)? * cell)
        }
    })?;
    Ok(weights)
}

/// Cell integral of the spectral density over `[-π/L, π/L]^d`.
fn zero_mode_weight(cov: &CovarianceSpec, grid: &GridSpec) -> Result<f64> {
    let h = std::f64::consts::PI / grid.length;
    match cov.family {
        Family::Bessel => {
            // Smooth at the origin: plain midpoint value.
            let cell = (2.0 * h).powi(grid.dim as i32);
            Ok(cov.spectral_density(&vec![0.0; grid.dim])? * cell)
        }
        Family::Fractional => {
            let hurst = cov.hurst.as_ref().unwrap();
            let mut v = 1.0;
            for hj in hurst {
                let a = 2.0 - 2.0 * hj;
                v *= 2.0 * h.powf(a) / a;
            }
            Ok(v)
        }
        Family::Riesz => {
            let beta = cov.beta.unwrap();
            match grid.dim {
                // 2 ∫_0^h xi^{beta-1} d xi
                1 => Ok(2.0 * h.powf(beta) / beta),
                // Polar over the square: 8 ∫_0^{π/4} (h/cos θ)^beta / beta dθ
                2 => {
                    let v = quad::integrate(
                        |th| (h / th.cos()).powf(beta) / beta,
                        0.0,
                        std::f64::consts::FRAC_PI_4,
                        1e-10,
                    )?;
                    Ok(8.0 * v)
                }
                // Six faces; on the face z = h the solid-angle element gives
                // (h/beta) ∫∫_{[-h,h]^2} (x^2+y^2+h^2)^{(beta-3)/2} dx dy.
                3 => {
                    let inner = |x: f64| {
                        quad::integrate(
                            move |y| (x * x + y * y + h * h).powf((beta - 3.0) / 2.0),
                            -h,
                            h,
                            1e-9,
                        )
                        .unwrap_or(f64::NAN)
                    };
                    let v = quad::integrate(inner, -h, h, 1e-8)?;
                    Ok(6.0 * h / beta * v)
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Draw one increment: `w(x) = Σ_k sqrt(dt·λ_k) z_k e^{i xi_k·x}` with
/// Hermitian-symmetric unit complex Gaussians `z_k`.
pub fn sample_increment<R: Rng + ?Sized>(
    cov: &CovarianceSpec,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    let weights = spectral_weights(cov, grid)?;
    Ok(increment_from_weights(&weights, grid, rng))
}

/// Sampling path used by the solver, which precomputes the weights once.
pub fn increment_from_weights<R: Rng + ?Sized>(
    weights: &[f64],
    grid: &GridSpec,
    rng: &mut R,
) -> NoiseIncrement {
    let total = grid.cells();
    assert_eq!(weights.len(), total);
    let mut modes = vec![Complex64::default(); total];
    let mut visited = vec![false; total];
    for flat in 0..total {
        if visited[flat] {
            continue;
        }
        let partner = grid.conjugate_mode(flat);
        if partner == flat {
            // Self-conjugate mode: real Gaussian, unit variance.
            let g: f64 = rng.sample(StandardNormal);
            modes[flat] = Complex64::new(g, 0.0);
            visited[flat] = true;
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re, im) / 2.0f64.sqrt();
            modes[flat] = z;
            modes[partner] = z.conj();
            visited[flat] = true;
            visited[partner] = true;
        }
    }
    for (m, w) in modes.iter_mut().zip(weights) {
        *m *= (w * grid.dt).sqrt();
    }
    let fft = FftNd::new(grid.points_per_dim, grid.dim);
    fft.inverse_unnormalized(&mut modes);
    NoiseIncrement {
        grid: *grid,
        values: modes.into_iter().map(|v| v.re).collect(),
    }
}

impl NoiseIncrement {
    /// Write the field as a flat little-endian f64 binary plus a JSON sidecar
    /// carrying the grid and seed; byte-exact for a fixed (seed, spec).
    pub fn export(&self, base: &std::path::Path, seed: u64) -> Result<()> {
        crate::report::write_field_binary(base, &self.values, &self.grid, seed)
    }
}
