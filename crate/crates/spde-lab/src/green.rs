//! Fundamental solutions of the heat and wave operators.
//!
//! Heat (`∂_t - Δ/2`): `Γ(t, dx) = p_t(x) dx` with Fourier transform
//! `e^{-t|xi|^2/2}`. Wave (`∂_t^2 - Δ`, `d <= 3`): the measures
//! `1/2 · 1_{|x|<t} dx`, `(2π)^{-1} (t^2-|x|^2)_+^{-1/2} dx` and
//! `(4πt)^{-1} σ_t(dx)`, all with Fourier transform `sin(t|xi|)/|xi|`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::CovarianceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Heat,
    Wave,
}

/// The fundamental-solution family of a second-order operator.
///
/// Serializes to `{"operator": "heat"|"wave", "dim": d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenSpec {
    pub operator: Operator,
    pub dim: usize,
}

/// Quadrature representation of the measure `Γ(t, ·)`: equal-weight points
/// whose weights sum to the total mass.
#[derive(Debug, Clone)]
pub struct WeightedPointCloud {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub total: f64,
}

impl GreenSpec {
    pub fn heat(dim: usize) -> Self {
        GreenSpec {
            operator: Operator::Heat,
            dim,
        }
    }

    pub fn wave(dim: usize) -> Self {
        GreenSpec {
            operator: Operator::Wave,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 3 {
            return Err(Error::parameter(format!(
                "green dim must be in 1..=3, got {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Fourier transform `FΓ(t)(xi)` as a function of `|xi|`.
    pub fn ft(&self, t: f64, xi_norm: f64) -> f64 {
        debug_assert!(t > 0.0);
        match self.operator {
            Operator::Heat => (-t * xi_norm * xi_norm / 2.0).exp(),
            Operator::Wave => {
                let z = t * xi_norm;
                if z.abs() < 1e-6 {
                    // sin(z)/|xi| = t (1 - z^2/6 + ...)
                    t * (1.0 - z * z / 6.0)
                } else {
                    (z).sin() / xi_norm
                }
            }
        }
    }

    /// `FΓ(t)(xi)` at a vector frequency (radial, convenience wrapper).
    pub fn ft_vec(&self, t: f64, xi: &[f64]) -> f64 {
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.ft(t, norm)
    }

    /// Total mass `Γ(t, R^d)`: 1 for heat, `t` for wave in d = 1, 2, 3.
    pub fn total_mass(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0);
        match self.operator {
            Operator::Heat => 1.0,
            Operator::Wave => t,
        }
    }

    /// Is `Γ(t, ·)` supported in the closed ball of radius `t`?
    pub fn compactly_supported(&self) -> bool {
        matches!(self.operator, Operator::Wave)
    }

    /// Draw `n` points distributed as the normalized measure `Γ(t, ·) / Γ(t, R^d)`,
    /// each carrying weight `total_mass(t) / n`.
    pub fn sample_measure<R: Rng + ?Sized>(&self, t: f64, n: usize, rng: &mut R) -> WeightedPointCloud {
        assert!(t > 0.0 && n >= 1);
        let d = self.dim;
        let mut points = Vec::with_capacity(n);
        match self.operator {
            Operator::Heat => {
                let sd = t.sqrt();
                for _ in 0..n {
                    points.push((0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect());
                }
            }
            Operator::Wave => match d {
                1 => {
                    for _ in 0..n {
                        points.push(vec![t * (2.0 * rng.gen::<f64>() - 1.0)]);
                    }
                }
                2 => {
                    // Radial density r / (t sqrt(t^2 - r^2)); CDF
                    // F(r) = 1 - sqrt(1 - (r/t)^2), inverted analytically.
                    for _ in 0..n {
                        let v: f64 = rng.gen::<f64>();
                        let r = t * (1.0 - v * v).sqrt();
                        let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                        points.push(vec![r * theta.cos(), r * theta.sin()]);
                    }
                }
                3 => {
                    for _ in 0..n {
                        let mut x = [0.0f64; 3];
                        loop {
                            for v in &mut x {
                                *v = rng.sample(StandardNormal);
                            }
                            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                            if norm > 1e-12 {
                                points.push(x.iter().map(|v| t * v / norm).collect());
                                break;
                            }
                        }
                    }
                }
                _ => unreachable!("validated wave dim"),
            },
        }
        let total = self.total_mass(t);
        let w = total / n as f64;
        WeightedPointCloud {
            points,
            weights: vec![w; n],
            total,
        }
    }

    /// Evaluate the Dalang condition up to horizon `T`: the double integral
    /// `∫_0^T ∫ |FΓ(t)(xi)|^2 mu(dxi) dt` and the mass bound
    /// `sup_{t <= T} Γ(t, R^d)`.
    pub fn h1_check(&self, cov: &CovarianceSpec, horizon: f64) -> Result<H1Report> {
        cov.validate()?;
        self.validate()?;
        let value = crate::scaling::g_eps(cov, self, horizon)?;
        let mass_bound = match self.operator {
            Operator::Heat => 1.0,
            Operator::Wave => horizon,
        };
        Ok(H1Report {
            finite: value.is_finite(),
            value,
            mass_bound,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct H1Report {
    pub finite: bool,
    pub value: f64,
    pub mass_bound: f64,
}
