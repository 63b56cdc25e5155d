//! Joint-density estimation at a tuple of spatial points: Gaussian-product
//! KDE over the replica ensemble, a strict-positivity check on the central
//! quantile box, and the exact Gaussian oracle for the linear case.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::GreenSpec;
use crate::kernels::CovarianceSpec;
use crate::linalg;
use crate::noise::{self, GridSpec};
use crate::scaling::{self, McConfig};
use crate::solver::FieldEnsemble;

/// Exact zero-mean Gaussian density on ℝⁿ.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    pub covariance: Vec<Vec<f64>>,
    inverse: Vec<Vec<f64>>,
    norm: f64,
}

impl GaussianDensity {
    pub fn new(covariance: Vec<Vec<f64>>) -> Result<Self> {
        let n = covariance.len();
        let inverse = linalg::spd_inverse(&covariance)?;
        let det = linalg::det(&covariance);
        let norm = (2.0 * std::f64::consts::PI).powi(n as i32).sqrt() * det.sqrt();
        Ok(GaussianDensity {
            covariance,
            inverse,
            norm,
        })
    }

    pub fn query(&self, y: &[f64]) -> f64 {
        let n = self.covariance.len();
        assert_eq!(y.len(), n);
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += y[i] * self.inverse[i][j] * y[j];
            }
        }
        (-0.5 * q).exp() / self.norm
    }
}

/// Covariance and density of the linear (σ ≡ c, b ≡ 0) solution at points
/// `x̄`, by continuum quadrature of the spectral time integral.
pub fn gaussian_oracle(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    t: f64,
    points: &[Vec<f64>],
    c: f64,
) -> Result<GaussianDensity> {
    let n = points.len();
    if n == 0 {
        return Err(Error::parameter("need at least one point"));
    }
    for p in points {
        if p.len() != cov.dim {
            return Err(Error::parameter("point dimension mismatch"));
        }
    }
    let mc = McConfig::default();
    let diag = c * c * scaling::g_eps(cov, green, t)?;
    let mut sigma = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        sigma[i][i] = diag;
        for j in i + 1..n {
            let w: Vec<f64> = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| a - b)
                .collect();
            if w.iter().all(|v| *v == 0.0) {
                return Err(Error::parameter("points must be distinct"));
            }
            let off = c * c * scaling::shifted_integral(cov, green, &w, t, &mc)?;
            sigma[i][j] = off;
            sigma[j][i] = off;
        }
    }
    GaussianDensity::new(sigma)
}

/// Grid-matched linear covariance: the discrete spectral sum over the
/// periodic modes, trapezoid-integrated over the supplied derivative times.
/// Matches the Gram-matrix quadrature of the derivative machinery when given
/// the same nodes.
pub fn gaussian_oracle_grid(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    grid: &GridSpec,
    t: f64,
    points: &[usize],
    c: f64,
    r_nodes: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let cells = grid.cells();
    for &p in points {
        if p >= cells {
            return Err(Error::parameter("point index off the grid"));
        }
    }
    if r_nodes.len() < 2 {
        return Err(Error::parameter("need at least two time nodes"));
    }
    let weights = noise::spectral_weights(cov, grid)?;
    let dx = grid.dx();
    let coords: Vec<Vec<f64>> = points
        .iter()
        .map(|&p| {
            let npd = grid.points_per_dim;
            let mut rem = p;
            (0..grid.dim)
                .rev()
                .map(|axis| {
                    let stride = npd.pow(axis as u32);
                    let k = rem / stride;
                    rem %= stride;
                    k as f64 * dx
                })
                .collect()
        })
        .collect();
    let freqs: Vec<Vec<f64>> = (0..cells).map(|k| grid.frequency(k)).collect();

    let mut sigma = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i..n {
            let vals: Vec<f64> = r_nodes
                .iter()
                .map(|&r| {
                    let lag = t - r;
                    (0..cells)
                        .map(|k| {
                            let s = freqs[k].iter().map(|v| v * v).sum::<f64>().sqrt();
                            // Zero-lag limit of the propagator symbol.
                            let f = if lag > 0.0 {
                                green.ft(lag, s)
                            } else {
                                match green.operator {
                                    crate::green::Operator::Heat => 1.0,
                                    crate::green::Operator::Wave => 0.0,
                                }
                            };
                            let phase: f64 = freqs[k]
                                .iter()
                                .zip(coords[i].iter().zip(&coords[j]))
                                .map(|(xi, (a, b))| xi * (a - b))
                                .sum();
                            weights[k] * f * f * phase.cos()
                        })
                        .sum()
                })
                .collect();
            let mut acc = 0.0;
            for m in 1..vals.len() {
                acc += 0.5 * (vals[m] + vals[m - 1]) * (r_nodes[m] - r_nodes[m - 1]);
            }
            sigma[i][j] = c * c * acc;
            sigma[j][i] = sigma[i][j];
        }
    }
    Ok(sigma)
}

/// Gaussian-product kernel density estimate over replica samples at `x̄`.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    /// Flat grid indices of the points x̄.
    pub points: Vec<usize>,
    /// Per-coordinate bandwidths.
    pub bandwidth: Vec<f64>,
    pub sample_count: usize,
    samples: Vec<Vec<f64>>,
}

impl DensityEstimate {
    pub fn query(&self, y: &[f64]) -> f64 {
        let n = self.points.len();
        assert_eq!(y.len(), n);
        let norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| h * (2.0 * std::f64::consts::PI).sqrt())
            .product();
        let mut acc = 0.0;
        for s in &self.samples {
            let mut q = 0.0;
            for j in 0..n {
                let z = (y[j] - s[j]) / self.bandwidth[j];
                q += z * z;
            }
            acc += (-0.5 * q).exp();
        }
        acc / (self.sample_count as f64 * norm)
    }

    /// Same samples with every bandwidth scaled by `factor`.
    pub fn rescaled(&self, factor: f64) -> DensityEstimate {
        DensityEstimate {
            points: self.points.clone(),
            bandwidth: self.bandwidth.iter().map(|h| h * factor).collect(),
            sample_count: self.sample_count,
            samples: self.samples.clone(),
        }
    }

    /// Empirical per-coordinate quantile (linear interpolation).
    pub fn quantile(&self, coord: usize, q: f64) -> f64 {
        let mut vals: Vec<f64> = self.samples.iter().map(|s| s[coord]).collect();
        vals.sort_by(f64::total_cmp);
        let pos = q * (vals.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        vals[lo] * (1.0 - frac) + vals[hi] * frac
    }

    /// Monte Carlo integral of the estimate over a box, with the standard
    /// error of the estimate.
    pub fn integral_over_box(
        &self,
        lo: &[f64],
        hi: &[f64],
        draws: usize,
        rng: &mut impl Rng,
    ) -> (f64, f64) {
        let n = self.points.len();
        let volume: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut y = vec![0.0f64; n];
        for _ in 0..draws {
            for j in 0..n {
                y[j] = lo[j] + rng.gen::<f64>() * (hi[j] - lo[j]);
            }
            let v = self.query(&y) * volume;
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / draws as f64;
        let var = (sumsq / draws as f64 - mean * mean).max(0.0);
        (mean, (var / draws as f64).sqrt())
    }
}

/// Build the joint KDE of `(u(t,x₁), …, u(t,x_n))` from a replica ensemble.
/// Default bandwidth: per-marginal standard deviation times the
/// `m^{-1/(n+4)}` plug-in factor.
pub fn kde_joint(
    ensemble: &FieldEnsemble,
    points: &[usize],
    bandwidth: Option<Vec<f64>>,
) -> Result<DensityEstimate> {
    let m = ensemble.replicas.len();
    if m < 500 {
        return Err(Error::InsufficientReplicas { have: m, need: 500 });
    }
    let n = points.len();
    if n == 0 || n > 4 {
        return Err(Error::parameter("need between 1 and 4 points"));
    }
    let cells = ensemble.grid.cells();
    for (a, &p) in points.iter().enumerate() {
        if p >= cells {
            return Err(Error::parameter("point index off the grid"));
        }
        if points[..a].contains(&p) {
            return Err(Error::parameter("points must be distinct"));
        }
    }
    let samples: Vec<Vec<f64>> = ensemble
        .replicas
        .iter()
        .map(|field| points.iter().map(|&p| field[p]).collect())
        .collect();
    let bandwidth = match bandwidth {
        Some(h) => {
            if h.len() != n || h.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::parameter("bandwidth must be positive, one per point"));
            }
            h
        }
        None => {
            let factor = (m as f64).powf(-1.0 / (n as f64 + 4.0));
            (0..n)
                .map(|j| {
                    let mean: f64 = samples.iter().map(|s| s[j]).sum::<f64>() / m as f64;
                    let var: f64 = samples
                        .iter()
                        .map(|s| (s[j] - mean) * (s[j] - mean))
                        .sum::<f64>()
                        / (m - 1) as f64;
                    let sd = var.sqrt();
                    // Degenerate marginals get a token positive bandwidth so
                    // the estimate stays a density (an atom-scale spike).
                    (sd * factor).max(1e-12)
                })
                .collect()
        }
    };
    Ok(DensityEstimate {
        points: points.to_vec(),
        bandwidth,
        sample_count: m,
        samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub min_density: f64,
    pub min_density_halved: f64,
    /// Per-coordinate [lo, hi] of the central quantile box.
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub pass: bool,
}

/// Evaluate the KDE on a lattice inside the central per-coordinate quantile
/// box `[q, 1-q]` and report the minimum. Pass iff the minimum is strictly
/// positive, the box has volume, and the minimum is stable within a factor 2
/// under halving the bandwidth.
pub fn positivity_report(est: &DensityEstimate, quantile_box: f64) -> Result<PositivityReport> {
    if !(quantile_box > 0.0 && quantile_box < 0.5) {
        return Err(Error::parameter("quantile_box must be in (0, 0.5)"));
    }
    let n = est.points.len();
    let box_lo: Vec<f64> = (0..n).map(|j| est.quantile(j, quantile_box)).collect();
    let box_hi: Vec<f64> = (0..n).map(|j| est.quantile(j, 1.0 - quantile_box)).collect();
    let spread: Vec<f64> = box_lo.iter().zip(&box_hi).map(|(a, b)| b - a).collect();
    let scale: f64 = est
        .bandwidth
        .iter()
        .zip(&spread)
        .map(|(h, s)| h.max(*s))
        .fold(0.0, f64::max);
    let degenerate = spread.iter().any(|s| *s <= 1e-9 * scale.max(1e-300));

    let per_axis = 5usize;
    let halved = est.rescaled(0.5);
    let mut min_density = f64::INFINITY;
    let mut min_halved = f64::INFINITY;
    let total = per_axis.pow(n as u32);
    let mut y = vec![0.0f64; n];
    for idx in 0..total {
        let mut rem = idx;
        for j in 0..n {
            let k = rem % per_axis;
            rem /= per_axis;
            let frac = k as f64 / (per_axis - 1) as f64;
            y[j] = box_lo[j] + frac * spread[j];
        }
        min_density = min_density.min(est.query(&y));
        min_halved = min_halved.min(halved.query(&y));
    }
    let ratio = if min_density > 0.0 && min_halved > 0.0 {
        (min_density / min_halved).max(min_halved / min_density)
    } else {
        f64::INFINITY
    };
    let pass = !degenerate && min_density > 0.0 && ratio <= 2.0;
    Ok(PositivityReport {
        min_density,
        min_density_halved: min_halved,
        box_lo,
        box_hi,
        pass,
    })
}
