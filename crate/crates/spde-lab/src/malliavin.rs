//! Pathwise (Malliavin) derivative fields, Gram matrices and the small-ball
//! determinant probe.
//!
//! The derivative equation is linear in `Du` with path-dependent coefficients
//! `σ'(u)`, `b'(u)` frozen from the base run. Rather than propagating an
//! `N^d × N^d` matrix forward, we run one adjoint (transposed) pass backward
//! from a delta at each target point: every one-step operator is real
//! symmetric in physical space (spectral multipliers of `|ξ|` and pointwise
//! multiplications), so the transposed dynamics reuse the same ingredients,
//! and a single backward sweep yields `D_{r,*}u(t, x_i)` for every derivative
//! time `r` at once.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::green::Operator;
use crate::kernels::CovarianceSpec;
use crate::linalg;
use crate::noise::{self, GridSpec};
use crate::solver::{propagator, Propagator, Trajectory};

/// Gram matrix of derivative fields at a tuple of grid points.
#[derive(Debug, Clone, Serialize)]
pub struct MalliavinMatrix {
    /// Flat grid indices of the points x̄.
    pub points: Vec<usize>,
    pub entries: Vec<Vec<f64>>,
}

impl MalliavinMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::sym_eigenvalues(&self.entries)[0]
    }

    pub fn det(&self) -> f64 {
        linalg::det(&self.entries)
    }

    pub fn trace(&self) -> f64 {
        (0..self.entries.len()).map(|i| self.entries[i][i]).sum()
    }
}

/// `D_{r,*}u(t, x_i)` for each requested r and target, as physical fields
/// over the `*` grid variable.
#[derive(Debug, Clone)]
pub struct DerivativeField {
    pub grid: GridSpec,
    /// Ascending derivative times (multiples of dt).
    pub r_times: Vec<f64>,
    pub t: f64,
    /// Flat grid indices of the targets.
    pub points: Vec<usize>,
    /// `fields[target][r_index]` = field over the grid.
    pub fields: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecompositionTerms {
    pub eps: f64,
    pub a11: f64,
    pub a12: f64,
    pub a13: f64,
    pub a2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallBallTable {
    /// (delta, empirical P(det M <= delta)) with delta decreasing.
    pub rows: Vec<(f64, f64)>,
    pub lambda: f64,
}

fn snap_step(r: f64, dt: f64, steps: usize) -> Result<usize> {
    let m = (r / dt).round();
    if ((m * dt - r) / dt).abs() > 1e-9 || m < 0.0 || m as usize >= steps {
        return Err(Error::TimeNotSaved(r));
    }
    Ok(m as usize)
}

/// Compute `D_{r,*}u(t, x_i)` for every `r` in `r_list` (multiples of dt,
/// each `< t`) and every target point, by one adjoint backward pass per
/// target over the recorded trajectory.
pub fn derivative_field(
    run: &Trajectory,
    points: &[usize],
    r_list: &[f64],
) -> Result<DerivativeField> {
    let grid = run.grid;
    let n = grid.cells();
    let steps = run.noises.len();
    let dt = grid.dt;
    if points.is_empty() {
        return Err(Error::parameter("need at least one target point"));
    }
    let mut r_sorted: Vec<f64> = r_list.to_vec();
    r_sorted.sort_by(f64::total_cmp);
    let r_steps: Vec<usize> = r_sorted
        .iter()
        .map(|&r| snap_step(r, dt, steps))
        .collect::<Result<_>>()?;

    // Spectral multipliers of the one-step propagator.
    let props: Vec<Propagator> = (0..n)
        .map(|k| {
            let xi = grid.frequency(k);
            let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            propagator(&run.green, dt, norm)
        })
        .collect();

    let inv_cell = (grid.points_per_dim as f64 / grid.length).powi(grid.dim as i32);
    let fields = crate::exec::try_map_indexed(points.len(), |target_idx| {
        let target = points[target_idx];
        if target >= n {
            return Err(Error::parameter(format!("point index {target} off the grid")));
        }
        let fft = FftNd::new(grid.points_per_dim, grid.dim);
        let mut out: Vec<Vec<f64>> = vec![Vec::new(); r_steps.len()];
        match run.green.operator {
            Operator::Heat => {
                let mut psi = vec![0.0f64; n];
                psi[target] = 1.0;
                let mut buf = vec![Complex64::default(); n];
                for step in (0..steps).rev() {
                    // phi = P psi
                    for i in 0..n {
                        buf[i] = Complex64::new(psi[i], 0.0);
                    }
                    fft.forward(&mut buf);
                    for (k, b) in buf.iter_mut().enumerate() {
                        let Propagator::Heat { mult } = props[k] else {
                            unreachable!()
                        };
                        *b *= mult;
                    }
                    fft.inverse(&mut buf);
                    let u = &run.states[step];
                    let dw = &run.noises[step];
                    for (ri, &rs) in r_steps.iter().enumerate() {
                        if rs == step {
                            out[ri] = (0..n)
                                .map(|i| inv_cell * run.coeffs.sigma(u[i]) * buf[i].re)
                                .collect();
                        }
                    }
                    // psi_n = (I + C_n) phi
                    for i in 0..n {
                        let c = run.coeffs.sigma_prime(u[i]) * dw[i]
                            + run.coeffs.drift_prime(u[i]) * dt;
                        psi[i] = buf[i].re * (1.0 + c);
                    }
                }
            }
            Operator::Wave => {
                let mut psi_u = vec![0.0f64; n];
                let mut psi_v = vec![0.0f64; n];
                psi_u[target] = 1.0;
                let mut bu = vec![Complex64::default(); n];
                let mut bv = vec![Complex64::default(); n];
                for step in (0..steps).rev() {
                    for i in 0..n {
                        bu[i] = Complex64::new(psi_u[i], 0.0);
                        bv[i] = Complex64::new(psi_v[i], 0.0);
                    }
                    fft.forward(&mut bu);
                    fft.forward(&mut bv);
                    // Transposed mode rotation: (u, v) -> (c u - ks v, s u + c v).
                    for k in 0..n {
                        let Propagator::Wave { c, s, ks } = props[k] else {
                            unreachable!()
                        };
                        let u = bu[k];
                        let v = bv[k];
                        bu[k] = u * c - v * ks;
                        bv[k] = u * s + v * c;
                    }
                    fft.inverse(&mut bu);
                    fft.inverse(&mut bv);
                    let u = &run.states[step];
                    let dw = &run.noises[step];
                    for (ri, &rs) in r_steps.iter().enumerate() {
                        if rs == step {
                            out[ri] = (0..n)
                                .map(|i| inv_cell * run.coeffs.sigma(u[i]) * bv[i].re)
                                .collect();
                        }
                    }
                    for i in 0..n {
                        let c = run.coeffs.sigma_prime(u[i]) * dw[i]
                            + run.coeffs.drift_prime(u[i]) * dt;
                        psi_u[i] = bu[i].re + c * bv[i].re;
                        psi_v[i] = bv[i].re;
                    }
                }
            }
        }
        Ok(out)
    })?;

    Ok(DerivativeField {
        grid,
        r_times: r_sorted,
        t: steps as f64 * dt,
        points: points.to_vec(),
        fields,
    })
}

/// Discrete H-inner products of derivative fields, trapezoid-integrated over
/// the derivative times: entry `(i, j)` is
/// `∫ Σ_k weights[k] · FDu_i(ξ_k) · conj(FDu_j(ξ_k)) dr`.
pub fn gram_matrix(du: &DerivativeField, cov: &CovarianceSpec) -> Result<MalliavinMatrix> {
    let grid = du.grid;
    let weights = noise::spectral_weights(cov, &grid)?;
    let n_pts = du.points.len();
    let n_r = du.r_times.len();
    let cell = grid.dx().powi(grid.dim as i32);
    let fft = FftNd::new(grid.points_per_dim, grid.dim);

    // DFT of every field (scaled to approximate the continuum transform).
    let hats: Vec<Vec<Vec<Complex64>>> = crate::exec::map_indexed(n_pts, |i| {
        let fft = FftNd::new(grid.points_per_dim, grid.dim);
        du.fields[i]
            .iter()
            .map(|f| {
                let mut buf: Vec<Complex64> =
                    f.iter().map(|&v| Complex64::new(v * cell, 0.0)).collect();
                fft.forward(&mut buf);
                buf
            })
            .collect()
    });
    let _ = fft;

    let mut entries = vec![vec![0.0f64; n_pts]; n_pts];
    for i in 0..n_pts {
        for j in i..n_pts {
            let vals: Vec<f64> = (0..n_r)
                .map(|ri| {
                    hats[i][ri]
                        .iter()
                        .zip(&hats[j][ri])
                        .zip(&weights)
                        .map(|((a, b), w)| w * (a * b.conj()).re)
                        .sum()
                })
                .collect();
            let mut acc = 0.0;
            for ri in 1..n_r {
                acc += 0.5 * (vals[ri] + vals[ri - 1]) * (du.r_times[ri] - du.r_times[ri - 1]);
            }
            entries[i][j] = acc;
            entries[j][i] = acc;
        }
    }
    Ok(MalliavinMatrix {
        points: du.points.clone(),
        entries,
    })
}

/// Flat index of the displacement `x_a - x_b` on the periodic grid.
fn displaced_index(grid: &GridSpec, a: usize, b: usize) -> usize {
    let n = grid.points_per_dim;
    let mut rem_a = a;
    let mut rem_b = b;
    let mut out = 0usize;
    for axis in (0..grid.dim).rev() {
        let stride = n.pow(axis as u32);
        let ka = rem_a / stride;
        let kb = rem_b / stride;
        rem_a %= stride;
        rem_b %= stride;
        out += ((ka + n - kb) % n) * stride;
    }
    out
}

/// Physical coordinates of a flat grid index.
fn point_coords(grid: &GridSpec, flat: usize) -> Vec<f64> {
    let n = grid.points_per_dim;
    let dx = grid.dx();
    let mut rem = flat;
    let mut out = Vec::with_capacity(grid.dim);
    for axis in (0..grid.dim).rev() {
        let stride = n.pow(axis as u32);
        out.push((rem / stride) as f64 * dx);
        rem %= stride;
    }
    out
}

/// Numerical A-term decomposition of the quadratic form `ξᵀ M ξ` restricted
/// to derivative times in `[t-eps, t]`:
///
/// * `a11` — diagonal leading terms `Σ ξ_i² σ(u(t,x_i))² ‖Γ(t-r, x_i-*)‖²`;
/// * `a12` — the `i ≠ j` cross terms of the same leading product;
/// * `a13` — the replacement error from `σ(u(r,*))` vs `σ(u(t,x_i))`;
/// * `a2`  — the contribution of `Du` minus its leading Γσ term.
pub fn decomposition_terms(
    run: &Trajectory,
    cov: &CovarianceSpec,
    points: &[usize],
    xi: &[f64],
    eps: f64,
) -> Result<DecompositionTerms> {
    let grid = run.grid;
    let dt = grid.dt;
    let steps = run.noises.len();
    let t = steps as f64 * dt;
    if !(eps > dt && eps < t) {
        return Err(Error::parameter("eps must lie in (dt, t)"));
    }
    let norm: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::parameter("direction xi must be a unit vector"));
    }

    // 64 geometrically spaced lags from eps down to dt, snapped to steps.
    let mut r_steps: Vec<usize> = Vec::new();
    let ratio = (dt / eps).powf(1.0 / 63.0);
    let mut lag = eps;
    for _ in 0..64 {
        let m = ((t - lag) / dt).round() as usize;
        if m < steps {
            r_steps.push(m);
        }
        lag *= ratio;
    }
    r_steps.sort_unstable();
    r_steps.dedup();
    let r_times: Vec<f64> = r_steps.iter().map(|&m| m as f64 * dt).collect();

    let du = derivative_field(run, points, &r_times)?;
    let weights = noise::spectral_weights(cov, &grid)?;
    let n = grid.cells();
    let cell = grid.dx().powi(grid.dim as i32);
    let fft = FftNd::new(grid.points_per_dim, grid.dim);

    let u_final = &run.states[steps];
    let sigma_t: Vec<f64> = points.iter().map(|&p| run.coeffs.sigma(u_final[p])).collect();
    let coords: Vec<Vec<f64>> = points.iter().map(|&p| point_coords(&grid, p)).collect();
    let freqs: Vec<Vec<f64>> = (0..n).map(|k| grid.frequency(k)).collect();

    let mut a11_vals = Vec::with_capacity(r_times.len());
    let mut a12_vals = Vec::with_capacity(r_times.len());
    let mut a13_vals = Vec::with_capacity(r_times.len());
    let mut a2_vals = Vec::with_capacity(r_times.len());

    let h_normsq = |field: &[f64]| -> f64 {
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v * cell, 0.0)).collect();
        fft.forward(&mut buf);
        buf.iter().zip(&weights).map(|(a, w)| w * a.norm_sqr()).sum()
    };

    for (ri, &m) in r_steps.iter().enumerate() {
        let lag = t - r_times[ri];
        let ft: Vec<f64> = (0..n)
            .map(|k| {
                let s = freqs[k].iter().map(|v| v * v).sum::<f64>().sqrt();
                run.green.ft(lag, s)
            })
            .collect();
        let gamma_norm: f64 = ft.iter().zip(&weights).map(|(f, w)| w * f * f).sum();

        let mut a11 = 0.0;
        for (i, x) in xi.iter().enumerate() {
            a11 += x * x * sigma_t[i] * sigma_t[i] * gamma_norm;
        }
        a11_vals.push(a11);

        let mut a12 = 0.0;
        for i in 0..points.len() {
            for j in 0..points.len() {
                if i == j {
                    continue;
                }
                let inner: f64 = (0..n)
                    .map(|k| {
                        let phase: f64 = freqs[k]
                            .iter()
                            .zip(coords[i].iter().zip(&coords[j]))
                            .map(|(f, (a, b))| f * (a - b))
                            .sum();
                        weights[k] * ft[k] * ft[k] * phase.cos()
                    })
                    .sum();
                a12 += xi[i] * xi[j] * sigma_t[i] * sigma_t[j] * inner;
            }
        }
        a12_vals.push(a12);

        // Periodized kernel Γ(lag, ·) as a physical field (base at origin).
        let mut g0: Vec<Complex64> = ft
            .iter()
            .map(|&f| Complex64::new(f / grid.length.powi(grid.dim as i32), 0.0))
            .collect();
        fft.forward(&mut g0);
        let u_r = &run.states[m];

        // Leading field Σ ξ_i Γ(lag, x_i - y) σ(u(r, y)) and its A1 norm.
        let mut lead_sum = vec![0.0f64; n];
        let mut lead_per: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        for (i, &p) in points.iter().enumerate() {
            let gi: Vec<f64> = (0..n)
                .map(|y| g0[displaced_index(&grid, p, y)].re * run.coeffs.sigma(u_r[y]))
                .collect();
            for y in 0..n {
                lead_sum[y] += xi[i] * gi[y];
            }
            lead_per.push(gi);
        }
        let a1 = h_normsq(&lead_sum);
        a13_vals.push(a1 - a11 - a12);

        let mut rest = vec![0.0f64; n];
        for (i, gi) in lead_per.iter().enumerate() {
            let dfield = &du.fields[i][ri];
            for y in 0..n {
                rest[y] += xi[i] * (dfield[y] - gi[y]);
            }
        }
        a2_vals.push(h_normsq(&rest));
    }

    let trapz = |vals: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 1..vals.len() {
            acc += 0.5 * (vals[i] + vals[i - 1]) * (r_times[i] - r_times[i - 1]);
        }
        acc
    };
    Ok(DecompositionTerms {
        eps,
        a11: trapz(&a11_vals),
        a12: trapz(&a12_vals).abs(),
        a13: trapz(&a13_vals).abs(),
        a2: trapz(&a2_vals),
    })
}

/// Empirical tail table of `det M` over a replica ensemble of matrices.
pub fn smallball_probe(
    matrices: &[MalliavinMatrix],
    delta_grid: &[f64],
    lambda: f64,
) -> Result<SmallBallTable> {
    if matrices.len() < 500 {
        return Err(Error::InsufficientReplicas {
            have: matrices.len(),
            need: 500,
        });
    }
    let mut prev = f64::INFINITY;
    for &d in delta_grid {
        if !(d > 0.0 && d < prev) {
            return Err(Error::parameter("delta grid must be positive decreasing"));
        }
        prev = d;
    }
    let dets: Vec<f64> = matrices.iter().map(|m| m.det()).collect();
    let n = dets.len() as f64;
    let rows = delta_grid
        .iter()
        .map(|&d| {
            let tail = dets.iter().filter(|&&v| v <= d).count() as f64 / n;
            (d, tail)
        })
        .collect::<Vec<_>>();
    // Tails shrink as delta does, by construction; assert anyway.
    for w in rows.windows(2) {
        assert!(w[1].1 <= w[0].1);
    }
    Ok(SmallBallTable { rows, lambda })
}
