//! Small-time energy integrals, log-log slope fits and the closed-form
//! exponent catalogue.
//!
//! The central quantity is `g(eps) = ∫_0^eps ∫ |FΓ(s)(xi)|^2 mu(dxi) ds`,
//! which lower-bounds the diagonal of the Malliavin matrix. The hypotheses
//! add a time weight `r^{kappa_1}` (kind i), a spatial shift `w` (kind ii)
//! and a moment weight `|x|^{kappa_2}` with a shift (kind iii). Kinds that
//! reduce to Fourier space are handled by 1-D radial (or coordinate-product)
//! quadrature; kind iii and the non-separated wave shifts are evaluated in
//! physical space by Monte Carlo over product point clouds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::green::{GreenSpec, Operator};
use crate::kernels::{CovarianceSpec, Family};
use crate::quad;
use crate::special::{angular_phase, sphere_area};

/// Decreasing geometric grid of eps values.
#[derive(Debug, Clone)]
pub struct EpsGrid {
    pub values: Vec<f64>,
}

impl EpsGrid {
    /// `2^{-k}` for `k = kmin ..= kmax`; the spec default is `4..=12`.
    pub fn dyadic(kmin: u32, kmax: u32) -> Self {
        let values = (kmin..=kmax).map(|k| 0.5f64.powi(k as i32)).collect();
        EpsGrid { values }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 6 {
            return Err(Error::parameter("eps grid needs at least 6 values"));
        }
        let mut prev = f64::INFINITY;
        for &v in &self.values {
            if !(v > 0.0 && v <= 1.0 && v < prev) {
                return Err(Error::parameter(
                    "eps grid must be strictly decreasing in (0, 1]",
                ));
            }
            prev = v;
        }
        Ok(())
    }
}

impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid::dyadic(4, 12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentKind {
    Eta,
    Eta1,
    Eta2,
    Eta3,
}

impl std::fmt::Display for ExponentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExponentKind::Eta => "eta",
            ExponentKind::Eta1 => "eta1",
            ExponentKind::Eta2 => "eta2",
            ExponentKind::Eta3 => "eta3",
        };
        write!(f, "{s}")
    }
}

/// A fitted log-log slope with its closed-form expectation and verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentReport {
    pub kind: ExponentKind,
    pub fitted: f64,
    pub stderr: f64,
    pub expected: f64,
    pub pass: bool,
    /// Set when the integral vanishes identically (compact supports
    /// separated by the shift), making the upper-bound hypothesis vacuous.
    pub degenerate: bool,
}

/// Closed-form exponent table from the heat/wave x Riesz/Bessel/fractional
/// catalogue.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpectedExponents {
    pub eta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub kappa1_max: f64,
    pub kappa2_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H4Kind {
    I,
    Ii,
    Iii,
}

/// Monte Carlo settings for the physical-space inner products.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub pairs: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            pairs: 100_000,
            seed: 0x5eed,
        }
    }
}

// Cutoff for the oscillatory wave-space tails, after the substitution that
// makes the oscillation O(1)-periodic.
const WAVE_TAIL_SPLIT: f64 = 60.0 * std::f64::consts::PI;

/// `g(eps) = ∫_0^eps ∫ |FΓ(s)(xi)|^2 mu(dxi) ds`, relative tolerance 1e-6.
///
/// The time integral is done in closed form per operator, leaving a single
/// radial integral: heat `∫ (1-e^{-eps s^2})/s^2 w(s) ds`, wave
/// `∫ (eps/2 - sin(2 eps s)/(4s)) w(s)/s^2 ds` after `zeta = eps s`.
pub fn g_eps(cov: &CovarianceSpec, green: &GreenSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::parameter(format!("eps must be in (0, 1], got {eps}")));
    }
    let m = cov.radial_measure();
    match green.operator {
        Operator::Heat => {
            // s = v / sqrt(eps)
            let root = eps.sqrt();
            let f = |v: f64| {
                let k = if v < 1e-4 {
                    1.0 - v * v / 2.0
                } else {
                    (1.0 - (-v * v).exp()) / (v * v)
                };
                k * m.eval(v / root)
            };
            let low = quad::integrate_sing0(f, 8.0, 1e-8)?;
            let high = quad::integrate_to_inf(|v| m.eval(v / root) / (v * v), 8.0, 1e-8)?;
            Ok(root * (low + high))
        }
        Operator::Wave => {
            // zeta = eps s; b(zeta) = 1/2 - sin(2 zeta)/(4 zeta)
            let b = |z: f64| {
                if z < 1e-3 {
                    z * z / 3.0 - 2.0 * z.powi(4) / 15.0
                } else {
                    0.5 - (2.0 * z).sin() / (4.0 * z)
                }
            };
            let a = WAVE_TAIL_SPLIT;
            let head = quad::integrate_sing0(|z| b(z) * m.eval(z / eps) / (z * z), a, 1e-8)?;
            let flat = 0.5 * quad::integrate_to_inf(|z| m.eval(z / eps) / (z * z), a, 1e-8)?;
            // Oscillatory remainder -∫_A^∞ sin(2z) h(z) dz, h = w(z/eps)/(4 z^3),
            // by two integrations by parts.
            let h = m.eval(a / eps) / (4.0 * a.powi(3));
            let h1 = m.eval_d1(a / eps) / (eps * 4.0 * a.powi(3)) - 3.0 * m.eval(a / eps) / (4.0 * a.powi(4));
            let osc = -((2.0 * a).cos() * h / 2.0 - (2.0 * a).sin() * h1 / 4.0);
            Ok(eps * eps * (head + flat + osc))
        }
    }
}

/// `∫ |FΓ(r)(xi)|^2 mu(dxi)` at fixed `r > 0` (the integrand of g).
pub fn inner_energy(cov: &CovarianceSpec, green: &GreenSpec, r: f64) -> Result<f64> {
    assert!(r > 0.0);
    let m = cov.radial_measure();
    match green.operator {
        Operator::Heat => {
            // s = v / sqrt(r)
            let root = r.sqrt();
            let f = |v: f64| (-v * v).exp() * m.eval(v / root);
            Ok(quad::integrate_sing0(f, 8.0, 1e-8)? / root)
        }
        Operator::Wave => {
            // zeta = r s
            let a = WAVE_TAIL_SPLIT;
            let sinc2 = |z: f64| {
                if z < 1e-4 {
                    1.0 - z * z / 3.0
                } else {
                    let s = z.sin();
                    s * s / (z * z)
                }
            };
            let head = quad::integrate_sing0(|z| sinc2(z) * m.eval(z / r), a, 1e-8)?;
            let flat = 0.5 * quad::integrate_to_inf(|z| m.eval(z / r) / (z * z), a, 1e-8)?;
            // -1/2 ∫_A^∞ cos(2z) W(z)/z^2 dz by two integrations by parts.
            let h = m.eval(a / r) / (a * a);
            let h1 = m.eval_d1(a / r) / (r * a * a) - 2.0 * m.eval(a / r) / a.powi(3);
            let osc = -0.5 * (-(2.0 * a).sin() * h / 2.0 - (2.0 * a).cos() * h1 / 4.0);
            Ok(r * (head + flat + osc))
        }
    }
}

/// Ordinary least squares of `log(value)` on `log(eps)`.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 pairs, got {}",
            pairs.len()
        )));
    }
    let mut xs = Vec::with_capacity(pairs.len());
    let mut ys = Vec::with_capacity(pairs.len());
    for &(e, v) in pairs {
        if !(e > 0.0 && v > 0.0) {
            return Err(Error::DegenerateFit(format!(
                "nonpositive pair ({e}, {v})"
            )));
        }
        xs.push(e.ln());
        ys.push(v.ln());
    }
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx <= 1e-14 {
        return Err(Error::DegenerateFit("zero variance in log eps".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (pairs.len() as f64 - 2.0).max(1.0);
    let stderr = (ssr / dof / sxx).sqrt();
    Ok((slope, stderr))
}

/// Slope estimate with bias reduction for deterministic (quadrature) data.
///
/// The Bessel family is a power law only asymptotically: its small-eps
/// integrals carry a slowly vanishing correction (relative size ~ eps^{1/4}
/// for the reference parameters), which biases the plain least-squares slope
/// on a fixed dyadic grid. Consecutive local slopes then converge
/// geometrically to the true exponent, so when the last few local-slope
/// increments show a stable geometric ratio we return the extrapolated
/// limit. Exact power laws (riesz, fractional) have constant local slopes and
/// fall through to ordinary least squares unchanged.
pub fn fit_slope_refined(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (ols, stderr) = fit_slope(pairs)?;
    let mut local = Vec::with_capacity(pairs.len().saturating_sub(1));
    for w in pairs.windows(2) {
        let (e0, v0) = w[0];
        let (e1, v1) = w[1];
        if !(v0 > 0.0 && v1 > 0.0) || e0 == e1 {
            return Ok((ols, stderr));
        }
        local.push((v1 / v0).ln() / (e1 / e0).ln());
    }
    let n = local.len();
    if n < 4 {
        return Ok((ols, stderr));
    }
    let d0 = local[n - 3] - local[n - 4];
    let d1 = local[n - 2] - local[n - 3];
    let d2 = local[n - 1] - local[n - 2];
    // Constant local slopes (up to quadrature noise): keep the OLS fit.
    if d2.abs() < 1e-4 || d1.abs() < 1e-6 || d0.abs() < 1e-6 {
        return Ok((ols, stderr));
    }
    let rho = d2 / d1;
    let rho_prev = d1 / d0;
    let stable = (0.2..0.95).contains(&rho)
        && (0.2..0.98).contains(&rho_prev)
        && (rho / rho_prev - 1.0).abs() < 0.5;
    if !stable {
        return Ok((ols, stderr));
    }
    let limit = local[n - 1] + d2 * rho / (1.0 - rho);
    Ok((limit, stderr.max(0.25 * (limit - local[n - 1]).abs())))
}

/// Closed-form exponents for the six operator x kernel combinations.
pub fn expected_exponents(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    kappa1: f64,
    kappa2: f64,
) -> Result<ExpectedExponents> {
    cov.validate()?;
    green.validate()?;
    let d = cov.dim as f64;
    if cov.dim != green.dim {
        return Err(Error::parameter(format!(
            "kernel dim {} does not match operator dim {}",
            cov.dim, green.dim
        )));
    }
    let (eta, eta1, eta2, eta3, k1max, k2max) = match (green.operator, cov.family) {
        (Operator::Heat, Family::Riesz) => {
            let beta = cov.beta.unwrap();
            let eta = (2.0 - beta) / 2.0;
            (
                eta,
                eta + kappa1,
                1.0,
                (kappa2 - beta) / 2.0 + 1.0,
                (2.0 - beta) / 4.0,
                (2.0 - beta) / 2.0,
            )
        }
        (Operator::Heat, Family::Bessel) => {
            let alpha = cov.alpha.unwrap();
            let eta = (alpha - d) / 2.0 + 1.0;
            (
                eta,
                eta + kappa1,
                1.0,
                eta + kappa2 / 2.0,
                (2.0 - d + alpha) / 4.0,
                (2.0 - d + alpha) / 2.0,
            )
        }
        (Operator::Heat, Family::Fractional) => {
            let hs = cov.hurst_sum();
            let h = cov.hurst.as_ref().unwrap();
            let eta = hs - d + 1.0;
            let eta2 = h
                .iter()
                .map(|hk| hs - hk - d + 2.0)
                .fold(f64::INFINITY, f64::min);
            (
                eta,
                eta + kappa1,
                eta2,
                kappa2 / 2.0 + eta,
                (hs - d + 1.0) / 2.0,
                hs - d + 1.0,
            )
        }
        (Operator::Wave, Family::Riesz) => {
            let beta = cov.beta.unwrap();
            let eta = 3.0 - beta;
            (
                eta,
                kappa1 + eta,
                3.0,
                kappa2 + eta,
                (2.0 - beta) / 2.0,
                (2.0 - beta) / 2.0,
            )
        }
        (Operator::Wave, Family::Bessel) => {
            let alpha = cov.alpha.unwrap();
            let eta = alpha + 3.0 - d;
            (
                eta,
                eta + kappa1,
                3.0,
                eta + kappa2,
                (alpha - d + 2.0) / 2.0,
                (alpha - d + 2.0) / 2.0,
            )
        }
        (Operator::Wave, Family::Fractional) => {
            let hs = cov.hurst_sum();
            let h = cov.hurst.as_ref().unwrap();
            let eta = 2.0 * hs - 2.0 * d + 3.0;
            let eta2 = match cov.dim {
                1 => 3.0,
                2 => h.iter().map(|hk| 2.0 * hk + 1.0).fold(f64::INFINITY, f64::min),
                3 => h
                    .iter()
                    .map(|hk| 2.0 * (hs - hk) - 1.0)
                    .fold(f64::INFINITY, f64::min),
                _ => unreachable!(),
            };
            let kmax = match cov.dim {
                1 => h[0],
                2 => h[0] + h[1] - 1.0,
                3 => {
                    let hmin = h.iter().cloned().fold(f64::INFINITY, f64::min);
                    (hs - 2.0).min(hmin - 0.5)
                }
                _ => unreachable!(),
            };
            (eta, kappa1 + eta, eta2, kappa2 + eta, kmax, kmax)
        }
    };
    if kappa1 >= k1max {
        return Err(Error::KappaOutOfRange(format!(
            "kappa1 = {kappa1} must be below {k1max}"
        )));
    }
    if kappa2 >= k2max {
        return Err(Error::KappaOutOfRange(format!(
            "kappa2 = {kappa2} must be below {k2max}"
        )));
    }
    let table = ExpectedExponents {
        eta,
        eta1,
        eta2,
        eta3,
        kappa1_max: k1max,
        kappa2_max: k2max,
    };
    // Strictness required for the small-ball exponent to be positive.
    if kappa1 > 0.0 && !(table.eta1 > table.eta && table.eta2 > table.eta && table.eta3 > table.eta)
    {
        return Err(Error::parameter(format!(
            "exponent table violates eta_i > eta: {table:?}"
        )));
    }
    Ok(table)
}

/// Small-ball exponent `lambda` of the determinant tail.
pub fn lambda_exponent(table: &ExpectedExponents, n: usize) -> f64 {
    let n = n as f64;
    let e = table.eta;
    [
        (table.eta1 - e) / (n * e),
        (table.eta2 - e) / (n * e),
        (table.eta3 - e) / (n * e),
        1.0 / n,
        2.0 / (n * e),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Fit the slope of `g(eps)` over the grid and compare with the closed form.
pub fn h3_fit(cov: &CovarianceSpec, green: &GreenSpec, grid: &EpsGrid) -> Result<ExponentReport> {
    grid.validate()?;
    let table = expected_exponents(cov, green, 0.0, 0.0)?;
    let pairs: Vec<(f64, f64)> = grid
        .values
        .iter()
        .map(|&e| g_eps(cov, green, e).map(|v| (e, v)))
        .collect::<Result<_>>()?;
    let (fitted, stderr) = fit_slope_refined(&pairs)?;
    Ok(ExponentReport {
        kind: ExponentKind::Eta,
        fitted,
        stderr,
        expected: table.eta,
        pass: (fitted - table.eta).abs() <= 0.05,
        degenerate: false,
    })
}

/// Fit one of the three auxiliary integrals over the grid.
///
/// Kinds i and ii reduce to Fourier space where possible; kind iii, and the
/// shifted wave inner products that do not vanish by support separation, are
/// evaluated in physical space by Monte Carlo over product point clouds. The
/// pass rule is one-sided (`fitted >= expected - 0.05`): the hypotheses are
/// upper bounds and faster decay is consistent.
#[allow(clippy::too_many_arguments)]
pub fn h4_fit(
    kind: H4Kind,
    cov: &CovarianceSpec,
    green: &GreenSpec,
    kappa1: f64,
    kappa2: f64,
    w: &[f64],
    grid: &EpsGrid,
    mc: &McConfig,
) -> Result<ExponentReport> {
    grid.validate()?;
    let table = expected_exponents(cov, green, kappa1, kappa2)?;
    let (report_kind, expected) = match kind {
        H4Kind::I => (ExponentKind::Eta1, table.eta1),
        H4Kind::Ii => (ExponentKind::Eta2, table.eta2),
        H4Kind::Iii => (ExponentKind::Eta3, table.eta3),
    };
    let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if kind == H4Kind::Ii && wnorm == 0.0 {
        return Err(Error::ZeroShift);
    }

    // Degenerate wave case: compact supports separate for every eps on the
    // grid and the kernel is bounded away from its singular set, so every
    // grid value is exactly zero and the eps^{eta_2} bound is vacuous.
    if kind == H4Kind::Ii
        && green.compactly_supported()
        && cov.family != Family::Fractional
        && 2.0 * grid.values[0] < wnorm
    {
        return Ok(ExponentReport {
            kind: report_kind,
            fitted: f64::INFINITY,
            stderr: 0.0,
            expected,
            pass: true,
            degenerate: true,
        });
    }

    let pairs: Vec<(f64, f64)> = match kind {
        H4Kind::I => grid
            .values
            .iter()
            .map(|&e| weighted_time_integral(cov, green, kappa1, e).map(|v| (e, v)))
            .collect::<Result<_>>()?,
        H4Kind::Ii => shifted_integral_on_grid(cov, green, w, grid, mc)?,
        H4Kind::Iii => mc_integral_on_grid(cov, green, w, Some(kappa2), grid, mc)?,
    };
    // Kind i is deterministic quadrature and benefits from the same bias
    // reduction as the (H3) fit; ii/iii carry sampling noise that would make
    // local-slope extrapolation unreliable.
    let (fitted, stderr) = match kind {
        H4Kind::I => fit_slope_refined(&pairs)?,
        _ => fit_slope(&pairs)?,
    };
    Ok(ExponentReport {
        kind: report_kind,
        fitted,
        stderr,
        expected,
        pass: fitted >= expected - 0.05,
        degenerate: false,
    })
}

/// `∫_0^eps r^{kappa} ||Γ(r)||_H^2 dr` by outer quadrature over the inner
/// radial energy.
pub fn weighted_time_integral(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    kappa: f64,
    eps: f64,
) -> Result<f64> {
    quad::integrate_sing0(
        |r| r.powf(kappa) * inner_energy(cov, green, r).unwrap_or(f64::NAN),
        eps,
        1e-6,
    )
}

/// `∫_0^eps ⟨Γ(r,*), Γ(r,w+*)⟩_H dr` at a single eps.
pub fn shifted_integral(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    w: &[f64],
    eps: f64,
    mc: &McConfig,
) -> Result<f64> {
    let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if wnorm == 0.0 {
        return Err(Error::ZeroShift);
    }
    if green.compactly_supported() && cov.family != Family::Fractional && 2.0 * eps < wnorm {
        return Ok(0.0);
    }
    let grid = EpsGrid {
        values: vec![eps],
    };
    let pairs = shifted_integral_on_grid(cov, green, w, &grid, mc)?;
    Ok(pairs[0].1)
}

/// `(∫_0^{2^{-m}} ⟨Γ(r,*), Γ(r,w+*)⟩_H dr) / g(2^{-m})`.
pub fn localization_ratio(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    w: &[f64],
    m: u32,
    mc: &McConfig,
) -> Result<f64> {
    let eps = 0.5f64.powi(m as i32);
    let num = shifted_integral(cov, green, w, eps, mc)?;
    let den = g_eps(cov, green, eps)?;
    Ok(num / den)
}

fn shifted_integral_on_grid(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    w: &[f64],
    grid: &EpsGrid,
    mc: &McConfig,
) -> Result<Vec<(f64, f64)>> {
    match (green.operator, cov.family) {
        (Operator::Heat, Family::Riesz) | (Operator::Heat, Family::Bessel) => grid
            .values
            .iter()
            .map(|&e| heat_shifted_radial(cov, w, e).map(|v| (e, v)))
            .collect(),
        (Operator::Heat, Family::Fractional) => grid
            .values
            .iter()
            .map(|&e| heat_shifted_fractional(cov, w, e).map(|v| (e, v)))
            .collect(),
        (Operator::Wave, _) => mc_integral_on_grid(cov, green, w, None, grid, mc),
    }
}

/// Heat operator, radial measure: time-integrate in closed form and reduce
/// the shift to the angular phase factor,
/// `∫_0^∞ (1-e^{-eps s^2})/s^2 · Ω_d(s|w|) · w(s)/S_{d-1} ds`.
fn heat_shifted_radial(cov: &CovarianceSpec, w: &[f64], eps: f64) -> Result<f64> {
    let m = cov.radial_measure();
    let d = cov.dim;
    let area = sphere_area(d);
    let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if wnorm == 0.0 {
        return Err(Error::ZeroShift);
    }
    let f = |s: f64| {
        let k = {
            let v = eps * s * s;
            if v < 1e-8 {
                eps * (1.0 - v / 2.0)
            } else {
                (1.0 - (-v).exp()) / (s * s)
            }
        };
        k * m.eval(s) / area * angular_phase(d, s * wnorm)
    };
    // Truncation: beyond Z the saturated integrand decays like
    // s^{-2} w(s) times a decaying (d >= 2) phase envelope; the residual is
    // below slope-fit resolution.
    let z = (12.0 / eps.sqrt()).max(80.0 / wnorm);
    quad::integrate_sing0(f, z, 1e-7)
}

/// Heat operator, fractional kernel: coordinate-product reduction,
/// outer quadrature in r of `∏_j c_j(r)` with
/// `c_j(r) = 2 ∫_0^∞ e^{-r xi^2} xi^{1-2H_j} cos(w_j xi) dxi`.
fn heat_shifted_fractional(cov: &CovarianceSpec, w: &[f64], eps: f64) -> Result<f64> {
    let hurst = cov.hurst.as_ref().unwrap().clone();
    let w = w.to_vec();
    quad::integrate_sing0(
        move |r| {
            hurst
                .iter()
                .zip(&w)
                .map(|(&h, &wj)| fractional_coordinate_factor(h, wj, r))
                .product()
        },
        eps,
        1e-6,
    )
}

/// `2 ∫_0^∞ e^{-r xi^2} xi^{1-2H} cos(w xi) dxi`.
///
/// For `w = 0` this is `Γ(1-H) r^{H-1}` exactly. Otherwise the head is
/// integrated adaptively and the oscillatory tail handled by a three-term
/// integration-by-parts expansion of `∫_A^∞ g(xi) cos(w xi) dxi`.
fn fractional_coordinate_factor(h: f64, w: f64, r: f64) -> f64 {
    let a_exp = 1.0 - 2.0 * h;
    if w == 0.0 {
        return gamma(1.0 - h) * r.powf(h - 1.0);
    }
    let w = w.abs();
    let g = |xi: f64| (-r * xi * xi).exp() * xi.powf(a_exp);
    let a = 40.0 * (1.0 + 1.0 / w);
    let head = quad::integrate_sing0(|xi| g(xi) * (w * xi).cos(), a, 1e-8).unwrap_or(f64::NAN);
    // g' and g'' of g = e^{-r xi^2} xi^a.
    let g1 = |xi: f64| (-r * xi * xi).exp() * (a_exp * xi.powf(a_exp - 1.0) - 2.0 * r * xi.powf(a_exp + 1.0));
    let g2 = |xi: f64| {
        (-r * xi * xi).exp()
            * (a_exp * (a_exp - 1.0) * xi.powf(a_exp - 2.0)
                - 2.0 * r * (2.0 * a_exp + 1.0) * xi.powf(a_exp)
                + 4.0 * r * r * xi.powf(a_exp + 2.0))
    };
    // ∫_A^∞ g cos(w xi) dxi ≈ -sin(wA) g(A)/w - cos(wA) g'(A)/w^2 + sin(wA) g''(A)/w^3
    let tail = -(w * a).sin() * g(a) / w - (w * a).cos() * g1(a) / (w * w)
        + (w * a).sin() * g2(a) / (w * w * w);
    2.0 * (head + tail)
}

/// Monte Carlo cumulative integrals of
/// `q(r) = ⟨|*|^{kappa} Γ(r,*), Γ(r,w+*)⟩_H` (kappa optional) over the grid.
///
/// `q` is estimated at dyadic nodes extending six octaves below the grid,
/// then integrated assuming a local power law between nodes; the common
/// per-node seeds keep the cumulative curve smooth across eps.
fn mc_integral_on_grid(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    w: &[f64],
    kappa: Option<f64>,
    grid: &EpsGrid,
    mc: &McConfig,
) -> Result<Vec<(f64, f64)>> {
    let kernel = KernelEval::new(cov, w, green, grid.values[0])?;
    // Dyadic nodes from eps_max down, two per octave, six octaves below eps_min.
    let top = grid.values[0];
    let bottom = grid.values[grid.values.len() - 1] * 0.5f64.powi(6);
    let mut nodes = Vec::new();
    let mut r = top;
    while r >= bottom {
        nodes.push(r);
        r *= 0.5f64.sqrt();
    }
    let q: Vec<(f64, f64)> = crate::exec::try_map_indexed(nodes.len(), |i| {
        let r = nodes[i];
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        mc_q_node(&kernel, green, r, w, kappa, mc.pairs, &mut rng)
            .map(|(v, _)| (r, v))
    })?;
    // Cumulative power-law integration from 0 upward.
    let mut asc: Vec<(f64, f64)> = q.into_iter().rev().collect();
    // Guard against exact zeros (possible only in pathological cases).
    asc.retain(|&(_, v)| v > 0.0);
    if asc.len() < 4 {
        return Err(Error::MonteCarloUnstable(
            "too few positive Monte Carlo nodes".into(),
        ));
    }
    let mut cum = Vec::with_capacity(asc.len());
    // Mass below the first node, extrapolating the first local exponent.
    let a0 = (asc[1].1 / asc[0].1).ln() / (asc[1].0 / asc[0].0).ln();
    let mut total = asc[0].1 * asc[0].0 / (a0 + 1.0).max(0.1);
    cum.push((asc[0].0, total));
    for i in 1..asc.len() {
        let (r0, q0) = asc[i - 1];
        let (r1, q1) = asc[i];
        let a = (q1 / q0).ln() / (r1 / r0).ln();
        let seg = if (a + 1.0).abs() > 1e-9 {
            (q1 * r1 - q0 * r0) / (a + 1.0)
        } else {
            q0 * r0 * (r1 / r0).ln()
        };
        total += seg;
        cum.push((r1, total));
    }
    // Read the cumulative curve at the requested grid values.
    let mut out = Vec::with_capacity(grid.values.len());
    for &e in &grid.values {
        let idx = cum
            .iter()
            .position(|&(r, _)| (r - e).abs() / e < 1e-9)
            .ok_or_else(|| Error::MonteCarloUnstable(format!("grid point {e} lost its node")))?;
        out.push((e, cum[idx].1));
    }
    Ok(out)
}

/// One Monte Carlo node: `mass(r)^2 E[|X|^kappa f(X - U + w)]` with `X`, `U`
/// independent draws from the normalized measure `Γ(r, ·)`.
fn mc_q_node(
    kernel: &KernelEval,
    green: &GreenSpec,
    r: f64,
    w: &[f64],
    kappa: Option<f64>,
    pairs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let cx = green.sample_measure(r, pairs, rng);
    let cu = green.sample_measure(r, pairs, rng);
    let mut sum = 0.0f64;
    let mut sum2 = 0.0f64;
    let mut n = 0usize;
    let mut z = vec![0.0f64; w.len()];
    for (x, u) in cx.points.iter().zip(&cu.points) {
        for j in 0..w.len() {
            z[j] = x[j] - u[j] + w[j];
        }
        let f = kernel.eval(&z);
        if !f.is_finite() {
            continue;
        }
        let v = match kappa {
            Some(k) => x.iter().map(|t| t * t).sum::<f64>().sqrt().powf(k) * f,
            None => f,
        };
        sum += v;
        sum2 += v * v;
        n += 1;
    }
    if n < pairs / 2 {
        return Err(Error::MonteCarloUnstable(format!(
            "more than half the samples hit the singular set at r = {r}"
        )));
    }
    let mean = sum / n as f64;
    let var = (sum2 / n as f64 - mean * mean).max(0.0);
    let stderr = (var / n as f64).sqrt();
    if mean > 0.0 && stderr > 0.1 * mean {
        return Err(Error::MonteCarloUnstable(format!(
            "bootstrap stderr {:.2}% of the mean at r = {r}",
            100.0 * stderr / mean
        )));
    }
    let mass = green.total_mass(r);
    Ok((mass * mass * mean, mass * mass * stderr))
}

/// Pointwise kernel evaluation for the Monte Carlo paths. The Bessel kernel
/// is tabulated on a log grid once per sweep; Riesz and fractional are cheap
/// closed forms.
enum KernelEval {
    Riesz { beta: f64 },
    Fractional { hurst: Vec<f64> },
    Table(RadialTable),
}

impl KernelEval {
    fn new(cov: &CovarianceSpec, w: &[f64], green: &GreenSpec, eps_max: f64) -> Result<Self> {
        match cov.family {
            Family::Riesz => Ok(KernelEval::Riesz {
                beta: cov.beta.unwrap(),
            }),
            Family::Fractional => Ok(KernelEval::Fractional {
                hurst: cov.hurst.as_ref().unwrap().clone(),
            }),
            Family::Bessel => {
                let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let spread = match green.operator {
                    Operator::Heat => 20.0 * (2.0 * eps_max).sqrt(),
                    Operator::Wave => 2.0 * eps_max,
                };
                let hi = wnorm + spread + 1.0;
                Ok(KernelEval::Table(RadialTable::build(cov, 1e-6, hi, 2048)?))
            }
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            KernelEval::Riesz { beta } => {
                let r2: f64 = z.iter().map(|v| v * v).sum();
                if r2 == 0.0 {
                    f64::INFINITY
                } else {
                    r2.sqrt().powf(-beta)
                }
            }
            KernelEval::Fractional { hurst } => {
                let mut v = 1.0;
                for (zj, h) in z.iter().zip(hurst) {
                    if *zj == 0.0 {
                        return f64::INFINITY;
                    }
                    v *= zj.abs().powf(2.0 * h - 2.0);
                }
                v
            }
            KernelEval::Table(t) => {
                let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                t.eval(r)
            }
        }
    }
}

/// Log-log linear interpolation table of a positive radial function.
struct RadialTable {
    log_lo: f64,
    step: f64,
    log_values: Vec<f64>,
    cov: CovarianceSpec,
}

impl RadialTable {
    fn build(cov: &CovarianceSpec, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let log_lo = lo.ln();
        let step = (hi.ln() - log_lo) / (n as f64 - 1.0);
        let log_values = crate::exec::try_map_indexed(n, |i| {
            let r = (log_lo + step * i as f64).exp();
            let mut x = vec![0.0; cov.dim];
            x[0] = r;
            cov.kernel_value(&x).map(f64::ln)
        })?;
        Ok(RadialTable {
            log_lo,
            step,
            log_values,
            cov: cov.clone(),
        })
    }

    fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        let t = (r.ln() - self.log_lo) / self.step;
        if t < 0.0 || t >= (self.log_values.len() - 1) as f64 {
            let mut x = vec![0.0; self.cov.dim];
            x[0] = r;
            return self.cov.kernel_value(&x).unwrap_or(f64::INFINITY);
        }
        let i = t as usize;
        let frac = t - i as f64;
        ((1.0 - frac) * self.log_values[i] + frac * self.log_values[i + 1]).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn g_eps_heat_riesz_closed_form() {
        // g(eps) = 2 π^{3/2} sqrt(eps) for heat d=2, riesz beta=1.
        let cov = CovarianceSpec::riesz(2, 1.0);
        let green = GreenSpec::heat(2);
        let v = g_eps(&cov, &green, 0.01).unwrap();
        assert_relative_eq!(v, 2.0 * PI.powf(1.5) * 0.1, max_relative = 1e-6);
    }

    #[test]
    fn g_eps_wave_riesz_closed_form() {
        // g(eps) = π^2 eps^2 for wave d=3, riesz beta=1.
        let cov = CovarianceSpec::riesz(3, 1.0);
        let green = GreenSpec::wave(3);
        let v = g_eps(&cov, &green, 0.1).unwrap();
        assert_relative_eq!(v, PI * PI * 0.01, max_relative = 1e-6);
    }

    #[test]
    fn g_eps_monotone_and_vanishing() {
        let cov = CovarianceSpec::bessel(2, 1.5);
        let green = GreenSpec::heat(2);
        let mut prev = 0.0;
        for &e in &[1e-4, 1e-3, 1e-2, 1e-1, 0.5] {
            let v = g_eps(&cov, &green, e).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(g_eps(&cov, &green, 1e-6).unwrap() < 1e-3);
    }

    #[test]
    fn inner_energy_consistent_with_g_eps() {
        // d g / d eps = inner_energy: compare a central difference.
        let cov = CovarianceSpec::riesz(2, 1.0);
        let green = GreenSpec::heat(2);
        let e = 0.02;
        let de = 1e-5;
        let fd = (g_eps(&cov, &green, e + de).unwrap() - g_eps(&cov, &green, e - de).unwrap())
            / (2.0 * de);
        assert_relative_eq!(fd, inner_energy(&cov, &green, e).unwrap(), max_relative = 1e-4);

        let wg = GreenSpec::wave(3);
        let cov3 = CovarianceSpec::riesz(3, 1.0);
        let fd = (g_eps(&cov3, &wg, e + de).unwrap() - g_eps(&cov3, &wg, e - de).unwrap())
            / (2.0 * de);
        assert_relative_eq!(fd, inner_energy(&cov3, &wg, e).unwrap(), max_relative = 1e-4);
    }

    #[test]
    fn fit_slope_exact_power_laws() {
        let pairs: Vec<(f64, f64)> = (2..10).map(|k| {
            let e = 0.5f64.powi(k);
            (e, e * e)
        })
        .collect();
        let (slope, stderr) = fit_slope(&pairs).unwrap();
        assert_relative_eq!(slope, 2.0, max_relative = 1e-12);
        assert!(stderr < 1e-10);

        let pairs: Vec<(f64, f64)> = (2..10).map(|k| {
            let e = 0.5f64.powi(k);
            (e, 5.0 * e.powf(0.5))
        })
        .collect();
        let (slope, _) = fit_slope(&pairs).unwrap();
        assert_relative_eq!(slope, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn fit_slope_rejects_degenerate_input() {
        assert!(matches!(
            fit_slope(&[(0.5, 1.0), (0.25, 0.5)]),
            Err(Error::DegenerateFit(_))
        ));
        let same = vec![(0.5, 1.0); 6];
        assert!(matches!(fit_slope(&same), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn h3_fit_heat_riesz() {
        let report = h3_fit(
            &CovarianceSpec::riesz(2, 1.0),
            &GreenSpec::heat(2),
            &EpsGrid::default(),
        )
        .unwrap();
        assert_relative_eq!(report.expected, 0.5);
        assert!((report.fitted - 0.5).abs() < 0.02, "fitted {}", report.fitted);
        assert!(report.pass);
    }

    #[test]
    fn h3_fit_wave_riesz() {
        let report = h3_fit(
            &CovarianceSpec::riesz(3, 1.0),
            &GreenSpec::wave(3),
            &EpsGrid::default(),
        )
        .unwrap();
        assert_relative_eq!(report.expected, 2.0);
        assert!((report.fitted - 2.0).abs() < 0.02, "fitted {}", report.fitted);
    }

    #[test]
    fn expected_exponent_examples() {
        // heat d=2 riesz beta=1, kappa1=0.2, kappa2=0.45
        let t = expected_exponents(
            &CovarianceSpec::riesz(2, 1.0),
            &GreenSpec::heat(2),
            0.2,
            0.45,
        )
        .unwrap();
        assert_relative_eq!(t.eta, 0.5);
        assert_relative_eq!(t.eta1, 0.7);
        assert_relative_eq!(t.eta2, 1.0);
        assert_relative_eq!(t.eta3, 0.725);

        // wave d=2 fractional H=(0.8, 0.9)
        let t = expected_exponents(
            &CovarianceSpec::fractional(vec![0.8, 0.9]),
            &GreenSpec::wave(2),
            0.0,
            0.0,
        )
        .unwrap();
        // 2·(0.8+0.9) − 2·2 + 3 = 2.4 (small-time scaling of the wave
        // symbol against the fractional density).
        assert_relative_eq!(t.eta, 2.4, max_relative = 1e-12);
        assert_relative_eq!(t.eta2, 2.6, max_relative = 1e-12);

        // heat d=2 bessel alpha=1.5, kappa2=0.2
        let t = expected_exponents(
            &CovarianceSpec::bessel(2, 1.5),
            &GreenSpec::heat(2),
            0.0,
            0.2,
        )
        .unwrap();
        assert_relative_eq!(t.eta, 0.75);
        assert_relative_eq!(t.eta3, 0.85);
    }

    #[test]
    fn kappa_out_of_range_is_rejected() {
        let err = expected_exponents(
            &CovarianceSpec::riesz(2, 1.0),
            &GreenSpec::heat(2),
            0.3, // above (2-beta)/4 = 0.25
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::KappaOutOfRange(_)));
    }

    #[test]
    fn lambda_example() {
        // heat d=2 riesz beta=1, n=2, kappa1=0.2, kappa2=0.45 -> lambda = 0.2
        let t = expected_exponents(
            &CovarianceSpec::riesz(2, 1.0),
            &GreenSpec::heat(2),
            0.2,
            0.45,
        )
        .unwrap();
        assert_relative_eq!(lambda_exponent(&t, 2), 0.2, max_relative = 1e-12);
    }

    #[test]
    fn zero_shift_is_rejected() {
        let err = shifted_integral(
            &CovarianceSpec::riesz(2, 1.0),
            &GreenSpec::heat(2),
            &[0.0, 0.0],
            0.1,
            &McConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroShift));
    }

    #[test]
    fn wave_separated_supports_vanish() {
        // Support geometry: Γ_3(r) lives on |x| = r < |w|/4, forcing
        // |x - y| >= |w|/2 where the Riesz kernel is bounded, and the two
        // spheres never meet: the integral is exactly zero.
        let v = shifted_integral(
            &CovarianceSpec::riesz(3, 1.0),
            &GreenSpec::wave(3),
            &[1.0, 0.0, 0.0],
            0.2,
            &McConfig::default(),
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }
}
