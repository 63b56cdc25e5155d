//! Small special-function toolbox: Bessel J0 and angular surface integrals.

use statrs::function::gamma::gamma;

/// Bessel function of the first kind, order zero.
///
/// Power series below 12 (near machine accuracy there), asymptotic rational
/// approximation beyond (absolute accuracy about 1e-8, ample for the slope
/// fits that consume it).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 12.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 1..200 {
            term *= -q / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        sum
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785398164;
        let p1 = 1.0
            + y * (-0.1098628627e-2
                + y * (0.2734510407e-4 + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
        let p2 = -0.1562499995e-1
            + y * (0.1430488765e-3
                + y * (-0.6911147651e-5 + y * (0.7621095161e-6 + y * (-0.934935152e-7))));
        (0.636619772 / ax).sqrt() * (xx.cos() * p1 - z * xx.sin() * p2)
    }
}

/// Surface area of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// Angular moment `∫_{S^{d-1}} ∏_j |ω_j|^{a_j} dω` via the Dirichlet-type
/// closed form `2 ∏ Γ((a_j+1)/2) / Γ((d + Σ a_j)/2)`.
pub fn sphere_coordinate_moment(exponents: &[f64]) -> f64 {
    let d = exponents.len() as f64;
    let sum: f64 = exponents.iter().sum();
    let num: f64 = exponents.iter().map(|a| gamma((a + 1.0) / 2.0)).product();
    2.0 * num / gamma((d + sum) / 2.0)
}

/// Average of `cos(z ω·e)` over the unit sphere `S^{d-1}` times its area,
/// i.e. `∫_{S^{d-1}} cos(z ω_1) dω`: the angular factor of a radial Fourier
/// integral with a shift of modulus `z / s`.
pub fn angular_phase(d: usize, z: f64) -> f64 {
    match d {
        1 => 2.0 * z.cos(),
        2 => 2.0 * std::f64::consts::PI * bessel_j0(z),
        3 => {
            if z.abs() < 1e-8 {
                4.0 * std::f64::consts::PI * (1.0 - z * z / 6.0)
            } else {
                4.0 * std::f64::consts::PI * z.sin() / z
            }
        }
        _ => panic!("angular_phase: unsupported dimension {d}"),
    }
}
