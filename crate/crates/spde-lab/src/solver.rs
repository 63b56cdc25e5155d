//! Mild-solution time stepper on the periodic grid.
//!
//! Heat uses exponential Euler in Fourier space, wave a trigonometric
//! (Gautschi-type) update on `(u, ∂_t u)` modes; both are exact on the linear
//! equation, so the linear-case oracles isolate the noise-discretization
//! error. Nonlinearities act pointwise in physical space; noise enters with
//! the left-point (Itô) convention and is smoothed by the propagator within
//! the step.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::green::{GreenSpec, Operator};
use crate::kernels::CovarianceSpec;
use crate::noise::{self, GridSpec};

const CLIP_SCALE: f64 = 10.0;
const OVERFLOW_GUARD: f64 = 1e8;

/// Smooth bounded surrogate for a hard clamp: `M tanh(u/M)`.
fn smooth_clip(u: f64) -> f64 {
    CLIP_SCALE * (u / CLIP_SCALE).tanh()
}

fn smooth_clip_d1(u: f64) -> f64 {
    let c = (u / CLIP_SCALE).cosh();
    1.0 / (c * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum SigmaPreset {
    Constant { c: f64 },
    /// `a + b · clip(u)` with the smooth clip above (Lipschitz, all
    /// derivatives bounded).
    AffineClipped { a: f64, b: f64 },
    /// `1 + sin(u)/2`; bounded away from zero by 1/2.
    BoundedSine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DriftPreset {
    Zero,
    Cos,
    AffineClipped { a: f64, b: f64 },
}

/// Diffusion and drift coefficients plus the certified lower bound of |σ|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub sigma: SigmaPreset,
    pub drift: DriftPreset,
    pub sigma_floor: f64,
}

impl Coefficients {
    pub fn linear(c: f64) -> Self {
        Coefficients {
            sigma: SigmaPreset::Constant { c },
            drift: DriftPreset::Zero,
            sigma_floor: c.abs(),
        }
    }

    /// The default nondegenerate nonlinear preset.
    pub fn bounded_sine() -> Self {
        Coefficients {
            sigma: SigmaPreset::BoundedSine,
            drift: DriftPreset::Zero,
            sigma_floor: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_floor < 0.0 {
            return Err(Error::parameter("sigma_floor must be nonnegative"));
        }
        // Analytic infimum of |σ| per preset.
        let inf = match self.sigma {
            SigmaPreset::Constant { c } => c.abs(),
            SigmaPreset::BoundedSine => 0.5,
            // a + b·clip can vanish unless |a| dominates the clipped range.
            SigmaPreset::AffineClipped { a, b } => (a.abs() - b.abs() * CLIP_SCALE).max(0.0),
        };
        if self.sigma_floor > inf + 1e-12 {
            return Err(Error::parameter(format!(
                "sigma_floor {} exceeds the preset infimum {inf}",
                self.sigma_floor
            )));
        }
        Ok(())
    }

    pub fn sigma(&self, u: f64) -> f64 {
        match self.sigma {
            SigmaPreset::Constant { c } => c,
            SigmaPreset::AffineClipped { a, b } => a + b * smooth_clip(u),
            SigmaPreset::BoundedSine => 1.0 + 0.5 * u.sin(),
        }
    }

    pub fn sigma_prime(&self, u: f64) -> f64 {
        match self.sigma {
            SigmaPreset::Constant { .. } => 0.0,
            SigmaPreset::AffineClipped { b, .. } => b * smooth_clip_d1(u),
            SigmaPreset::BoundedSine => 0.5 * u.cos(),
        }
    }

    pub fn drift(&self, u: f64) -> f64 {
        match self.drift {
            DriftPreset::Zero => 0.0,
            DriftPreset::Cos => u.cos(),
            DriftPreset::AffineClipped { a, b } => a + b * smooth_clip(u),
        }
    }

    pub fn drift_prime(&self, u: f64) -> f64 {
        match self.drift {
            DriftPreset::Zero => 0.0,
            DriftPreset::Cos => -u.sin(),
            DriftPreset::AffineClipped { b, .. } => b * smooth_clip_d1(u),
        }
    }
}

/// Linear one-step update in Fourier space.
#[derive(Debug, Clone, Copy)]
pub enum Propagator {
    Heat { mult: f64 },
    /// `(u, v) -> (c·u + s·v, -ks·u + c·v)` with `c = cos(dt|ξ|)`,
    /// `s = sin(dt|ξ|)/|ξ|`, `ks = |ξ| sin(dt|ξ|)`.
    Wave { c: f64, s: f64, ks: f64 },
}

pub fn propagator(green: &GreenSpec, dt: f64, xi_norm: f64) -> Propagator {
    assert!(dt > 0.0);
    match green.operator {
        Operator::Heat => Propagator::Heat {
            mult: (-dt * xi_norm * xi_norm / 2.0).exp(),
        },
        Operator::Wave => {
            let z = dt * xi_norm;
            let s = if z.abs() < 1e-8 {
                dt * (1.0 - z * z / 6.0)
            } else {
                z.sin() / xi_norm
            };
            Propagator::Wave {
                c: z.cos(),
                s,
                ks: xi_norm * z.sin(),
            }
        }
    }
}

/// Replica ensemble of fields at a common time.
#[derive(Debug, Clone)]
pub struct FieldEnsemble {
    pub grid: GridSpec,
    pub time: f64,
    pub replicas: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

/// Full single-replica history for derivative work: physical states `u^n`,
/// noise increments `ΔW^n` and, for wave, the velocity component.
pub struct Trajectory {
    pub grid: GridSpec,
    pub green: GreenSpec,
    pub coeffs: Coefficients,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub noises: Vec<Vec<f64>>,
}

pub struct SimConfig {
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Extra times (multiples of dt) at which fields are returned; the
    /// horizon is always included.
    pub save_times: Vec<f64>,
}

impl SimConfig {
    pub fn new(t: f64, replicas: usize, seed: u64) -> Self {
        SimConfig {
            t,
            replicas,
            seed,
            save_times: Vec::new(),
        }
    }
}

fn step_count(t: f64, dt: f64) -> Result<usize> {
    let m = (t / dt).round();
    if m < 1.0 || ((m * dt - t) / dt).abs() > 1e-9 {
        return Err(Error::parameter(format!(
            "horizon {t} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(m as usize)
}

/// Shared per-run immutable data.
struct Engine {
    grid: GridSpec,
    green: GreenSpec,
    coeffs: Coefficients,
    weights: Vec<f64>,
    props: Vec<Propagator>,
    steps: usize,
}

impl Engine {
    fn new(
        cov: &CovarianceSpec,
        green: &GreenSpec,
        coeffs: &Coefficients,
        grid: &GridSpec,
        t: f64,
    ) -> Result<Self> {
        cov.validate()?;
        green.validate()?;
        coeffs.validate()?;
        grid.validate()?;
        let weights = noise::spectral_weights(cov, grid)?;
        let props = (0..grid.cells())
            .map(|k| {
                let xi = grid.frequency(k);
                let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                propagator(green, grid.dt, norm)
            })
            .collect();
        Ok(Engine {
            grid: *grid,
            green: *green,
            coeffs: *coeffs,
            weights,
            props,
            steps: step_count(t, grid.dt)?,
        })
    }

    /// One replica; `next_noise(step)` supplies the increment, `observe` is
    /// called after every step (step_index counts completed steps, so
    /// time = step_index · dt), and `record` optionally captures
    /// (state, noise) per step.
    fn run_replica<F>(
        &self,
        next_noise: &mut dyn FnMut(usize) -> Vec<f64>,
        mut observe: F,
        mut record: Option<&mut Trajectory>,
    ) -> Result<()>
    where
        F: FnMut(usize, &[f64]),
    {
        let n = self.grid.cells();
        let fft = FftNd::new(self.grid.points_per_dim, self.grid.dim);
        let dt = self.grid.dt;
        let mut state = vec![Complex64::default(); n];
        let mut velocity = vec![Complex64::default(); n]; // wave only
        let mut phys = vec![0.0f64; n];
        let mut scratch = vec![Complex64::default(); n];
        if let Some(tr) = record.as_deref_mut() {
            tr.times.push(0.0);
            tr.states.push(phys.clone());
        }
        for step in 0..self.steps {
            let inc = next_noise(step);
            // Forcing in physical space from the pre-step field.
            for i in 0..n {
                let u = phys[i];
                scratch[i] = Complex64::new(
                    self.coeffs.sigma(u) * inc[i] + self.coeffs.drift(u) * dt,
                    0.0,
                );
            }
            fft.forward(&mut scratch);
            match self.green.operator {
                Operator::Heat => {
                    for k in 0..n {
                        let Propagator::Heat { mult } = self.props[k] else {
                            unreachable!()
                        };
                        state[k] = (state[k] + scratch[k]) * mult;
                    }
                }
                Operator::Wave => {
                    for k in 0..n {
                        let Propagator::Wave { c, s, ks } = self.props[k] else {
                            unreachable!()
                        };
                        let v = velocity[k] + scratch[k];
                        let u = state[k];
                        state[k] = u * c + v * s;
                        velocity[k] = -u * ks + v * c;
                    }
                }
            }
            // Physical field for the next forcing evaluation / observation.
            scratch.copy_from_slice(&state);
            fft.inverse(&mut scratch);
            let mut maxabs = 0.0f64;
            for i in 0..n {
                phys[i] = scratch[i].re;
                maxabs = maxabs.max(phys[i].abs());
            }
            if !maxabs.is_finite() || maxabs > OVERFLOW_GUARD {
                return Err(Error::UnstableStep {
                    step,
                    norm: maxabs,
                });
            }
            if let Some(tr) = record.as_deref_mut() {
                tr.noises.push(inc);
                tr.times.push((step + 1) as f64 * dt);
                tr.states.push(phys.clone());
            }
            observe(step + 1, &phys);
        }
        Ok(())
    }
}

/// Run the ensemble and return fields at the horizon.
pub fn simulate(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    coeffs: &Coefficients,
    grid: &GridSpec,
    cfg: &SimConfig,
) -> Result<FieldEnsemble> {
    let mut all = simulate_saved(cov, green, coeffs, grid, cfg)?;
    Ok(all.pop().expect("horizon ensemble always present"))
}

/// Run the ensemble, returning one `FieldEnsemble` per save time (ascending,
/// horizon last).
pub fn simulate_saved(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    coeffs: &Coefficients,
    grid: &GridSpec,
    cfg: &SimConfig,
) -> Result<Vec<FieldEnsemble>> {
    if cfg.replicas == 0 {
        return Err(Error::parameter("replica count must be >= 1"));
    }
    let engine = Engine::new(cov, green, coeffs, grid, cfg.t)?;
    let mut save_steps: Vec<usize> = cfg
        .save_times
        .iter()
        .map(|&s| step_count(s, grid.dt))
        .collect::<Result<_>>()?;
    save_steps.push(engine.steps);
    save_steps.sort_unstable();
    save_steps.dedup();
    if *save_steps.last().unwrap() > engine.steps {
        return Err(Error::parameter("save time beyond the horizon"));
    }

    let per_replica: Vec<(u64, Vec<Vec<f64>>)> =
        crate::exec::try_map_indexed(cfg.replicas, |rep| {
            let mut rng = replica_rng(cfg.seed, rep);
            let mut saved: Vec<Vec<f64>> = Vec::with_capacity(save_steps.len());
            engine.run_replica(
                &mut |_| noise::increment_from_weights(&engine.weights, grid, &mut rng).values,
                |step, phys| {
                    if save_steps.contains(&step) {
                        saved.push(phys.to_vec());
                    }
                },
                None,
            )?;
            Ok::<_, Error>((rep as u64, saved))
        })?;

    let out = save_steps
        .iter()
        .enumerate()
        .map(|(si, &step)| FieldEnsemble {
            grid: *grid,
            time: step as f64 * grid.dt,
            replicas: per_replica.iter().map(|(_, s)| s[si].clone()).collect(),
            seeds: per_replica.iter().map(|(r, _)| *r).collect(),
        })
        .collect();
    Ok(out)
}

/// Per-replica deterministic stream: one ChaCha8 stream per replica index.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

/// Single replica with full history retained (for derivative propagation).
pub fn run_trajectory(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    coeffs: &Coefficients,
    grid: &GridSpec,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let engine = Engine::new(cov, green, coeffs, grid, t)?;
    let mut tr = Trajectory {
        grid: *grid,
        green: *green,
        coeffs: *coeffs,
        times: Vec::with_capacity(engine.steps + 1),
        states: Vec::with_capacity(engine.steps + 1),
        noises: Vec::with_capacity(engine.steps),
    };
    engine.run_replica(
        &mut |_| noise::increment_from_weights(&engine.weights, grid, rng).values,
        |_, _| {},
        Some(&mut tr),
    )?;
    Ok(tr)
}

/// Re-run the stepping with externally supplied noise increments (one vector
/// per step); returns the final physical field. Used by the
/// bump-and-difference derivative oracle.
pub fn run_with_noises(
    cov: &CovarianceSpec,
    green: &GreenSpec,
    coeffs: &Coefficients,
    grid: &GridSpec,
    noises: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let t = noises.len() as f64 * grid.dt;
    let engine = Engine::new(cov, green, coeffs, grid, t)?;
    let mut last = vec![0.0f64; grid.cells()];
    engine.run_replica(
        &mut |step| noises[step].clone(),
        |step, phys| {
            if step == noises.len() {
                last.copy_from_slice(phys);
            }
        },
        None,
    )?;
    Ok(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Time,
    Space,
}

/// Fit the p-th moment Hölder exponent from dyadic lags.
///
/// Time: ensembles from a common run at increasing times, the last being the
/// reference; the lag of each earlier ensemble is `t_ref - t`. Space: the
/// first ensemble with dyadic grid-cell lags. Returns `slope / p` and its
/// standard error.
pub fn holder_fit(
    ensembles: &[FieldEnsemble],
    direction: Direction,
    p: u32,
) -> Result<(f64, f64)> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::parameter("p must be an even integer >= 2"));
    }
    let pairs: Vec<(f64, f64)> = match direction {
        Direction::Time => {
            if ensembles.len() < 5 {
                return Err(Error::DegenerateFit(
                    "time fit needs at least 5 lagged ensembles plus the reference".into(),
                ));
            }
            let (reference, lagged) = ensembles.split_last().unwrap();
            lagged
                .iter()
                .map(|ens| {
                    let lag = reference.time - ens.time;
                    if lag <= 0.0 {
                        return Err(Error::parameter("ensembles must be time-ordered"));
                    }
                    let mut acc = 0.0f64;
                    let mut count = 0usize;
                    for (ua, ub) in ens.replicas.iter().zip(&reference.replicas) {
                        for (a, b) in ua.iter().zip(ub) {
                            acc += (b - a).powi(p as i32);
                            count += 1;
                        }
                    }
                    Ok((lag, acc / count as f64))
                })
                .collect::<Result<_>>()?
        }
        Direction::Space => {
            let ens = &ensembles[0];
            let n = ens.grid.points_per_dim;
            let dx = ens.grid.dx();
            let mut lags = Vec::new();
            let mut l = 1usize;
            while l <= n / 8 && lags.len() < 6 {
                lags.push(l);
                l *= 2;
            }
            if lags.len() < 4 {
                return Err(Error::DegenerateFit("grid too coarse for spatial lags".into()));
            }
            lags.iter()
                .map(|&lag| {
                    let mut acc = 0.0f64;
                    let mut count = 0usize;
                    for u in &ens.replicas {
                        // Shift along the last axis (contiguous rows).
                        for row in u.chunks_exact(n) {
                            for i in 0..n {
                                let j = (i + lag) % n;
                                acc += (row[j] - row[i]).powi(p as i32);
                                count += 1;
                            }
                        }
                    }
                    Ok((lag as f64 * dx, acc / count as f64))
                })
                .collect::<Result<_>>()?
        }
    };
    let (slope, stderr) = crate::scaling::fit_slope(&pairs)?;
    Ok((slope / p as f64, stderr / p as f64))
}
