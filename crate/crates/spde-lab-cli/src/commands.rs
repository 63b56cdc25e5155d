//! One function per subcommand. Each returns `Ok(all_pass)`; errors map to
//! the documented exit codes in `main`.

use std::path::Path;

use serde::Serialize;

use spde_lab::density::{self, GaussianDensity};
use spde_lab::green::GreenSpec;
use spde_lab::kernels::CovarianceSpec;
use spde_lab::malliavin;
use spde_lab::noise::{self, GridSpec};
use spde_lab::report::{self, CsvTable, EXPONENT_CSV_HEADER};
use spde_lab::scaling::{self, EpsGrid, H4Kind, McConfig};
use spde_lab::solver::{self, Direction, SimConfig};
use spde_lab::{Error, Result};

use crate::config::*;

fn validate_base(cov: &CovarianceSpec, green: &GreenSpec, grid: &GridSpec) -> Result<()> {
    cov.validate().map_err(|e| Error::Config(e.to_string()))?;
    green.validate().map_err(|e| Error::Config(e.to_string()))?;
    grid.validate().map_err(|e| Error::Config(e.to_string()))?;
    if cov.dim != green.dim || cov.dim != grid.dim {
        return Err(Error::Config("cov/green/grid dimensions differ".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Verdict<T: Serialize> {
    all_pass: bool,
    detail: T,
}

fn write_verdict<T: Serialize>(out: &Path, name: &str, all_pass: bool, detail: T) -> Result<()> {
    report::write_json(&out.join(name), &Verdict { all_pass, detail })
}

pub fn exponents(cfg: &ExponentsConfig, out: &Path) -> Result<bool> {
    if cfg.cases.is_empty() {
        return Err(Error::Config("no cases".into()));
    }
    let grid = EpsGrid::dyadic(cfg.eps_kmin, cfg.eps_kmax);
    let mc = McConfig {
        pairs: cfg.mc_pairs,
        seed: cfg.seed,
    };
    let mut table = CsvTable::new(EXPONENT_CSV_HEADER);
    let mut all_pass = true;
    for case in &cfg.cases {
        case.cov.validate().map_err(|e| Error::Config(e.to_string()))?;
        let h3 = scaling::h3_fit(&case.cov, &case.green, &grid)?;
        let reports = [
            h3,
            scaling::h4_fit(
                H4Kind::I,
                &case.cov,
                &case.green,
                case.kappa1,
                case.kappa2,
                &case.w,
                &grid,
                &mc,
            )?,
            scaling::h4_fit(
                H4Kind::Ii,
                &case.cov,
                &case.green,
                case.kappa1,
                case.kappa2,
                &case.w,
                &grid,
                &mc,
            )?,
            scaling::h4_fit(
                H4Kind::Iii,
                &case.cov,
                &case.green,
                case.kappa1,
                case.kappa2,
                &case.w,
                &grid,
                &mc,
            )?,
        ];
        for r in &reports {
            all_pass &= r.pass;
            table.push(report::exponent_csv_row(
                &case.cov,
                &case.green,
                case.kappa1,
                case.kappa2,
                &case.w,
                r,
            ));
        }
    }
    table.write(&out.join("exponents.csv"))?;
    write_verdict(out, "exponents.json", all_pass, cfg.cases.len() * 4)?;
    Ok(all_pass)
}

#[derive(Serialize)]
struct LagCheck {
    lag_cells: usize,
    empirical: f64,
    theory: f64,
    stderr: f64,
    pass: bool,
}

#[derive(Serialize)]
struct NoiseDetail {
    lags: Vec<LagCheck>,
    mean_normalized: f64,
    whiteness_corr: f64,
    whiteness_bound: f64,
    whiteness_pass: bool,
}

pub fn noise_check(cfg: &NoiseCheckConfig, out: &Path) -> Result<bool> {
    cfg.cov.validate().map_err(|e| Error::Config(e.to_string()))?;
    cfg.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
    if cfg.replicas == 0 {
        return Err(Error::Config("replicas must be >= 1".into()));
    }
    let grid = cfg.grid;
    let n = grid.cells();
    for &lag in &cfg.lags {
        if lag == 0 || lag >= grid.points_per_dim {
            return Err(Error::Config(format!("lag {lag} outside (0, N)")));
        }
    }
    let weights = noise::spectral_weights(&cfg.cov, &grid)?;
    let anchor = 0usize;
    let m = cfg.replicas;

    // Per-replica products for each lag, plus whiteness cross-products.
    let stats: Vec<(Vec<f64>, f64, f64)> = spde_lab::exec::map_indexed(m, |rep| {
        let mut rng = solver::replica_rng(cfg.seed, rep);
        let a = noise::increment_from_weights(&weights, &grid, &mut rng);
        let b = noise::increment_from_weights(&weights, &grid, &mut rng);
        let prods = cfg
            .lags
            .iter()
            .map(|&lag| a.values[anchor] * a.values[(anchor + lag) % n])
            .collect();
        (prods, a.values[anchor], a.values[anchor] * b.values[anchor])
    });

    let var_theory: f64 = grid.dt * weights.iter().sum::<f64>();
    let mut lags = Vec::new();
    let mut all_pass = true;
    for (li, &lag) in cfg.lags.iter().enumerate() {
        // The fastest axis has stride 1, i.e. the last frequency component.
        let theory: f64 = (0..n)
            .map(|k| {
                let f = *grid.frequency(k).last().unwrap();
                grid.dt * weights[k] * (f * lag as f64 * grid.dx()).cos()
            })
            .sum();
        let vals: Vec<f64> = stats.iter().map(|s| s.0[li]).collect();
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1).max(1) as f64;
        let stderr = (var / m as f64).sqrt();
        let pass = (mean - theory).abs() <= 3.0 * stderr;
        all_pass &= pass;
        lags.push(LagCheck {
            lag_cells: lag,
            empirical: mean,
            theory,
            stderr,
            pass,
        });
    }
    let mean_anchor: f64 = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let mean_normalized = mean_anchor / var_theory.sqrt();
    let cross: f64 = stats.iter().map(|s| s.2).sum::<f64>() / m as f64;
    let whiteness_corr = cross / var_theory;
    let whiteness_bound = 4.0 / (m as f64).sqrt();
    let whiteness_pass = whiteness_corr.abs() < whiteness_bound;
    all_pass &= whiteness_pass;
    all_pass &= mean_normalized.abs() < whiteness_bound;

    write_verdict(
        out,
        "noise_check.json",
        all_pass,
        NoiseDetail {
            lags,
            mean_normalized,
            whiteness_corr,
            whiteness_bound,
            whiteness_pass,
        },
    )?;
    Ok(all_pass)
}

#[derive(Serialize)]
struct SimulateSummary {
    times: Vec<f64>,
    replicas: usize,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<bool> {
    validate_base(&cfg.cov, &cfg.green, &cfg.grid)?;
    let sim = SimConfig {
        t: cfg.t,
        replicas: cfg.replicas,
        seed: cfg.seed,
        save_times: cfg.save_times.clone(),
    };
    let ensembles = solver::simulate_saved(&cfg.cov, &cfg.green, &cfg.coeffs, &cfg.grid, &sim)?;
    let mut times = Vec::new();
    let mut mean = Vec::new();
    let mut variance = Vec::new();
    for (i, ens) in ensembles.iter().enumerate() {
        let flat: Vec<f64> = ens.replicas.iter().flatten().copied().collect();
        report::write_field_binary(&out.join(format!("ensemble_{i}")), &flat, &ens.grid, cfg.seed)?;
        let count = flat.len() as f64;
        let mu = flat.iter().sum::<f64>() / count;
        let var = flat.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
        times.push(ens.time);
        mean.push(mu);
        variance.push(var);
    }
    report::write_json(
        &out.join("simulate_summary.json"),
        &SimulateSummary {
            times,
            replicas: cfg.replicas,
            mean,
            variance,
        },
    )?;
    Ok(true)
}

#[derive(Serialize)]
struct HolderDetail {
    space_exponent: Option<f64>,
    space_stderr: Option<f64>,
    space_band: Option<[f64; 2]>,
    space_pass: bool,
    time_exponent: Option<f64>,
    time_stderr: Option<f64>,
    time_band: Option<[f64; 2]>,
    time_pass: bool,
}

pub fn holder(cfg: &HolderConfig, out: &Path) -> Result<bool> {
    validate_base(&cfg.cov, &cfg.green, &cfg.grid)?;
    let sim = SimConfig {
        t: cfg.t,
        replicas: cfg.replicas,
        seed: cfg.seed,
        save_times: cfg.time_saves.clone(),
    };
    let ensembles = solver::simulate_saved(&cfg.cov, &cfg.green, &cfg.coeffs, &cfg.grid, &sim)?;
    let final_ens = ensembles.last().unwrap();

    let (space_exp, space_err) =
        solver::holder_fit(std::slice::from_ref(final_ens), Direction::Space, cfg.p)?;
    let in_band = |v: f64, band: &Option<[f64; 2]>| band.map_or(true, |[lo, hi]| v >= lo && v <= hi);
    let space_pass = in_band(space_exp, &cfg.space_band);

    let (time_exp, time_err, time_pass) = if ensembles.len() >= 6 {
        let (e, s) = solver::holder_fit(&ensembles, Direction::Time, cfg.p)?;
        (Some(e), Some(s), in_band(e, &cfg.time_band))
    } else if cfg.time_band.is_some() {
        return Err(Error::Config(
            "time band requested but fewer than 5 save times given".into(),
        ));
    } else {
        (None, None, true)
    };

    let all_pass = space_pass && time_pass;
    write_verdict(
        out,
        "holder.json",
        all_pass,
        HolderDetail {
            space_exponent: Some(space_exp),
            space_stderr: Some(space_err),
            space_band: cfg.space_band,
            space_pass,
            time_exponent: time_exp,
            time_stderr: time_err,
            time_band: cfg.time_band,
            time_pass,
        },
    )?;
    Ok(all_pass)
}

/// Geometric lags from `eps` down to `dt`, snapped to the step grid and
/// returned as ascending derivative times in `[t - eps, t)`.
fn derivative_times(t: f64, dt: f64, eps: f64, count: usize) -> Vec<f64> {
    let steps = (t / dt).round() as usize;
    let ratio = (dt / eps).powf(1.0 / (count.max(2) - 1) as f64);
    let mut out: Vec<usize> = Vec::new();
    let mut lag = eps;
    for _ in 0..count {
        let m = ((t - lag) / dt).round() as usize;
        if m < steps {
            out.push(m);
        }
        lag *= ratio;
    }
    out.sort_unstable();
    out.dedup();
    out.into_iter().map(|m| m as f64 * dt).collect()
}

#[derive(Serialize)]
struct MalliavinDetail {
    decomposition_rows: usize,
    smallball_rows: usize,
    lambda: f64,
}

pub fn malliavin_cmd(cfg: &MalliavinConfig, out: &Path) -> Result<bool> {
    validate_base(&cfg.cov, &cfg.green, &cfg.grid)?;
    if cfg.points.len() != cfg.xi.len() {
        return Err(Error::Config("xi length must match points".into()));
    }
    let table = scaling::expected_exponents(&cfg.cov, &cfg.green, cfg.kappa1, cfg.kappa2)?;
    let lambda = scaling::lambda_exponent(&table, cfg.points.len());

    // Decomposition terms along the eps grid, on one recorded replica.
    let mut rng = solver::replica_rng(cfg.seed, 0);
    let run = solver::run_trajectory(&cfg.cov, &cfg.green, &cfg.coeffs, &cfg.grid, cfg.t, &mut rng)?;
    let mut decomp = CsvTable::new("eps,a11,a12,a13,a2");
    for &eps in &cfg.eps_list {
        let terms = malliavin::decomposition_terms(&run, &cfg.cov, &cfg.points, &cfg.xi, eps)?;
        decomp.push(format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e}",
            eps, terms.a11, terms.a12, terms.a13, terms.a2
        ));
    }
    decomp.write(&out.join("decomposition.csv"))?;

    let mut smallball_rows = 0usize;
    if let Some(sb) = &cfg.smallball {
        let r_times = derivative_times(cfg.t, cfg.grid.dt, sb.eps, sb.r_count);
        let matrices: Vec<malliavin::MalliavinMatrix> =
            spde_lab::exec::try_map_indexed(sb.replicas, |rep| {
                let mut rng = solver::replica_rng(cfg.seed, rep + 1);
                let run = solver::run_trajectory(
                    &cfg.cov, &cfg.green, &cfg.coeffs, &cfg.grid, cfg.t, &mut rng,
                )?;
                let du = malliavin::derivative_field(&run, &cfg.points, &r_times)?;
                malliavin::gram_matrix(&du, &cfg.cov)
            })?;
        let probe = malliavin::smallball_probe(&matrices, &sb.deltas, lambda)?;
        let mut csv = CsvTable::new("delta,tail");
        for (delta, tail) in &probe.rows {
            csv.push(format!("{delta},{tail}"));
        }
        csv.write(&out.join("smallball.csv"))?;
        smallball_rows = probe.rows.len();
    }

    write_verdict(
        out,
        "malliavin.json",
        true,
        MalliavinDetail {
            decomposition_rows: cfg.eps_list.len(),
            smallball_rows,
            lambda,
        },
    )?;
    Ok(true)
}

#[derive(Serialize)]
struct DensityDetail {
    positivity: spde_lab::density::PositivityReport,
    oracle_supnorm_ratio: Option<f64>,
    oracle_pass: bool,
}

pub fn density_cmd(cfg: &DensityConfig, out: &Path) -> Result<bool> {
    validate_base(&cfg.cov, &cfg.green, &cfg.grid)?;
    let sim = SimConfig {
        t: cfg.t,
        replicas: cfg.replicas,
        seed: cfg.seed,
        save_times: Vec::new(),
    };
    let ensemble = solver::simulate(&cfg.cov, &cfg.green, &cfg.coeffs, &cfg.grid, &sim)?;
    let est = density::kde_joint(&ensemble, &cfg.points, cfg.bandwidth.clone())?;
    let positivity = density::positivity_report(&est, cfg.quantile_box)?;
    let mut all_pass = positivity.pass;

    let mut ratio = None;
    let mut oracle_pass = true;
    if let Some(oc) = &cfg.oracle {
        // Grid-matched oracle: discrete spectral sum on the same grid, so the
        // comparison isolates the statistical estimate from continuum
        // discretization error.
        let steps = (cfg.t / cfg.grid.dt).round() as usize;
        let nodes: Vec<f64> = (0..=steps).map(|m| m as f64 * cfg.grid.dt).collect();
        let sigma = density::gaussian_oracle_grid(
            &cfg.cov, &cfg.green, &cfg.grid, cfg.t, &cfg.points, oc.c, &nodes,
        )?;
        let oracle = GaussianDensity::new(sigma)?;
        let n = cfg.points.len();
        let sds: Vec<f64> = (0..n).map(|i| oracle.covariance[i][i].sqrt()).collect();
        let per_axis = 9usize;
        let total = per_axis.pow(n as u32);
        let mut sup = 0.0f64;
        let mut peak = 0.0f64;
        let mut y = vec![0.0f64; n];
        for idx in 0..total {
            let mut rem = idx;
            for j in 0..n {
                let k = rem % per_axis;
                rem /= per_axis;
                y[j] = -3.0 * sds[j] + 6.0 * sds[j] * k as f64 / (per_axis - 1) as f64;
            }
            let o = oracle.query(&y);
            peak = peak.max(o);
            sup = sup.max((est.query(&y) - o).abs());
        }
        let r = sup / peak;
        oracle_pass = r < oc.tolerance;
        all_pass &= oracle_pass;
        ratio = Some(r);
    }

    write_verdict(
        out,
        "density.json",
        all_pass,
        DensityDetail {
            positivity,
            oracle_supnorm_ratio: ratio,
            oracle_pass,
        },
    )?;
    Ok(all_pass)
}
