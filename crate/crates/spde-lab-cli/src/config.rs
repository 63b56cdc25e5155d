//! JSON config schemas, one per subcommand. Every config is self-contained:
//! it carries its seed and every numeric parameter, so a run is reproducible
//! from the file alone.

use serde::Deserialize;

use spde_lab::green::GreenSpec;
use spde_lab::kernels::CovarianceSpec;
use spde_lab::noise::GridSpec;
use spde_lab::solver::Coefficients;
use spde_lab::{Error, Result};

pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(file).map_err(|e| Error::Config(format!("bad config: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentCase {
    pub cov: CovarianceSpec,
    pub green: GreenSpec,
    pub kappa1: f64,
    pub kappa2: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    pub eps_kmin: u32,
    pub eps_kmax: u32,
    pub mc_pairs: usize,
    pub seed: u64,
    pub cases: Vec<ExponentCase>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCheckConfig {
    pub cov: CovarianceSpec,
    pub grid: GridSpec,
    pub replicas: usize,
    pub seed: u64,
    /// Spatial lags, in grid cells along the first axis.
    pub lags: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub cov: CovarianceSpec,
    pub green: GreenSpec,
    pub coeffs: Coefficients,
    pub grid: GridSpec,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub save_times: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConfig {
    pub cov: CovarianceSpec,
    pub green: GreenSpec,
    pub coeffs: Coefficients,
    pub grid: GridSpec,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    pub p: u32,
    /// Save times below the horizon used as temporal lags (>= 5 needed for
    /// the time fit).
    pub time_saves: Vec<f64>,
    /// Optional [lo, hi] acceptance band on the fitted spatial exponent.
    pub space_band: Option<[f64; 2]>,
    /// Optional [lo, hi] acceptance band on the fitted temporal exponent.
    pub time_band: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallballConfig {
    pub replicas: usize,
    /// Decreasing determinant thresholds.
    pub deltas: Vec<f64>,
    /// Number of derivative-time nodes in the Gram quadrature.
    pub r_count: usize,
    /// Derivative times live in [t - eps, t).
    pub eps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalliavinConfig {
    pub cov: CovarianceSpec,
    pub green: GreenSpec,
    pub coeffs: Coefficients,
    pub grid: GridSpec,
    pub t: f64,
    pub seed: u64,
    /// Flat grid indices of the target points.
    pub points: Vec<usize>,
    /// Unit direction on the targets for the quadratic-form decomposition.
    pub xi: Vec<f64>,
    pub eps_list: Vec<f64>,
    /// Hölder exponents entering the expected-exponent table for lambda.
    pub kappa1: f64,
    pub kappa2: f64,
    pub smallball: Option<SmallballConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheck {
    /// Constant sigma of the linear run the ensemble came from.
    pub c: f64,
    /// Max allowed sup-norm distance to the oracle, as a fraction of the
    /// oracle peak.
    pub tolerance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub cov: CovarianceSpec,
    pub green: GreenSpec,
    pub coeffs: Coefficients,
    pub grid: GridSpec,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Flat grid indices of the evaluation points (distinct, n <= 4).
    pub points: Vec<usize>,
    pub quantile_box: f64,
    pub bandwidth: Option<Vec<f64>>,
    /// Linear-case comparison against the exact Gaussian law.
    pub oracle: Option<OracleCheck>,
}
