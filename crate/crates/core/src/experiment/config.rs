use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arma::{self, ArmaOrder, ArmaParams};
use crate::ecf::{FreqGrid, WeightKind};
use crate::estimators::{Algorithm, EstimatorConfig, GInit, TruncationDomain};
use crate::noise::{Family, NoiseModel};
use crate::ode::SystemOdeConfig;
use crate::{Error, Result};

/// What `estimate` and `montecarlo` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(alias = "alg1")]
    IidEcf,
    #[serde(alias = "alg2")]
    KnownNoise,
    #[serde(alias = "alg3")]
    ThreeStage,
    /// Batch Gauss–Newton baselines.
    Offline,
}

impl Method {
    pub fn recursive(self) -> Option<Algorithm> {
        match self {
            Method::IidEcf => Some(Algorithm::IidEcf),
            Method::KnownNoise => Some(Algorithm::KnownNoise),
            Method::ThreeStage => Some(Algorithm::ThreeStage),
            Method::Offline => None,
        }
    }
}

/// Right factor `R` of the fixed known-noise weight `K_S = C ⊗ R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RWeight {
    Identity,
    /// Monte Carlo `R_P` at the true system.
    Estimate,
}

fn one() -> f64 {
    1.0
}
fn default_margin() -> f64 {
    arma::DEFAULT_MARGIN
}
fn default_grid_points() -> usize {
    10
}
fn default_grid_umax() -> f64 {
    2.0
}
fn default_weight() -> WeightKind {
    WeightKind::CAtEta
}
fn default_n() -> usize {
    10_000
}
fn default_replications() -> usize {
    100
}
fn default_warmup() -> usize {
    200
}
fn default_r_weight() -> RWeight {
    RWeight::Estimate
}
fn default_r_p_samples() -> usize {
    200_000
}
fn default_record_every() -> usize {
    1
}
fn default_ode_path_len() -> usize {
    100_000
}
fn default_ode_max_path_len() -> usize {
    400_000
}
fn default_ode_batches() -> usize {
    20
}
fn default_ode_t_end() -> f64 {
    5.0
}
fn default_ode_dt() -> f64 {
    0.1
}
fn default_ode_offset() -> f64 {
    0.1
}
fn default_pstar_n() -> usize {
    100_000
}

/// One experiment, read from a flat TOML file. Keys not listed here are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Method,
    pub family: Family,
    /// True noise parameters.
    pub eta: Vec<f64>,
    #[serde(default = "one")]
    pub h: f64,
    /// True autoregressive coefficients `a_1..a_p`.
    #[serde(default)]
    pub ar: Vec<f64>,
    /// True moving-average coefficients `c_1..c_q`.
    #[serde(default)]
    pub ma: Vec<f64>,
    #[serde(default = "default_margin")]
    pub margin_delta: f64,

    /// Explicit noise-ECF frequencies; otherwise `grid_points` equispaced
    /// points in `(0, grid_umax]`.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_grid_umax")]
    pub grid_umax: f64,
    /// System-ECF frequencies; the noise grid when absent.
    #[serde(default)]
    pub grid_s: Option<Vec<f64>>,
    #[serde(default = "default_weight")]
    pub weight: WeightKind,

    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    /// Every replication reuses `seed` (a determinism check).
    #[serde(default)]
    pub identical_seeds: bool,

    /// Initial noise estimate; the truth when absent.
    #[serde(default)]
    pub eta_init: Option<Vec<f64>>,
    /// Initial system estimate; the truth when absent.
    #[serde(default)]
    pub theta_init: Option<Vec<f64>>,
    /// Bounds of the noise-parameter box; a box around `eta_init` when absent.
    #[serde(default)]
    pub eta_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub eta_upper: Option<Vec<f64>>,
    /// Warm-up length of the `G` block. The system parameters stay at
    /// `theta_init` for that many steps; 0 starts `G` at zero instead.
    #[serde(default = "default_warmup")]
    pub g_warmup: usize,
    #[serde(default = "default_r_weight")]
    pub r_weight: RWeight,
    /// Path length of the Monte Carlo `R_P` estimate.
    #[serde(default = "default_r_p_samples")]
    pub r_p_samples: usize,
    /// Trajectory CSV keeps every k-th step (resets and the last step always).
    #[serde(default = "default_record_every")]
    pub record_every: usize,

    #[serde(default = "default_ode_path_len")]
    pub ode_path_len: usize,
    #[serde(default = "default_ode_max_path_len")]
    pub ode_max_path_len: usize,
    #[serde(default = "default_ode_batches")]
    pub ode_batches: usize,
    #[serde(default = "default_ode_t_end")]
    pub ode_t_end: f64,
    #[serde(default = "default_ode_dt")]
    pub ode_dt: f64,
    /// Relative offset of the integrated path's starting point from `x*`.
    #[serde(default = "default_ode_offset")]
    pub ode_offset: f64,
    /// Length of the data used for the long-run covariance `P*`.
    #[serde(default = "default_pstar_n")]
    pub pstar_n: usize,
}

impl ExperimentConfig {
    /// Parses TOML; syntax and schema errors carry the line number.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn order(&self) -> ArmaOrder {
        ArmaOrder::new(self.ar.len(), self.ma.len())
    }

    pub fn is_system(&self) -> bool {
        self.order().n_params() > 0
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.family, self.eta.clone(), self.h)
    }

    pub fn system(&self) -> Result<ArmaParams> {
        ArmaParams::new(self.ar.clone(), self.ma.clone(), self.margin_delta)
    }

    pub fn true_theta(&self) -> Vec<f64> {
        self.ar.iter().chain(&self.ma).copied().collect()
    }

    pub fn grid_e(&self) -> Result<FreqGrid> {
        match &self.grid {
            Some(u) => FreqGrid::new(u.clone()),
            None => FreqGrid::equispaced(self.grid_points, self.grid_umax),
        }
    }

    pub fn grid_s(&self) -> Result<FreqGrid> {
        match &self.grid_s {
            Some(u) => FreqGrid::new(u.clone()),
            None => self.grid_e(),
        }
    }

    pub fn eta_init(&self) -> Vec<f64> {
        self.eta_init.clone().unwrap_or_else(|| self.eta.clone())
    }

    pub fn theta_init(&self) -> Vec<f64> {
        self.theta_init.clone().unwrap_or_else(|| self.true_theta())
    }

    /// Replication `r`'s seed.
    pub fn replication_seed(&self, r: usize) -> u64 {
        if self.identical_seeds {
            self.seed
        } else {
            self.seed.wrapping_add(r as u64)
        }
    }

    /// Increments `Δy` of length `n` from the configured truth.
    pub fn simulate(&self, seed: u64) -> Result<Vec<f64>> {
        let noise = self.noise_model()?.sample(self.n, seed).values;
        if self.is_system() {
            Ok(self.system()?.simulate(&noise))
        } else {
            Ok(noise)
        }
    }

    /// `R_P` at the true system, from a path seeded independently of the data.
    pub fn r_p_truth(&self) -> Result<DMatrix<f64>> {
        let seed = self.seed ^ 0x5eed_0000_0000_0001;
        Ok(arma::r_p_estimate(&self.system()?, &self.noise_model()?, self.r_p_samples, seed))
    }

    /// The recursive estimator configuration, or `None` for the batch method.
    pub fn estimator_config(&self) -> Result<Option<EstimatorConfig>> {
        let Some(algorithm) = self.algorithm.recursive() else { return Ok(None) };
        let order = self.order();
        let eta_init = match algorithm {
            Algorithm::KnownNoise => self.eta.clone(),
            _ => self.eta_init(),
        };
        let domain = match (&self.eta_lower, &self.eta_upper) {
            (Some(lo), Some(hi)) => TruncationDomain::new(self.family, lo.clone(), hi.clone(), order, self.margin_delta)?,
            (None, None) => TruncationDomain::around(self.family, &eta_init, order, self.margin_delta)?,
            _ => return Err(Error::Config("eta_lower and eta_upper must be given together".into())),
        };
        let r_weight = match (algorithm, self.r_weight) {
            (Algorithm::KnownNoise, RWeight::Estimate) => Some(self.r_p_truth()?),
            _ => None,
        };
        let cfg = EstimatorConfig {
            algorithm,
            family: self.family,
            h_step: self.h,
            order,
            grid_e: self.grid_e()?,
            grid_s: self.grid_s()?,
            weight: self.weight,
            eta_init,
            theta_init: if algorithm == Algorithm::IidEcf { Vec::new() } else { self.theta_init() },
            known_eta: (algorithm == Algorithm::KnownNoise).then(|| self.eta.clone()),
            r_weight,
            g_init: if self.g_warmup == 0 { GInit::Zero } else { GInit::Warmup(self.g_warmup) },
            domain,
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn system_ode_config(&self, path_len: usize, seed: u64) -> Result<SystemOdeConfig> {
        let algorithm = self
            .algorithm
            .recursive()
            .filter(|a| a.has_system_block())
            .ok_or_else(|| Error::Config("the system ODE needs known-noise or three-stage".into()))?;
        let mut cfg = SystemOdeConfig::new(algorithm, self.noise_model()?, self.system()?, self.grid_e()?);
        cfg.grid_s = self.grid_s()?;
        cfg.weight = self.weight;
        if algorithm == Algorithm::KnownNoise && self.r_weight == RWeight::Estimate {
            cfg.r_weight = Some(self.r_p_truth()?);
        } else if algorithm == Algorithm::KnownNoise {
            let np = self.order().n_params();
            cfg.r_weight = Some(DMatrix::identity(np, np));
        }
        cfg.path_len = path_len;
        cfg.seed = seed;
        cfg.batches = self.ode_batches;
        Ok(cfg)
    }

    /// Checks that the dimensions agree and the initial points are interior.
    pub fn validate(&self) -> Result<()> {
        self.noise_model()?;
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if self.is_system() {
            self.system()?;
        }
        if let Some(theta) = &self.theta_init {
            if theta.len() != self.order().n_params() {
                return Err(Error::Config(format!(
                    "theta_init has {} entries, ar + ma have {}",
                    theta.len(),
                    self.order().n_params()
                )));
            }
        }
        match self.algorithm {
            Method::IidEcf if self.is_system() => {
                return Err(Error::Config("iid-ecf takes no ar/ma coefficients".into()));
            }
            Method::KnownNoise | Method::ThreeStage if !self.is_system() => {
                return Err(Error::Config("system algorithms need ar and/or ma coefficients".into()));
            }
            _ => {}
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.ode_dt > 0.0 && self.ode_t_end >= 0.0) {
            return Err(Error::Config("ode_dt must be positive and ode_t_end non-negative".into()));
        }
        self.grid_e()?;
        self.grid_s()?;
        if self.algorithm.recursive().is_some() {
            // building the estimator configuration runs its own checks, but
            // skip the R_P simulation here
            let mut probe = self.clone();
            probe.r_weight = RWeight::Identity;
            probe.estimator_config()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IID: &str = r#"
algorithm = "iid-ecf"
family = "gaussian"
eta = [0.0, 1.0]
seed = 7
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(IID).unwrap();
        assert_eq!(cfg.n, 10_000);
        assert_eq!(cfg.grid_e().unwrap().len(), 10);
        assert_eq!(cfg.weight, WeightKind::CAtEta);
        assert_eq!(cfg.eta_init(), vec![0.0, 1.0]);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(IID).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = format!("{IID}bogus = 3\n");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn system_algorithm_without_system_is_rejected() {
        let text = IID.replace("iid-ecf", "three-stage");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn initial_point_outside_domain_is_rejected() {
        let text = format!("{IID}eta_init = [0.0, 1.0]\neta_lower = [1.0, 0.5]\neta_upper = [2.0, 2.0]\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn wrong_theta_init_length_is_rejected() {
        let text = r#"
algorithm = "alg3"
family = "gaussian"
eta = [0.0, 1.0]
ar = [-0.5]
ma = [0.2]
theta_init = [0.1]
seed = 1
"#;
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn replication_seeds() {
        let mut cfg = ExperimentConfig::from_toml_str(IID).unwrap();
        assert_eq!(cfg.replication_seed(3), 10);
        cfg.identical_seeds = true;
        assert_eq!(cfg.replication_seed(3), 7);
    }
}
