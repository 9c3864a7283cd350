//! Recursive estimators built on the DFL recursion with resetting.
//!
//! Every algorithm processes one datum per step. All quantities entering a
//! step are evaluated at the previous estimate `x_{n}`; the step then forms
//! the candidate `x_n + correction/(n+1)` and resets to `x_0` if the
//! candidate leaves the truncation domain.
//!
//! * [`Algorithm::IidEcf`]: noise parameters of i.i.d. data by ECF matching.
//! * [`Algorithm::KnownNoise`]: ARMA parameters by ECF matching of the
//!   innovations under a known noise law.
//! * [`Algorithm::ThreeStage`]: recursive prediction error for `θ_P`, ECF on
//!   its innovations for `η`, and ECF re-estimation of `θ_S` at `η̂`.

pub(crate) mod blocks;
mod domain;
mod state;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use domain::{dfl_step, StepEvent, TruncationDomain, PD_FLOOR};
pub use state::{Estimates, EstimatorState, Layout};

use crate::arma::{self, ArmaOrder};
use crate::ecf::{self, FreqGrid, SystemWeight, WeightKind, WeightMatrix};
use crate::linalg::CMatrix;
use crate::noise::{Family, NoiseModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[serde(alias = "alg1")]
    IidEcf,
    #[serde(alias = "alg2")]
    KnownNoise,
    #[serde(alias = "alg3")]
    ThreeStage,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iid-ecf" | "alg1" => Ok(Algorithm::IidEcf),
            "known-noise" | "alg2" => Ok(Algorithm::KnownNoise),
            "three-stage" | "alg3" => Ok(Algorithm::ThreeStage),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl Algorithm {
    pub fn has_noise_block(self) -> bool {
        matches!(self, Algorithm::IidEcf | Algorithm::ThreeStage)
    }

    pub fn has_system_block(self) -> bool {
        matches!(self, Algorithm::KnownNoise | Algorithm::ThreeStage)
    }
}

/// Initial value of the `G` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GInit {
    Zero,
    /// Average of `ĥ_θ` over the first `n` data at the initial `θ`. The
    /// system parameters stay at their initial value over those `n` steps, so
    /// the running `Ĝ` reproduces that average before `θ̂_S` starts moving,
    /// and a reset returns `Ĝ` to it.
    Warmup(usize),
}

/// Everything a run needs besides the data.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    pub family: Family,
    pub h_step: f64,
    pub order: ArmaOrder,
    /// Frequencies of the noise-ECF block.
    pub grid_e: FreqGrid,
    /// Frequencies of the system-ECF block.
    pub grid_s: FreqGrid,
    pub weight: WeightKind,
    pub eta_init: Vec<f64>,
    pub theta_init: Vec<f64>,
    /// Noise parameters assumed known by [`Algorithm::KnownNoise`].
    pub known_eta: Option<Vec<f64>>,
    /// Fixed right factor `R` of `K_S = C ⊗ R` for [`Algorithm::KnownNoise`];
    /// identity when absent.
    pub r_weight: Option<DMatrix<f64>>,
    pub g_init: GInit,
    pub domain: TruncationDomain,
}

impl EstimatorConfig {
    /// Algorithm 1 with `K = C(η̂)` and a wide domain around `eta_init`.
    pub fn iid(family: Family, h_step: f64, eta_init: Vec<f64>, grid: FreqGrid) -> Result<Self> {
        let order = ArmaOrder::new(0, 0);
        let domain = TruncationDomain::around(family, &eta_init, order, arma::DEFAULT_MARGIN)?;
        Ok(Self {
            algorithm: Algorithm::IidEcf,
            family,
            h_step,
            order,
            grid_e: grid.clone(),
            grid_s: grid,
            weight: WeightKind::CAtEta,
            eta_init,
            theta_init: Vec::new(),
            known_eta: None,
            r_weight: None,
            g_init: GInit::Zero,
            domain,
        })
    }

    /// Algorithm 2 for a known noise law.
    pub fn known_noise(noise: &NoiseModel, order: ArmaOrder, theta_init: Vec<f64>, grid: FreqGrid) -> Result<Self> {
        let domain = TruncationDomain::around(noise.family(), noise.eta(), order, arma::DEFAULT_MARGIN)?;
        Ok(Self {
            algorithm: Algorithm::KnownNoise,
            family: noise.family(),
            h_step: noise.h_step(),
            order,
            grid_e: grid.clone(),
            grid_s: grid,
            weight: WeightKind::CAtEta,
            eta_init: noise.eta().to_vec(),
            theta_init,
            known_eta: Some(noise.eta().to_vec()),
            r_weight: None,
            g_init: GInit::Warmup(200),
            domain,
        })
    }

    /// Algorithm 3.
    pub fn three_stage(
        family: Family,
        h_step: f64,
        eta_init: Vec<f64>,
        order: ArmaOrder,
        theta_init: Vec<f64>,
        grid_e: FreqGrid,
        grid_s: FreqGrid,
    ) -> Result<Self> {
        let domain = TruncationDomain::around(family, &eta_init, order, arma::DEFAULT_MARGIN)?;
        Ok(Self {
            algorithm: Algorithm::ThreeStage,
            family,
            h_step,
            order,
            grid_e,
            grid_s,
            weight: WeightKind::CAtEta,
            eta_init,
            theta_init,
            known_eta: None,
            r_weight: None,
            g_init: GInit::Warmup(200),
            domain,
        })
    }

    pub fn layout(&self) -> Layout {
        let np = self.order.n_params();
        let alg = self.algorithm;
        Layout {
            theta_p: if alg == Algorithm::ThreeStage { np } else { 0 },
            eta: if alg.has_noise_block() { self.family.n_params() } else { 0 },
            theta_s: if alg.has_system_block() { np } else { 0 },
            grid_s: if alg.has_system_block() && np > 0 { self.grid_s.len() } else { 0 },
        }
    }

    /// Column names of the flat estimate vector.
    pub fn names(&self) -> Vec<String> {
        self.layout().names(self.family.param_names(), self.order)
    }

    /// Checks dimensions, domains and that the initial point is interior.
    pub fn validate(&self) -> Result<()> {
        if self.weight == WeightKind::Custom {
            return Err(Error::Config("recursive runs support identity or C weighting".into()));
        }
        if self.theta_init.len() != self.order.n_params() && self.algorithm != Algorithm::IidEcf {
            return Err(Error::Config(format!(
                "theta_init has {} entries, ARMA({},{}) needs {}",
                self.theta_init.len(),
                self.order.p,
                self.order.q,
                self.order.n_params()
            )));
        }
        if self.domain.family != self.family || self.domain.order != self.order {
            return Err(Error::Config("truncation domain built for a different model".into()));
        }
        if self.algorithm.has_noise_block() {
            self.grid_e.require_identifiable(self.family.n_params())?;
            self.family.validate(&self.eta_init)?;
            if !self.domain.contains_eta(&self.eta_init) {
                return Err(Error::Config(format!("eta_init {:?} is not inside the truncation box", self.eta_init)));
            }
        }
        if self.algorithm.has_system_block() && !self.domain.contains_theta(&self.theta_init) {
            return Err(Error::Config(format!(
                "theta_init {:?} violates the stability margin {}",
                self.theta_init, self.domain.margin_delta
            )));
        }
        if self.algorithm == Algorithm::KnownNoise {
            let eta = self.known_eta.as_ref().ok_or_else(|| Error::Config("known_eta is required".into()))?;
            self.family.validate(eta)?;
            if let Some(r) = &self.r_weight {
                let np = self.order.n_params();
                if r.shape() != (np, np) {
                    return Err(Error::Config(format!("r_weight must be {np}x{np}")));
                }
            }
        }
        Ok(())
    }
}

/// A running estimator: configuration, precomputed constants and state.
#[derive(Debug, Clone)]
pub struct Estimator {
    config: EstimatorConfig,
    template: NoiseModel,
    /// `φ(η*)` on the system grid and the fixed `K_S`, for known noise.
    known: Option<(DVector<Complex64>, SystemWeight)>,
    state: EstimatorState,
}

impl Estimator {
    /// Builds the initial point `x_0` and checks it is interior. `data` is read
    /// only by the optional `G` warm-up.
    pub fn new(config: &EstimatorConfig, data: &[f64]) -> Result<Self> {
        config.validate()?;
        let eta_for_model = match config.algorithm {
            Algorithm::KnownNoise => config.known_eta.clone().unwrap_or_default(),
            _ => config.eta_init.clone(),
        };
        let template = NoiseModel::new(config.family, eta_for_model, config.h_step)?;
        let layout = config.layout();
        let np = config.order.n_params();
        let mut x0 = layout.zeros();

        if config.algorithm.has_noise_block() {
            let weight = WeightMatrix::for_kind(config.weight, &template, &config.grid_e)?;
            x0.eta = DVector::from_column_slice(&config.eta_init);
            x0.r_e = blocks::noise_information(&template, &config.grid_e, &weight);
        }
        if config.algorithm == Algorithm::ThreeStage {
            x0.theta_p = DVector::from_column_slice(&config.theta_init);
            x0.r_p = DMatrix::identity(np, np);
        }
        if config.algorithm.has_system_block() {
            x0.theta_s = DVector::from_column_slice(&config.theta_init);
            if let GInit::Warmup(n) = config.g_init {
                x0.g = warmup_g(config, &data[..n.min(data.len())]);
            }
        }

        let known = if config.algorithm == Algorithm::KnownNoise && np > 0 {
            let phi = ecf::cf_vector(&template, &config.grid_s);
            let weight = match config.weight {
                WeightKind::Identity => SystemWeight::Identity { dim: config.grid_s.len() * np },
                _ => SystemWeight::kron(
                    ecf::c_matrix(&template, &config.grid_s)?,
                    config.r_weight.clone().unwrap_or_else(|| DMatrix::identity(np, np)),
                )?,
            };
            Some((phi, weight))
        } else {
            None
        };

        if !config.domain.contains(&x0) {
            return Err(Error::Config("initial point is not inside the truncation domain".into()));
        }
        Ok(Self { config: config.clone(), template, known, state: EstimatorState::new(x0, config.order) })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn into_state(self) -> EstimatorState {
        self.state
    }

    /// Processes one datum.
    pub fn step(&mut self, y: f64) -> StepEvent {
        let mut correction = self.correction(y);
        if let GInit::Warmup(w) = self.config.g_init {
            // θ̂_S waits until Ĝ has averaged `w` data at θ_init
            if self.state.n < w as u64 {
                correction.theta_s.fill(0.0);
            }
        }
        dfl_step(&mut self.state, &correction, &self.config.domain)
    }

    /// Algorithm 1 step with the noise score `h` supplied directly instead of
    /// being formed from a datum (surrogate and fixed-point checks).
    pub fn step_with_noise_score(&mut self, h: &DVector<Complex64>) -> Result<StepEvent> {
        if self.config.algorithm != Algorithm::IidEcf {
            return Err(Error::Config("score injection is only defined for the i.i.d. algorithm".into()));
        }
        let x = &self.state.x;
        let mut corr = x.layout().zeros();
        match self.noise_block_with(|_| h.clone()) {
            Some((d_eta, d_r)) => {
                corr.eta = d_eta;
                corr.r_e = d_r;
            }
            None => corr.eta.fill(f64::NAN),
        }
        Ok(dfl_step(&mut self.state, &corr, &self.config.domain))
    }

    /// Correction for datum `y` at the current estimate. Advances the filters.
    fn correction(&mut self, y: f64) -> Estimates {
        let mut corr = self.state.x.layout().zeros();
        let order = self.config.order;
        match self.config.algorithm {
            Algorithm::IidEcf => {
                self.apply_noise_block(&mut corr, y);
            }
            Algorithm::KnownNoise => {
                if order.n_params() > 0 {
                    let theta = self.state.x.theta_s.as_slice().to_vec();
                    let inn = arma::innovation_step(order, &theta, &mut self.state.filter_s, y);
                    let (phi, weight) = self.known.as_ref().expect("known noise precomputed");
                    let sys = system_block(&self.config.grid_s, &mut self.state, &inn, phi, weight);
                    corr.theta_s = sys.theta;
                    corr.g = sys.g;
                }
            }
            Algorithm::ThreeStage => {
                let np = order.n_params();
                let theta_p = self.state.x.theta_p.as_slice().to_vec();
                let inn_p = arma::innovation_step(order, &theta_p, &mut self.state.filter_p, y);
                if np > 0 {
                    let grad = DVector::from_column_slice(&inn_p.grad);
                    let outer = &grad * grad.transpose();
                    let pe = blocks::pe_correction(&self.state.x.r_p, &(&grad * inn_p.eps), &outer);
                    self.state.regularizations += u64::from(pe.regularized);
                    corr.theta_p = pe.theta;
                    corr.r_p = pe.r;
                }
                self.apply_noise_block(&mut corr, inn_p.eps);
                if np > 0 {
                    let theta_s = self.state.x.theta_s.as_slice().to_vec();
                    let inn_s = arma::innovation_step(order, &theta_s, &mut self.state.filter_s, y);
                    match self.three_stage_system_weight() {
                        Some((phi, weight)) => {
                            let sys = system_block(&self.config.grid_s, &mut self.state, &inn_s, &phi, &weight);
                            corr.theta_s = sys.theta;
                            corr.g = sys.g;
                        }
                        None => corr.theta_s.fill(f64::NAN),
                    }
                }
            }
        }
        corr
    }

    fn apply_noise_block(&mut self, corr: &mut Estimates, y: f64) {
        let grid = self.config.grid_e.clone();
        match self.noise_block_with(|phi| ecf::score_from_cf(y, &grid, phi)) {
            Some((d_eta, d_r)) => {
                corr.eta = d_eta;
                corr.r_e = d_r;
            }
            None => corr.eta.fill(f64::NAN),
        }
    }

    /// Noise-ECF correction at `η̂` with the score built from `φ(η̂)` by
    /// `score`. `None` when the plug-in weight cannot be formed.
    fn noise_block_with(
        &mut self,
        score: impl FnOnce(&DVector<Complex64>) -> DVector<Complex64>,
    ) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let model = self.template.with_eta(self.state.x.eta.as_slice()).ok()?;
        let grid = &self.config.grid_e;
        let weight = WeightMatrix::for_kind(self.config.weight, &model, grid).ok()?;
        self.state.c_ridge_events += u64::from(weight.ridge() > 0.0);
        let phi = ecf::cf_vector(&model, grid);
        let h = score(&phi);
        let jac = ecf::cf_jacobian(&model, grid);
        let out = blocks::noise_correction(&jac, &weight, &h, &self.state.x.r_e);
        self.state.regularizations += u64::from(out.regularized);
        Some((out.eta, out.r))
    }

    /// `φ(η̂)` on the system grid and `K_S = C(η̂) ⊗ R̂_P`.
    fn three_stage_system_weight(&mut self) -> Option<(DVector<Complex64>, SystemWeight)> {
        let model = self.template.with_eta(self.state.x.eta.as_slice()).ok()?;
        let grid = &self.config.grid_s;
        let np = self.config.order.n_params();
        let phi = ecf::cf_vector(&model, grid);
        let weight = match self.config.weight {
            WeightKind::Identity => SystemWeight::Identity { dim: grid.len() * np },
            _ => {
                let c = ecf::c_matrix(&model, grid).ok()?;
                SystemWeight::kron(c, self.state.x.r_p.clone()).ok()?
            }
        };
        Some((phi, weight))
    }

}

fn system_block(
    grid: &FreqGrid,
    state: &mut EstimatorState,
    inn: &arma::Innovation,
    phi: &DVector<Complex64>,
    weight: &SystemWeight,
) -> blocks::SystemCorrection {
    let exps = blocks::exponentials(grid, inn.eps);
    let (h, h_theta) = blocks::system_scores(grid, &exps, phi, &inn.grad);
    let out = blocks::system_correction(&state.x.g, weight, &h, &h_theta);
    state.regularizations += u64::from(out.regularized);
    out
}

/// The correction sequence `H(n, x, ω)` of `data` with the estimate frozen at
/// `x` (filters still run on the data). Rows follow the flat layout.
pub fn frozen_corrections(config: &EstimatorConfig, x: &Estimates, data: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut est = Estimator::new(config, &[])?;
    if x.layout() != config.layout() {
        return Err(Error::Config("frozen point has the wrong layout".into()));
    }
    est.state.x = x.clone();
    Ok(data.iter().map(|&y| est.correction(y).flatten()).collect())
}

/// Off-line warm-up of `G`: the average of `ĥ_θ` over `data` at the initial `θ`.
pub fn warmup_g(config: &EstimatorConfig, data: &[f64]) -> CMatrix {
    let order = config.order;
    let np = order.n_params();
    let grid = &config.grid_s;
    let mut g = CMatrix::zeros(grid.len() * np, np);
    if data.is_empty() || np == 0 {
        return g;
    }
    let mut filter = arma::FilterState::new(order);
    let phi = DVector::zeros(grid.len());
    for &y in data {
        let inn = arma::innovation_step(order, &config.theta_init, &mut filter, y);
        let exps = blocks::exponentials(grid, inn.eps);
        let (_, h_theta) = blocks::system_scores(grid, &exps, &phi, &inn.grad);
        g += h_theta;
    }
    g / Complex64::new(data.len() as f64, 0.0)
}

/// Whether a run keeps every step or only the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    Full,
    FinalOnly,
}

/// One processed datum.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// 1-based index of the datum.
    pub n: u64,
    /// Flat estimate after the step.
    pub x: Vec<f64>,
    pub reset: bool,
    /// The candidate that left the domain, on reset steps.
    pub escaped: Option<Vec<f64>>,
}

/// Time-indexed estimates and events of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub records: Vec<Record>,
    pub final_state: EstimatorState,
}

impl Trajectory {
    pub fn final_estimates(&self) -> &Estimates {
        self.final_state.estimates()
    }

    pub fn reset_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.reset)
    }
}

/// Runs the configured algorithm over `data`.
pub fn run(config: &EstimatorConfig, data: &[f64], mode: RecordMode) -> Result<Trajectory> {
    let mut est = Estimator::new(config, data)?;
    let mut records = Vec::with_capacity(if mode == RecordMode::Full { data.len() } else { 0 });
    for &y in data {
        let event = est.step(y);
        if mode == RecordMode::Full {
            let escaped = match &event {
                StepEvent::Reset { escaped } => Some(escaped.flatten()),
                StepEvent::Accepted => None,
            };
            records.push(Record {
                n: est.state.n,
                x: est.state.x.flatten(),
                reset: escaped.is_some(),
                escaped,
            });
        }
    }
    Ok(Trajectory { names: config.names(), records, final_state: est.into_state() })
}

#[cfg(test)]
mod tests;
