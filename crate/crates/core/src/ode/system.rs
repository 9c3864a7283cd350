use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::AssociatedOde;
use crate::arma::{self, ArmaOrder, ArmaParams, FilterState};
use crate::ecf::{self, FreqGrid, SystemWeight, WeightKind, WeightMatrix};
use crate::estimators::blocks;
use crate::estimators::{Algorithm, Estimates, Layout};
use crate::linalg::{self, CMatrix};
use crate::noise::NoiseModel;
use crate::{Error, Result};

/// Settings of the Monte Carlo right-hand side.
#[derive(Debug, Clone)]
pub struct SystemOdeConfig {
    /// [`Algorithm::KnownNoise`] or [`Algorithm::ThreeStage`].
    pub algorithm: Algorithm,
    pub noise: NoiseModel,
    pub system: ArmaParams,
    pub grid_e: FreqGrid,
    pub grid_s: FreqGrid,
    pub weight: WeightKind,
    /// Right factor of the fixed `K_S` of the known-noise algorithm; the path
    /// average of `ε_θ ε_θᵀ` at the truth when absent.
    pub r_weight: Option<DMatrix<f64>>,
    /// Post-transient length of the simulated path.
    pub path_len: usize,
    pub seed: u64,
    /// Number of batches for standard errors.
    pub batches: usize,
}

impl SystemOdeConfig {
    pub fn new(algorithm: Algorithm, noise: NoiseModel, system: ArmaParams, grid: FreqGrid) -> Self {
        Self {
            algorithm,
            noise,
            system,
            grid_e: grid.clone(),
            grid_s: grid,
            weight: WeightKind::CAtEta,
            r_weight: None,
            path_len: 100_000,
            seed: 0,
            batches: 20,
        }
    }
}

/// Frozen-parameter path averages at one `θ`.
///
/// Along the cached path the innovation at a frozen `θ` splits as
/// `ε_n = L_n + m_n` with `m_n` a function of the past only, so the
/// conditional expectations `E[exp(iuε_n) | past] = φ(u, η*) exp(iu m_n)` and
/// `E[ε_θ ε_n | past] = ε_θ (m_n + E L)` replace the raw samples.
#[derive(Debug, Clone)]
struct Averages {
    /// `exp(i u_j m)` on the noise grid.
    e_avg: DVector<Complex64>,
    /// `exp(i u_j m) ε_θ`, frequency-major.
    a: CMatrix,
    /// `exp(i u_j m) ε_θ ε_θᵀ`, frequency-major rows.
    b: CMatrix,
    mean_grad: DVector<f64>,
    /// `ε_θ (m + E L)`.
    w: DVector<f64>,
    outer: DMatrix<f64>,
}

impl Averages {
    fn zeros(m_e: usize, m_s: usize, p: usize) -> Self {
        Self {
            e_avg: DVector::zeros(m_e),
            a: CMatrix::zeros(m_s * p, 1),
            b: CMatrix::zeros(m_s * p, p),
            mean_grad: DVector::zeros(p),
            w: DVector::zeros(p),
            outer: DMatrix::zeros(p, p),
        }
    }

    fn scale(&mut self, s: f64) {
        let c = Complex64::new(s, 0.0);
        self.e_avg *= c;
        self.a *= c;
        self.b *= c;
        self.mean_grad *= s;
        self.w *= s;
        self.outer *= s;
    }

    fn pooled(batches: &[Averages]) -> Averages {
        let mut out = batches[0].clone();
        for b in &batches[1..] {
            out.e_avg += &b.e_avg;
            out.a += &b.a;
            out.b += &b.b;
            out.mean_grad += &b.mean_grad;
            out.w += &b.w;
            out.outer += &b.outer;
        }
        out.scale(1.0 / batches.len() as f64);
        out
    }
}

#[derive(Debug)]
struct Frozen {
    batches: Vec<Averages>,
    pooled: Averages,
}

/// Monte Carlo associated ODE of the known-noise and three-stage recursions.
///
/// Every evaluation reuses one simulated path (common random numbers), so
/// the right-hand side is a smooth function of `x` and finite differences
/// are meaningful.
#[derive(Debug)]
pub struct SystemOde {
    cfg: SystemOdeConfig,
    layout: Layout,
    order: ArmaOrder,
    noise_mean: f64,
    phi_e_true: DVector<Complex64>,
    phi_s_true: DVector<Complex64>,
    innovations: Vec<f64>,
    y: Vec<f64>,
    burn: usize,
    fixed_weight: Option<SystemWeight>,
    cache: Mutex<HashMap<Vec<u64>, Arc<Frozen>>>,
}

const CACHE_LIMIT: usize = 256;

impl SystemOde {
    pub fn new(cfg: SystemOdeConfig) -> Result<Self> {
        if !cfg.algorithm.has_system_block() {
            return Err(Error::Config("system ODE needs the known-noise or three-stage algorithm".into()));
        }
        if cfg.batches < 2 || cfg.path_len < cfg.batches {
            return Err(Error::Config("need at least two batches and one step per batch".into()));
        }
        if cfg.weight == WeightKind::Custom {
            return Err(Error::Config("system ODE supports identity or C weighting".into()));
        }
        let order = cfg.system.order();
        let np = order.n_params();
        if np == 0 {
            return Err(Error::Config("system ODE needs at least one ARMA parameter".into()));
        }
        if cfg.algorithm == Algorithm::ThreeStage {
            cfg.grid_e.require_identifiable(cfg.noise.n_params())?;
        }
        let layout = Layout {
            theta_p: if cfg.algorithm == Algorithm::ThreeStage { np } else { 0 },
            eta: if cfg.algorithm == Algorithm::ThreeStage { cfg.noise.n_params() } else { 0 },
            theta_s: np,
            grid_s: cfg.grid_s.len(),
        };
        let burn = 200 + arma::transient_len(order);
        let innovations = cfg.noise.sample(cfg.path_len + burn, cfg.seed).values;
        let y = cfg.system.simulate(&innovations);
        let mut ode = Self {
            layout,
            order,
            noise_mean: cfg.noise.mean(),
            phi_e_true: ecf::cf_vector(&cfg.noise, &cfg.grid_e),
            phi_s_true: ecf::cf_vector(&cfg.noise, &cfg.grid_s),
            innovations,
            y,
            burn,
            fixed_weight: None,
            cache: Mutex::new(HashMap::new()),
            cfg,
        };
        if ode.cfg.algorithm == Algorithm::KnownNoise {
            ode.fixed_weight = Some(match ode.cfg.weight {
                WeightKind::Identity => SystemWeight::Identity { dim: ode.cfg.grid_s.len() * np },
                _ => {
                    let r = match &ode.cfg.r_weight {
                        Some(r) => r.clone(),
                        None => ode.frozen(&ode.cfg.system.theta())?.pooled.outer.clone(),
                    };
                    SystemWeight::kron(ecf::c_matrix(&ode.cfg.noise, &ode.cfg.grid_s)?, r)?
                }
            });
        }
        Ok(ode)
    }

    pub fn config(&self) -> &SystemOdeConfig {
        &self.cfg
    }

    /// Path averages at a frozen `θ`, cached by its exact bit pattern.
    fn frozen(&self, theta: &[f64]) -> Result<Arc<Frozen>> {
        let key: Vec<u64> = theta.iter().map(|v| v.to_bits()).collect();
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        if !(self.order.margin(theta) > 0.0) {
            return Err(Error::Unstable(format!("frozen parameter {theta:?} is not jointly stable")));
        }
        let frozen = Arc::new(self.compute_frozen(theta));
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, frozen.clone());
        Ok(frozen)
    }

    fn compute_frozen(&self, theta: &[f64]) -> Frozen {
        let p = self.order.n_params();
        let u_e = self.cfg.grid_e.as_slice();
        let u_s = self.cfg.grid_s.as_slice();
        let (m_e, m_s) = (u_e.len(), u_s.len());
        let n_batches = self.cfg.batches;
        let batch_len = self.cfg.path_len / n_batches;
        let mut batches = Vec::with_capacity(n_batches);
        let mut acc = Averages::zeros(m_e, m_s, p);
        let mut in_batch = 0;
        let mut filter = FilterState::new(self.order);
        let unit = |u: f64, m: f64| {
            let (s, c) = (u * m).sin_cos();
            Complex64::new(c, s)
        };
        for (k, (&yk, &lk)) in self.y.iter().zip(&self.innovations).enumerate() {
            let inn = arma::innovation_step(self.order, theta, &mut filter, yk);
            if k < self.burn {
                continue;
            }
            let m = inn.eps - lk;
            let g = &inn.grad;
            for (j, &u) in u_e.iter().enumerate() {
                acc.e_avg[j] += unit(u, m);
            }
            for (j, &u) in u_s.iter().enumerate() {
                let e = unit(u, m);
                for a in 0..p {
                    let ega = e * g[a];
                    acc.a[(j * p + a, 0)] += ega;
                    for b in 0..p {
                        acc.b[(j * p + a, b)] += ega * g[b];
                    }
                }
            }
            for a in 0..p {
                acc.mean_grad[a] += g[a];
                acc.w[a] += g[a] * (m + self.noise_mean);
                for b in 0..p {
                    acc.outer[(a, b)] += g[a] * g[b];
                }
            }
            in_batch += 1;
            if in_batch == batch_len {
                acc.scale(1.0 / batch_len as f64);
                batches.push(std::mem::replace(&mut acc, Averages::zeros(m_e, m_s, p)));
                in_batch = 0;
                if batches.len() == n_batches {
                    break;
                }
            }
        }
        let pooled = Averages::pooled(&batches);
        Frozen { batches, pooled }
    }

    /// `F(x)` built from the given path averages at `θ_P` and `θ_S`.
    fn assemble(&self, x: &Estimates, avg_p: Option<&Averages>, avg_s: &Averages) -> Result<Estimates> {
        let mut corr = self.layout.zeros();
        let p = self.order.n_params();
        let (phi_s, weight_s) = match self.cfg.algorithm {
            Algorithm::ThreeStage => {
                let avg_p = avg_p.expect("three-stage needs θ_P averages");
                let pe = blocks::pe_correction(&x.r_p, &avg_p.w, &avg_p.outer);
                corr.theta_p = pe.theta;
                corr.r_p = pe.r;

                let model = self.cfg.noise.with_eta(x.eta.as_slice())?;
                let k_e = WeightMatrix::for_kind(self.cfg.weight, &model, &self.cfg.grid_e)?;
                let phi_e = ecf::cf_vector(&model, &self.cfg.grid_e);
                let h = self.phi_e_true.component_mul(&avg_p.e_avg) - phi_e;
                let jac = ecf::cf_jacobian(&model, &self.cfg.grid_e);
                let noise = blocks::noise_correction(&jac, &k_e, &h, &x.r_e);
                corr.eta = noise.eta;
                corr.r_e = noise.r;

                let phi_s = ecf::cf_vector(&model, &self.cfg.grid_s);
                let weight = match self.cfg.weight {
                    WeightKind::Identity => SystemWeight::Identity { dim: self.cfg.grid_s.len() * p },
                    _ => SystemWeight::kron(ecf::c_matrix(&model, &self.cfg.grid_s)?, x.r_p.clone())?,
                };
                (phi_s, weight)
            }
            _ => (self.phi_s_true.clone(), self.fixed_weight.clone().expect("fixed K_S")),
        };

        let u_s = self.cfg.grid_s.as_slice();
        let mut h = CMatrix::zeros(u_s.len() * p, 1);
        let mut h_theta = CMatrix::zeros(u_s.len() * p, p);
        for (j, &u) in u_s.iter().enumerate() {
            let ps = self.phi_s_true[j];
            for a in 0..p {
                let r = j * p + a;
                h[(r, 0)] = ps * avg_s.a[(r, 0)] - phi_s[j] * avg_s.mean_grad[a];
                for b in 0..p {
                    h_theta[(r, b)] = Complex64::new(0.0, u) * ps * avg_s.b[(r, b)];
                }
            }
        }
        let sys = blocks::system_correction(&x.g, &weight_s, &h, &h_theta);
        corr.theta_s = sys.theta;
        corr.g = sys.g;
        Ok(corr)
    }

    fn frozen_pair(&self, x: &Estimates) -> Result<(Option<Arc<Frozen>>, Arc<Frozen>)> {
        let fp = if self.cfg.algorithm == Algorithm::ThreeStage {
            Some(self.frozen(x.theta_p.as_slice())?)
        } else {
            None
        };
        let fs = self.frozen(x.theta_s.as_slice())?;
        Ok((fp, fs))
    }

    /// `F(x)` together with batch-means standard errors of each component.
    pub fn rhs_with_se(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let est = Estimates::from_flat(self.layout, x);
        let (fp, fs) = self.frozen_pair(&est)?;
        let mean = self.assemble(&est, fp.as_ref().map(|f| &f.pooled), &fs.pooled)?.flatten();
        let nb = fs.batches.len();
        let mut sumsq = vec![0.0; mean.len()];
        for b in 0..nb {
            let fb = self.assemble(&est, fp.as_ref().map(|f| &f.batches[b]), &fs.batches[b])?.flatten();
            for (s, (v, m)) in sumsq.iter_mut().zip(fb.iter().zip(&mean)) {
                *s += (v - m).powi(2);
            }
        }
        let se = sumsq.iter().map(|s| (s / ((nb - 1) * nb) as f64).sqrt()).collect();
        Ok((mean, se))
    }
}

impl AssociatedOde for SystemOde {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn layout(&self) -> Layout {
        self.layout
    }

    fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let est = Estimates::from_flat(self.layout, x);
        let (fp, fs) = self.frozen_pair(&est)?;
        Ok(self.assemble(&est, fp.as_ref().map(|f| &f.pooled), &fs.pooled)?.flatten())
    }

    fn contains(&self, x: &[f64]) -> bool {
        let est = Estimates::from_flat(self.layout, x);
        let stable = |t: &DVector<f64>| t.len() == 0 || self.order.margin(t.as_slice()) > 0.0;
        stable(&est.theta_p)
            && stable(&est.theta_s)
            && (est.eta.len() == 0 || self.cfg.noise.family().is_valid(est.eta.as_slice()))
            && linalg::is_pd_above(&est.r_p, 0.0)
            && linalg::is_pd_above(&est.r_e, 0.0)
            && est.is_finite()
    }

    /// `x*` with the `R_P` and `G` blocks taken from the same path averages
    /// that define `F`, so that `F(x*) = 0` up to rounding.
    fn equilibrium(&self) -> Result<Vec<f64>> {
        let theta = self.cfg.system.theta();
        let frozen = self.frozen(&theta)?;
        let p = self.order.n_params();
        let mut x = self.layout.zeros();
        if self.cfg.algorithm == Algorithm::ThreeStage {
            x.theta_p = DVector::from_column_slice(&theta);
            x.r_p = frozen.pooled.outer.clone();
            x.eta = DVector::from_column_slice(self.cfg.noise.eta());
            let k_e = WeightMatrix::for_kind(self.cfg.weight, &self.cfg.noise, &self.cfg.grid_e)?;
            x.r_e = blocks::noise_information(&self.cfg.noise, &self.cfg.grid_e, &k_e);
        }
        x.theta_s = DVector::from_column_slice(&theta);
        let u_s = self.cfg.grid_s.as_slice();
        x.g = CMatrix::from_fn(u_s.len() * p, p, |r, b| {
            Complex64::new(0.0, u_s[r / p]) * self.phi_s_true[r / p] * frozen.pooled.b[(r, b)]
        });
        Ok(x.flatten())
    }
}
