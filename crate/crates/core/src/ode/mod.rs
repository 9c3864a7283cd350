//! Associated-ODE analysis: right-hand sides, integration, Jacobians at the
//! equilibrium, the long-run covariance `P*` and the Lyapunov covariance.

mod iid;
mod lyapunov;
mod pstar;
mod system;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

pub use iid::IidOde;
pub use lyapunov::{eigenvalues, lyapunov_solve, LyapunovResult};
pub use pstar::{default_lag, long_run_covariance};
pub use system::{SystemOde, SystemOdeConfig};

use crate::estimators::{self, EstimatorConfig, Estimates, Layout};
use crate::{Error, Result};

/// The time-homogeneous ODE `ẏ = F(y)` of a recursive estimator.
pub trait AssociatedOde {
    fn dim(&self) -> usize;
    fn layout(&self) -> Layout;
    fn rhs(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Membership in the enlarged domain on which `F` is defined.
    fn contains(&self, x: &[f64]) -> bool;
    /// The stacked truth `x*`.
    fn equilibrium(&self) -> Result<Vec<f64>>;
}

/// Where an integration left the domain.
#[derive(Debug, Clone, Serialize)]
pub struct Escape {
    pub t: f64,
    pub x: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub escape: Option<Escape>,
}

impl OdePath {
    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Classical fixed-step RK4 on `[0, t_end]`. Leaving the domain (or a failed
/// right-hand side) stops the integration and is reported in the path.
pub fn integrate<O: AssociatedOde + ?Sized>(ode: &O, x_init: &[f64], t_end: f64, dt: f64) -> Result<OdePath> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and t_end ≥ 0, got dt={dt}, t_end={t_end}")));
    }
    if x_init.len() != ode.dim() {
        return Err(Error::Config(format!("initial point has {} entries, ODE has {}", x_init.len(), ode.dim())));
    }
    let steps = (t_end / dt).round() as usize;
    let mut times = vec![0.0];
    let mut states = vec![x_init.to_vec()];
    let mut x = x_init.to_vec();
    let escape_at = |t: f64, x: &[f64], reason: String| Escape { t, x: x.to_vec(), reason };
    if !ode.contains(&x) {
        let e = escape_at(0.0, &x, "initial point outside the domain".into());
        return Ok(OdePath { times, states, escape: Some(e) });
    }
    let shifted = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for s in 0..steps {
        let t = s as f64 * dt;
        let stage = |y: &[f64]| -> std::result::Result<Vec<f64>, String> {
            if !ode.contains(y) {
                return Err("stage point outside the domain".into());
            }
            ode.rhs(y).map_err(|e| e.to_string())
        };
        let result = (|| {
            let k1 = stage(&x)?;
            let k2 = stage(&shifted(&x, &k1, dt / 2.0))?;
            let k3 = stage(&shifted(&x, &k2, dt / 2.0))?;
            let k4 = stage(&shifted(&x, &k3, dt))?;
            Ok::<_, String>(
                (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect::<Vec<_>>(),
            )
        })();
        match result {
            Ok(next) if ode.contains(&next) => {
                x = next;
                times.push(t + dt);
                states.push(x.clone());
            }
            Ok(next) => {
                let e = escape_at(t + dt, &next, "step left the domain".into());
                return Ok(OdePath { times, states, escape: Some(e) });
            }
            Err(reason) => {
                return Ok(OdePath { times, states, escape: Some(escape_at(t, &x, reason)) });
            }
        }
    }
    Ok(OdePath { times, states, escape: None })
}

/// Finite-difference Jacobian and its spectrum.
#[derive(Debug, Clone)]
pub struct JacobianAnalysis {
    pub matrix: DMatrix<f64>,
    /// Sorted by real part.
    pub eigenvalues: Vec<Complex64>,
}

/// Relative step of the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference Jacobian of `F` at `x` with steps `1e-5·max(1, |x_k|)`.
pub fn jacobian_at<O: AssociatedOde + ?Sized>(ode: &O, x: &[f64]) -> Result<JacobianAnalysis> {
    let n = ode.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    for k in 0..n {
        let h = FD_STEP * x[k].abs().max(1.0);
        probe[k] = x[k] + h;
        let fp = ode.rhs(&probe)?;
        probe[k] = x[k] - h;
        let fm = ode.rhs(&probe)?;
        probe[k] = x[k];
        for i in 0..n {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let eigenvalues = eigenvalues(&jac)?;
    Ok(JacobianAnalysis { matrix: jac, eigenvalues })
}

/// How far a Jacobian is from block-lower-triangular with `−I` diagonal blocks.
#[derive(Debug, Clone, Serialize)]
pub struct BlockStructure {
    pub blocks: Vec<String>,
    /// Largest entry above the block diagonal.
    pub max_upper: f64,
    /// Largest entry of `J_bb + I` over the diagonal blocks.
    pub max_diag_deviation: f64,
}

const BLOCK_NAMES: [&str; 6] = ["theta_p", "r_p", "eta", "r_e", "theta_s", "g"];

pub fn block_structure(jac: &DMatrix<f64>, layout: Layout) -> BlockStructure {
    let ranges: Vec<(usize, std::ops::Range<usize>)> =
        layout.offsets().into_iter().enumerate().filter(|(_, r)| !r.is_empty()).collect();
    let mut max_upper = 0.0f64;
    let mut max_diag = 0.0f64;
    for (bi, (_, rows)) in ranges.iter().enumerate() {
        for (bj, (_, cols)) in ranges.iter().enumerate() {
            for i in rows.clone() {
                for j in cols.clone() {
                    let v = jac[(i, j)];
                    if bj > bi {
                        max_upper = max_upper.max(v.abs());
                    } else if bi == bj {
                        let target = if i == j { -1.0 } else { 0.0 };
                        max_diag = max_diag.max((v - target).abs());
                    }
                }
            }
        }
    }
    BlockStructure {
        blocks: ranges.iter().map(|(k, _)| BLOCK_NAMES[*k].to_string()).collect(),
        max_upper,
        max_diag_deviation: max_diag,
    }
}

/// `P*` of the recursion configured by `config`, frozen at `x_star`, from the
/// correction sequence along `data` (the first `skip` terms are discarded).
/// Uses Bartlett weights with lag `lag`, or the default lag rule.
pub fn p_star_estimate(
    config: &EstimatorConfig,
    x_star: &Estimates,
    data: &[f64],
    skip: usize,
    lag: Option<usize>,
) -> Result<DMatrix<f64>> {
    let seq = estimators::frozen_corrections(config, x_star, data)?;
    let seq = &seq[skip.min(seq.len())..];
    Ok(long_run_covariance(seq, lag.unwrap_or_else(|| default_lag(seq.len()))))
}
