use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::config::{ExperimentConfig, Method, RWeight};
use super::io::{self, fmt_f64, Metadata};
use crate::arma;
use crate::ecf::{self, WeightKind};
use crate::estimators::{Algorithm, Estimates};
use crate::ode::{
    self, AssociatedOde, BlockStructure, Escape, IidOde, JacobianAnalysis, OdePath, SystemOde,
};
use crate::{Error, Result};

/// Tolerance at which the Jacobian structure is read.
pub const STRUCTURE_TOL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct RhsCheck {
    pub norm: f64,
    pub max_abs: f64,
    /// Largest batch-means standard error (Monte Carlo right-hand sides only).
    pub max_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseCheck {
    pub seeds: [u64; 2],
    pub path_lens: Vec<usize>,
    /// Largest entrywise difference of the two seeds' Jacobians, per length.
    pub spread: Vec<f64>,
    pub noise_dominated: bool,
    pub suggested_path_len: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub pstar_n: usize,
    pub lag: usize,
    pub residual: f64,
    pub components: Vec<String>,
    /// Diagonal of `Σ` for the parameter components.
    pub sigma: Vec<f64>,
    /// Closed-form counterpart, where one applies.
    pub reference: Vec<Option<f64>>,
    pub relative_error: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathReport {
    pub t_end: f64,
    pub dt: f64,
    pub offset: f64,
    pub steps: usize,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// Largest distance from the starting point along the path.
    pub max_excursion: f64,
    pub escape: Option<Escape>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeCheckReport {
    pub algorithm: Method,
    pub dim: usize,
    pub names: Vec<String>,
    pub path_len: Option<usize>,
    pub rhs_at_truth: RhsCheck,
    /// `[re, im]`, sorted by real part.
    pub eigenvalues: Vec<[f64; 2]>,
    /// `max |λ + 1|` over the spectrum.
    pub max_eigenvalue_deviation: f64,
    /// Largest real part of the spectrum; `< −1/2` is the rate condition.
    pub max_real_part: f64,
    pub block_structure: BlockStructure,
    pub noise_check: Option<NoiseCheck>,
    pub lyapunov: Option<LyapunovReport>,
    pub lyapunov_error: Option<String>,
    pub path: PathReport,
    pub config: ExperimentConfig,
    pub metadata: Metadata,
}

pub struct OdeCheckOutput {
    pub report: OdeCheckReport,
    pub path: OdePath,
    pub jacobian: JacobianAnalysis,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn is_parameter(name: &str) -> bool {
    ["theta_p.", "eta.", "theta_s."].iter().any(|p| name.starts_with(p))
}

/// `x*` with each parameter component moved by `offset·max(|v|, 0.1)`.
fn offset_start(names: &[String], x_star: &[f64], offset: f64) -> Vec<f64> {
    names
        .iter()
        .zip(x_star)
        .map(|(n, v)| if is_parameter(n) { v + offset * v.abs().max(0.1) } else { *v })
        .collect()
}

/// Runs the ODE diagnostics at the configured truth.
pub fn ode_check(cfg: &ExperimentConfig) -> Result<OdeCheckOutput> {
    let algorithm = cfg
        .algorithm
        .recursive()
        .ok_or_else(|| Error::Config("ode-check needs a recursive algorithm".into()))?;
    let ec = cfg.estimator_config()?.expect("recursive");
    let names = ec.names();
    match algorithm {
        Algorithm::IidEcf => {
            let ode = IidOde::new(cfg.noise_model()?, cfg.grid_e()?, cfg.weight)?;
            finish(cfg, &ode, names, None, None, None)
        }
        _ => {
            let (ode, noise_check) = settled_system_ode(cfg)?;
            let len = ode.config().path_len;
            let (_, se) = ode.rhs_with_se(&ode.equilibrium()?)?;
            let max_se = se.iter().fold(0.0, |m: f64, v| m.max(*v));
            finish(cfg, &ode, names, Some(len), noise_check, Some(max_se))
        }
    }
}

/// Builds the Monte Carlo ODE, doubling the path until two seeds agree on the
/// Jacobian to [`STRUCTURE_TOL`] or the configured ceiling is reached.
fn settled_system_ode(cfg: &ExperimentConfig) -> Result<(SystemOde, Option<NoiseCheck>)> {
    let seeds = [cfg.seed, cfg.seed.wrapping_add(1)];
    let mut len = cfg.ode_path_len;
    let mut check = NoiseCheck { seeds, path_lens: Vec::new(), spread: Vec::new(), noise_dominated: false, suggested_path_len: None };
    loop {
        let a = SystemOde::new(cfg.system_ode_config(len, seeds[0])?)?;
        let b = SystemOde::new(cfg.system_ode_config(len, seeds[1])?)?;
        let ja = ode::jacobian_at(&a, &a.equilibrium()?)?.matrix;
        let jb = ode::jacobian_at(&b, &b.equilibrium()?)?.matrix;
        let spread = (&ja - &jb).amax();
        check.path_lens.push(len);
        check.spread.push(spread);
        if spread < STRUCTURE_TOL {
            return Ok((a, Some(check)));
        }
        // the spread shrinks like 1/√len
        let needed = (len as f64 * (spread / STRUCTURE_TOL).powi(2)).ceil() as usize;
        if len * 2 > cfg.ode_max_path_len {
            check.noise_dominated = true;
            check.suggested_path_len = Some(needed.max(len * 2));
            return Ok((a, Some(check)));
        }
        len *= 2;
    }
}

fn finish<O: AssociatedOde>(
    cfg: &ExperimentConfig,
    ode: &O,
    names: Vec<String>,
    path_len: Option<usize>,
    noise_check: Option<NoiseCheck>,
    max_se: Option<f64>,
) -> Result<OdeCheckOutput> {
    let x_star = ode.equilibrium()?;
    let f = ode.rhs(&x_star)?;
    let rhs_at_truth = RhsCheck {
        norm: f.iter().map(|v| v * v).sum::<f64>().sqrt(),
        max_abs: f.iter().fold(0.0, |m, v| m.max(v.abs())),
        max_se,
    };
    let jac = ode::jacobian_at(ode, &x_star)?;
    let block_structure = ode::block_structure(&jac.matrix, ode.layout());
    let max_eigenvalue_deviation = jac.eigenvalues.iter().map(|z| (z + 1.0).norm()).fold(0.0, f64::max);
    let max_real_part = jac.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);

    let (lyapunov, lyapunov_error) = if cfg.pstar_n == 0 {
        (None, Some("skipped: pstar_n = 0".to_string()))
    } else {
        match lyapunov_check(cfg, &names, &x_star, &jac.matrix) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };

    let start = offset_start(&names, &x_star, cfg.ode_offset);
    let path = ode::integrate(ode, &start, cfg.ode_t_end, cfg.ode_dt)?;
    let path_report = PathReport {
        t_end: cfg.ode_t_end,
        dt: cfg.ode_dt,
        offset: cfg.ode_offset,
        steps: path.states.len() - 1,
        initial_distance: dist(&start, &x_star),
        final_distance: dist(path.last(), &x_star),
        max_excursion: path.states.iter().map(|s| dist(s, &start)).fold(0.0, f64::max),
        escape: path.escape.clone(),
    };

    let report = OdeCheckReport {
        algorithm: cfg.algorithm,
        dim: ode.dim(),
        names,
        path_len,
        rhs_at_truth,
        eigenvalues: jac.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
        max_eigenvalue_deviation,
        max_real_part,
        block_structure,
        noise_check,
        lyapunov,
        lyapunov_error,
        path: path_report,
        config: cfg.clone(),
        metadata: Metadata::new("ode-check"),
    };
    Ok(OdeCheckOutput { report, path, jacobian: jac })
}

/// `Σ` from the Lyapunov equation with `A*` the Jacobian and `P*` the
/// long-run covariance of the corrections frozen at `x*`.
fn lyapunov_check(cfg: &ExperimentConfig, names: &[String], x_star: &[f64], a_star: &DMatrix<f64>) -> Result<LyapunovReport> {
    let ec = cfg.estimator_config()?.expect("recursive");
    let skip = 200 + arma::transient_len(cfg.order());
    let mut long = cfg.clone();
    long.n = cfg.pstar_n + skip;
    let data = long.simulate(cfg.seed ^ 0x0de0_0000_0000_0002)?;
    let x = Estimates::from_flat(ec.layout(), x_star);
    let lag = ode::default_lag(cfg.pstar_n);
    let p_star = ode::p_star_estimate(&ec, &x, &data, skip, Some(lag))?;
    let res = ode::lyapunov_solve(a_star, &p_star)?;

    let noise = cfg.noise_model()?;
    let optimal = cfg.weight == WeightKind::CAtEta;
    let sigma_eta = if optimal && ec.algorithm.has_noise_block() { Some(ecf::sigma_eta(&noise, &cfg.grid_e()?)?) } else { None };
    let kron_optimal = optimal
        && match ec.algorithm {
            Algorithm::KnownNoise => cfg.r_weight == RWeight::Estimate,
            Algorithm::ThreeStage => true,
            Algorithm::IidEcf => false,
        };
    let sigma_theta = if kron_optimal { Some(ecf::sigma_theta(&noise, &cfg.grid_s()?, &cfg.r_p_truth()?)?) } else { None };

    let mut components = Vec::new();
    let mut sigma = Vec::new();
    let mut reference = Vec::new();
    let (mut eta_i, mut theta_i) = (0, 0);
    for (k, n) in names.iter().enumerate() {
        if !is_parameter(n) {
            continue;
        }
        components.push(n.clone());
        sigma.push(res.sigma_xx[(k, k)]);
        let r = if n.starts_with("eta.") {
            eta_i += 1;
            sigma_eta.as_ref().map(|s| s[(eta_i - 1, eta_i - 1)])
        } else if n.starts_with("theta_s.") {
            theta_i += 1;
            sigma_theta.as_ref().map(|s| s[(theta_i - 1, theta_i - 1)])
        } else {
            None
        };
        reference.push(r);
    }
    let relative_error = sigma.iter().zip(&reference).map(|(s, r)| r.map(|r| (s - r).abs() / r)).collect();
    Ok(LyapunovReport { pstar_n: cfg.pstar_n, lag, residual: res.residual, components, sigma, reference, relative_error })
}

/// `ode-check`: writes `ode_check.json`, `ode_path.csv` and `ode_spectrum.csv`.
pub fn cmd_ode_check(cfg: &ExperimentConfig, out: &Path) -> Result<OdeCheckReport> {
    std::fs::create_dir_all(out)?;
    let output = ode_check(cfg)?;
    io::write_json(&out.join("ode_check.json"), &output.report)?;

    let mut header = vec!["t".to_string()];
    header.extend(output.report.names.iter().cloned());
    let rows = output.path.times.iter().zip(&output.path.states).map(|(t, s)| {
        let mut row = vec![fmt_f64(*t)];
        row.extend(s.iter().map(|v| fmt_f64(*v)));
        row
    });
    io::write_table(&out.join("ode_path.csv"), &header, rows)?;

    let header: Vec<String> = ["index", "re", "im"].iter().map(|s| s.to_string()).collect();
    let ev: &[Complex64] = &output.jacobian.eigenvalues;
    let rows = ev.iter().enumerate().map(|(i, z)| vec![i.to_string(), fmt_f64(z.re), fmt_f64(z.im)]);
    io::write_table(&out.join("ode_spectrum.csv"), &header, rows)?;
    Ok(output.report)
}
