use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method, RWeight};
use super::estimate::{self, headline};
use super::io::{self, fmt_f64, Metadata};
use crate::ecf::{self, WeightKind};
use crate::estimators::{self, EstimatorConfig, RecordMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// Headline estimates, or `None` when the replication failed.
    pub estimates: Option<Vec<f64>>,
    pub reset_count: u64,
    pub error: Option<String>,
}

/// A closed-form asymptotic covariance for a group of components.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryBlock {
    pub name: String,
    pub components: Vec<String>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResetStats {
    pub total: u64,
    pub mean: f64,
    pub max: u64,
    pub runs_with_resets: usize,
    pub runs_without_resets: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub algorithm: Method,
    pub n: usize,
    pub replications: usize,
    pub completed: usize,
    pub components: Vec<String>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub rmse: Vec<f64>,
    /// `N` times the sample covariance of the final errors.
    pub n_cov: Vec<Vec<f64>>,
    pub theory: Vec<TheoryBlock>,
    /// `(N·cov)_jj / Σ_jj` per component, where a closed form applies.
    pub ratio: Vec<Option<f64>>,
    pub max_ratio_deviation: Option<f64>,
    pub resets: ResetStats,
    pub runs: Vec<Replication>,
    pub config: ExperimentConfig,
    pub metadata: Metadata,
}

impl MonteCarloReport {
    pub fn component(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c == name)
    }
}

fn replicate(cfg: &ExperimentConfig, recursive: Option<&EstimatorConfig>, index: usize) -> (Replication, Vec<String>) {
    let seed = cfg.replication_seed(index);
    let mut rep = Replication { index, seed, estimates: None, reset_count: 0, error: None };
    let result = (|| -> Result<(Vec<String>, Vec<f64>, u64)> {
        let data = cfg.simulate(seed)?;
        match recursive {
            Some(ec) => {
                let traj = estimators::run(ec, &data, RecordMode::FinalOnly)?;
                let h = headline(&traj.names, &traj.final_estimates().flatten());
                Ok((h.names(), h.values(), traj.final_state.reset_count()))
            }
            None => {
                let (est, stages) = estimate::offline_estimate(cfg, &data)?;
                if let Some(s) = stages.iter().find(|s| !s.fit.converged) {
                    return Err(Error::Config(format!("{} fit did not converge: {}", s.stage, s.fit.diagnostics)));
                }
                Ok((est.names(), est.values(), 0))
            }
        }
    })();
    match result {
        Ok((names, values, resets)) => {
            rep.estimates = Some(values);
            rep.reset_count = resets;
            (rep, names)
        }
        Err(e) => {
            rep.error = Some(e.to_string());
            (rep, Vec::new())
        }
    }
}

/// Closed-form covariances of the headline components.
pub fn theory(cfg: &ExperimentConfig, components: &[String]) -> Result<Vec<TheoryBlock>> {
    let noise = cfg.noise_model()?;
    let pick = |prefix: &str| -> Vec<String> { components.iter().filter(|c| c.starts_with(prefix)).cloned().collect() };
    let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let mut out = Vec::new();
    let optimal = cfg.weight == WeightKind::CAtEta;
    let eta = pick("eta.");
    // a batch ECF fit with C fixed at a consistent start shares this covariance;
    // on fitted innovations it does not apply as is
    if !eta.is_empty() && optimal && !(cfg.algorithm == Method::Offline && cfg.is_system()) {
        let s = ecf::sigma_eta(&noise, &cfg.grid_e()?)?;
        out.push(TheoryBlock { name: "sigma_eta".into(), components: eta, sigma: to_rows(&s) });
    }
    let theta_s = pick("theta_s.");
    let kron_optimal = match cfg.algorithm {
        Method::KnownNoise => cfg.r_weight == RWeight::Estimate,
        Method::ThreeStage => true,
        _ => false,
    };
    if !theta_s.is_empty() && optimal && kron_optimal {
        let s = ecf::sigma_theta(&noise, &cfg.grid_s()?, &cfg.r_p_truth()?)?;
        out.push(TheoryBlock { name: "sigma_theta".into(), components: theta_s, sigma: to_rows(&s) });
    }
    let theta_p = pick("theta_p.");
    if !theta_p.is_empty() && noise.mean().abs() < 1e-12 {
        // classical prediction-error covariance Var(L)·R_P⁻¹ for zero-mean noise
        let inv = cfg
            .r_p_truth()?
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("R_P at the truth".into()))?;
        let s = inv * noise.variance();
        out.push(TheoryBlock { name: "prediction_error".into(), components: theta_p, sigma: to_rows(&s) });
    }
    Ok(out)
}

/// Runs `replications` independent seeded runs concurrently and aggregates.
pub fn montecarlo(cfg: &ExperimentConfig) -> Result<MonteCarloReport> {
    if cfg.replications < 2 {
        return Err(Error::Config("montecarlo needs at least 2 replications".into()));
    }
    let recursive = cfg.estimator_config()?;
    let results: Vec<(Replication, Vec<String>)> =
        (0..cfg.replications).into_par_iter().map(|r| replicate(cfg, recursive.as_ref(), r)).collect();
    let components = results
        .iter()
        .find(|(_, names)| !names.is_empty())
        .map(|(_, names)| names.clone())
        .ok_or_else(|| {
            let first = results.first().and_then(|(r, _)| r.error.clone()).unwrap_or_default();
            Error::Config(format!("every replication failed; first error: {first}"))
        })?;
    let runs: Vec<Replication> = results.into_iter().map(|(r, _)| r).collect();
    let truth = estimate::truth_for(cfg, &components).values();
    let done: Vec<&Vec<f64>> = runs.iter().filter_map(|r| r.estimates.as_ref()).collect();
    let k = components.len();
    let m = done.len() as f64;

    let mut mean = vec![0.0; k];
    let mut rmse = vec![0.0; k];
    for est in &done {
        for j in 0..k {
            mean[j] += est[j] / m;
            rmse[j] += (est[j] - truth[j]).powi(2) / m;
        }
    }
    rmse.iter_mut().for_each(|v| *v = v.sqrt());
    let mut cov = DMatrix::zeros(k, k);
    if done.len() >= 2 {
        for est in &done {
            for a in 0..k {
                for b in 0..k {
                    cov[(a, b)] += (est[a] - mean[a]) * (est[b] - mean[b]);
                }
            }
        }
        cov /= m - 1.0;
    }
    let n_cov = cov * cfg.n as f64;

    let theory = theory(cfg, &components)?;
    let mut ratio = vec![None; k];
    for block in &theory {
        for (i, c) in block.components.iter().enumerate() {
            if let Some(j) = components.iter().position(|x| x == c) {
                ratio[j] = Some(n_cov[(j, j)] / block.sigma[i][i]);
            }
        }
    }
    let max_ratio_deviation = ratio.iter().flatten().map(|r| (r - 1.0).abs()).reduce(f64::max);

    let resets: Vec<u64> = runs.iter().filter(|r| r.estimates.is_some()).map(|r| r.reset_count).collect();
    let total: u64 = resets.iter().sum();
    let with = resets.iter().filter(|&&c| c > 0).count();
    Ok(MonteCarloReport {
        algorithm: cfg.algorithm,
        n: cfg.n,
        replications: cfg.replications,
        completed: done.len(),
        truth,
        mean,
        rmse,
        n_cov: n_cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        theory,
        ratio,
        max_ratio_deviation,
        resets: ResetStats {
            total,
            mean: if resets.is_empty() { 0.0 } else { total as f64 / resets.len() as f64 },
            max: resets.iter().copied().max().unwrap_or(0),
            runs_with_resets: with,
            runs_without_resets: resets.len() - with,
        },
        components,
        runs,
        config: cfg.clone(),
        metadata: Metadata::new("montecarlo"),
    })
}

/// `montecarlo`: writes `montecarlo.json`, `replications.csv` and
/// `components.csv`.
pub fn cmd_montecarlo(cfg: &ExperimentConfig, out: &Path) -> Result<MonteCarloReport> {
    std::fs::create_dir_all(out)?;
    let report = montecarlo(cfg)?;
    io::write_json(&out.join("montecarlo.json"), &report)?;

    let mut header = vec!["replication".to_string(), "seed".into()];
    header.extend(report.components.iter().cloned());
    header.extend(["reset_count".to_string(), "error".into()]);
    let k = report.components.len();
    let rows = report.runs.iter().map(|r| {
        let mut row = vec![r.index.to_string(), r.seed.to_string()];
        match &r.estimates {
            Some(e) => row.extend(e.iter().map(|v| fmt_f64(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), k)),
        }
        row.push(r.reset_count.to_string());
        row.push(r.error.clone().unwrap_or_default());
        row
    });
    io::write_table(&out.join("replications.csv"), &header, rows)?;

    let header: Vec<String> =
        ["component", "truth", "mean", "rmse", "n_var", "sigma", "ratio"].iter().map(|s| s.to_string()).collect();
    let sigma_of = |c: &str| -> Option<f64> {
        report
            .theory
            .iter()
            .find_map(|b| b.components.iter().position(|x| x == c).map(|i| b.sigma[i][i]))
    };
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let rows = report.components.iter().enumerate().map(|(j, c)| {
        vec![
            c.clone(),
            fmt_f64(report.truth[j]),
            fmt_f64(report.mean[j]),
            fmt_f64(report.rmse[j]),
            fmt_f64(report.n_cov[j][j]),
            opt(sigma_of(c)),
            opt(report.ratio[j]),
        ]
    });
    io::write_table(&out.join("components.csv"), &header, rows)?;
    Ok(report)
}

/// Convenience for rate checks: the same experiment at a different length.
pub fn with_length(cfg: &ExperimentConfig, n: usize) -> ExperimentConfig {
    ExperimentConfig { n, ..cfg.clone() }
}
