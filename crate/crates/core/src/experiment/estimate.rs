use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::io::{self, fmt_f64, Metadata, NamedValues};
use crate::arma::{self, FilterState};
use crate::estimators::{self, RecordMode, Trajectory};
use crate::offline::{self, OfflineFit};
use crate::{Error, Result};

const HEADLINE_BLOCKS: [&str; 3] = ["theta_p.", "eta.", "theta_s."];

/// The parameter estimates of a flat vector, dropping the auxiliary blocks.
pub fn headline(names: &[String], values: &[f64]) -> NamedValues {
    NamedValues(
        names
            .iter()
            .zip(values)
            .filter(|(n, _)| HEADLINE_BLOCKS.iter().any(|p| n.starts_with(p)))
            .map(|(n, v)| (n.clone(), *v))
            .collect(),
    )
}

/// True values under the same names as [`headline`].
pub fn truth_for(cfg: &ExperimentConfig, names: &[String]) -> NamedValues {
    let theta = cfg.true_theta();
    let order = cfg.order();
    let theta_names = order.param_names();
    let eta_names = cfg.family.param_names();
    let lookup = |name: &str| -> Option<f64> {
        let (block, param) = name.split_once('.')?;
        match block {
            "theta_p" | "theta_s" => theta_names.iter().position(|p| p == param).map(|i| theta[i]),
            "eta" => eta_names.iter().position(|p| *p == param).map(|i| cfg.eta[i]),
            _ => None,
        }
    };
    NamedValues(names.iter().filter_map(|n| lookup(n).map(|v| (n.clone(), v))).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ResetEvent {
    pub n: u64,
    /// The rejected candidate, in flat layout.
    pub escaped: Option<NamedValues>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OfflineStage {
    pub stage: &'static str,
    pub fit: OfflineFit,
}

/// JSON summary of a single `estimate` run, recursive or batch.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub kind: &'static str,
    pub algorithm: Method,
    pub seed: u64,
    pub data_source: String,
    pub n: usize,
    pub estimates: NamedValues,
    pub truth: NamedValues,
    /// Full flat state of a recursive run.
    pub final_state: Option<NamedValues>,
    pub reset_count: u64,
    pub regularizations: u64,
    pub c_ridge_events: u64,
    pub reset_events: Vec<ResetEvent>,
    pub offline: Vec<OfflineStage>,
    pub config: ExperimentConfig,
    pub metadata: Metadata,
}

/// Batch estimates: ECF for i.i.d. data; prediction error for `θ`, then ECF on
/// the fitted innovations, for system data.
pub fn offline_estimate(cfg: &ExperimentConfig, data: &[f64]) -> Result<(NamedValues, Vec<OfflineStage>)> {
    let grid = cfg.grid_e()?;
    let eta_names: Vec<String> = cfg.family.param_names().iter().map(|p| format!("eta.{p}")).collect();
    if !cfg.is_system() {
        let fit = offline::offline_ecf_iid(data, cfg.family, cfg.h, &grid, cfg.weight)?;
        let est = NamedValues::new(&eta_names, &fit.estimate);
        return Ok((est, vec![OfflineStage { stage: "ecf", fit }]));
    }
    let order = cfg.order();
    let pe = offline::offline_pe(data, order)?;
    let mut filter = FilterState::new(order);
    let eps: Vec<f64> = data.iter().map(|&y| arma::innovation_step(order, &pe.estimate, &mut filter, y).eps).collect();
    let skip = arma::transient_len(order).min(eps.len());
    let ecf_fit = offline::offline_ecf_iid(&eps[skip..], cfg.family, cfg.h, &grid, cfg.weight)?;
    let theta_names: Vec<String> = order.param_names().iter().map(|p| format!("theta_p.{p}")).collect();
    let mut est = NamedValues::new(&theta_names, &pe.estimate);
    est.0.extend(NamedValues::new(&eta_names, &ecf_fit.estimate).0);
    Ok((est, vec![OfflineStage { stage: "pe", fit: pe }, OfflineStage { stage: "ecf", fit: ecf_fit }]))
}

/// Runs the configured method on `data` and summarizes it. The trajectory of a
/// recursive run is returned alongside.
pub fn estimate(cfg: &ExperimentConfig, data: &[f64], data_source: &str) -> Result<(RunSummary, Option<Trajectory>)> {
    let mut summary = RunSummary {
        kind: "recursive",
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        data_source: data_source.to_string(),
        n: data.len(),
        estimates: NamedValues::default(),
        truth: NamedValues::default(),
        final_state: None,
        reset_count: 0,
        regularizations: 0,
        c_ridge_events: 0,
        reset_events: Vec::new(),
        offline: Vec::new(),
        config: cfg.clone(),
        metadata: Metadata::new("estimate"),
    };
    match cfg.estimator_config()? {
        None => {
            let (est, stages) = offline_estimate(cfg, data)?;
            summary.kind = "offline";
            summary.truth = truth_for(cfg, &est.names());
            summary.estimates = est;
            summary.offline = stages;
            Ok((summary, None))
        }
        Some(ec) => {
            let traj = estimators::run(&ec, data, RecordMode::Full)?;
            let flat = traj.final_estimates().flatten();
            summary.estimates = headline(&traj.names, &flat);
            summary.truth = truth_for(cfg, &summary.estimates.names());
            summary.final_state = Some(NamedValues::new(&traj.names, &flat));
            let st = &traj.final_state;
            summary.reset_count = st.reset_count();
            summary.regularizations = st.regularizations();
            summary.c_ridge_events = st.c_ridge_events();
            summary.reset_events = traj
                .reset_records()
                .map(|r| ResetEvent { n: r.n, escaped: r.escaped.as_ref().map(|e| NamedValues::new(&traj.names, e)) })
                .collect();
            Ok((summary, Some(traj)))
        }
    }
}

/// Writes `trajectory.csv`: step, flat estimate, reset flag.
pub fn write_trajectory(path: &Path, traj: &Trajectory, every: usize) -> Result<()> {
    let mut header = vec!["n".to_string()];
    header.extend(traj.names.iter().cloned());
    header.push("reset".into());
    let last = traj.records.len().saturating_sub(1);
    let rows = traj.records.iter().enumerate().filter(|(i, r)| r.reset || *i == last || (i + 1) % every == 0).map(|(_, r)| {
        let mut row = vec![r.n.to_string()];
        row.extend(r.x.iter().map(|v| fmt_f64(*v)));
        row.push(u8::from(r.reset).to_string());
        row
    });
    io::write_table(path, &header, rows)
}

/// `estimate`: reads `--data` (or simulates from the config seed), writes
/// `trajectory.csv` for recursive runs and `summary.json`.
pub fn cmd_estimate(cfg: &ExperimentConfig, data_path: Option<&Path>, out: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    let (data, source) = match data_path {
        Some(p) => (io::read_series_csv(p)?, p.display().to_string()),
        None => (cfg.simulate(cfg.seed)?, "simulated".to_string()),
    };
    if data.is_empty() && cfg.algorithm == Method::Offline {
        return Err(Error::Config("offline fits need data".into()));
    }
    let (summary, traj) = estimate(cfg, &data, &source)?;
    if let Some(traj) = &traj {
        write_trajectory(&out.join("trajectory.csv"), traj, cfg.record_every)?;
    }
    io::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
