use super::*;
use crate::noise::NoiseModel;

fn gaussian_grid() -> FreqGrid {
    FreqGrid::equispaced(10, 2.0).unwrap()
}

fn iid_config() -> EstimatorConfig {
    EstimatorConfig::iid(Family::Gaussian, 1.0, vec![0.0, 1.2], gaussian_grid()).unwrap()
}

fn gaussian_data(n: usize, seed: u64) -> Vec<f64> {
    NoiseModel::gaussian(0.3, 1.0).unwrap().sample(n, seed).values
}

#[test]
fn empty_data_gives_empty_trajectory() {
    let cfg = iid_config();
    let traj = run(&cfg, &[], RecordMode::Full).unwrap();
    assert!(traj.records.is_empty());
    assert_eq!(traj.final_state.n(), 0);
    assert_eq!(traj.final_estimates(), traj.final_state.initial());
}

#[test]
fn one_record_per_datum_and_deterministic() {
    let cfg = iid_config();
    let data = gaussian_data(500, 3);
    let a = run(&cfg, &data, RecordMode::Full).unwrap();
    let b = run(&cfg, &data, RecordMode::Full).unwrap();
    assert_eq!(a.records.len(), data.len());
    assert_eq!(a.records, b.records);
    assert_eq!(a.names.len(), a.records[0].x.len());
    let last = a.records.last().unwrap();
    assert_eq!(last.x, a.final_estimates().flatten());
}

#[test]
fn final_only_mode_matches_full_run() {
    let cfg = iid_config();
    let data = gaussian_data(300, 4);
    let full = run(&cfg, &data, RecordMode::Full).unwrap();
    let fin = run(&cfg, &data, RecordMode::FinalOnly).unwrap();
    assert!(fin.records.is_empty());
    assert_eq!(full.final_estimates(), fin.final_estimates());
}

#[test]
fn tiny_domain_resets_every_step() {
    let mut cfg = iid_config();
    cfg.domain =
        TruncationDomain::new(Family::Gaussian, vec![-1e-9, 1.2 - 1e-9], vec![1e-9, 1.2 + 1e-9], cfg.order, 0.05)
            .unwrap();
    let data = gaussian_data(200, 5);
    let traj = run(&cfg, &data, RecordMode::Full).unwrap();
    assert_eq!(traj.final_state.reset_count(), 200);
    let x0 = traj.final_state.initial().flatten();
    for r in &traj.records {
        assert!(r.reset);
        assert_eq!(r.x, x0);
        assert!(r.escaped.is_some());
    }
}

#[test]
fn non_interior_initial_point_is_rejected() {
    let mut cfg = iid_config();
    cfg.eta_init = vec![100.0, 1.0];
    assert!(matches!(run(&cfg, &[0.1], RecordMode::Full), Err(Error::Config(_))));
    let mut cfg = EstimatorConfig::known_noise(
        &NoiseModel::gaussian(0.0, 1.0).unwrap(),
        ArmaOrder::new(1, 0),
        vec![-0.99],
        gaussian_grid(),
    )
    .unwrap();
    assert!(Estimator::new(&cfg, &[]).is_err());
    cfg.theta_init = vec![-0.5];
    assert!(Estimator::new(&cfg, &[]).is_ok());
}

#[test]
fn estimates_stay_in_domain_with_pd_r_blocks() {
    let cfg = iid_config();
    let data = gaussian_data(2000, 6);
    let traj = run(&cfg, &data, RecordMode::Full).unwrap();
    let layout = cfg.layout();
    for r in &traj.records {
        let x = Estimates::from_flat(layout, &r.x);
        assert!(cfg.domain.contains(&x));
        let ev = crate::linalg::sym_eigenvalues(&x.r_e);
        assert!(ev[0] > PD_FLOOR);
    }
}

#[test]
fn zero_expected_score_is_a_fixed_point() {
    let mut cfg = iid_config();
    cfg.eta_init = vec![0.3, 1.0];
    let truth = NoiseModel::gaussian(0.3, 1.0).unwrap();
    let mut est = Estimator::new(&cfg, &[]).unwrap();
    let x0 = est.state().estimates().clone();
    for _ in 0..50 {
        let eta_hat = truth.with_eta(est.state().estimates().eta.as_slice()).unwrap();
        // g(η̂) = φ(η*) − φ(η̂)
        let g = ecf::cf_vector(&truth, &cfg.grid_e) - ecf::cf_vector(&eta_hat, &cfg.grid_e);
        est.step_with_noise_score(&g).unwrap();
    }
    assert_eq!(est.state().estimates().eta, x0.eta);
    assert!((&est.state().estimates().r_e - &x0.r_e).norm() < 1e-12);
}

#[test]
fn expected_score_drives_toward_truth() {
    let mut cfg = iid_config();
    cfg.eta_init = vec![0.1, 1.3];
    let truth = NoiseModel::gaussian(0.3, 1.0).unwrap();
    let mut est = Estimator::new(&cfg, &[]).unwrap();
    for _ in 0..2000 {
        let eta_hat = truth.with_eta(est.state().estimates().eta.as_slice()).unwrap();
        let g = ecf::cf_vector(&truth, &cfg.grid_e) - ecf::cf_vector(&eta_hat, &cfg.grid_e);
        est.step_with_noise_score(&g).unwrap();
    }
    let eta = &est.state().estimates().eta;
    assert!((eta[0] - 0.3).abs() < 1e-3 && (eta[1] - 1.0).abs() < 1e-3, "{eta}");
}

#[test]
fn three_stage_without_system_parameters_is_the_iid_recursion() {
    let iid = iid_config();
    let mut three = EstimatorConfig::three_stage(
        Family::Gaussian,
        1.0,
        iid.eta_init.clone(),
        ArmaOrder::new(0, 0),
        vec![],
        gaussian_grid(),
        gaussian_grid(),
    )
    .unwrap();
    three.domain = iid.domain.clone();
    let data = gaussian_data(1000, 8);
    let a = run(&iid, &data, RecordMode::Full).unwrap();
    let b = run(&three, &data, RecordMode::Full).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn enlarging_the_domain_never_adds_resets() {
    let data = gaussian_data(3000, 9);
    let mut prev = u64::MAX;
    for half_width in [0.25, 0.5, 1.0, 4.0] {
        let mut cfg = iid_config();
        cfg.domain = TruncationDomain::new(
            Family::Gaussian,
            vec![-half_width, 1.2 - half_width.min(1.0)],
            vec![half_width, 1.2 + half_width],
            cfg.order,
            0.05,
        )
        .unwrap();
        let resets = run(&cfg, &data, RecordMode::FinalOnly).unwrap().final_state.reset_count();
        assert!(resets <= prev, "width {half_width}: {resets} > {prev}");
        prev = resets;
    }
    assert_eq!(prev, 0);
}

fn ar1_truth() -> (NoiseModel, arma::ArmaParams) {
    (NoiseModel::gaussian(0.0, 1.0).unwrap(), arma::ArmaParams::new(vec![-0.5], vec![], 0.05).unwrap())
}

/// Mean and standard error of each coordinate.
fn mean_se(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|k| {
            let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, (v / n).sqrt())
        })
        .collect()
}

/// `G(θ*, η*)`: block `j` is `i u_j φ(u_j) R_P`.
fn g_at_truth(noise: &NoiseModel, grid: &FreqGrid, r_p: &DMatrix<f64>) -> CMatrix {
    let psi = ecf::psi_vector(noise, grid);
    let p = r_p.nrows();
    CMatrix::from_fn(grid.len() * p, p, |row, b| psi[row / p] * r_p[(row % p, b)])
}

#[test]
fn known_noise_correction_has_zero_mean_at_truth() {
    let (noise, sys) = ar1_truth();
    let grid = gaussian_grid();
    let r_p = arma::r_p_estimate(&sys, &noise, 100_000, 11);
    let mut cfg = EstimatorConfig::known_noise(&noise, sys.order(), sys.theta(), grid.clone()).unwrap();
    cfg.g_init = GInit::Zero;
    cfg.r_weight = Some(r_p.clone());
    let mut est = Estimator::new(&cfg, &[]).unwrap();
    est.state.x.g = g_at_truth(&noise, &grid, &r_p);
    let y = sys.simulate(&noise.sample(10_050, 12).values);
    let rows: Vec<Vec<f64>> = y
        .iter()
        .map(|&yk| est.correction(yk).theta_s.as_slice().to_vec())
        .skip(50)
        .collect();
    for (m, se) in mean_se(&rows) {
        assert!(m.abs() < 3.0 * se, "mean {m} se {se}");
    }
}

#[test]
fn zero_system_score_keeps_theta_and_relaxes_g() {
    let (noise, sys) = ar1_truth();
    let mut cfg = EstimatorConfig::known_noise(&noise, sys.order(), sys.theta(), gaussian_grid()).unwrap();
    cfg.g_init = GInit::Zero;
    let mut est = Estimator::new(&cfg, &[]).unwrap();
    // the first innovation has a zero gradient, so the system score vanishes
    let corr = est.correction(1.5);
    assert_eq!(corr.theta_s, DVector::zeros(1));
    let _ = est.correction(0.7);
    let corr = est.correction(-0.2);
    assert!(corr.g.norm() > 0.0);
}

#[test]
fn three_stage_corrections_have_zero_mean_at_truth() {
    let noise = NoiseModel::gaussian(0.0, 1.0).unwrap();
    let sys = arma::ArmaParams::new(vec![-0.5], vec![0.3], 0.05).unwrap();
    let grid = gaussian_grid();
    let r_p = arma::r_p_estimate(&sys, &noise, 200_000, 21);
    let mut cfg = EstimatorConfig::three_stage(
        Family::Gaussian,
        1.0,
        noise.eta().to_vec(),
        sys.order(),
        sys.theta(),
        grid.clone(),
        grid.clone(),
    )
    .unwrap();
    cfg.g_init = GInit::Zero;
    let mut est = Estimator::new(&cfg, &[]).unwrap();
    est.state.x.r_p = r_p.clone();
    est.state.x.g = g_at_truth(&noise, &grid, &r_p);
    let y = sys.simulate(&noise.sample(10_050, 22).values);
    let rows: Vec<Vec<f64>> = y
        .iter()
        .map(|&yk| {
            let c = est.correction(yk);
            c.theta_p.iter().chain(c.eta.iter()).chain(c.theta_s.iter()).copied().collect()
        })
        .skip(50)
        .collect();
    for (k, (m, se)) in mean_se(&rows).into_iter().enumerate() {
        assert!(m.abs() < 3.0 * se, "component {k}: mean {m} se {se}");
    }
}

#[test]
fn warmup_g_approximates_truth() {
    let (noise, sys) = ar1_truth();
    let grid = gaussian_grid();
    let cfg = EstimatorConfig::known_noise(&noise, sys.order(), sys.theta(), grid.clone()).unwrap();
    let y = sys.simulate(&noise.sample(50_000, 31).values);
    let g = warmup_g(&cfg, &y);
    let r_p = DMatrix::from_element(1, 1, 4.0 / 3.0);
    let target = g_at_truth(&noise, &grid, &r_p);
    assert!((&g - &target).norm() < 0.05 * target.norm(), "{g} vs {target}");
}

#[test]
fn algorithm_names_parse() {
    assert_eq!("alg3".parse::<Algorithm>().unwrap(), Algorithm::ThreeStage);
    assert_eq!("known-noise".parse::<Algorithm>().unwrap(), Algorithm::KnownNoise);
    assert!("alg4".parse::<Algorithm>().is_err());
}

#[test]
fn warmup_holds_system_parameters_while_g_averages() {
    let (noise, sys) = ar1_truth();
    let mut cfg = EstimatorConfig::known_noise(&noise, sys.order(), vec![-0.3], gaussian_grid()).unwrap();
    cfg.g_init = GInit::Warmup(50);
    let y = sys.simulate(&noise.sample(400, 8).values);
    let traj = run(&cfg, &y, RecordMode::Full).unwrap();
    let layout = cfg.layout();
    for rec in &traj.records[..50] {
        assert_eq!(Estimates::from_flat(layout, &rec.x).theta_s[0], -0.3);
    }
    let g_after = Estimates::from_flat(layout, &traj.records[49].x).g;
    let g_batch = warmup_g(&cfg, &y[..50]);
    assert!((&g_after - &g_batch).norm() < 1e-12 * g_batch.norm());
    assert_ne!(Estimates::from_flat(layout, &traj.records[50].x).theta_s[0], -0.3);
}
