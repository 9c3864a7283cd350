//! Recursive ECF identification of an AR(1) system whose driving noise law is
//! known, with the weight `C ⊗ R_P`.

use recursive_ecf::arma::{r_p_estimate, ArmaParams};
use recursive_ecf::ecf::{sigma_theta, FreqGrid};
use recursive_ecf::estimators::{run, EstimatorConfig, RecordMode};
use recursive_ecf::noise::NoiseModel;

fn main() -> recursive_ecf::Result<()> {
    let noise = NoiseModel::variance_gamma(1.0, 0.5, 0.0)?;
    let system = ArmaParams::new(vec![-0.5], vec![], 0.05)?;
    let grid = FreqGrid::equispaced(10, 2.0)?;
    let y = system.simulate(&noise.sample(50_000, 2).values);

    let r_p = r_p_estimate(&system, &noise, 200_000, 99);
    let mut config = EstimatorConfig::known_noise(&noise, system.order(), vec![-0.3], grid.clone())?;
    config.r_weight = Some(r_p.clone());
    let traj = run(&config, &y, RecordMode::FinalOnly)?;
    let est = traj.final_estimates();

    let sigma = sigma_theta(&noise, &grid, &r_p)?;
    println!("a1 estimate {:.4} (truth -0.5)", est.theta_s[0]);
    println!("asymptotic standard error {:.4}", (sigma[(0, 0)] / y.len() as f64).sqrt());
    println!("resets: {}", traj.final_state.reset_count());
    Ok(())
}
