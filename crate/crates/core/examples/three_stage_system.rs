//! Joint recursive identification of an ARMA(1,1) system and its Gaussian
//! noise law: prediction error, noise ECF on the residuals, system ECF.

use recursive_ecf::arma::{ArmaOrder, ArmaParams};
use recursive_ecf::ecf::FreqGrid;
use recursive_ecf::estimators::{run, EstimatorConfig, RecordMode};
use recursive_ecf::noise::{Family, NoiseModel};

fn main() -> recursive_ecf::Result<()> {
    let noise = NoiseModel::gaussian(0.0, 1.0)?;
    let system = ArmaParams::new(vec![-0.5], vec![0.3], 0.05)?;
    let grid = FreqGrid::equispaced(10, 2.0)?;
    let y = system.simulate(&noise.sample(40_000, 3).values);

    let config = EstimatorConfig::three_stage(
        Family::Gaussian,
        1.0,
        vec![0.05, 1.05],
        ArmaOrder::new(1, 1),
        vec![-0.45, 0.25],
        grid.clone(),
        grid,
    )?;
    let traj = run(&config, &y, RecordMode::FinalOnly)?;
    let est = traj.final_estimates();
    println!("prediction error (a1, c1): {:.4?}", est.theta_p.as_slice());
    println!("noise (mu, sigma):         {:.4?}", est.eta.as_slice());
    println!("system ECF (a1, c1):       {:.4?}", est.theta_s.as_slice());
    println!("truth: a1 -0.5, c1 0.3, mu 0, sigma 1");
    println!("resets: {}", traj.final_state.reset_count());
    Ok(())
}
