//! Recursive ECF estimation of Gaussian increment parameters, one datum at a
//! time, with the `C` weighting.

use recursive_ecf::ecf::{sigma_eta, FreqGrid};
use recursive_ecf::estimators::{run, EstimatorConfig, RecordMode};
use recursive_ecf::noise::{Family, NoiseModel};

fn main() -> recursive_ecf::Result<()> {
    let truth = NoiseModel::gaussian(0.3, 1.0)?;
    let grid = FreqGrid::equispaced(10, 2.0)?;
    let data = truth.sample(20_000, 5).values;

    let config = EstimatorConfig::iid(Family::Gaussian, 1.0, vec![0.0, 1.3], grid.clone())?;
    let traj = run(&config, &data, RecordMode::Full)?;
    for n in [10, 100, 1_000, 10_000, 20_000] {
        let rec = &traj.records[n - 1];
        println!("n={n:>6}  mu {:.4}  sigma {:.4}", rec.x[0], rec.x[1]);
    }
    let se = sigma_eta(&truth, &grid)?.map_diagonal(|v| (v / data.len() as f64).sqrt());
    println!("asymptotic standard errors {:.4}, {:.4}", se[0], se[1]);
    println!("resets: {}", traj.final_state.reset_count());
    Ok(())
}
