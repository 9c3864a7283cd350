//! Batch baselines: ECF fit of i.i.d. increments and a prediction-error fit
//! of an ARMA(1,1) system.

use recursive_ecf::arma::{ArmaOrder, ArmaParams};
use recursive_ecf::ecf::{FreqGrid, WeightKind};
use recursive_ecf::noise::{Family, NoiseModel};
use recursive_ecf::offline::{hannan_rissanen, moment_init, offline_ecf_iid, offline_pe};

fn main() -> recursive_ecf::Result<()> {
    let truth = NoiseModel::nig(2.0, 0.5, 1.0, 0.0)?;
    let data = truth.sample(50_000, 21).values;
    let grid = FreqGrid::equispaced(12, 2.5)?;
    println!("moment start {:.4?}", moment_init(&data, Family::NormalInverseGaussian, 1.0));
    let fit = offline_ecf_iid(&data, Family::NormalInverseGaussian, 1.0, &grid, WeightKind::CAtEta)?;
    println!(
        "ECF fit {:.4?} after {} iterations (converged: {}), truth {:?}",
        fit.estimate,
        fit.iterations,
        fit.converged,
        truth.eta()
    );

    let system = ArmaParams::new(vec![-0.5], vec![0.3], 0.05)?;
    let y = system.simulate(&NoiseModel::gaussian(0.0, 1.0)?.sample(20_000, 4).values);
    let order = ArmaOrder::new(1, 1);
    println!("Hannan-Rissanen start {:.4?}", hannan_rissanen(&y, order)?);
    let pe = offline_pe(&y, order)?;
    println!("prediction error fit {:.4?}, mean squared residual {:.4}", pe.estimate, pe.objective);
    Ok(())
}
