//! Associated ODE of the i.i.d. recursion: spectrum of the Jacobian at the
//! truth, an integrated path from an offset start, and the asymptotic
//! covariance from the Lyapunov equation.

use recursive_ecf::ecf::{sigma_eta, FreqGrid, WeightKind};
use recursive_ecf::estimators::{EstimatorConfig, Estimates};
use recursive_ecf::noise::{Family, NoiseModel};
use recursive_ecf::ode::{self, AssociatedOde, IidOde};

fn main() -> recursive_ecf::Result<()> {
    let truth = NoiseModel::gaussian(0.0, 1.0)?;
    let grid = FreqGrid::equispaced(10, 2.0)?;
    let ode = IidOde::new(truth.clone(), grid.clone(), WeightKind::CAtEta)?;
    let x_star = ode.equilibrium()?;

    let jac = ode::jacobian_at(&ode, &x_star)?;
    let worst = jac.eigenvalues.iter().map(|z| (z + 1.0).norm()).fold(0.0, f64::max);
    println!("{} eigenvalues, max |lambda + 1| = {worst:.2e}", jac.eigenvalues.len());

    let mut start = x_star.clone();
    start[0] += 0.3;
    start[1] += 0.2;
    let path = ode::integrate(&ode, &start, 5.0, 0.1)?;
    println!("path: mu {:.4} -> {:.4}, sigma {:.4} -> {:.4}", start[0], path.last()[0], start[1], path.last()[1]);

    let config = EstimatorConfig::iid(Family::Gaussian, 1.0, vec![0.0, 1.0], grid.clone())?;
    let data = truth.sample(200_000, 17).values;
    let x = Estimates::from_flat(ode.layout(), &x_star);
    let p_star = ode::p_star_estimate(&config, &x, &data, 0, None)?;
    let lyap = ode::lyapunov_solve(&jac.matrix, &p_star)?;
    let theory = sigma_eta(&truth, &grid)?;
    for (k, name) in ["mu", "sigma"].iter().enumerate() {
        println!("{name}: Lyapunov {:.4}, closed form {:.4}", lyap.sigma_xx[(k, k)], theory[(k, k)]);
    }
    Ok(())
}
