//! Simulates an ARMA(2,2) output and recovers the driving noise with the
//! inverse filter, together with the parameter sensitivities.

use recursive_ecf::arma::{innovation_step, ArmaParams, FilterState};
use recursive_ecf::noise::NoiseModel;

fn main() -> recursive_ecf::Result<()> {
    let system = ArmaParams::new(vec![-0.9, 0.2], vec![0.4, -0.1], 0.05)?;
    println!("stability margin {:.3}", system.stability_margin());
    let noise = NoiseModel::nig(2.0, 0.5, 1.0, 0.0)?.sample(5_000, 11).values;
    let y = system.simulate(&noise);

    let theta = system.theta();
    let mut state = FilterState::new(system.order());
    let mut worst = 0.0f64;
    let mut last_grad = Vec::new();
    for (yn, en) in y.iter().zip(&noise) {
        let inn = innovation_step(system.order(), &theta, &mut state, *yn);
        worst = worst.max((inn.eps - en).abs());
        last_grad = inn.grad;
    }
    println!("max |recovered - true noise| = {worst:.2e}");
    println!("sensitivity of the last innovation to (a1, a2, c1, c2): {last_grad:.4?}");
    Ok(())
}
