//! The `C` matrix of a frequency grid, its brute-force estimate, and the
//! asymptotic covariance it implies for the noise parameters.

use recursive_ecf::ecf::{c_matrix_raw, sigma_eta, FreqGrid};
use recursive_ecf::noise::NoiseModel;
use recursive_ecf::Complex64;

fn main() -> recursive_ecf::Result<()> {
    let model = NoiseModel::variance_gamma(1.0, 0.5, 0.2)?;
    let grid = FreqGrid::equispaced(6, 2.0)?;
    let c = c_matrix_raw(&model, &grid);

    let sample = model.sample(400_000, 3).values;
    let u = grid.as_slice();
    let m = u.len();
    let n = sample.len() as f64;
    let mut mean = vec![Complex64::new(0.0, 0.0); m];
    for y in &sample {
        for (k, uk) in u.iter().enumerate() {
            mean[k] += Complex64::new(0.0, uk * y).exp() / n;
        }
    }
    let mut worst = 0.0f64;
    for j in 0..m {
        for k in 0..m {
            let brute = sample
                .iter()
                .map(|y| {
                    let a = Complex64::new(0.0, u[j] * y).exp() - mean[j];
                    let b = Complex64::new(0.0, u[k] * y).exp() - mean[k];
                    a * b.conj()
                })
                .sum::<Complex64>()
                / (n - 1.0);
            worst = worst.max((brute - c[(j, k)]).norm());
        }
    }
    println!("grid {:?}", grid.as_slice());
    println!("largest |C - sample covariance| = {worst:.2e}");

    let sigma = sigma_eta(&model, &grid)?;
    println!("asymptotic covariance of (sigma, nu, theta):\n{sigma:.4}");
    Ok(())
}
