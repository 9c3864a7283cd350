//! Samples each increment family and compares its closed-form characteristic
//! function with the empirical one.

use recursive_ecf::noise::{empirical_cf, NoiseModel};

fn main() -> recursive_ecf::Result<()> {
    let models = [
        NoiseModel::gaussian(0.2, 1.0)?,
        NoiseModel::variance_gamma(1.0, 0.5, 0.2)?,
        NoiseModel::nig(2.0, 0.5, 1.0, 0.0)?,
    ];
    for model in &models {
        let sample = model.sample(200_000, 7);
        let n = sample.values.len() as f64;
        let mean = sample.values.iter().sum::<f64>() / n;
        let var = sample.values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        println!("{:?} {:?}", model.family(), model.eta());
        println!("  mean {mean:.4} (exact {:.4}), variance {var:.4} (exact {:.4})", model.mean(), model.variance());
        for u in [0.5, 1.0, 2.0] {
            let exact = model.cf(u);
            let emp = empirical_cf(&sample.values, u);
            println!("  u={u}: cf {:.4}{:+.4}i, sample {:.4}{:+.4}i", exact.re, exact.im, emp.re, emp.im);
        }
    }
    Ok(())
}
