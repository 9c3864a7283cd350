use nalgebra::DMatrix;

use crate::linalg;

/// Bartlett lag used for a sequence of length `n`: `2·⌈n^{1/3}⌉`.
pub fn default_lag(n: usize) -> usize {
    2 * (n as f64).cbrt().ceil() as usize
}

/// Long-run covariance `Σ_m E[H_m H_0ᵀ]` of a stationary sequence, estimated
/// with Bartlett weights up to `lag` and projected onto the PSD cone.
///
/// Rows of `seq` are the observations.
pub fn long_run_covariance(seq: &[Vec<f64>], lag: usize) -> DMatrix<f64> {
    let n = seq.len();
    let d = seq.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return DMatrix::zeros(d, d);
    }
    let mut mean = vec![0.0; d];
    for row in seq {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |t, k| seq[t][k] - mean[k]);
    let autocov = |m: usize| -> DMatrix<f64> {
        let a = centered.rows(m, n - m);
        let b = centered.rows(0, n - m);
        a.transpose() * b / n as f64
    };
    let mut out = autocov(0);
    for m in 1..=lag.min(n - 1) {
        let w = 1.0 - m as f64 / (lag + 1) as f64;
        let g = autocov(m);
        out += (&g + g.transpose()) * w;
    }
    linalg::psd_projection(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn independent_sequence_matches_sample_covariance() {
        let e = normals(40_000, 1);
        let f = normals(40_000, 2);
        let seq: Vec<Vec<f64>> = e.iter().zip(&f).map(|(a, b)| vec![a + 0.5 * b, 2.0 * b]).collect();
        let lr = long_run_covariance(&seq, default_lag(seq.len()));
        let lag0 = long_run_covariance(&seq, 0);
        assert!((&lr - &lag0).norm() < 0.05 * lag0.norm());
        assert!((lag0[(1, 1)] - 4.0).abs() < 0.1);
    }

    #[test]
    fn ar1_long_run_variance() {
        // y_t = 0.5 y_{t-1} + e_t has long-run variance 1/(1-0.5)^2 = 4
        let e = normals(200_000, 3);
        let mut y = 0.0;
        let seq: Vec<Vec<f64>> = e
            .iter()
            .map(|v| {
                y = 0.5 * y + v;
                vec![y]
            })
            .collect();
        let lr = long_run_covariance(&seq, 4 * default_lag(seq.len()));
        assert!((lr[(0, 0)] - 4.0).abs() < 0.3, "{}", lr[(0, 0)]);
        let doubled = long_run_covariance(&seq, 8 * default_lag(seq.len()));
        assert!((doubled[(0, 0)] - lr[(0, 0)]).abs() < 0.05 * lr[(0, 0)]);
    }

    #[test]
    fn lag_rule() {
        assert_eq!(default_lag(1000), 20);
        assert_eq!(default_lag(1001), 22);
    }
}
