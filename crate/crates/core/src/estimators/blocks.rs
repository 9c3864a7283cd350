//! Correction terms of the three update blocks, written in terms of the
//! score quantities so the same code serves data-driven steps and
//! frozen-parameter averages.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ecf::{self, FreqGrid, SystemWeight, WeightMatrix};
use crate::linalg::{self, CMatrix};
use crate::noise::NoiseModel;

/// Noise-ECF block: `Δη = R⁻¹ Re(φ_η* K⁻¹ h)`, `ΔR = Re(φ_η* K⁻¹ φ_η) − R`.
pub(crate) struct NoiseCorrection {
    pub eta: DVector<f64>,
    pub r: DMatrix<f64>,
    pub regularized: bool,
}

pub(crate) fn noise_correction(
    jac: &CMatrix,
    weight: &WeightMatrix,
    h: &DVector<Complex64>,
    r_e: &DMatrix<f64>,
) -> NoiseCorrection {
    let kj = weight.solve(jac);
    let info = linalg::symmetrize(&linalg::real_part(&(jac.adjoint() * &kj)));
    // K is Hermitian, so φ_η* K⁻¹ h = (K⁻¹ φ_η)* h
    let grad = DVector::from_iterator(kj.ncols(), kj.column_iter().map(|col| col.dotc(h).re));
    let (eta, regularized) = linalg::regularized_solve_vec(r_e, &grad);
    NoiseCorrection { eta, r: info - r_e, regularized }
}

/// The initial `R_E`: `Re(φ_η* K⁻¹ φ_η)` at the given parameters.
pub(crate) fn noise_information(model: &NoiseModel, grid: &FreqGrid, weight: &WeightMatrix) -> DMatrix<f64> {
    ecf::information(&ecf::cf_jacobian(model, grid), weight)
}

/// `exp(i u_j ε)` for every grid frequency.
pub(crate) fn exponentials(grid: &FreqGrid, eps: f64) -> DVector<Complex64> {
    DVector::from_iterator(
        grid.len(),
        grid.as_slice().iter().map(|&u| {
            let (s, c) = (u * eps).sin_cos();
            Complex64::new(c, s)
        }),
    )
}

/// Prediction-error block: `Δθ = −R_P⁻¹ E[ε_θ ε]`, `ΔR_P = E[ε_θ ε_θᵀ] − R_P`.
pub(crate) struct PeCorrection {
    pub theta: DVector<f64>,
    pub r: DMatrix<f64>,
    pub regularized: bool,
}

pub(crate) fn pe_correction(r_p: &DMatrix<f64>, grad_eps: &DVector<f64>, grad_outer: &DMatrix<f64>) -> PeCorrection {
    let (step, regularized) = linalg::regularized_solve_vec(r_p, grad_eps);
    PeCorrection { theta: -step, r: grad_outer - r_p, regularized }
}

/// Stacked system score `h_S` and its dropped-term Jacobian `ĥ_θ` for one datum:
/// block `j` of `h_S` is `(e_j − φ_j) ε_θ`, block `j` of `ĥ_θ` is
/// `i u_j e_j ε_θ ε_θᵀ`, where `e_j = exp(i u_j ε)`.
pub(crate) fn system_scores(
    grid: &FreqGrid,
    exps: &DVector<Complex64>,
    phi: &DVector<Complex64>,
    grad: &[f64],
) -> (CMatrix, CMatrix) {
    let p = grad.len();
    let m = grid.len();
    let mut h = CMatrix::zeros(m * p, 1);
    let mut hj = CMatrix::zeros(m * p, p);
    for (j, &u) in grid.as_slice().iter().enumerate() {
        let diff = exps[j] - phi[j];
        let iue = Complex64::new(0.0, u) * exps[j];
        for a in 0..p {
            h[(j * p + a, 0)] = diff * grad[a];
            for b in 0..p {
                hj[(j * p + a, b)] = iue * (grad[a] * grad[b]);
            }
        }
    }
    (h, hj)
}

/// System-ECF block: `Δθ = −R_S⁻¹ Re(G* K⁻¹ h_S)` with `R_S = Re(G* K⁻¹ G)`,
/// and `ΔG = ĥ_θ − G`.
pub(crate) struct SystemCorrection {
    pub theta: DVector<f64>,
    pub g: CMatrix,
    pub regularized: bool,
}

pub(crate) fn system_correction(g: &CMatrix, weight: &SystemWeight, h: &CMatrix, h_theta: &CMatrix) -> SystemCorrection {
    let kg = weight.solve(g);
    let r_s = linalg::symmetrize(&linalg::real_part(&(g.adjoint() * &kg)));
    let grad = linalg::real_part(&(kg.adjoint() * h));
    let (step, regularized) = linalg::regularized_solve(&r_s, &grad);
    SystemCorrection {
        theta: -DVector::from_column_slice(step.as_slice()),
        g: h_theta - g,
        regularized,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_noise_update_matches_hand_value() {
        // Gaussian μ only, σ = 1, u = 1, K = 1, μ̂ = 0, R = 1, datum y = 0.5:
        // h = e^{0.5i} − e^{-1/2}, φ_μ = i e^{-1/2}, Δμ = Re(conj(φ_μ) h) = e^{-1/2} sin(0.5)
        let jac = CMatrix::from_element(1, 1, Complex64::new(0.0, (-0.5f64).exp()));
        let h = DVector::from_element(1, Complex64::new(0.5f64.cos(), 0.5f64.sin()) - (-0.5f64).exp());
        let out = noise_correction(&jac, &WeightMatrix::identity(1), &h, &DMatrix::identity(1, 1));
        let expected = (-0.5f64).exp() * 0.5f64.sin();
        assert!((out.eta[0] - expected).abs() < 1e-15);
        assert!((out.r[(0, 0)] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_score_gives_zero_parameter_step() {
        let jac = CMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64 - j as f64, 0.5 * (i + j) as f64));
        let h = DVector::zeros(3);
        let out = noise_correction(&jac, &WeightMatrix::identity(3), &h, &DMatrix::identity(2, 2));
        assert_eq!(out.eta, DVector::zeros(2));
    }

    #[test]
    fn system_scores_layout_is_frequency_major() {
        let grid = FreqGrid::new(vec![0.5, 1.0]).unwrap();
        let exps = exponentials(&grid, 0.3);
        let phi = DVector::from_element(2, Complex64::new(0.2, 0.0));
        let (h, hj) = system_scores(&grid, &exps, &phi, &[2.0, -1.0]);
        assert_eq!(h.nrows(), 4);
        assert!((h[(3, 0)] - (exps[1] - phi[1]) * -1.0).norm() < 1e-15);
        assert!((hj[(2, 1)] - Complex64::new(0.0, 1.0) * exps[1] * -2.0).norm() < 1e-15);
    }

    #[test]
    fn zero_system_score_leaves_theta_and_relaxes_g() {
        let g = CMatrix::from_fn(4, 2, |i, j| Complex64::new(1.0 + (i * j) as f64, i as f64 * 0.1));
        let target = CMatrix::from_element(4, 2, Complex64::new(0.5, 0.0));
        let out = system_correction(&g, &SystemWeight::Identity { dim: 4 }, &CMatrix::zeros(4, 1), &target);
        assert_eq!(out.theta, DVector::zeros(2));
        assert_eq!(out.g, &target - &g);
    }
}
