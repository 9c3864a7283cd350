//! Batch baselines used to cross-check the recursive estimators.
//!
//! Both fits are plain Gauss–Newton with step halving and a fixed weighting.
//! Iteration stops once the accepted step is shorter than `1e-8` or after 200
//! iterations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::arma::{self, ArmaOrder, FilterState, DEFAULT_MARGIN};
use crate::ecf::{self, FreqGrid, WeightKind, WeightMatrix};
use crate::linalg;
use crate::noise::{self, Family, NoiseModel};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineFit {
    pub estimate: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Empty on success, otherwise why the iteration stopped.
    pub diagnostics: String,
}

/// A least-squares type problem: objective, and a Gauss–Newton direction.
trait GaussNewton {
    fn admissible(&self, x: &[f64]) -> bool;
    fn objective(&self, x: &[f64]) -> f64;
    fn direction(&self, x: &[f64]) -> Vec<f64>;
}

fn minimize<P: GaussNewton>(problem: &P, init: Vec<f64>) -> OfflineFit {
    let mut x = init;
    let mut obj = problem.objective(&x);
    for it in 0..MAX_ITERATIONS {
        let dir = problem.direction(&x);
        let full = norm(&dir);
        if !full.is_finite() {
            return stopped(x, obj, it, "non-finite Gauss-Newton direction");
        }
        if full < STEP_TOLERANCE {
            return OfflineFit { estimate: x, objective: obj, iterations: it, converged: true, diagnostics: String::new() };
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + scale * d).collect();
            if problem.admissible(&cand) {
                let cand_obj = problem.objective(&cand);
                if cand_obj <= obj {
                    accepted = Some((cand, cand_obj));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((cand, cand_obj)) => {
                let step = scale * full;
                x = cand;
                obj = cand_obj;
                if step < STEP_TOLERANCE {
                    return OfflineFit {
                        estimate: x,
                        objective: obj,
                        iterations: it + 1,
                        converged: true,
                        diagnostics: String::new(),
                    };
                }
            }
            // no descent left along a short direction: the objective is flat
            // to rounding here
            None if full < 1e-6 * (1.0 + norm(&x)) => {
                return OfflineFit { estimate: x, objective: obj, iterations: it, converged: true, diagnostics: String::new() };
            }
            None => return stopped(x, obj, it, "line search found no descent"),
        }
    }
    stopped(x, obj, MAX_ITERATIONS, "iteration limit reached")
}

fn stopped(estimate: Vec<f64>, objective: f64, iterations: usize, why: &str) -> OfflineFit {
    OfflineFit { estimate, objective, iterations, converged: false, diagnostics: why.to_string() }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

struct EcfProblem<'a> {
    family: Family,
    h_step: f64,
    grid: &'a FreqGrid,
    weight: &'a WeightMatrix,
    ecf: DVector<Complex64>,
}

impl EcfProblem<'_> {
    fn model(&self, eta: &[f64]) -> Option<NoiseModel> {
        NoiseModel::new(self.family, eta.to_vec(), self.h_step).ok()
    }

    fn residual(&self, model: &NoiseModel) -> DVector<Complex64> {
        &self.ecf - ecf::cf_vector(model, self.grid)
    }
}

impl GaussNewton for EcfProblem<'_> {
    fn admissible(&self, x: &[f64]) -> bool {
        self.family.is_valid(x)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        match self.model(x) {
            Some(m) => {
                let g = self.residual(&m);
                g.dotc(&self.weight.solve_vec(&g)).re
            }
            None => f64::INFINITY,
        }
    }

    fn direction(&self, x: &[f64]) -> Vec<f64> {
        let Some(model) = self.model(x) else { return vec![f64::NAN; x.len()] };
        let g = self.residual(&model);
        let jac = ecf::cf_jacobian(&model, self.grid);
        let kinv_jac = self.weight.solve(&jac);
        let info = linalg::real_part(&(jac.adjoint() * &kinv_jac));
        let rhs = linalg::real_part(&(kinv_jac.adjoint() * DMatrix::from_column_slice(g.len(), 1, g.as_slice())));
        let (step, _) = linalg::regularized_solve_vec(&info, &rhs.column(0).into_owned());
        step.iter().copied().collect()
    }
}

/// Moment-matching starting point for the batch ECF fit.
pub fn moment_init(data: &[f64], family: Family, h_step: f64) -> Vec<f64> {
    let n = data.len().max(1) as f64;
    let mean = data.iter().sum::<f64>() / n;
    let central = |k: i32| data.iter().map(|y| (y - mean).powi(k)).sum::<f64>() / n;
    let var = central(2).max(1e-12);
    let skew = central(3) / var.powf(1.5);
    let exkurt = central(4) / (var * var) - 3.0;
    match family {
        Family::Gaussian => vec![mean / h_step, (var / h_step).sqrt()],
        Family::VarianceGamma => {
            // near-symmetric cumulants: κ4/κ2² ≈ 3ν/h
            let theta = mean / h_step;
            let nu = (h_step * exkurt / 3.0).clamp(1e-2, 10.0);
            let sigma2 = (var / h_step - nu * theta * theta).max(0.1 * var / h_step);
            vec![sigma2.sqrt(), nu, theta]
        }
        Family::NormalInverseGaussian => {
            let k = exkurt.max(0.1);
            let ratio = (skew * skew / k).min(0.7);
            let rho2 = (ratio / (3.0 - 4.0 * ratio)).min(0.8);
            let rho = rho2.sqrt() * skew.signum();
            let dg = 3.0 * (1.0 + 4.0 * rho2) / k; // δ_h·γ
            let alpha = 1.0 / ((1.0 - rho2) * (var / dg).sqrt());
            let gamma = alpha * (1.0 - rho2).sqrt();
            let beta = rho * alpha;
            let delta_h = dg / gamma;
            let mu_h = mean - delta_h * beta / gamma;
            vec![alpha, beta, delta_h / h_step, mu_h / h_step]
        }
    }
}

/// Batch ECF fit of i.i.d. increments from the moment starting point. With
/// `WeightKind::CAtEta` the weight is `C` at that starting point and stays
/// fixed.
pub fn offline_ecf_iid(
    data: &[f64],
    family: Family,
    h_step: f64,
    grid: &FreqGrid,
    weight: WeightKind,
) -> Result<OfflineFit> {
    check_ecf_inputs(data, family, grid)?;
    let init = moment_init(data, family, h_step);
    let init_model = NoiseModel::new(family, init.clone(), h_step)
        .map_err(|e| Error::Config(format!("moment starting point is not admissible: {e}")))?;
    let weight = WeightMatrix::for_kind(weight, &init_model, grid)?;
    offline_ecf_iid_with(data, family, h_step, grid, &weight, init)
}

/// Batch ECF fit with an explicit weight and starting point.
pub fn offline_ecf_iid_with(
    data: &[f64],
    family: Family,
    h_step: f64,
    grid: &FreqGrid,
    weight: &WeightMatrix,
    init: Vec<f64>,
) -> Result<OfflineFit> {
    check_ecf_inputs(data, family, grid)?;
    family.validate(&init)?;
    if weight.dim() != grid.len() {
        return Err(Error::Config(format!("weight is {}×{}, grid has {} points", weight.dim(), weight.dim(), grid.len())));
    }
    let problem = EcfProblem { family, h_step, grid, weight, ecf: sample_ecf(data, grid) };
    Ok(minimize(&problem, init))
}

/// `Re(ḡ* K⁻¹ ḡ)` with `ḡ_j` the sample ECF minus `φ(u_j, η)`.
pub fn ecf_objective(data: &[f64], model: &NoiseModel, grid: &FreqGrid, weight: &WeightMatrix) -> f64 {
    let g = sample_ecf(data, grid) - ecf::cf_vector(model, grid);
    g.dotc(&weight.solve_vec(&g)).re
}

fn sample_ecf(data: &[f64], grid: &FreqGrid) -> DVector<Complex64> {
    DVector::from_iterator(grid.len(), grid.as_slice().iter().map(|&u| noise::empirical_cf(data, u)))
}

fn check_ecf_inputs(data: &[f64], family: Family, grid: &FreqGrid) -> Result<()> {
    let p = family.n_params();
    grid.require_identifiable(p)?;
    if data.len() < 10 * p {
        return Err(Error::Config(format!("need at least {} observations, got {}", 10 * p, data.len())));
    }
    Ok(())
}

struct PeProblem<'a> {
    order: ArmaOrder,
    data: &'a [f64],
}

impl PeProblem<'_> {
    fn innovations(&self, theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut state = FilterState::new(self.order);
        let mut eps = Vec::with_capacity(self.data.len());
        let mut grads = Vec::with_capacity(self.data.len());
        for &y in self.data {
            let inn = arma::innovation_step(self.order, theta, &mut state, y);
            eps.push(inn.eps);
            grads.push(inn.grad);
        }
        (eps, grads)
    }
}

impl GaussNewton for PeProblem<'_> {
    fn admissible(&self, x: &[f64]) -> bool {
        self.order.margin(x) > 0.0
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut state = FilterState::new(self.order);
        let mut sum = 0.0;
        for &y in self.data {
            let e = arma::innovation_step(self.order, x, &mut state, y).eps;
            sum += e * e;
        }
        let v = sum / self.data.len() as f64;
        if v.is_finite() { v } else { f64::INFINITY }
    }

    fn direction(&self, x: &[f64]) -> Vec<f64> {
        let np = self.order.n_params();
        let (eps, grads) = self.innovations(x);
        let mut normal = DMatrix::zeros(np, np);
        let mut rhs = DVector::zeros(np);
        for (e, g) in eps.iter().zip(&grads) {
            let gv = DVector::from_column_slice(g);
            normal += &gv * gv.transpose();
            rhs -= gv * *e;
        }
        let (step, _) = linalg::regularized_solve_vec(&normal, &rhs);
        step.iter().copied().collect()
    }
}

/// Batch prediction-error fit of an ARMA(p, q) model, minimizing the mean of
/// `ε_n(θ)²` from a Hannan–Rissanen starting point.
pub fn offline_pe(data: &[f64], order: ArmaOrder) -> Result<OfflineFit> {
    let init = hannan_rissanen(data, order)?;
    offline_pe_from(data, order, &init)
}

/// Batch prediction-error fit from a given starting point. A starting point
/// outside the stability region is first projected onto its margin boundary.
pub fn offline_pe_from(data: &[f64], order: ArmaOrder, init: &[f64]) -> Result<OfflineFit> {
    let np = order.n_params();
    if init.len() != np {
        return Err(Error::Config(format!("starting point has {} entries, model has {np}", init.len())));
    }
    if np == 0 {
        return Err(Error::Config("ARMA(0, 0) has nothing to fit".into()));
    }
    if data.len() < 10 * np {
        return Err(Error::Config(format!("need at least {} observations, got {}", 10 * np, data.len())));
    }
    let start = if order.margin(init) < DEFAULT_MARGIN {
        arma::project_to_margin(order, init, DEFAULT_MARGIN)
    } else {
        init.to_vec()
    };
    Ok(minimize(&PeProblem { order, data }, start))
}

/// Two-pass linear regression: a long autoregression supplies innovation
/// proxies, then `y_n` is regressed on its own lags and lagged proxies.
pub fn hannan_rissanen(data: &[f64], order: ArmaOrder) -> Result<Vec<f64>> {
    let (p, q) = (order.p, order.q);
    let long = if q > 0 { (2 * (p + q)).max(10) } else { 0 };
    if data.len() < 10 * (long + p + q).max(1) {
        return Err(Error::Config(format!("series of length {} too short for ARMA({p}, {q})", data.len())));
    }
    let resid = if q > 0 {
        let coef = lagged_regression(data, long, &[], 0, long)?;
        let mut r = vec![0.0; data.len()];
        for n in long..data.len() {
            r[n] = data[n] - (1..=long).map(|i| coef[i - 1] * data[n - i]).sum::<f64>();
        }
        r
    } else {
        Vec::new()
    };
    let coef = lagged_regression(data, p, &resid, q, long + p.max(q))?;
    // regression coefficients predict y_n; the model writes them with the
    // opposite sign on the autoregressive side
    let mut theta: Vec<f64> = coef[..p].iter().map(|c| -c).collect();
    theta.extend_from_slice(&coef[p..]);
    Ok(arma::project_to_margin(order, &theta, DEFAULT_MARGIN))
}

/// Least squares of `y_n` on `y_{n−1..n−p}` and `e_{n−1..n−q}` for `n ≥ first`.
fn lagged_regression(y: &[f64], p: usize, e: &[f64], q: usize, first: usize) -> Result<Vec<f64>> {
    let k = p + q;
    let mut normal = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    let mut row = DVector::zeros(k);
    for n in first.min(y.len())..y.len() {
        for i in 0..p {
            row[i] = y[n - 1 - i];
        }
        for j in 0..q {
            row[p + j] = e[n - 1 - j];
        }
        normal += &row * row.transpose();
        rhs += &row * y[n];
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let (coef, _) = linalg::regularized_solve_vec(&normal, &rhs);
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config("starting-point regression failed".into()));
    }
    Ok(coef.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma::ArmaParams;

    fn gaussian_grid() -> FreqGrid {
        FreqGrid::equispaced(10, 2.0).unwrap()
    }

    #[test]
    fn gaussian_fit_within_asymptotic_band() {
        let truth = NoiseModel::gaussian(0.3, 1.2).unwrap();
        let grid = gaussian_grid();
        let n = 100_000;
        let data = truth.sample(n, 11).values;
        let fit = offline_ecf_iid(&data, Family::Gaussian, 1.0, &grid, WeightKind::CAtEta).unwrap();
        assert!(fit.converged, "{}", fit.diagnostics);
        let sigma = ecf::sigma_eta(&truth, &grid).unwrap();
        for k in 0..2 {
            let band = 3.0 * (sigma[(k, k)] / n as f64).sqrt();
            assert!((fit.estimate[k] - truth.eta()[k]).abs() < band, "component {k}: {:?}", fit.estimate);
        }
    }

    #[test]
    fn fit_is_no_worse_than_truth() {
        let truth = NoiseModel::variance_gamma(1.0, 0.5, 0.2).unwrap();
        let grid = gaussian_grid();
        let data = truth.sample(20_000, 5).values;
        let init = moment_init(&data, Family::VarianceGamma, 1.0);
        let weight = WeightMatrix::for_kind(WeightKind::CAtEta, &truth.with_eta(&init).unwrap(), &grid).unwrap();
        let fit = offline_ecf_iid_with(&data, Family::VarianceGamma, 1.0, &grid, &weight, init).unwrap();
        assert!(fit.converged, "{}", fit.diagnostics);
        assert!(fit.objective <= ecf_objective(&data, &truth, &grid, &weight));
    }

    #[test]
    fn too_few_frequencies_is_an_identifiability_error() {
        let data = vec![0.1; 100];
        let grid = FreqGrid::new(vec![0.5]).unwrap();
        let err = offline_ecf_iid(&data, Family::Gaussian, 1.0, &grid, WeightKind::Identity).unwrap_err();
        assert!(matches!(err, Error::Identifiability(_)), "{err}");
    }

    #[test]
    fn short_series_rejected() {
        let data = vec![0.1; 15];
        assert!(offline_ecf_iid(&data, Family::Gaussian, 1.0, &gaussian_grid(), WeightKind::Identity).is_err());
    }

    #[test]
    fn moment_init_is_admissible_for_every_family() {
        for truth in [
            NoiseModel::gaussian(-0.2, 0.7).unwrap(),
            NoiseModel::variance_gamma(0.8, 0.4, -0.3).unwrap(),
            NoiseModel::nig(2.0, 0.5, 1.0, 0.1).unwrap(),
        ] {
            let data = truth.sample(50_000, 2).values;
            let init = moment_init(&data, truth.family(), 1.0);
            assert!(truth.family().is_valid(&init), "{:?}: {init:?}", truth.family());
        }
    }

    #[test]
    fn nig_moment_init_is_close() {
        let truth = NoiseModel::nig(2.0, 0.5, 1.0, 0.1).unwrap();
        let data = truth.sample(400_000, 9).values;
        let init = moment_init(&data, truth.family(), 1.0);
        for (a, b) in init.iter().zip(truth.eta()) {
            assert!((a - b).abs() < 0.25 * (1.0 + b.abs()), "{init:?}");
        }
    }

    #[test]
    fn ar1_fit_within_classical_band() {
        // AR(1) with a = −0.5: asymptotic variance of â is (1 − a²)/N
        let params = ArmaParams::new(vec![-0.5], vec![], DEFAULT_MARGIN).unwrap();
        let noise = NoiseModel::gaussian(0.0, 1.0).unwrap();
        let n = 100_000;
        let data = params.simulate(&noise.sample(n, 3).values);
        let fit = offline_pe(&data, ArmaOrder::new(1, 0)).unwrap();
        assert!(fit.converged, "{}", fit.diagnostics);
        let band = 3.0 * ((1.0 - 0.25) / n as f64).sqrt();
        assert!((fit.estimate[0] + 0.5).abs() < band, "{:?}", fit.estimate);
    }

    #[test]
    fn impulse_response_recovered_exactly() {
        let order = ArmaOrder::new(2, 1);
        let truth = [-0.6, 0.2, 0.4];
        let mut impulse = vec![0.0; 400];
        impulse[0] = 1.0;
        let data = arma::simulate_coeffs(order, &truth, &impulse);
        let fit = offline_pe_from(&data, order, &[0.0, 0.0, 0.1]).unwrap();
        assert!(fit.converged, "{}", fit.diagnostics);
        for (a, b) in fit.estimate.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-8, "{:?}", fit.estimate);
        }
    }

    #[test]
    fn unstable_start_is_projected_and_converges() {
        let order = ArmaOrder::new(1, 1);
        let params = ArmaParams::new(vec![-0.6], vec![0.3], DEFAULT_MARGIN).unwrap();
        let noise = NoiseModel::gaussian(0.0, 1.0).unwrap();
        let mut ok = 0;
        for seed in 0..20 {
            let data = params.simulate(&noise.sample(5_000, 100 + seed).values);
            let fit = offline_pe_from(&data, order, &[-1.4, 1.3]).unwrap();
            if fit.converged && (fit.estimate[0] + 0.6).abs() < 0.1 && (fit.estimate[1] - 0.3).abs() < 0.1 {
                ok += 1;
            }
        }
        assert!(ok >= 18, "{ok}/20 converged");
    }

    #[test]
    fn hannan_rissanen_is_near_truth() {
        let order = ArmaOrder::new(1, 1);
        let params = ArmaParams::new(vec![-0.6], vec![0.3], DEFAULT_MARGIN).unwrap();
        let data = params.simulate(&NoiseModel::gaussian(0.0, 1.0).unwrap().sample(20_000, 4).values);
        let init = hannan_rissanen(&data, order).unwrap();
        assert!((init[0] + 0.6).abs() < 0.1 && (init[1] - 0.3).abs() < 0.1, "{init:?}");
    }
}
