//! Scalar ARMA(p, q) realization of a Lévy-driven linear system.
//!
//! ```text
//! y_n + a_1 y_{n-1} + … + a_p y_{n-p} = L_n + c_1 L_{n-1} + … + c_q L_{n-q}
//! ```
//!
//! Both polynomials are monic. The parameter vector is `θ = (a_1..a_p, c_1..c_q)`.
//! The innovation filter inverts the system, `ε = A⁻¹(θ) y`, and propagates
//! the sensitivities `ε_θ = ∂ε/∂θ` alongside. All histories start at zero.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::noise::NoiseModel;
use crate::{Error, Result};

/// Default stability margin of the truncation domain.
pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmaOrder {
    pub p: usize,
    pub q: usize,
}

impl ArmaOrder {
    pub fn new(p: usize, q: usize) -> Self {
        Self { p, q }
    }

    pub fn n_params(self) -> usize {
        self.p + self.q
    }

    pub fn max_lag(self) -> usize {
        self.p.max(self.q)
    }

    pub fn param_names(self) -> Vec<String> {
        (1..=self.p).map(|i| format!("a{i}")).chain((1..=self.q).map(|j| format!("c{j}"))).collect()
    }

    /// Margin of the stacked parameter vector `(a, c)`.
    pub fn margin(self, theta: &[f64]) -> f64 {
        stability_margin(&theta[..self.p], &theta[self.p..self.p + self.q])
    }
}

/// ARMA coefficients inside the truncation domain `margin ≥ margin_delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaParams {
    ar: Vec<f64>,
    ma: Vec<f64>,
    margin_delta: f64,
}

impl ArmaParams {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>, margin_delta: f64) -> Result<Self> {
        if !(margin_delta > 0.0 && margin_delta < 1.0) {
            return Err(Error::Config(format!("margin_delta must lie in (0,1), got {margin_delta}")));
        }
        if ar.iter().chain(&ma).any(|v| !v.is_finite()) {
            return Err(Error::Unstable("non-finite coefficient".into()));
        }
        let margin = stability_margin(&ar, &ma);
        if margin < margin_delta {
            return Err(Error::Unstable(format!(
                "ar={ar:?} ma={ma:?} has stability margin {margin:.4} < {margin_delta}"
            )));
        }
        Ok(Self { ar, ma, margin_delta })
    }

    pub fn from_theta(order: ArmaOrder, theta: &[f64], margin_delta: f64) -> Result<Self> {
        if theta.len() != order.n_params() {
            return Err(Error::Config(format!(
                "θ has {} entries, order ({}, {}) needs {}",
                theta.len(),
                order.p,
                order.q,
                order.n_params()
            )));
        }
        Self::new(theta[..order.p].to_vec(), theta[order.p..].to_vec(), margin_delta)
    }

    pub fn ar(&self) -> &[f64] {
        &self.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.ma
    }

    pub fn margin_delta(&self) -> f64 {
        self.margin_delta
    }

    pub fn order(&self) -> ArmaOrder {
        ArmaOrder::new(self.ar.len(), self.ma.len())
    }

    pub fn theta(&self) -> Vec<f64> {
        self.ar.iter().chain(&self.ma).copied().collect()
    }

    pub fn stability_margin(&self) -> f64 {
        stability_margin(&self.ar, &self.ma)
    }

    pub fn simulate(&self, noise: &[f64]) -> Vec<f64> {
        simulate_coeffs(self.order(), &self.theta(), noise)
    }

    pub fn innovation_step(&self, state: &mut FilterState, y: f64) -> Innovation {
        innovation_step(self.order(), &self.theta(), state, y)
    }
}

/// `y_n = −Σ a_i y_{n−i} + L_n + Σ c_j L_{n−j}` with zero pre-sample values.
pub fn simulate(theta: &ArmaParams, noise: &[f64]) -> Vec<f64> {
    theta.simulate(noise)
}

pub(crate) fn simulate_coeffs(order: ArmaOrder, theta: &[f64], noise: &[f64]) -> Vec<f64> {
    let (a, c) = theta.split_at(order.p);
    let mut y = Vec::with_capacity(noise.len());
    for n in 0..noise.len() {
        let mut v = noise[n];
        for (i, ai) in a.iter().enumerate() {
            if n > i {
                v -= ai * y[n - 1 - i];
            }
        }
        for (j, cj) in c.iter().enumerate() {
            if n > j {
                v += cj * noise[n - 1 - j];
            }
        }
        y.push(v);
    }
    y
}

/// `1 − max |root|` over the AR and MA characteristic polynomials.
pub fn stability_margin(ar: &[f64], ma: &[f64]) -> f64 {
    1.0 - max_root_modulus(ar).max(max_root_modulus(ma))
}

/// Largest root modulus of `z^d + c_1 z^{d−1} + … + c_d`.
pub fn max_root_modulus(coeffs: &[f64]) -> f64 {
    match coeffs.len() {
        0 => 0.0,
        1 => coeffs[0].abs(),
        2 => {
            let (b, c) = (coeffs[0], coeffs[1]);
            let disc = b * b - 4.0 * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                ((-b + s) / 2.0).abs().max(((-b - s) / 2.0).abs())
            } else {
                c.sqrt()
            }
        }
        _ => poly_roots(coeffs).iter().map(|r| r.norm()).fold(0.0, f64::max),
    }
}

/// Roots of a monic polynomial via companion-matrix eigenvalues.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let d = coeffs.len();
    if d == 0 {
        return Vec::new();
    }
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for (j, c) in coeffs.iter().enumerate() {
        comp[(0, j)] = -c;
    }
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs[1..].iter().map(|c| c.re).collect()
}

/// Pulls every root with modulus above `1 − margin_delta` radially back onto
/// that circle.
pub fn project_to_margin(order: ArmaOrder, theta: &[f64], margin_delta: f64) -> Vec<f64> {
    let radius = 1.0 - margin_delta;
    let shrink = |coeffs: &[f64]| -> Vec<f64> {
        if max_root_modulus(coeffs) <= radius {
            return coeffs.to_vec();
        }
        let roots: Vec<Complex64> = poly_roots(coeffs)
            .into_iter()
            .map(|r| if r.norm() > radius { r * (radius / r.norm()) } else { r })
            .collect();
        poly_from_roots(&roots)
    };
    let mut out = shrink(&theta[..order.p]);
    out.extend(shrink(&theta[order.p..order.p + order.q]));
    out
}

/// Histories of the innovation filter, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    order: ArmaOrder,
    y_hist: Vec<f64>,
    eps_hist: Vec<f64>,
    sens_hist: Vec<Vec<f64>>,
    steps: u64,
}

impl FilterState {
    pub fn new(order: ArmaOrder) -> Self {
        Self {
            order,
            y_hist: vec![0.0; order.p],
            eps_hist: vec![0.0; order.q],
            sens_hist: vec![vec![0.0; order.n_params()]; order.q],
            steps: 0,
        }
    }

    pub fn order(&self) -> ArmaOrder {
        self.order
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// One output of the innovation filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub eps: f64,
    /// `∂ε_n/∂θ`, ordered as `θ`.
    pub grad: Vec<f64>,
}

/// Advances the innovation filter by one observation at parameter `theta`.
///
/// ```text
/// ε_n        = y_n + Σ a_i y_{n−i} − Σ c_j ε_{n−j}
/// ∂ε_n/∂a_i  = y_{n−i} − Σ_j c_j ∂ε_{n−j}/∂a_i
/// ∂ε_n/∂c_j  = −ε_{n−j} − Σ_k c_k ∂ε_{n−k}/∂c_j
/// ```
pub fn innovation_step(order: ArmaOrder, theta: &[f64], state: &mut FilterState, y: f64) -> Innovation {
    debug_assert_eq!(state.order, order);
    let (a, c) = theta.split_at(order.p);
    let np = order.n_params();

    let mut eps = y;
    for (ai, yi) in a.iter().zip(&state.y_hist) {
        eps += ai * yi;
    }
    for (cj, ej) in c.iter().zip(&state.eps_hist) {
        eps -= cj * ej;
    }

    let mut grad = vec![0.0; np];
    for i in 0..order.p {
        grad[i] = state.y_hist[i];
    }
    for j in 0..order.q {
        grad[order.p + j] = -state.eps_hist[j];
    }
    for (cj, past) in c.iter().zip(&state.sens_hist) {
        for (g, s) in grad.iter_mut().zip(past) {
            *g -= cj * s;
        }
    }

    if order.p > 0 {
        state.y_hist.rotate_right(1);
        state.y_hist[0] = y;
    }
    if order.q > 0 {
        state.eps_hist.rotate_right(1);
        state.eps_hist[0] = eps;
        state.sens_hist.rotate_right(1);
        state.sens_hist[0].copy_from_slice(&grad);
    }
    state.steps += 1;
    Innovation { eps, grad }
}

/// Transient discarded by path averages: `10·max(p, q)` steps.
pub fn transient_len(order: ArmaOrder) -> usize {
    10 * order.max_lag()
}

/// Monte Carlo `R_P = E[ε_θ ε_θᵀ]` at `theta` over a fresh path of `n` steps
/// (after the transient).
pub fn r_p_estimate(theta: &ArmaParams, model: &NoiseModel, n: usize, seed: u64) -> DMatrix<f64> {
    let order = theta.order();
    let np = order.n_params();
    if np == 0 || n == 0 {
        return DMatrix::zeros(np, np);
    }
    let burn = transient_len(order);
    let noise = model.sample(n + burn, seed).values;
    let y = theta.simulate(&noise);
    let coeffs = theta.theta();
    let mut state = FilterState::new(order);
    let mut acc = DMatrix::<f64>::zeros(np, np);
    for (k, &yk) in y.iter().enumerate() {
        let inn = innovation_step(order, &coeffs, &mut state, yk);
        if k >= burn {
            for i in 0..np {
                for j in 0..np {
                    acc[(i, j)] += inn.grad[i] * inn.grad[j];
                }
            }
        }
    }
    acc / n as f64
}
