use serde::{Deserialize, Serialize};

use super::state::{Estimates, EstimatorState};
use crate::arma::ArmaOrder;
use crate::linalg;
use crate::noise::Family;
use crate::{Error, Result};

/// Eigenvalue floor for the `R` blocks.
pub const PD_FLOOR: f64 = 1e-10;

/// The compact set `D_0` in which the recursion is confined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationDomain {
    pub family: Family,
    pub eta_lower: Vec<f64>,
    pub eta_upper: Vec<f64>,
    pub order: ArmaOrder,
    pub margin_delta: f64,
    pub pd_floor: f64,
}

impl TruncationDomain {
    pub fn new(
        family: Family,
        eta_lower: Vec<f64>,
        eta_upper: Vec<f64>,
        order: ArmaOrder,
        margin_delta: f64,
    ) -> Result<Self> {
        if eta_lower.len() != eta_upper.len() {
            return Err(Error::Config("eta bounds have different lengths".into()));
        }
        if eta_lower.iter().zip(&eta_upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config(format!("empty eta box {eta_lower:?}..{eta_upper:?}")));
        }
        if !(margin_delta > 0.0 && margin_delta < 1.0) {
            return Err(Error::Config(format!("margin_delta {margin_delta} outside (0,1)")));
        }
        Ok(Self { family, eta_lower, eta_upper, order, margin_delta, pd_floor: PD_FLOOR })
    }

    /// Default box around the initial noise parameters: scales within a
    /// factor 4 of their start, other parameters within `±2(1+|η|)`.
    ///
    /// Early steps see a C matrix that is nearly singular once a scale
    /// estimate collapses towards zero, and the next correction can throw
    /// the estimate far away. Keeping scales off zero and infinity turns those
    /// rare excursions into resets instead of slow recoveries.
    pub fn around(family: Family, eta_init: &[f64], order: ArmaOrder, margin_delta: f64) -> Result<Self> {
        family.validate(eta_init)?;
        let (lower, upper) = eta_init
            .iter()
            .zip(family.positive_params())
            .map(|(&v, &positive)| {
                if positive {
                    (v / 4.0, v * 4.0)
                } else {
                    let w = 2.0 * (1.0 + v.abs());
                    (v - w, v + w)
                }
            })
            .unzip();
        Self::new(family, lower, upper, order, margin_delta)
    }

    /// A wide box `η ± 5(1+|η|)`, intersected with the family domain.
    pub fn wide(family: Family, eta_init: &[f64], order: ArmaOrder, margin_delta: f64) -> Result<Self> {
        let width: Vec<f64> = eta_init.iter().map(|v| 5.0 * (1.0 + v.abs())).collect();
        let lower = eta_init.iter().zip(&width).map(|(v, w)| v - w).collect();
        let upper = eta_init.iter().zip(&width).map(|(v, w)| v + w).collect();
        Self::new(family, lower, upper, order, margin_delta)
    }

    pub fn contains_eta(&self, eta: &[f64]) -> bool {
        eta.len() == self.eta_lower.len()
            && eta
                .iter()
                .zip(self.eta_lower.iter().zip(&self.eta_upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
            && self.family.is_valid(eta)
    }

    pub fn contains_theta(&self, theta: &[f64]) -> bool {
        theta.iter().all(|v| v.is_finite()) && self.order.margin(theta) >= self.margin_delta
    }

    /// Membership of the stacked estimate in `D_0`. Empty blocks are ignored.
    pub fn contains(&self, x: &Estimates) -> bool {
        if x.eta.len() > 0 && !self.contains_eta(x.eta.as_slice()) {
            return false;
        }
        if x.theta_p.len() > 0 && !self.contains_theta(x.theta_p.as_slice()) {
            return false;
        }
        if x.theta_s.len() > 0 && !self.contains_theta(x.theta_s.as_slice()) {
            return false;
        }
        linalg::is_pd_above(&x.r_e, self.pd_floor)
            && linalg::is_pd_above(&x.r_p, self.pd_floor)
            && x.g.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Euclidean diameter of the η box.
    pub fn eta_diameter(&self) -> f64 {
        self.eta_lower.iter().zip(&self.eta_upper).map(|(l, u)| (u - l).powi(2)).sum::<f64>().sqrt()
    }

    /// Diameter of a box containing every stable `θ`: each coefficient of a
    /// monic polynomial with roots in the unit disk is bounded by a binomial.
    pub fn theta_diameter(&self) -> f64 {
        let side = |deg: usize| -> f64 {
            (1..=deg).map(|k| (2.0 * binomial(deg, k)).powi(2)).sum::<f64>()
        };
        (side(self.order.p) + side(self.order.q)).sqrt()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// What happened to the tentative update in one step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    Accepted,
    /// The candidate left `D_0`; it is kept for the trajectory log.
    Reset { escaped: Estimates },
}

impl StepEvent {
    pub fn is_reset(&self) -> bool {
        matches!(self, StepEvent::Reset { .. })
    }
}

/// One DFL step: `x_{n+1−} = x_n + correction/(n+1)`, accepted if it lies in
/// `D_0`, otherwise the whole of `x` is reset to `x_0`.
///
/// Corrections that are not finite, or whose `η`/`θ` blocks exceed the domain
/// diameter times `n+1`, cannot land inside the domain and reset directly.
pub fn dfl_step(state: &mut EstimatorState, correction: &Estimates, domain: &TruncationDomain) -> StepEvent {
    let scale = (state.n + 1) as f64;
    let candidate = state.x.axpy(1.0 / scale, correction);
    let too_large = correction.eta.norm() > domain.eta_diameter() * scale
        || correction.theta_p.norm() > domain.theta_diameter() * scale
        || correction.theta_s.norm() > domain.theta_diameter() * scale;
    state.n += 1;
    if !too_large && correction.is_finite() && domain.contains(&candidate) {
        state.x = candidate;
        StepEvent::Accepted
    } else {
        state.x = state.x0.clone();
        state.reset_count += 1;
        StepEvent::Reset { escaped: candidate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::state::Layout;
    use nalgebra::{DMatrix, DVector};

    fn gaussian_domain() -> TruncationDomain {
        TruncationDomain::new(Family::Gaussian, vec![-1.0, 0.1], vec![1.0, 3.0], ArmaOrder::new(0, 0), 0.05)
            .unwrap()
    }

    fn iid_state() -> EstimatorState {
        let mut x0 = Layout { theta_p: 0, eta: 2, theta_s: 0, grid_s: 0 }.zeros();
        x0.eta = DVector::from_vec(vec![0.0, 1.0]);
        x0.r_e = DMatrix::identity(2, 2);
        EstimatorState::new(x0, ArmaOrder::new(0, 0))
    }

    #[test]
    fn zero_correction_only_advances_counter() {
        let domain = gaussian_domain();
        let mut st = iid_state();
        let zero = st.x.layout().zeros();
        let before = st.x.clone();
        assert_eq!(dfl_step(&mut st, &zero, &domain), StepEvent::Accepted);
        assert_eq!(st.x, before);
        assert_eq!(st.n, 1);
    }

    #[test]
    fn escape_resets_to_initial_point() {
        let domain = gaussian_domain();
        let mut st = iid_state();
        let mut corr = st.x.layout().zeros();
        corr.eta[0] = 0.5;
        corr.r_e = DMatrix::identity(2, 2) * 0.1;
        dfl_step(&mut st, &corr, &domain);
        assert_ne!(st.x, st.x0);
        corr.eta[0] = 100.0;
        let ev = dfl_step(&mut st, &corr, &domain);
        assert!(ev.is_reset());
        assert_eq!(st.x, st.x0);
        assert_eq!(st.reset_count, 1);
        if let StepEvent::Reset { escaped } = ev {
            assert!(!domain.contains(&escaped));
        }
    }

    #[test]
    fn gain_is_one_over_n_plus_one() {
        let domain = gaussian_domain();
        let mut st = iid_state();
        let mut corr = st.x.layout().zeros();
        corr.eta[0] = 0.3;
        corr.r_e = DMatrix::identity(2, 2) * 0.2;
        for _ in 0..2 {
            let n = st.n;
            let before = st.x.clone();
            dfl_step(&mut st, &corr, &domain);
            let diff = (st.x.eta[0] - before.eta[0]) * (n + 1) as f64;
            assert!((diff - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn default_box_keeps_scales_positive() {
        let d = TruncationDomain::around(Family::NormalInverseGaussian, &[2.0, 0.5, 1.0, -0.3], ArmaOrder::new(0, 0), 0.05)
            .unwrap();
        assert_eq!(d.eta_lower, vec![0.5, -2.5, 0.25, -0.3 - 2.6]);
        assert_eq!(d.eta_upper, vec![8.0, 3.5, 4.0, -0.3 + 2.6]);
        assert!(d.contains_eta(&[2.0, 0.5, 1.0, -0.3]));
        let wide = TruncationDomain::wide(Family::Gaussian, &[0.0, 1.0], ArmaOrder::new(0, 0), 0.05).unwrap();
        assert!(wide.contains_eta(&[4.9, 10.9]));
        assert!(!wide.contains_eta(&[0.0, -0.1]));
    }

    #[test]
    fn non_finite_correction_resets() {
        let domain = gaussian_domain();
        let mut st = iid_state();
        let mut corr = st.x.layout().zeros();
        corr.eta[1] = f64::NAN;
        assert!(dfl_step(&mut st, &corr, &domain).is_reset());
        assert_eq!(st.x, st.x0);
    }

    #[test]
    fn indefinite_r_block_is_outside() {
        let domain = gaussian_domain();
        let mut x = iid_state().x;
        assert!(domain.contains(&x));
        x.r_e[(1, 1)] = -1.0;
        assert!(!domain.contains(&x));
    }

    #[test]
    fn theta_membership_uses_margin() {
        let domain =
            TruncationDomain::new(Family::Gaussian, vec![-1.0, 0.1], vec![1.0, 3.0], ArmaOrder::new(1, 0), 0.05)
                .unwrap();
        assert!(domain.contains_theta(&[-0.9]));
        assert!(!domain.contains_theta(&[-0.97]));
        assert!(domain.theta_diameter() >= 2.0);
    }
}
