use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::arma::{ArmaOrder, FilterState};
use crate::linalg::CMatrix;

/// The stacked estimate `x = (θ_P, R_P, η, R_E, θ_S, G)`.
///
/// Blocks an algorithm does not use have dimension zero. The flat layout used
/// for trajectories and the associated ODE is
/// `θ_P, vec R_P, η, vec R_E, θ_S, Re vec G, Im vec G` (column-major `vec`).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub theta_p: DVector<f64>,
    pub r_p: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub r_e: DMatrix<f64>,
    pub theta_s: DVector<f64>,
    /// `(M_S·p_θ) × p_θ`, rows frequency-major.
    pub g: CMatrix,
}

/// Block dimensions of an [`Estimates`] value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub theta_p: usize,
    pub eta: usize,
    pub theta_s: usize,
    /// Number of system-grid frequencies `M_S` (zero when there is no G block).
    pub grid_s: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        let g_rows = self.grid_s * self.theta_s;
        self.theta_p + self.theta_p.pow(2) + self.eta + self.eta.pow(2) + self.theta_s + 2 * g_rows * self.theta_s
    }

    pub fn zeros(&self) -> Estimates {
        let g_rows = self.grid_s * self.theta_s;
        Estimates {
            theta_p: DVector::zeros(self.theta_p),
            r_p: DMatrix::zeros(self.theta_p, self.theta_p),
            eta: DVector::zeros(self.eta),
            r_e: DMatrix::zeros(self.eta, self.eta),
            theta_s: DVector::zeros(self.theta_s),
            g: CMatrix::zeros(g_rows, self.theta_s),
        }
    }

    /// Offsets of each block inside the flat vector, in layout order:
    /// `θ_P, R_P, η, R_E, θ_S, G`.
    pub fn offsets(&self) -> [std::ops::Range<usize>; 6] {
        let g_len = 2 * self.grid_s * self.theta_s * self.theta_s;
        let lens = [
            self.theta_p,
            self.theta_p.pow(2),
            self.eta,
            self.eta.pow(2),
            self.theta_s,
            g_len,
        ];
        let mut start = 0;
        lens.map(|len| {
            let r = start..start + len;
            start += len;
            r
        })
    }

    /// Column names of the flat vector.
    pub fn names(&self, eta_names: &[&str], order: ArmaOrder) -> Vec<String> {
        let theta_names = order.param_names();
        let mut out = Vec::with_capacity(self.dim());
        if self.theta_p > 0 {
            out.extend(theta_names.iter().map(|n| format!("theta_p.{n}")));
            push_matrix_names(&mut out, "r_p", self.theta_p);
        }
        out.extend(eta_names.iter().take(self.eta).map(|n| format!("eta.{n}")));
        push_matrix_names(&mut out, "r_e", self.eta);
        if self.theta_s > 0 {
            out.extend(theta_names.iter().map(|n| format!("theta_s.{n}")));
        }
        let g_rows = self.grid_s * self.theta_s;
        for part in ["re", "im"] {
            for c in 0..self.theta_s {
                for r in 0..g_rows {
                    out.push(format!("g_{part}.{r}.{c}"));
                }
            }
        }
        out
    }
}

fn push_matrix_names(out: &mut Vec<String>, prefix: &str, p: usize) {
    for c in 0..p {
        for r in 0..p {
            out.push(format!("{prefix}.{r}.{c}"));
        }
    }
}

impl Estimates {
    pub fn layout(&self) -> Layout {
        let theta_s = self.theta_s.len();
        Layout {
            theta_p: self.theta_p.len(),
            eta: self.eta.len(),
            theta_s,
            grid_s: if theta_s == 0 { 0 } else { self.g.nrows() / theta_s },
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().dim());
        out.extend_from_slice(self.theta_p.as_slice());
        out.extend_from_slice(self.r_p.as_slice());
        out.extend_from_slice(self.eta.as_slice());
        out.extend_from_slice(self.r_e.as_slice());
        out.extend_from_slice(self.theta_s.as_slice());
        out.extend(self.g.iter().map(|z| z.re));
        out.extend(self.g.iter().map(|z| z.im));
        out
    }

    /// Inverse of [`Estimates::flatten`].
    pub fn from_flat(layout: Layout, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), layout.dim(), "flat vector length does not match layout");
        let [tp, rp, eta, re, ts, g] = layout.offsets();
        let g_rows = layout.grid_s * layout.theta_s;
        let g_n = g_rows * layout.theta_s;
        let g_flat = &flat[g];
        Estimates {
            theta_p: DVector::from_column_slice(&flat[tp]),
            r_p: DMatrix::from_column_slice(layout.theta_p, layout.theta_p, &flat[rp]),
            eta: DVector::from_column_slice(&flat[eta]),
            r_e: DMatrix::from_column_slice(layout.eta, layout.eta, &flat[re]),
            theta_s: DVector::from_column_slice(&flat[ts]),
            g: CMatrix::from_iterator(
                g_rows,
                layout.theta_s,
                (0..g_n).map(|k| Complex64::new(g_flat[k], g_flat[g_n + k])),
            ),
        }
    }

    /// `self + step·other`.
    pub fn axpy(&self, step: f64, other: &Estimates) -> Estimates {
        Estimates {
            theta_p: &self.theta_p + &other.theta_p * step,
            r_p: &self.r_p + &other.r_p * step,
            eta: &self.eta + &other.eta * step,
            r_e: &self.r_e + &other.r_e * step,
            theta_s: &self.theta_s + &other.theta_s * step,
            g: &self.g + &other.g * Complex64::new(step, 0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// All per-step recursion variables.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub(crate) n: u64,
    pub(crate) x: Estimates,
    pub(crate) x0: Estimates,
    pub(crate) filter_p: FilterState,
    pub(crate) filter_s: FilterState,
    pub(crate) reset_count: u64,
    pub(crate) regularizations: u64,
    pub(crate) c_ridge_events: u64,
}

impl EstimatorState {
    pub fn new(x0: Estimates, order: ArmaOrder) -> Self {
        Self {
            n: 0,
            x: x0.clone(),
            x0,
            filter_p: FilterState::new(order),
            filter_s: FilterState::new(order),
            reset_count: 0,
            regularizations: 0,
            c_ridge_events: 0,
        }
    }

    /// Number of data processed.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn estimates(&self) -> &Estimates {
        &self.x
    }

    pub fn initial(&self) -> &Estimates {
        &self.x0
    }

    pub fn reset_count(&self) -> u64 {
        self.reset_count
    }

    /// Steps in which an `R` block had to be inverted with a ridge.
    pub fn regularizations(&self) -> u64 {
        self.regularizations
    }

    /// Steps in which the plug-in `C` needed its ridge.
    pub fn c_ridge_events(&self) -> u64 {
        self.c_ridge_events
    }

    pub fn filter_p(&self) -> &FilterState {
        &self.filter_p
    }

    pub fn filter_s(&self) -> &FilterState {
        &self.filter_s
    }
}
