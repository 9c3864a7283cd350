use nalgebra::DVector;
use num_complex::Complex64;

use super::AssociatedOde;
use crate::ecf::{self, FreqGrid, WeightKind, WeightMatrix};
use crate::estimators::blocks;
use crate::estimators::{Estimates, Layout};
use crate::linalg;
use crate::noise::NoiseModel;
use crate::Result;

/// Closed-form ODE of the i.i.d. ECF recursion on `x = (η, vec R)`:
///
/// ```text
/// η̇ = R⁻¹ Re(φ_η* K⁻¹ g(η)),   g_j(η) = φ(u_j, η*) − φ(u_j, η)
/// Ṙ = Re(φ_η* K⁻¹ φ_η) − R
/// ```
///
/// `K` is evaluated at the current `η`, as in the recursion.
#[derive(Debug, Clone)]
pub struct IidOde {
    truth: NoiseModel,
    grid: FreqGrid,
    weight: WeightKind,
    phi_true: DVector<Complex64>,
    layout: Layout,
}

impl IidOde {
    pub fn new(truth: NoiseModel, grid: FreqGrid, weight: WeightKind) -> Result<Self> {
        grid.require_identifiable(truth.n_params())?;
        let phi_true = ecf::cf_vector(&truth, &grid);
        let layout = Layout { theta_p: 0, eta: truth.n_params(), theta_s: 0, grid_s: 0 };
        Ok(Self { truth, grid, weight, phi_true, layout })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn truth(&self) -> &NoiseModel {
        &self.truth
    }

    /// The information matrix `Re(φ_η* K⁻¹ φ_η)` at `η`.
    pub fn information_at(&self, model: &NoiseModel) -> Result<nalgebra::DMatrix<f64>> {
        let weight = WeightMatrix::for_kind(self.weight, model, &self.grid)?;
        Ok(blocks::noise_information(model, &self.grid, &weight))
    }
}

impl AssociatedOde for IidOde {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn layout(&self) -> Layout {
        self.layout
    }

    fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let est = Estimates::from_flat(self.layout, x);
        let model = self.truth.with_eta(est.eta.as_slice())?;
        let weight = WeightMatrix::for_kind(self.weight, &model, &self.grid)?;
        let g = &self.phi_true - ecf::cf_vector(&model, &self.grid);
        let jac = ecf::cf_jacobian(&model, &self.grid);
        let out = blocks::noise_correction(&jac, &weight, &g, &est.r_e);
        let mut corr = self.layout.zeros();
        corr.eta = out.eta;
        corr.r_e = out.r;
        Ok(corr.flatten())
    }

    fn contains(&self, x: &[f64]) -> bool {
        let est = Estimates::from_flat(self.layout, x);
        self.truth.family().is_valid(est.eta.as_slice()) && linalg::is_pd_above(&est.r_e, 0.0)
    }

    fn equilibrium(&self) -> Result<Vec<f64>> {
        let mut x = self.layout.zeros();
        x.eta = DVector::from_column_slice(self.truth.eta());
        x.r_e = self.information_at(&self.truth)?;
        Ok(x.flatten())
    }
}
