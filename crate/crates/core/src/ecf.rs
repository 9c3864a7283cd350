//! ECF scores, the `C` matrix, weighting matrices and closed-form asymptotic
//! covariances.
//!
//! Complex bilinear forms that feed a real parameter update are reduced to
//! their real part, e.g. `Re(φ_η* K⁻¹ h)`. This is the same as augmenting the
//! grid with the conjugate frequencies `−u_k`.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, HermCholesky, HermitianFactor};
use crate::noise::NoiseModel;
use crate::{Error, Result};

/// Relative ridge added to `C` when it is numerically singular.
pub const C_RIDGE: f64 = 1e-10;

/// Fixed real frequencies `u_1..u_M` at which the ECF is matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FreqGrid {
    u: Vec<f64>,
}

impl FreqGrid {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Grid("grid is empty".into()));
        }
        if let Some(bad) = u.iter().find(|v| !v.is_finite() || **v == 0.0) {
            return Err(Error::Grid(format!("frequencies must be finite and nonzero, got {bad}")));
        }
        for (i, a) in u.iter().enumerate() {
            if u[i + 1..].iter().any(|b| a == b) {
                return Err(Error::Grid(format!("duplicate frequency {a}")));
            }
        }
        Ok(Self { u })
    }

    /// `m` equispaced points `u_max/m, 2u_max/m, …, u_max`.
    pub fn equispaced(m: usize, u_max: f64) -> Result<Self> {
        if m == 0 || !(u_max > 0.0) {
            return Err(Error::Grid(format!("need m > 0 and u_max > 0, got m={m}, u_max={u_max}")));
        }
        Self::new((1..=m).map(|k| u_max * k as f64 / m as f64).collect())
    }

    /// Ten equispaced points in `(0, 2/sd]` with `sd` the sample standard
    /// deviation of `data`.
    pub fn default_for_data(data: &[f64]) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::Grid("need at least two observations to scale the grid".into()));
        }
        let mean = data.iter().sum::<f64>() / n as f64;
        let var = data.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::Grid("data have zero spread".into()));
        }
        Self::equispaced(10, 2.0 / sd)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    /// Necessary condition `M ≥ p` for identifying `p` parameters.
    pub fn require_identifiable(&self, p: usize) -> Result<()> {
        if self.len() < p {
            return Err(Error::Identifiability(format!(
                "grid has {} frequencies but {} parameters are estimated",
                self.len(),
                p
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for FreqGrid {
    type Error = Error;
    fn try_from(u: Vec<f64>) -> Result<Self> {
        Self::new(u)
    }
}

impl From<FreqGrid> for Vec<f64> {
    fn from(g: FreqGrid) -> Self {
        g.u
    }
}

/// `(φ(u_1,η), …, φ(u_M,η))`.
pub fn cf_vector(model: &NoiseModel, grid: &FreqGrid) -> DVector<Complex64> {
    DVector::from_iterator(grid.len(), grid.as_slice().iter().map(|&u| model.cf(u)))
}

/// `M × p_η` matrix with rows `∂φ(u_j, η)/∂η`.
pub fn cf_jacobian(model: &NoiseModel, grid: &FreqGrid) -> CMatrix {
    let p = model.n_params();
    let mut out = CMatrix::zeros(grid.len(), p);
    for (j, &u) in grid.as_slice().iter().enumerate() {
        for (k, g) in model.cf_grad(u).into_iter().enumerate() {
            out[(j, k)] = g;
        }
    }
    out
}

/// `ψ = (iu_1 φ(u_1,η), …, iu_M φ(u_M,η))`.
pub fn psi_vector(model: &NoiseModel, grid: &FreqGrid) -> DVector<Complex64> {
    DVector::from_iterator(
        grid.len(),
        grid.as_slice().iter().map(|&u| Complex64::new(0.0, u) * model.cf(u)),
    )
}

/// Noise score `h_j = exp(i u_j y) − φ(u_j, η)`.
pub fn noise_score(y: f64, model: &NoiseModel, grid: &FreqGrid) -> DVector<Complex64> {
    let phi = cf_vector(model, grid);
    score_from_cf(y, grid, &phi)
}

pub(crate) fn score_from_cf(y: f64, grid: &FreqGrid, phi: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_iterator(
        grid.len(),
        grid.as_slice().iter().zip(phi.iter()).map(|(&u, &p)| {
            let (s, c) = (u * y).sin_cos();
            Complex64::new(c, s) - p
        }),
    )
}

/// `C_{kl} = φ(u_k − u_l) − φ(u_k)φ(−u_l)` without any regularization.
pub fn c_matrix_raw(model: &NoiseModel, grid: &FreqGrid) -> CMatrix {
    let u = grid.as_slice();
    let m = u.len();
    let phi = cf_vector(model, grid);
    let mut c = CMatrix::zeros(m, m);
    for k in 0..m {
        for l in k..m {
            let v = model.cf(u[k] - u[l]) - phi[k] * phi[l].conj();
            c[(k, l)] = v;
            c[(l, k)] = v.conj();
        }
        c[(k, k)] = Complex64::new(c[(k, k)].re, 0.0);
    }
    c
}

/// The covariance matrix `C` of `(exp(i u_k Y))_k`, regularized into a
/// weighting matrix. A ridge of `1e-10·trace(C)/M` is added when the smallest
/// eigenvalue falls below it; [`WeightMatrix::ridge`] reports the event.
pub fn c_matrix(model: &NoiseModel, grid: &FreqGrid) -> Result<WeightMatrix> {
    let raw = c_matrix_raw(model, grid);
    let factor = linalg::factor_hermitian(&raw, C_RIDGE).ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "C matrix for {:?} {:?} stays indefinite after regularization",
            model.family(),
            model.eta()
        ))
    })?;
    Ok(WeightMatrix::from_factor(WeightKind::CAtEta, raw, factor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Identity,
    /// `C` evaluated at the current noise estimate.
    CAtEta,
    Custom,
}

impl std::str::FromStr for WeightKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "i" => Ok(WeightKind::Identity),
            "c" | "c-at-eta" | "optimal" => Ok(WeightKind::CAtEta),
            "custom" => Ok(WeightKind::Custom),
            other => Err(Error::Config(format!("unknown weight kind '{other}'"))),
        }
    }
}

/// Hermitian positive definite weighting matrix `K` with its factorization.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    kind: WeightKind,
    value: CMatrix,
    ridge: f64,
    chol: HermCholesky,
}

impl WeightMatrix {
    pub fn identity(m: usize) -> Self {
        let value = CMatrix::identity(m, m);
        let chol = HermCholesky::new(&value).expect("identity is PD");
        Self { kind: WeightKind::Identity, value, ridge: 0.0, chol }
    }

    pub fn custom(value: CMatrix) -> Result<Self> {
        if !value.is_square() {
            return Err(Error::NotPositiveDefinite("weight matrix must be square".into()));
        }
        let herm_err = (&value - value.adjoint()).norm();
        if herm_err > 1e-10 * value.norm().max(1.0) {
            return Err(Error::NotPositiveDefinite(format!("weight matrix not Hermitian ({herm_err:e})")));
        }
        let factor = linalg::factor_hermitian(&value, 0.0)
            .ok_or_else(|| Error::NotPositiveDefinite("custom weight matrix".into()))?;
        Ok(Self::from_factor(WeightKind::Custom, value, factor))
    }

    fn from_factor(kind: WeightKind, raw: CMatrix, factor: HermitianFactor) -> Self {
        let n = raw.nrows();
        let value = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0)
            + CMatrix::identity(n, n) * Complex64::new(factor.ridge, 0.0);
        Self { kind, value, ridge: factor.ridge, chol: factor.chol }
    }

    /// Builds the weight of the requested kind for the model's current parameters.
    pub fn for_kind(kind: WeightKind, model: &NoiseModel, grid: &FreqGrid) -> Result<Self> {
        match kind {
            WeightKind::Identity => Ok(Self::identity(grid.len())),
            WeightKind::CAtEta => c_matrix(model, grid),
            WeightKind::Custom => Err(Error::Config(
                "custom weights must be supplied as a matrix, not built from the model".into(),
            )),
        }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    /// The (regularized) matrix `K`.
    pub fn value(&self) -> &CMatrix {
        &self.value
    }

    /// Ridge added during regularization; zero when none was needed.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.value.nrows()
    }

    /// `K⁻¹ b`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        self.chol.solve_vec(b)
    }
}

/// `Re(a* K⁻¹ b)`.
pub fn real_form(a: &CMatrix, weight: &WeightMatrix, b: &CMatrix) -> DMatrix<f64> {
    linalg::real_part(&(a.adjoint() * weight.solve(b)))
}

/// `Re(φ_η* K⁻¹ φ_η)`: the information matrix of the ECF fit.
pub fn information(jac: &CMatrix, weight: &WeightMatrix) -> DMatrix<f64> {
    linalg::symmetrize(&real_form(jac, weight, jac))
}

/// `Σ_ηη = (Re φ_η* C⁻¹ φ_η)⁻¹` at the model's parameters.
pub fn sigma_eta(model: &NoiseModel, grid: &FreqGrid) -> Result<DMatrix<f64>> {
    grid.require_identifiable(model.n_params())?;
    let c = c_matrix(model, grid)?;
    let info = information(&cf_jacobian(model, grid), &c);
    invert_information(&info, model.family().param_names())
}

fn invert_information(info: &DMatrix<f64>, names: &[&str]) -> Result<DMatrix<f64>> {
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut deficient = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if !(lam > 1e-10 * max) {
            let dir: Vec<String> = eig
                .eigenvectors
                .column(k)
                .iter()
                .zip(names)
                .map(|(v, n)| format!("{n}:{v:+.3}"))
                .collect();
            deficient.push(format!("[{}]", dir.join(", ")));
        }
    }
    if !deficient.is_empty() || max == 0.0 {
        return Err(Error::Identifiability(format!(
            "information matrix is rank deficient along {}",
            deficient.join(" ")
        )));
    }
    let inv = Cholesky::new(info.clone())
        .ok_or_else(|| Error::Identifiability("information matrix not PD".into()))?
        .inverse();
    Ok(linalg::symmetrize(&inv))
}

/// Scalar `s = Re(ψ* C⁻¹ ψ)`.
pub fn psi_information(model: &NoiseModel, grid: &FreqGrid) -> Result<f64> {
    let c = c_matrix(model, grid)?;
    let psi = psi_vector(model, grid);
    let s = psi.dotc(&c.solve_vec(&psi)).re;
    if !(s > 0.0) {
        return Err(Error::Identifiability("ψ* C⁻¹ ψ is not positive".into()));
    }
    Ok(s)
}

/// `Σ_θθ = s⁻¹ R_P⁻¹` with `s = Re(ψ* C⁻¹ ψ)`.
pub fn sigma_theta(model: &NoiseModel, grid: &FreqGrid, r_p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = psi_information(model, grid)?;
    let inv = Cholesky::new(linalg::symmetrize(r_p))
        .ok_or_else(|| Error::NotPositiveDefinite("R_P is singular".into()))?
        .inverse();
    Ok(linalg::symmetrize(&inv) / s)
}

/// Kronecker product `C ⊗ R_P`.
pub fn kron_weight(c: &CMatrix, r_p: &DMatrix<f64>) -> CMatrix {
    linalg::kron_complex(c, &linalg::to_complex(r_p))
}

/// Weighting of the stacked system score (length `M·p_θ`, frequency-major).
#[derive(Debug, Clone)]
pub enum SystemWeight {
    Identity { dim: usize },
    /// `C ⊗ R`, solved through its factors.
    Kron { c: WeightMatrix, r: DMatrix<f64>, r_chol: Cholesky<f64, nalgebra::Dyn> },
    Dense(WeightMatrix),
}

impl SystemWeight {
    pub fn kron(c: WeightMatrix, r: DMatrix<f64>) -> Result<Self> {
        let r = linalg::symmetrize(&r);
        let r_chol = Cholesky::new(r.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Kronecker factor R".into()))?;
        Ok(SystemWeight::Kron { c, r, r_chol })
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemWeight::Identity { dim } => *dim,
            SystemWeight::Kron { c, r, .. } => c.dim() * r.nrows(),
            SystemWeight::Dense(w) => w.dim(),
        }
    }

    /// Full matrix, for inspection and tests.
    pub fn to_matrix(&self) -> CMatrix {
        match self {
            SystemWeight::Identity { dim } => CMatrix::identity(*dim, *dim),
            SystemWeight::Kron { c, r, .. } => kron_weight(c.value(), r),
            SystemWeight::Dense(w) => w.value().clone(),
        }
    }

    /// `K⁻¹ b`; for the Kronecker form `(C ⊗ R)⁻¹ vec(X) = vec(C⁻¹ X R⁻¹)`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        match self {
            SystemWeight::Identity { .. } => b.clone(),
            SystemWeight::Dense(w) => w.solve(b),
            SystemWeight::Kron { c, r_chol, r, .. } => {
                let m = c.dim();
                let p = r.nrows();
                let rinv = linalg::to_complex(&r_chol.inverse());
                let mut out = CMatrix::zeros(b.nrows(), b.ncols());
                for col in 0..b.ncols() {
                    // row j of X holds block j of the stacked vector
                    let x = CMatrix::from_fn(m, p, |j, a| b[(j * p + a, col)]);
                    let y = c.solve(&x) * &rinv;
                    for j in 0..m {
                        for a in 0..p {
                            out[(j * p + a, col)] = y[(j, a)];
                        }
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{empirical_cf, Family};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn std_normal() -> NoiseModel {
        NoiseModel::gaussian(0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(FreqGrid::new(vec![]).is_err());
        assert!(FreqGrid::new(vec![0.0, 1.0]).is_err());
        assert!(FreqGrid::new(vec![1.0, 1.0]).is_err());
        assert!(FreqGrid::new(vec![f64::NAN]).is_err());
        let g = FreqGrid::equispaced(10, 2.0).unwrap();
        assert_eq!(g.len(), 10);
        assert_relative_eq!(g.as_slice()[0], 0.2);
        assert_relative_eq!(g.as_slice()[9], 2.0);
        assert!(g.require_identifiable(11).is_err());
    }

    #[test]
    fn score_at_zero_observation() {
        let g = FreqGrid::new(vec![1.0]).unwrap();
        let h = noise_score(0.0, &std_normal(), &g);
        assert_relative_eq!(h[0].re, 1.0 - (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(h[0].re, 0.393469340287, epsilon = 1e-12);
    }

    #[test]
    fn score_is_bounded() {
        let g = FreqGrid::equispaced(7, 3.0).unwrap();
        let m = NoiseModel::nig(1.0, 0.3, 0.5, 0.2).unwrap();
        for y in [-50.0, -1.0, 0.0, 0.3, 7.5, 1e6] {
            assert!(noise_score(y, &m, &g).iter().all(|h| h.norm() <= 2.0));
        }
    }

    #[test]
    fn score_has_zero_mean_at_truth() {
        let m = NoiseModel::variance_gamma(1.0, 0.3, 0.2).unwrap();
        let g = FreqGrid::equispaced(6, 2.0).unwrap();
        let data = m.sample(1_000_000, 8).values;
        let mut acc = DVector::<Complex64>::zeros(g.len());
        for &y in &data {
            acc += noise_score(y, &m, &g);
        }
        acc /= Complex64::new(data.len() as f64, 0.0);
        for h in acc.iter() {
            assert!(h.norm() < 5e-3, "{h}");
        }
    }

    #[test]
    fn c_diagonal_closed_form() {
        let g = FreqGrid::new(vec![1.0]).unwrap();
        let c = c_matrix_raw(&std_normal(), &g);
        assert_relative_eq!(c[(0, 0)].re, 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(c[(0, 0)].re, 0.632120558829, epsilon = 1e-12);
    }

    #[test]
    fn c_formula_vanishes_at_zero_frequency() {
        // FreqGrid rejects u=0; evaluate the formula directly.
        let m = std_normal();
        let v = m.cf(0.0 - 0.0) - m.cf(0.0) * m.cf(-0.0);
        assert_eq!(v.norm(), 0.0);
    }

    fn sample_covariance(data: &[f64], u: &[f64]) -> CMatrix {
        let m = u.len();
        let n = data.len() as f64;
        let means: Vec<Complex64> = u.iter().map(|&uk| empirical_cf(data, uk)).collect();
        let mut out = CMatrix::zeros(m, m);
        for &y in data {
            let z: Vec<Complex64> =
                u.iter().zip(&means).map(|(&uk, mk)| Complex64::new(0.0, uk * y).exp() - mk).collect();
            for k in 0..m {
                for l in 0..m {
                    out[(k, l)] += z[k] * z[l].conj();
                }
            }
        }
        out / Complex64::new(n, 0.0)
    }

    #[test]
    fn c_matches_sample_covariance_for_gaussian() {
        let m = NoiseModel::gaussian(0.4, 1.1).unwrap();
        let g = FreqGrid::new(vec![0.3, -0.9, 1.4, 2.1, -0.5]).unwrap();
        let data = m.sample(1_000_000, 42).values;
        let emp = sample_covariance(&data, g.as_slice());
        let c = c_matrix_raw(&m, &g);
        for (a, b) in emp.iter().zip(c.iter()) {
            assert!((a - b).norm() < 5e-3);
        }
        let single = sample_covariance(&std_normal().sample(1_000_000, 1).values, &[1.0]);
        assert!((single[(0, 0)].re - (1.0 - (-1.0f64).exp())).abs() < 3e-3);
    }

    #[test]
    fn c_is_hermitian_psd() {
        for m in [
            std_normal(),
            NoiseModel::variance_gamma(0.7, 0.9, 0.4).unwrap(),
            NoiseModel::nig(1.5, -0.4, 0.8, 0.1).unwrap(),
        ] {
            let g = FreqGrid::equispaced(10, 2.0).unwrap();
            let c = c_matrix_raw(&m, &g);
            assert!((&c - c.adjoint()).norm() < 1e-15);
            let ev = c.clone().symmetric_eigenvalues();
            let min = ev.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            assert!(min >= -1e-10 * c.norm(), "{:?} min eig {min}", m.family());
        }
    }

    #[test]
    fn ridge_reported_for_ill_conditioned_grid() {
        let g = FreqGrid::equispaced(10, 2.0).unwrap();
        let w = c_matrix(&std_normal(), &g).unwrap();
        assert!(w.ridge() > 0.0);
        let wide = FreqGrid::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(c_matrix(&std_normal(), &wide).unwrap().ridge(), 0.0);
    }

    #[test]
    fn sigma_eta_single_frequency_location() {
        let m = NoiseModel::gaussian(0.0, 1.0).unwrap();
        let g = FreqGrid::new(vec![1.0]).unwrap();
        // μ-only: |iuφ|²/(1 − e^{-u²}) inverted
        let phi_mu = Complex64::new(0.0, 1.0) * m.cf(1.0);
        let c = c_matrix_raw(&m, &g)[(0, 0)].re;
        let sigma = c / phi_mu.norm_sqr();
        assert_relative_eq!(sigma, E - 1.0, epsilon = 1e-12);
        assert_relative_eq!(1.0 / psi_information(&m, &g).unwrap(), E - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sigma_eta_two_parameters_single_frequency_is_singular() {
        let g = FreqGrid::new(vec![1.0]).unwrap();
        let err = sigma_eta(&std_normal(), &g).unwrap_err();
        assert!(matches!(err, Error::Identifiability(_)));
    }

    #[test]
    fn rank_deficiency_names_directions() {
        let info = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match invert_information(&info, &["mu", "sigma"]) {
            Err(Error::Identifiability(msg)) => assert!(msg.contains("mu:") && msg.contains("sigma:"), "{msg}"),
            other => panic!("expected identifiability error, got {other:?}"),
        }
    }

    #[test]
    fn sigma_eta_dense_grid_approaches_fisher_bound() {
        // μ-only: CRLB for a unit-variance Gaussian location is 1.
        let u: Vec<f64> = (-20..=20).filter(|&k| k != 0).map(|k| 0.2 * k as f64).collect();
        let g = FreqGrid::new(u).unwrap();
        let s = psi_information(&std_normal(), &g).unwrap();
        let sigma = 1.0 / s;
        assert!((sigma - 1.0).abs() < 0.05, "{sigma}");
        let single = 1.0 / psi_information(&std_normal(), &FreqGrid::new(vec![1.0]).unwrap()).unwrap();
        assert!(sigma < single);
    }

    #[test]
    fn sigma_eta_is_symmetric_pd() {
        for m in [
            NoiseModel::gaussian(0.3, 1.0).unwrap(),
            NoiseModel::variance_gamma(0.7, 0.5, 0.2).unwrap(),
            NoiseModel::nig(2.0, 0.4, 1.0, 0.0).unwrap(),
        ] {
            let g = FreqGrid::equispaced(10, 2.0).unwrap();
            let s = sigma_eta(&m, &g).unwrap();
            assert!((&s - s.transpose()).norm() < 1e-12 * s.norm());
            assert!(linalg::is_pd_above(&s, 0.0), "{:?}", m.family());
        }
    }

    #[test]
    fn sigma_eta_decreases_on_superset_grid() {
        let m = NoiseModel::variance_gamma(1.0, 0.4, 0.3).unwrap();
        let small = FreqGrid::new(vec![0.4, 1.1, 1.9]).unwrap();
        let big = FreqGrid::new(vec![0.4, 1.1, 1.9, 0.8, 2.6]).unwrap();
        let diff = sigma_eta(&m, &small).unwrap() - sigma_eta(&m, &big).unwrap();
        let min = linalg::sym_eigenvalues(&diff)[0];
        assert!(min >= -1e-8, "{min}");
    }

    #[test]
    fn sigma_theta_scalar_matches_location_case() {
        let g = FreqGrid::new(vec![1.0]).unwrap();
        let s = sigma_theta(&std_normal(), &g, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(s[(0, 0)], E - 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[(1, 1)], E - 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[(0, 1)], 0.0, epsilon = 1e-15);
        let s2 = sigma_theta(&std_normal(), &g, &(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert_relative_eq!((s2 * 2.0 - s).norm(), 0.0, epsilon = 1e-12);
        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(sigma_theta(&std_normal(), &g, &singular).is_err());
    }

    #[test]
    fn sigma_theta_dense_grid_tends_to_inverse_r_p() {
        let u: Vec<f64> = (-20..=20).filter(|&k| k != 0).map(|k| 0.2 * k as f64).collect();
        let g = FreqGrid::new(u).unwrap();
        let r_p = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
        let s = sigma_theta(&std_normal(), &g, &r_p).unwrap();
        let target = r_p.clone().try_inverse().unwrap();
        for (a, b) in s.iter().zip(target.iter()) {
            assert!((a / b - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn kron_identity() {
        let k = kron_weight(&CMatrix::identity(3, 3), &DMatrix::identity(2, 2));
        assert_eq!(k, CMatrix::identity(6, 6));
    }

    fn example_factors() -> (CMatrix, DMatrix<f64>) {
        let m = NoiseModel::variance_gamma(0.9, 0.6, 0.3).unwrap();
        let c = c_matrix_raw(&m, &FreqGrid::new(vec![0.5, 1.3, 2.4]).unwrap());
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 0.7]);
        (c, r)
    }

    #[test]
    fn kron_eigenvalues_are_pairwise_products() {
        let (c, r) = example_factors();
        let k = kron_weight(&c, &r);
        let mut got: Vec<f64> = k.symmetric_eigenvalues().iter().copied().collect();
        let ec: Vec<f64> = c.clone().symmetric_eigenvalues().iter().copied().collect();
        let er = linalg::sym_eigenvalues(&r);
        let mut want: Vec<f64> = ec.iter().flat_map(|a| er.iter().map(move |b| a * b)).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12 * want.last().unwrap());
        }
    }

    #[test]
    fn kron_inverse_identity_and_structured_solve() {
        let (c, r) = example_factors();
        let k = kron_weight(&c, &r);
        let kinv = k.clone().try_inverse().unwrap();
        let cinv = c.clone().try_inverse().unwrap();
        let rinv = r.clone().try_inverse().unwrap();
        let prod = kron_weight(&cinv, &rinv);
        assert!((&kinv - &prod).norm() < 1e-10 * kinv.norm());

        let sw = SystemWeight::kron(WeightMatrix::custom(c).unwrap(), r).unwrap();
        let b = CMatrix::from_fn(6, 2, |i, j| Complex64::new(i as f64 - 1.5, (j + i) as f64 * 0.3));
        let x = sw.solve(&b);
        assert!((&k * &x - &b).norm() < 1e-10 * b.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn weight_forms_are_nonnegative(re in proptest::collection::vec(-5.0..5.0f64, 4),
                                        im in proptest::collection::vec(-5.0..5.0f64, 4)) {
            let g = FreqGrid::new(vec![0.3, 0.9, 1.6, 2.2]).unwrap();
            let m = NoiseModel::nig(1.7, 0.2, 0.9, 0.0).unwrap();
            let x = DVector::from_iterator(4, re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)));
            let raw = c_matrix_raw(&m, &g);
            for w in [WeightMatrix::identity(4), c_matrix(&m, &g).unwrap(), WeightMatrix::custom(raw).unwrap()] {
                let q = x.dotc(&w.solve_vec(&x)).re;
                prop_assert!(q >= -1e-9 * x.norm_squared());
            }
        }
    }

    #[test]
    fn custom_weight_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(WeightMatrix::custom(m).is_err());
        assert!(WeightMatrix::for_kind(WeightKind::Custom, &std_normal(), &FreqGrid::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn families_parse() {
        assert_eq!("vg".parse::<Family>().unwrap(), Family::VarianceGamma);
        assert!("stable".parse::<Family>().is_err());
    }
}
