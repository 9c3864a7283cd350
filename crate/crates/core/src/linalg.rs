use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

pub(crate) type CMatrix = DMatrix<Complex64>;

pub(crate) fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// True when `m − floor·I` admits a Cholesky factorization.
pub(crate) fn is_pd_above(m: &DMatrix<f64>, floor: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let shifted = symmetrize(m) - DMatrix::identity(m.nrows(), m.ncols()) * floor;
    Cholesky::new(shifted).is_some()
}

/// Solves `R x = b` for symmetric `R`, falling back to a ridge of
/// `1e-8·trace/p` (grown geometrically if needed). Returns the solution and
/// whether regularization was applied.
pub(crate) fn regularized_solve(r: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let p = r.nrows();
    if p == 0 {
        return (DMatrix::zeros(0, b.ncols()), false);
    }
    let sym = symmetrize(r);
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return (ch.solve(b), false);
    }
    let trace = sym.trace().abs();
    let mut ridge = (1e-8 * trace / p as f64).max(1e-12);
    for _ in 0..12 {
        let shifted = &sym + DMatrix::identity(p, p) * ridge;
        if let Some(ch) = Cholesky::new(shifted) {
            return (ch.solve(b), true);
        }
        ridge *= 100.0;
    }
    (DMatrix::zeros(p, b.ncols()), true)
}

pub(crate) fn regularized_solve_vec(r: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let (x, reg) = regularized_solve(r, &bm);
    (DVector::from_column_slice(x.as_slice()), reg)
}

/// Cholesky factor `L` of a Hermitian positive definite matrix, `A = L L*`.
///
/// nalgebra's complex Cholesky takes complex square roots of the pivots and so
/// never rejects an indefinite Hermitian matrix; this one checks the real pivot.
#[derive(Debug, Clone)]
pub(crate) struct HermCholesky {
    l: CMatrix,
}

impl HermCholesky {
    pub fn new(a: &CMatrix) -> Option<Self> {
        let n = a.nrows();
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(Self { l })
    }

    /// `A⁻¹ b` by forward and back substitution.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        x
    }

    pub fn solve_vec(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let m = CMatrix::from_column_slice(b.len(), 1, b.as_slice());
        DVector::from_column_slice(self.solve(&m).as_slice())
    }
}

/// Hermitian positive definite factorization with an optional ridge.
#[derive(Debug, Clone)]
pub(crate) struct HermitianFactor {
    pub chol: HermCholesky,
    pub ridge: f64,
}

/// Factors a Hermitian matrix, adding `rel_ridge·trace/M·I` when its smallest
/// eigenvalue falls below that ridge. `None` if still not PD afterwards.
pub(crate) fn factor_hermitian(m: &CMatrix, rel_ridge: f64) -> Option<HermitianFactor> {
    let n = m.nrows();
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let trace = herm.trace().re;
    let ridge = rel_ridge * trace / n.max(1) as f64;
    let eye = CMatrix::identity(n, n);
    // λ_min ≥ ridge  ⇔  herm − ridge·I is PD
    let needs_ridge = HermCholesky::new(&(&herm - &eye * Complex64::new(ridge, 0.0))).is_none();
    if !needs_ridge {
        return HermCholesky::new(&herm).map(|chol| HermitianFactor { chol, ridge: 0.0 });
    }
    if !(ridge > 0.0) {
        return None;
    }
    HermCholesky::new(&(herm + eye * Complex64::new(ridge, 0.0))).map(|chol| HermitianFactor { chol, ridge })
}

pub(crate) fn kron_complex(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix, ascending.
#[cfg(test)]
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Projects a symmetric matrix onto the PSD cone by clipping eigenvalues at zero.
pub(crate) fn psd_projection(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clipped) * v.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regularized_solve_handles_singular() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let (x, reg) = regularized_solve(&r, &b);
        assert!(reg);
        assert!(x.iter().all(|v| v.is_finite()));
        let (_, reg) = regularized_solve(&DMatrix::identity(2, 2), &b);
        assert!(!reg);
    }

    #[test]
    fn zero_matrix_solve_is_finite() {
        let (x, reg) = regularized_solve(&DMatrix::zeros(2, 2), &DMatrix::from_element(2, 1, 1.0));
        assert!(reg);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn herm_cholesky_rejects_indefinite_and_solves() {
        let mut a = CMatrix::identity(2, 2);
        a[(0, 1)] = Complex64::new(0.3, 0.4);
        a[(1, 0)] = Complex64::new(0.3, -0.4);
        let ch = HermCholesky::new(&a).unwrap();
        let b = CMatrix::from_fn(2, 1, |i, _| Complex64::new(i as f64 + 1.0, -0.5));
        assert!((&a * ch.solve(&b) - &b).norm() < 1e-14);
        let bad = CMatrix::from_diagonal(&DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1e-3, 0.0)]));
        assert!(HermCholesky::new(&bad).is_none());
    }

    #[test]
    fn psd_projection_clips() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let p = psd_projection(&m);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(p[(1, 1)].abs() < 1e-14);
    }
}
