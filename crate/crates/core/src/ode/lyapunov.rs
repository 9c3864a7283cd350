use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::{self, CMatrix};
use crate::{Error, Result};

/// Solution of `(A + I/2) Σ + Σ (A + I/2)ᵀ + P = 0`.
#[derive(Debug, Clone)]
pub struct LyapunovResult {
    pub a_star: DMatrix<f64>,
    pub p_star: DMatrix<f64>,
    pub sigma_xx: DMatrix<f64>,
    /// Frobenius norm of the equation residual.
    pub residual: f64,
}

/// Complex Schur form `B = Q T Q*` with `T` upper triangular, by single-shift
/// QR on the Hessenberg form. Wilkinson shifts with an exceptional shift every
/// tenth sweep, which keeps defective repeated eigenvalues from stalling.
fn complex_schur(b: &DMatrix<f64>) -> Result<(CMatrix, CMatrix)> {
    let n = b.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let hess = nalgebra::linalg::Hessenberg::new(b.clone());
    let (q0, h0) = hess.unpack();
    let mut q = linalg::to_complex(&q0);
    let mut t = linalg::to_complex(&h0);
    for j in 0..n {
        for i in j + 2..n {
            t[(i, j)] = zero;
        }
    }
    let eps = f64::EPSILON;
    let scale = t.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let max_iter = 60 * n.max(1);
    let mut hi = n.saturating_sub(1);
    let mut iter_here = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // deflate
        let mut lo = hi;
        while lo > 0 {
            let s = t[(lo - 1, lo - 1)].norm() + t[(lo, lo)].norm();
            let s = if s == 0.0 { scale } else { s };
            if t[(lo, lo - 1)].norm() <= eps * s {
                t[(lo, lo - 1)] = zero;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter_here = 0;
            continue;
        }
        total += 1;
        iter_here += 1;
        if total > max_iter {
            return Err(Error::Unstable("Schur iteration did not converge".into()));
        }
        let shift = if iter_here % 10 == 0 {
            t[(hi, hi)] + Complex64::new(0.75 * t[(hi, hi - 1)].norm(), 0.5 * t[(hi, hi - 1)].norm())
        } else {
            let (a, bb, c, d) = (t[(hi - 1, hi - 1)], t[(hi - 1, hi)], t[(hi, hi - 1)], t[(hi, hi)]);
            let tr = (a + d) * 0.5;
            let disc = ((a - d) * (a - d) * 0.25 + bb * c).sqrt();
            let (l1, l2) = (tr + disc, tr - disc);
            if (l1 - d).norm() <= (l2 - d).norm() { l1 } else { l2 }
        };
        // implicit QR sweep on the window lo..=hi with Givens rotations
        let mut x = t[(lo, lo)] - shift;
        let mut y = t[(lo + 1, lo)];
        for k in lo..hi {
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (cs, sn) = if r == 0.0 { (Complex64::new(1.0, 0.0), zero) } else { (x / r, y / r) };
            // G = [conj(cs) conj(sn); -sn cs] on rows k, k+1
            let first = if k > lo { k - 1 } else { lo };
            for j in first..n {
                let (u, v) = (t[(k, j)], t[(k + 1, j)]);
                t[(k, j)] = cs.conj() * u + sn.conj() * v;
                t[(k + 1, j)] = -sn * u + cs * v;
            }
            let last = (k + 2).min(hi);
            for i in 0..=last {
                let (u, v) = (t[(i, k)], t[(i, k + 1)]);
                t[(i, k)] = u * cs + v * sn;
                t[(i, k + 1)] = -u * sn.conj() + v * cs.conj();
            }
            for i in 0..n {
                let (u, v) = (q[(i, k)], q[(i, k + 1)]);
                q[(i, k)] = u * cs + v * sn;
                q[(i, k + 1)] = -u * sn.conj() + v * cs.conj();
            }
            if k > lo {
                t[(k + 1, k - 1)] = zero;
            }
            if k + 1 < hi {
                x = t[(k + 1, k)];
                y = t[(k + 2, k)];
            }
        }
    }
    Ok((q, t))
}

/// Eigenvalues of a real square matrix, sorted by real part then imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (_, t) = complex_schur(a)?;
    let mut ev: Vec<Complex64> = t.diagonal().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

/// Solves the Lyapunov equation of the asymptotic covariance by
/// Bartels–Stewart on the complex Schur form of `A + I/2`.
pub fn lyapunov_solve(a_star: &DMatrix<f64>, p_star: &DMatrix<f64>) -> Result<LyapunovResult> {
    let n = a_star.nrows();
    if a_star.ncols() != n || p_star.shape() != (n, n) {
        return Err(Error::Config("A* and P* must be square of equal size".into()));
    }
    let b = a_star + DMatrix::identity(n, n) * 0.5;
    let (q, t) = complex_schur(&b)?;
    if let Some(bad) = t.diagonal().iter().find(|z| z.re >= 0.0) {
        let lam = *bad - Complex64::new(0.5, 0.0);
        return Err(Error::RateCondition { re: lam.re, im: lam.im });
    }

    // T Y + Y T* = −Q* P Q
    let rhs = -(q.adjoint() * linalg::to_complex(p_star) * &q);
    let mut y = CMatrix::zeros(n, n);
    for j in (0..n).rev() {
        for i in (0..n).rev() {
            let mut s = rhs[(i, j)];
            for k in i + 1..n {
                s -= t[(i, k)] * y[(k, j)];
            }
            for k in j + 1..n {
                s -= y[(i, k)] * t[(j, k)].conj();
            }
            y[(i, j)] = s / (t[(i, i)] + t[(j, j)].conj());
        }
    }
    let sigma = linalg::symmetrize(&linalg::real_part(&(&q * y * q.adjoint())));
    let residual = (&b * &sigma + &sigma * b.transpose() + p_star).norm();
    Ok(LyapunovResult { a_star: a_star.clone(), p_star: p_star.clone(), sigma_xx: sigma, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    /// Oracle: the vectorized equation `(I⊗B + B⊗I) vec Σ = −vec P`.
    fn kron_oracle(a: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let b = a + DMatrix::identity(n, n) * 0.5;
        let eye = DMatrix::<f64>::identity(n, n);
        let big = eye.kronecker(&b) + b.kronecker(&eye);
        let rhs = -DVector::from_column_slice(p.as_slice());
        let x = big.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(n, n, x.as_slice())
    }

    #[test]
    fn minus_identity_returns_p() {
        let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let res = lyapunov_solve(&-DMatrix::identity(3, 3), &p).unwrap();
        assert!((&res.sigma_xx - &p).norm() < 1e-12);
    }

    #[test]
    fn diagonal_case_by_hand() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let res = lyapunov_solve(&a, &DMatrix::identity(2, 2)).unwrap();
        assert!((res.sigma_xx[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((res.sigma_xx[(1, 1)] - 1.0 / 3.0).abs() < 1e-12);
        assert!(res.sigma_xx[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn slow_eigenvalue_violates_rate_condition() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -0.4]));
        match lyapunov_solve(&a, &DMatrix::identity(2, 2)) {
            Err(Error::RateCondition { re, .. }) => assert!((re + 0.4).abs() < 1e-12),
            other => panic!("expected rate condition error, got {other:?}"),
        }
    }

    #[test]
    fn matches_kronecker_oracle_with_complex_spectrum() {
        // rotation-like blocks give complex eigenvalues in the real Schur form
        let n = 7;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let v = (((i * 7 + j * 13) % 11) as f64 - 5.0) / 8.0;
            if i == j { v - 2.5 } else { v }
        });
        let g = DMatrix::from_fn(n, n, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
        let p = &g * g.transpose();
        let res = lyapunov_solve(&a, &p).unwrap();
        let oracle = kron_oracle(&a, &p);
        assert!((&res.sigma_xx - &oracle).norm() < 1e-9 * oracle.norm());
        assert!(res.residual < 1e-8 * p.norm());
        assert!((&res.sigma_xx - res.sigma_xx.transpose()).norm() == 0.0);
        assert!(eigenvalues(&a).unwrap().iter().any(|z| z.im.abs() > 1e-3));
    }

    #[test]
    fn eigenvalues_of_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&a).unwrap();
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn defective_block_triangular_spectrum() {
        // many repeated -1 eigenvalues with a Jordan-like coupling below the diagonal
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -1.0
            } else if i > j {
                (((i * 3 + j * 5) % 7) as f64 - 3.0) / 4.0
            } else {
                0.0
            }
        });
        let ev = eigenvalues(&a).unwrap();
        assert_eq!(ev.len(), n);
        // a defective eigenvalue is only determined to about eps^(1/k)
        assert!(ev.iter().all(|z| (z - Complex64::new(-1.0, 0.0)).norm() < 0.5));
        let mean: Complex64 = ev.iter().sum::<Complex64>() / n as f64;
        assert!((mean + 1.0).norm() < 1e-10);
    }
}
