//! Dense matrix foundations shared by the rest of the crate.
//!
//! Matrices are plain `nalgebra` dynamic matrices. Vectorization follows the
//! column-stacking convention everywhere, which coincides with nalgebra's
//! column-major storage.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Default margin on the spectral abscissa for Hurwitz tests.
pub const TOL_HURWITZ: f64 = 1e-10;

const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Largest real part over the spectrum.
    pub spectral_abscissa: f64,
    /// `ln r(exp(m))`, which equals the spectral abscissa.
    pub spectral_radius_exp: f64,
    /// `spectral_abscissa < -tol`.
    pub is_hurwitz: bool,
}

pub fn eigenvalues(m: &RealMatrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn stability_report(m: &RealMatrix) -> Result<StabilityReport> {
    stability_report_with_tol(m, TOL_HURWITZ)
}

pub fn stability_report_with_tol(m: &RealMatrix, tol: f64) -> Result<StabilityReport> {
    let eig = eigenvalues(m)?;
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        spectral_abscissa: abscissa,
        spectral_radius_exp: abscissa,
        is_hurwitz: abscissa < -tol,
    })
}

pub fn spectral_radius(m: &RealMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `a ⊗ b`.
pub fn kron(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = RealMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Kronecker sum `a ⊗ I + I ⊗ b`.
pub fn kron_sum(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    assert!(a.is_square() && b.is_square(), "kron_sum needs square operands");
    let ia = RealMatrix::identity(a.nrows(), a.nrows());
    let ib = RealMatrix::identity(b.nrows(), b.nrows());
    kron(a, &ib) + kron(&ia, b)
}

pub fn vectorize(m: &RealMatrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &DVector<f64>, rows: usize, cols: usize) -> Result<RealMatrix> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(RealMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Unique solution of `αγ + γαᵀ + β = 0` for Hurwitz `α`.
///
/// The result is symmetrized when `β` is symmetric.
pub fn solve_ale(alpha: &RealMatrix, beta: &RealMatrix) -> Result<RealMatrix> {
    check_lyapunov_dims(alpha, beta)?;
    let report = stability_report(alpha)?;
    if !report.is_hurwitz {
        return Err(Error::NotHurwitz {
            abscissa: report.spectral_abscissa,
        });
    }
    solve_lyapunov(alpha, beta)
}

/// Solution of `αγ + γαᵀ + β = 0` without the Hurwitz requirement.
///
/// Only needs `λ_j + λ_k ≠ 0` over the spectrum of `α`, which is what the
/// observer coupling equation uses (its coefficient is anti-Hurwitz).
pub fn solve_lyapunov(alpha: &RealMatrix, beta: &RealMatrix) -> Result<RealMatrix> {
    check_lyapunov_dims(alpha, beta)?;
    let n = alpha.nrows();
    let op = kron_sum(alpha, alpha);
    let rhs = -vectorize(beta);
    let lu = op.lu();
    let x = lu.solve(&rhs).ok_or(Error::SingularLyapunov)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularLyapunov);
    }
    let gamma = unvectorize(&x, n, n)?;
    if is_symmetric(beta, 1e-14 * (1.0 + beta.amax())) {
        Ok(sym(&gamma))
    } else {
        Ok(gamma)
    }
}

fn check_lyapunov_dims(alpha: &RealMatrix, beta: &RealMatrix) -> Result<()> {
    if !alpha.is_square() || beta.shape() != alpha.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov coefficient {:?} with source {:?}",
            alpha.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

/// `(m + mᵀ)/2`
pub fn sym(m: &RealMatrix) -> RealMatrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &RealMatrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn is_antisymmetric(m: &RealMatrix, tol: f64) -> bool {
    m.is_square() && (m + m.transpose()).amax() <= tol
}

/// Frobenius inner product `tr(aᵀb)`.
pub fn inner(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.dot(b)
}

/// `[a, b] = ab - ba`
pub fn commutator(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    a * b - b * a
}

/// Largest singular value.
pub fn spectral_norm(m: &RealMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn spectral_norm_c(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn camax(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn min_eigenvalue_sym(m: &RealMatrix) -> f64 {
    sym(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn min_eigenvalue_herm(m: &ComplexMatrix) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Symmetric square root of a positive semi-definite matrix.
pub fn sqrtm_psd(m: &RealMatrix) -> Result<RealMatrix> {
    spectral_function(m, |x| x.sqrt())
}

/// Inverse symmetric square root of a positive definite matrix.
pub fn inv_sqrtm_pd(m: &RealMatrix) -> Result<RealMatrix> {
    spectral_function(m, |x| 1.0 / x.sqrt())
}

fn spectral_function(m: &RealMatrix, f: impl Fn(f64) -> f64) -> Result<RealMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("spectral function of non-square matrix".into()));
    }
    let eig = sym(m).symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut d = eig.eigenvalues.clone();
    for x in d.iter_mut() {
        if *x < -1e-12 * scale {
            return Err(Error::InvalidParameter(format!(
                "matrix has negative eigenvalue {x:.3e}"
            )));
        }
        *x = f(x.max(0.0));
        if !x.is_finite() {
            return Err(Error::InvalidParameter("matrix is singular".into()));
        }
    }
    let v = &eig.eigenvectors;
    Ok(sym(&(v * RealMatrix::from_diagonal(&d) * v.transpose())))
}

pub fn to_complex(m: &RealMatrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn try_inverse(m: &RealMatrix) -> Option<RealMatrix> {
    m.clone().try_inverse()
}

pub fn sub_block(m: &RealMatrix, r0: usize, c0: usize, nr: usize, nc: usize) -> RealMatrix {
    m.view((r0, c0), (nr, nc)).into_owned()
}

/// `[[a, b], [c, d]]`
pub fn block2x2(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix, d: &RealMatrix) -> RealMatrix {
    debug_assert_eq!(a.nrows(), b.nrows());
    debug_assert_eq!(c.nrows(), d.nrows());
    debug_assert_eq!(a.ncols(), c.ncols());
    debug_assert_eq!(b.ncols(), d.ncols());
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = RealMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

pub fn block_diag(a: &RealMatrix, d: &RealMatrix) -> RealMatrix {
    block2x2(
        a,
        &RealMatrix::zeros(a.nrows(), d.ncols()),
        &RealMatrix::zeros(d.nrows(), a.ncols()),
        d,
    )
}

/// Symplectic unit `[[0, 1], [-1, 0]]`.
pub fn symplectic_unit() -> RealMatrix {
    RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

/// `½ I_{n/2} ⊗ J`, the CCR matrix of `n/2` position-momentum pairs.
pub fn canonical_ccr(n: usize) -> Result<RealMatrix> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::OddDimension(n));
    }
    Ok(kron(&RealMatrix::identity(n / 2, n / 2), &symplectic_unit()) * 0.5)
}

/// Coordinates of a symmetric matrix: upper triangle, row by row.
pub fn svec(m: &RealMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

pub fn smat(v: &DVector<f64>, n: usize) -> RealMatrix {
    debug_assert_eq!(v.len(), n * (n + 1) / 2);
    let mut out = RealMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out[(i, j)] = v[k];
            out[(j, i)] = v[k];
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, data: &[f64]) -> RealMatrix {
        RealMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn ale_diagonal_case() {
        let a = -RealMatrix::identity(2, 2);
        let g = solve_ale(&a, &RealMatrix::identity(2, 2)).unwrap();
        assert!((g - RealMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        let z = solve_ale(&a, &RealMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.amax(), 0.0);
    }

    #[test]
    fn ale_rejects_non_hurwitz() {
        let a = symplectic_unit();
        assert!(matches!(
            solve_ale(&a, &RealMatrix::identity(2, 2)),
            Err(Error::NotHurwitz { .. })
        ));
        let bad = solve_ale(&-RealMatrix::identity(2, 2), &RealMatrix::identity(3, 3));
        assert!(matches!(bad, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn lyapunov_accepts_anti_hurwitz() {
        let a = m(2, &[2.0, 1.0, 0.0, 3.0]);
        let b = m(2, &[1.0, 0.5, 0.5, 2.0]);
        let g = solve_lyapunov(&a, &b).unwrap();
        let res = &a * &g + &g * a.transpose() + &b;
        assert!(res.amax() < 1e-13);
        // rotation generator: eigenvalues ±i sum to zero
        assert_eq!(
            solve_lyapunov(&symplectic_unit(), &b),
            Err(Error::SingularLyapunov)
        );
    }

    #[test]
    fn scalar_kron_sum() {
        assert_eq!(kron_sum(&m(1, &[0.0]), &m(1, &[0.0])), m(1, &[0.0]));
        assert_eq!(kron_sum(&m(1, &[2.0]), &m(1, &[3.0])), m(1, &[5.0]));
    }

    #[test]
    fn column_stacking() {
        let v = vectorize(&m(2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(v.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert!(unvectorize(&v, 3, 2).is_err());
    }

    #[test]
    fn stability_examples() {
        let r = stability_report(&-RealMatrix::identity(3, 3)).unwrap();
        assert!((r.spectral_abscissa + 1.0).abs() < 1e-14);
        assert!(r.is_hurwitz);
        let r = stability_report(&symplectic_unit()).unwrap();
        assert!(r.spectral_abscissa.abs() < 1e-14);
        assert!(!r.is_hurwitz);
    }

    #[test]
    fn abscissa_matches_log_radius_of_exponential() {
        let a = m(3, &[0.1, 2.0, 0.0, -1.0, -0.3, 0.4, 0.2, 0.0, -0.5]);
        let r = stability_report(&a).unwrap();
        let rho = spectral_radius(&a.clone().exp()).unwrap();
        assert!((rho.ln() - r.spectral_radius_exp).abs() < 1e-10);
    }

    #[test]
    fn square_roots() {
        let a = m(2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sqrtm_psd(&a).unwrap();
        assert!((&s * &s - &a).amax() < 1e-13);
        let si = inv_sqrtm_pd(&a).unwrap();
        assert!((&si * &a * &si - RealMatrix::identity(2, 2)).amax() < 1e-13);
        assert!(sqrtm_psd(&m(2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }

    #[test]
    fn svec_roundtrip() {
        let a = m(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert_eq!(smat(&svec(&a), 3), a);
    }

    #[test]
    fn canonical_ccr_layout() {
        let t = canonical_ccr(4).unwrap();
        assert_eq!(t[(0, 1)], 0.5);
        assert_eq!(t[(2, 3)], 0.5);
        assert_eq!(t[(1, 0)], -0.5);
        assert!(canonical_ccr(3).is_err());
    }
}
