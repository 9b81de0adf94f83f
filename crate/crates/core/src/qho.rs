//! A single closed oscillator at the second-moment level.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matlib::{
    self, inner, is_antisymmetric, is_symmetric, solve_lyapunov, stability_report, sym,
    to_complex, ComplexMatrix, RealMatrix, TOL_HURWITZ,
};

/// Relative tolerance used for frequency equality.
pub const TOL_FREQ_REL: f64 = 1e-8;

const STRUCT_TOL: f64 = 1e-12;
const MAX_COND: f64 = 1e12;
const MAX_SEARCH: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QhoModel {
    theta: RealMatrix,
    energy: RealMatrix,
    dynamics: RealMatrix,
}

impl QhoModel {
    pub fn n(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta(&self) -> &RealMatrix {
        &self.theta
    }

    pub fn energy(&self) -> &RealMatrix {
        &self.energy
    }

    /// `A = 2ΘR`
    pub fn dynamics(&self) -> &RealMatrix {
        &self.dynamics
    }
}

/// Checks a CCR matrix: even order, antisymmetric, nonsingular.
pub fn validate_ccr(theta: &RealMatrix) -> Result<()> {
    if !theta.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "CCR matrix is {}x{}",
            theta.nrows(),
            theta.ncols()
        )));
    }
    let n = theta.nrows();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::OddDimension(n));
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::BadCcr("non-finite entry".into()));
    }
    if !is_antisymmetric(theta, STRUCT_TOL * (1.0 + theta.amax())) {
        return Err(Error::BadCcr("not antisymmetric".into()));
    }
    let sv = theta.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::BadCcr("singular".into()));
    }
    Ok(())
}

pub fn build_model(theta: &RealMatrix, energy: &RealMatrix) -> Result<QhoModel> {
    validate_ccr(theta)?;
    if energy.shape() != theta.shape() {
        return Err(Error::DimensionMismatch(format!(
            "energy matrix {:?} vs CCR matrix {:?}",
            energy.shape(),
            theta.shape()
        )));
    }
    if energy.iter().any(|x| !x.is_finite())
        || !is_symmetric(energy, STRUCT_TOL * (1.0 + energy.amax()))
    {
        return Err(Error::BadEnergy);
    }
    let theta = (theta - theta.transpose()) * 0.5;
    let energy = sym(energy);
    let dynamics = &theta * &energy * 2.0;
    let pr = &dynamics * &theta + &theta * dynamics.transpose();
    let scale = 1.0 + dynamics.amax() * theta.amax();
    if pr.amax() > STRUCT_TOL * scale {
        return Err(Error::InvariantViolated(format!(
            "Hamiltonian defect {:.3e}",
            pr.amax()
        )));
    }
    Ok(QhoModel {
        theta,
        energy,
        dynamics,
    })
}

/// `Σ` and `Γ = Σ + iΘ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialMoments {
    sigma: RealMatrix,
    gamma: ComplexMatrix,
}

impl InitialMoments {
    /// Rejects `Σ` that is asymmetric or violates `Σ + iΘ ⪰ 0`.
    pub fn new(sigma: &RealMatrix, theta: &RealMatrix) -> Result<Self> {
        if sigma.shape() != theta.shape() {
            return Err(Error::DimensionMismatch(format!(
                "covariance {:?} vs CCR matrix {:?}",
                sigma.shape(),
                theta.shape()
            )));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadCovariance("non-finite entry".into()));
        }
        if !is_symmetric(sigma, STRUCT_TOL * (1.0 + sigma.amax())) {
            return Err(Error::BadCovariance("not symmetric".into()));
        }
        let sigma = sym(sigma);
        let gamma = complex_moments(&sigma, theta);
        let lmin = matlib::min_eigenvalue_herm(&gamma);
        if lmin < -1e-10 * (1.0 + sigma.amax()) {
            return Err(Error::BadCovariance(format!(
                "uncertainty relation violated (min eigenvalue {lmin:.3e})"
            )));
        }
        Ok(Self { sigma, gamma })
    }

    pub fn sigma(&self) -> &RealMatrix {
        &self.sigma
    }

    pub fn gamma(&self) -> &ComplexMatrix {
        &self.gamma
    }
}

fn complex_moments(real: &RealMatrix, imag: &RealMatrix) -> ComplexMatrix {
    real.zip_map(imag, Complex64::new)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedMoments {
    pub tau: Horizon,
    /// `P = Re E_τ(XXᵀ)`
    pub p_real: RealMatrix,
    /// `E_τ(XXᵀ) = P + iΘ`
    pub full: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Eigenvectors, unit columns with first nonzero entry real positive.
    pub v: ComplexMatrix,
    pub w: ComplexMatrix,
    /// Nonnegative frequencies descending, then their negatives.
    pub omega: Vec<f64>,
    /// `C_k = V_k W_k`
    pub c: Vec<ComplexMatrix>,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// The first `n/2` frequencies.
    pub fn positive_frequencies(&self) -> &[f64] {
        &self.omega[..self.n() / 2]
    }

    pub fn tol_freq(&self) -> f64 {
        tol_freq(&self.omega)
    }
}

pub fn tol_freq(omega: &[f64]) -> f64 {
    TOL_FREQ_REL * omega.iter().fold(0.0f64, |m, w| m.max(w.abs()))
}

pub fn spectral_decompose(model: &QhoModel) -> Result<SpectralData> {
    let a = model.dynamics();
    let n = model.n();
    let eig = matlib::eigenvalues(a)?;
    let rho = eig.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let max_re = eig.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    if max_re > 1e-8 * rho.max(1.0) {
        return Err(Error::NotOscillatory(max_re));
    }
    let tol = TOL_FREQ_REL * rho;
    let mut im: Vec<f64> = eig.iter().map(|z| z.im).collect();
    im.sort_by(|x, y| y.total_cmp(x));

    // clusters of (center, multiplicity), descending
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=im.len() {
        if i == im.len() || (im[i - 1] - im[i]).abs() > tol {
            let members = &im[start..i];
            let center = members.iter().sum::<f64>() / members.len() as f64;
            clusters.push((center, members.len()));
            start = i;
        }
    }
    let mut positive: Vec<(f64, usize)> = Vec::new();
    let mut zero_mult = 0;
    let mut negative_mult = 0;
    for &(c, m) in &clusters {
        if c.abs() <= tol {
            zero_mult += m;
        } else if c > 0.0 {
            positive.push((c, m));
        } else {
            negative_mult += m;
        }
    }
    let positive_mult: usize = positive.iter().map(|p| p.1).sum();
    if positive_mult != negative_mult || zero_mult % 2 != 0 {
        return Err(Error::DegenerateEigenbasis(f64::INFINITY));
    }

    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    let mut omega_half: Vec<f64> = Vec::with_capacity(n / 2);
    let ac = to_complex(a);
    for &(w, m) in &positive {
        let shifted = &ac - ComplexMatrix::identity(n, n) * Complex64::new(0.0, w);
        for v in complex_null_space(&shifted, m, rho)? {
            cols.push(normalize_column(v));
            omega_half.push(w);
        }
    }
    if zero_mult > 0 {
        let r = real_null_space(a, zero_mult, rho)?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for j in 0..zero_mult / 2 {
            let v = r
                .column(2 * j)
                .zip_map(&r.column(2 * j + 1), |x, y| Complex64::new(x * s, y * s));
            cols.push(normalize_column(v));
            omega_half.push(0.0);
        }
    }
    debug_assert_eq!(cols.len(), n / 2);
    let conj: Vec<_> = cols.iter().map(|v| v.map(|z| z.conj())).collect();
    cols.extend(conj);
    let v = ComplexMatrix::from_columns(&cols);

    let sv = v.singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > MAX_COND {
        return Err(Error::DegenerateEigenbasis(cond));
    }
    let w = v.clone().try_inverse().ok_or(Error::DegenerateEigenbasis(cond))?;

    let mut omega = omega_half.clone();
    omega.extend(omega_half.iter().map(|x| -x));
    let c = (0..n).map(|k| v.column(k) * w.row(k)).collect();
    Ok(SpectralData { v, w, omega, c })
}

fn normalize_column(v: nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64> {
    let norm = v.norm();
    let v = v / Complex64::new(norm, 0.0);
    let big = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    match v.iter().find(|z| z.norm() > 1e-8 * big) {
        Some(z) => {
            let phase = z.conj() / z.norm();
            v * phase
        }
        None => v,
    }
}

fn complex_null_space(
    m: &ComplexMatrix,
    dim: usize,
    scale: f64,
) -> Result<Vec<nalgebra::DVector<Complex64>>> {
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::EigenFailure)?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    if svd.singular_values[idx[dim - 1]] > 1e-6 * scale.max(1.0) {
        return Err(Error::DegenerateEigenbasis(f64::INFINITY));
    }
    Ok(idx[..dim]
        .iter()
        .map(|&i| v_t.row(i).adjoint())
        .collect())
}

fn real_null_space(m: &RealMatrix, dim: usize, scale: f64) -> Result<RealMatrix> {
    let n = m.ncols();
    if m.amax() == 0.0 {
        return Ok(RealMatrix::identity(n, n).columns(0, dim).into_owned());
    }
    let svd = m
        .clone()
        .try_svd(false, true, f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::EigenFailure)?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    if svd.singular_values[idx[dim - 1]] > 1e-6 * scale.max(1.0) {
        return Err(Error::DegenerateEigenbasis(f64::INFINITY));
    }
    let cols: Vec<_> = idx[..dim].iter().map(|&i| v_t.row(i).transpose()).collect();
    Ok(RealMatrix::from_columns(&cols))
}

/// `1/(2 max(0, ln r(e^A)))`, infinite when the abscissa is within the Hurwitz tolerance of 0.
pub fn horizon_bound(a: &RealMatrix) -> Result<f64> {
    let abscissa = stability_report(a)?.spectral_abscissa;
    if abscissa <= TOL_HURWITZ {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0 / (2.0 * abscissa))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive and finite, got {tau}")));
    }
    Ok(())
}

/// `P = (1/τ) L(A - I/(2τ), Σ)`.
pub fn discounted_moments_ale(
    model: &QhoModel,
    init: &InitialMoments,
    tau: f64,
) -> Result<DiscountedMoments> {
    check_tau(tau)?;
    check_init(model.n(), init)?;
    let bound = horizon_bound(model.dynamics())?;
    if tau >= bound {
        return Err(Error::HorizonTooLong { tau, bound });
    }
    let n = model.n();
    let a_tau = model.dynamics() - RealMatrix::identity(n, n) / (2.0 * tau);
    let p = solve_lyapunov(&a_tau, &(init.sigma() / tau))?;
    Ok(DiscountedMoments {
        tau: Horizon::Finite(tau),
        full: complex_moments(&p, model.theta()),
        p_real: p,
    })
}

fn check_init(n: usize, init: &InitialMoments) -> Result<()> {
    if init.sigma().nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial moments of order {} for a model of order {n}",
            init.sigma().nrows()
        )));
    }
    Ok(())
}

fn moments_from_mask(spec: &SpectralData, init: &InitialMoments, phi: &ComplexMatrix) -> ComplexMatrix {
    let inner = &spec.w * init.gamma() * spec.w.adjoint();
    &spec.v * inner.component_mul(phi) * spec.v.adjoint()
}

fn finish(tau: Horizon, full: ComplexMatrix) -> DiscountedMoments {
    let p_real = sym(&full.map(|z| z.re));
    DiscountedMoments { tau, p_real, full }
}

/// `E_τ(XXᵀ) = V(Φ_τ ⊙ (WΓW*))V*`.
pub fn discounted_moments_spectral(
    spec: &SpectralData,
    init: &InitialMoments,
    tau: f64,
) -> Result<DiscountedMoments> {
    check_tau(tau)?;
    check_init(spec.n(), init)?;
    let n = spec.n();
    let phi = DMatrix::from_fn(n, n, |j, k| {
        Complex64::new(1.0, -(spec.omega[j] - spec.omega[k]) * tau).inv()
    });
    Ok(finish(Horizon::Finite(tau), moments_from_mask(spec, init, &phi)))
}

pub fn infinite_horizon_moments(spec: &SpectralData, init: &InitialMoments) -> Result<DiscountedMoments> {
    check_init(spec.n(), init)?;
    let n = spec.n();
    let tol = spec.tol_freq();
    let phi = DMatrix::from_fn(n, n, |j, k| {
        if (spec.omega[j] - spec.omega[k]).abs() <= tol {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(finish(Horizon::Infinite, moments_from_mask(spec, init, &phi)))
}

fn has_distinct_positive_frequencies(spec: &SpectralData) -> bool {
    let tol = spec.tol_freq();
    let w = spec.positive_frequencies();
    w.iter().all(|x| *x > tol) && w.windows(2).all(|p| (p[0] - p[1]).abs() > tol)
}

/// `E_∞(XᵀΠX)`.
///
/// Uses the per-mode sum when the positive frequencies are pairwise distinct,
/// and `tr(Π E_∞(XXᵀ))` otherwise.
pub fn quadratic_form_average(spec: &SpectralData, init: &InitialMoments, pi_weight: &RealMatrix) -> Result<f64> {
    check_init(spec.n(), init)?;
    check_weight(spec.n(), pi_weight)?;
    if !has_distinct_positive_frequencies(spec) {
        let e = infinite_horizon_moments(spec, init)?;
        return Ok(inner(pi_weight, &e.p_real));
    }
    let pi = to_complex(pi_weight);
    let gamma = init.gamma();
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..spec.n() / 2 {
        let vk = spec.v.column(k);
        let wk = spec.w.row(k);
        let a = (vk.adjoint() * &pi * vk)[(0, 0)];
        let b = (wk * gamma * wk.adjoint())[(0, 0)];
        let c = (vk.transpose() * &pi * vk.map(|z| z.conj()))[(0, 0)];
        let d = (wk.map(|z| z.conj()) * gamma * wk.transpose())[(0, 0)];
        total += a * b + c * d;
    }
    Ok(total.re)
}

fn check_weight(n: usize, pi_weight: &RealMatrix) -> Result<()> {
    if pi_weight.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "weight {:?} for order {n}",
            pi_weight.shape()
        )));
    }
    Ok(())
}

/// Average of `tr(Π G(φ) Σ G(φ)ᵀ)` over the torus of phases, where
/// `G(φ) = Σ_k (e^{iφ_k} C_k + e^{-iφ_k} conj(C_k))`.
///
/// The integrand is a trigonometric polynomial of degree two per axis, so a
/// four-point uniform rule on each axis is exact.
pub fn torus_average_quadratic(spec: &SpectralData, init: &InitialMoments, pi_weight: &RealMatrix) -> Result<f64> {
    check_init(spec.n(), init)?;
    check_weight(spec.n(), pi_weight)?;
    let half = spec.n() / 2;
    const POINTS: usize = 4;
    let total_nodes = POINTS.checked_pow(half as u32).filter(|t| *t as u128 <= MAX_SEARCH);
    let total_nodes = total_nodes.ok_or(Error::SearchSpaceTooLarge((POINTS as u128).pow(half as u32)))?;
    let mut idx = vec![0usize; half];
    let mut acc = 0.0;
    for _ in 0..total_nodes {
        let mut g = ComplexMatrix::zeros(spec.n(), spec.n());
        for k in 0..half {
            let phase = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * idx[k] as f64 / POINTS as f64);
            g += &spec.c[k] * phase + &spec.c[k + half] * phase.conj();
        }
        let g = g.map(|z| z.re);
        acc += inner(pi_weight, &(&g * init.sigma() * g.transpose()));
        for d in idx.iter_mut() {
            *d += 1;
            if *d < POINTS {
                break;
            }
            *d = 0;
        }
    }
    Ok(acc / total_nodes as f64)
}

/// `τ_* = 1/min{|ω_j ± ω_k|}` over the nonzero values.
pub fn convergence_margin(spec: &SpectralData) -> Result<f64> {
    convergence_margin_from_frequencies(&spec.omega)
}

pub fn convergence_margin_from_frequencies(omega: &[f64]) -> Result<f64> {
    let tol = tol_freq(omega);
    let mut best = f64::INFINITY;
    for &a in omega {
        for &b in omega {
            for d in [(a + b).abs(), (a - b).abs()] {
                if d > tol && d < best {
                    best = d;
                }
            }
        }
    }
    if best.is_finite() {
        Ok(1.0 / best)
    } else {
        Err(Error::AllFrequenciesZero)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incommensurability {
    pub incommensurable: bool,
    /// Smallest integer relation found, by max-norm then lexicographically.
    pub witness: Option<Vec<i64>>,
}

/// Exhaustive search for an integer relation `Σ λ_k ω_k ≈ 0` with `‖λ‖_∞ ≤ max_coeff`.
pub fn incommensurability_diagnostic(omega: &[f64], max_coeff: u32) -> Result<Incommensurability> {
    if max_coeff == 0 {
        return Err(Error::InvalidParameter("max_coeff must be at least 1".into()));
    }
    if omega.is_empty() || omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParameter("frequencies must be positive".into()));
    }
    let side = 2 * max_coeff as u128 + 1;
    let size = side.checked_pow(omega.len() as u32).unwrap_or(u128::MAX);
    if size > MAX_SEARCH {
        return Err(Error::SearchSpaceTooLarge(size));
    }
    let m = max_coeff as i64;
    let tol = tol_freq(omega);
    let mut lam = vec![-m; omega.len()];
    let mut best: Option<(i64, Vec<i64>)> = None;
    for _ in 0..size {
        let first = lam.iter().find(|x| **x != 0);
        if matches!(first, Some(x) if *x > 0) {
            let s: f64 = lam.iter().zip(omega).map(|(l, w)| *l as f64 * w).sum();
            if s.abs() < tol {
                let norm = lam.iter().map(|x| x.abs()).max().unwrap_or(0);
                if best.as_ref().is_none_or(|(b, _)| norm < *b) {
                    best = Some((norm, lam.clone()));
                }
            }
        }
        for d in (0..lam.len()).rev() {
            lam[d] += 1;
            if lam[d] <= m {
                break;
            }
            lam[d] = -m;
        }
    }
    Ok(Incommensurability {
        incommensurable: best.is_none(),
        witness: best.map(|b| b.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::{canonical_ccr, symplectic_unit};

    fn one_mode(k: &[f64]) -> QhoModel {
        let theta = symplectic_unit() * 0.5;
        build_model(&theta, &RealMatrix::from_row_slice(2, 2, k)).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = RealMatrix::identity(2, 2);
        let bad = RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(build_model(&bad, &r), Err(Error::BadCcr(_))));
        assert!(matches!(
            build_model(&RealMatrix::zeros(2, 2), &r),
            Err(Error::BadCcr(_))
        ));
        let t = symplectic_unit();
        let asym = RealMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert_eq!(build_model(&t, &asym), Err(Error::BadEnergy));
        let t3 = RealMatrix::zeros(3, 3);
        assert_eq!(build_model(&t3, &t3), Err(Error::OddDimension(3)));
    }

    #[test]
    fn zero_energy_gives_zero_dynamics() {
        let m = build_model(&canonical_ccr(4).unwrap(), &RealMatrix::zeros(4, 4)).unwrap();
        assert_eq!(m.dynamics().amax(), 0.0);
        let spec = spectral_decompose(&m).unwrap();
        assert!(spec.omega.iter().all(|w| *w == 0.0));
        assert_eq!(convergence_margin(&spec), Err(Error::AllFrequenciesZero));
    }

    #[test]
    fn single_mode_spectrum() {
        let m = one_mode(&[2.0, 0.0, 0.0, 2.0]);
        let spec = spectral_decompose(&m).unwrap();
        assert!((spec.omega[0] - 2.0).abs() < 1e-12);
        assert!((spec.omega[1] + 2.0).abs() < 1e-12);
        let sum = &spec.c[0] + &spec.c[1];
        assert!(matlib::camax(&(sum - ComplexMatrix::identity(2, 2))) < 1e-12);
        assert!((convergence_margin(&spec).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn margin_of_symmetric_pair() {
        assert_eq!(convergence_margin_from_frequencies(&[1.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn integer_relation_found() {
        let r = incommensurability_diagnostic(&[1.0, 2.0], 3).unwrap();
        assert!(!r.incommensurable);
        assert_eq!(r.witness, Some(vec![2, -1]));
        let r = incommensurability_diagnostic(&[1.0, 2f64.sqrt()], 50).unwrap();
        assert!(r.incommensurable);
        assert!(matches!(
            incommensurability_diagnostic(&[1.0; 8], 10),
            Err(Error::SearchSpaceTooLarge(_))
        ));
        assert!(incommensurability_diagnostic(&[1.0], 0).is_err());
    }

    #[test]
    fn uncertainty_relation_enforced() {
        let theta = symplectic_unit() * 0.5;
        assert!(InitialMoments::new(&RealMatrix::identity(2, 2), &theta).is_ok());
        assert!(matches!(
            InitialMoments::new(&(RealMatrix::identity(2, 2) * 0.1), &theta),
            Err(Error::BadCovariance(_))
        ));
    }

    #[test]
    fn free_dynamics_keeps_moments() {
        let theta = canonical_ccr(2).unwrap();
        let m = build_model(&theta, &RealMatrix::zeros(2, 2)).unwrap();
        let sigma = RealMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let init = InitialMoments::new(&sigma, &theta).unwrap();
        for tau in [0.1, 1.0, 100.0] {
            let p = discounted_moments_ale(&m, &init, tau).unwrap();
            assert!((p.p_real - &sigma).amax() < 1e-12);
        }
    }

    #[test]
    fn unstable_model_has_finite_horizon() {
        // R indefinite: hyperbolic dynamics
        let m = one_mode(&[1.0, 0.0, 0.0, -1.0]);
        let bound = horizon_bound(m.dynamics()).unwrap();
        assert!((bound - 0.5).abs() < 1e-10);
        let init = InitialMoments::new(&RealMatrix::identity(2, 2), m.theta()).unwrap();
        assert!(discounted_moments_ale(&m, &init, 0.4).is_ok());
        assert!(matches!(
            discounted_moments_ale(&m, &init, 0.6),
            Err(Error::HorizonTooLong { .. })
        ));
        assert!(matches!(spectral_decompose(&m), Err(Error::NotOscillatory(_))));
    }

    #[test]
    fn nilpotent_dynamics_is_degenerate() {
        let m = one_mode(&[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            spectral_decompose(&m),
            Err(Error::DegenerateEigenbasis(_))
        ));
    }
}
