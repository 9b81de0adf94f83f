//! Bounds on how much a directly coupled observer perturbs the plant moments.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::composite::{assemble, blocks, controllability_gramian, CompositeDynamics, PlantObserverSystem};
use crate::error::{Error, Result};
use crate::matlib::{
    block_diag, eigenvalues, kron, kron_sum, min_eigenvalue_sym, solve_lyapunov,
    spectral_norm, spectral_norm_c, spectral_radius, stability_report, sym, to_complex,
    ComplexMatrix, RealMatrix,
};

/// Matrices of the vectorized block system for the coupled Gramian.
///
/// Unknowns are ordered `[vec 𝒫₁₁; vec 𝒫₂₂]` and `[vec 𝒫₂₁; vec 𝒫₁₂]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallGainData {
    pub d1: RealMatrix,
    pub d2: RealMatrix,
    pub e1: RealMatrix,
    pub e2: RealMatrix,
    pub delta1: RealMatrix,
    pub delta2: RealMatrix,
    pub norm_delta1: f64,
    pub norm_delta2: f64,
    /// `‖Δ₁‖‖Δ₂‖`
    pub eps: f64,
}

impl SmallGainData {
    pub fn applicable(&self) -> bool {
        self.eps < 1.0
    }
}

struct Parts {
    a_tau: RealMatrix,
    alpha_tau: RealMatrix,
    bl: RealMatrix,
    beta_lt: RealMatrix,
}

fn parts(sys: &PlantObserverSystem) -> Parts {
    let (n, nu) = (sys.n(), sys.nu());
    let shift = 1.0 / (2.0 * sys.tau);
    Parts {
        a_tau: &sys.theta1 * &sys.k_energy * 2.0 - RealMatrix::identity(n, n) * shift,
        alpha_tau: &sys.theta2 * &sys.m_energy * 2.0 - RealMatrix::identity(nu, nu) * shift,
        bl: &sys.theta1 * &sys.coupling * 2.0,
        beta_lt: &sys.theta2 * sys.coupling.transpose() * 2.0,
    }
}

fn stack(top: &[&RealMatrix], bottom: &[&RealMatrix]) -> RealMatrix {
    let rows_t = top[0].nrows();
    let rows_b = bottom[0].nrows();
    let cols: usize = top.iter().map(|m| m.ncols()).sum();
    let mut out = RealMatrix::zeros(rows_t + rows_b, cols);
    let mut c = 0;
    for (t, b) in top.iter().zip(bottom) {
        out.view_mut((0, c), (rows_t, t.ncols())).copy_from(t);
        out.view_mut((rows_t, c), (rows_b, b.ncols())).copy_from(b);
        c += t.ncols();
    }
    out
}

pub fn smallgain_data(sys: &PlantObserverSystem, _dyn: &CompositeDynamics) -> Result<SmallGainData> {
    let p = parts(sys);
    if !stability_report(&p.a_tau)?.is_hurwitz || !stability_report(&p.alpha_tau)?.is_hurwitz {
        return Err(Error::UncoupledBlocksNotStable);
    }
    let (n, nu) = (sys.n(), sys.nu());
    let i_n = RealMatrix::identity(n, n);
    let i_nu = RealMatrix::identity(nu, nu);
    let d1 = block_diag(&kron_sum(&p.a_tau, &p.a_tau), &kron_sum(&p.alpha_tau, &p.alpha_tau));
    let d2 = block_diag(&kron_sum(&p.a_tau, &p.alpha_tau), &kron_sum(&p.alpha_tau, &p.a_tau));
    let e1 = stack(
        &[&kron(&i_n, &p.bl), &kron(&p.bl, &i_n)],
        &[&kron(&p.beta_lt, &i_nu), &kron(&i_nu, &p.beta_lt)],
    );
    let e2 = stack(
        &[&kron(&i_n, &p.beta_lt), &kron(&p.bl, &i_nu)],
        &[&kron(&p.beta_lt, &i_n), &kron(&i_nu, &p.bl)],
    );
    let delta1 = d1.clone().lu().solve(&e1).ok_or(Error::UncoupledBlocksNotStable)?;
    let delta2 = d2.clone().lu().solve(&e2).ok_or(Error::UncoupledBlocksNotStable)?;
    let norm_delta1 = spectral_norm(&delta1);
    let norm_delta2 = spectral_norm(&delta2);
    Ok(SmallGainData {
        d1,
        d2,
        e1,
        e2,
        delta1,
        delta2,
        norm_delta1,
        norm_delta2,
        eps: norm_delta1 * norm_delta2,
    })
}

/// `(1/τ) L(A_τ, Σ₁)` and `(1/τ) L(α_τ, Σ₂)`.
pub fn uncoupled_moments(sys: &PlantObserverSystem) -> Result<(RealMatrix, RealMatrix)> {
    let p = parts(sys);
    let p1 = solve_lyapunov(&p.a_tau, &(&sys.sigma1 / sys.tau))?;
    let p2 = solve_lyapunov(&p.alpha_tau, &(&sys.sigma2 / sys.tau))?;
    Ok((p1, p2))
}

/// Fixed-grid search for the discounted peak gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    /// Total coarse samples, split between a linear and a logarithmic part.
    pub samples: usize,
    /// Half-width of the range; `None` picks four times the largest frequency.
    pub omega_max: Option<f64>,
    pub refine_passes: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            samples: 2048,
            omega_max: None,
            refine_passes: 3,
        }
    }
}

fn resolvent_gain(a: &RealMatrix, input: &RealMatrix, re: f64, im: f64) -> Result<f64> {
    let n = a.nrows();
    let s = Complex64::new(re, im);
    let m = ComplexMatrix::identity(n, n) * s - to_complex(a);
    let x = m
        .lu()
        .solve(&to_complex(input))
        .ok_or(Error::ResolventSingular { re, im })?;
    if x.iter().any(|z| !z.is_finite()) {
        return Err(Error::ResolventSingular { re, im });
    }
    Ok(spectral_norm_c(&x))
}

fn peak_gain(a: &RealMatrix, input: &RealMatrix, tau: f64, grid: &FrequencyGrid) -> Result<f64> {
    if input.amax() == 0.0 {
        return Ok(0.0);
    }
    let re = 1.0 / (2.0 * tau);
    let eig = eigenvalues(a)?;
    for z in &eig {
        if (z.re - re).abs() <= 1e-12 * (1.0 + z.norm()) {
            return Err(Error::ResolventSingular { re, im: z.im });
        }
    }
    let top = eig.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let omega_max = grid.omega_max.unwrap_or((4.0 * top).max(2.0 / tau));
    let samples = grid.samples.max(2048);
    let half = samples / 2;
    let mut nodes: Vec<f64> = (0..half)
        .map(|i| -omega_max + 2.0 * omega_max * i as f64 / (half - 1) as f64)
        .collect();
    let logs = samples - half;
    let per_side = logs / 2;
    for i in 0..per_side {
        let x = omega_max * 10f64.powf(-6.0 + 6.0 * i as f64 / (per_side - 1) as f64);
        nodes.push(x);
        nodes.push(-x);
    }
    nodes.extend(eig.iter().map(|z| z.im));
    nodes.push(0.0);

    let mut best = (0.0, f64::NEG_INFINITY);
    for &w in &nodes {
        let g = resolvent_gain(a, input, re, w)?;
        if g > best.1 {
            best = (w, g);
        }
    }
    let mut width = 2.0 * omega_max / (half - 1) as f64;
    for _ in 0..grid.refine_passes {
        let center = best.0;
        for j in 0..=32 {
            let w = center - width + 2.0 * width * j as f64 / 32.0;
            let g = resolvent_gain(a, input, re, w)?;
            if g > best.1 {
                best = (w, g);
            }
        }
        width /= 8.0;
    }
    Ok(best.1)
}

/// `(γ₁, γ₂)`: peaks of `‖F(s)BL‖` and `‖Φ(s)βLᵀ‖` along `Re s = 1/(2τ)`.
pub fn frequency_gains(
    sys: &PlantObserverSystem,
    _dyn: &CompositeDynamics,
    grid: &FrequencyGrid,
) -> Result<(f64, f64)> {
    let a = &sys.theta1 * &sys.k_energy * 2.0;
    let alpha = &sys.theta2 * &sys.m_energy * 2.0;
    let bl = &sys.theta1 * &sys.coupling * 2.0;
    let beta_lt = &sys.theta2 * sys.coupling.transpose() * 2.0;
    Ok((
        peak_gain(&a, &bl, sys.tau, grid)?,
        peak_gain(&alpha, &beta_lt, sys.tau, grid)?,
    ))
}

/// `τ √(r(P₁⁻¹ B N Bᵀ))` with `N = L𝒫₂₂Lᵀ`.
pub fn kappa(sys: &PlantObserverSystem) -> Result<f64> {
    let dyn_ = assemble(sys)?;
    let p = controllability_gramian(sys, &dyn_)?;
    let (p1, _) = uncoupled_moments(sys)?;
    kappa_from(sys, &p1, &p)
}

fn coupling_source(sys: &PlantObserverSystem, p_gram: &RealMatrix) -> RealMatrix {
    let [_, _, _, p22] = blocks(p_gram, sys.n());
    let b = &sys.theta1 * 2.0;
    sym(&(&b * &sys.coupling * p22 * sys.coupling.transpose() * b.transpose()))
}

fn kappa_from(sys: &PlantObserverSystem, p1: &RealMatrix, p_gram: &RealMatrix) -> Result<f64> {
    let scale = p1.amax();
    if !(min_eigenvalue_sym(p1) > 1e-12 * scale) {
        return Err(Error::SingularP1);
    }
    let p1_inv = p1.clone().try_inverse().ok_or(Error::SingularP1)?;
    let bnb = coupling_source(sys, p_gram);
    Ok(sys.tau * spectral_radius(&(p1_inv * bnb))?.sqrt())
}

/// Semidefinite sandwich `lower ⪯ 𝒫₁₁ - P₁ ⪯ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiCheck {
    pub w: f64,
    pub m: f64,
    pub lower: RealMatrix,
    /// `None` when `m ≤ τ`.
    pub upper: Option<RealMatrix>,
    /// Smallest eigenvalue of `(𝒫₁₁ - P₁) - lower`.
    pub lower_slack: f64,
    /// Smallest eigenvalue of `upper - (𝒫₁₁ - P₁)`.
    pub upper_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackactionReport {
    pub eps: f64,
    pub norm_delta1: f64,
    pub norm_delta2: f64,
    /// `ε/(1-ε) ‖𝒫_*‖₂`, absent when `ε ≥ 1`.
    pub bound_p11: Option<f64>,
    /// `√(1+‖Δ₁‖²)/(1-ε) ‖Δ₂‖ ‖𝒫_*‖₂`, absent when `ε ≥ 1`.
    pub bound_full: Option<f64>,
    pub observed_p11_dev: f64,
    pub observed_full_dev: f64,
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lmi: LmiCheck,
}

impl BackactionReport {
    /// True when an applicable bound is exceeded by more than `slack`.
    pub fn violated(&self, slack: f64) -> bool {
        let exceeds = |b: Option<f64>, obs: f64| b.is_some_and(|b| obs > b + slack);
        exceeds(self.bound_p11, self.observed_p11_dev)
            || exceeds(self.bound_full, self.observed_full_dev)
            || self.lmi.lower_slack < -slack
            || self.lmi.upper_slack.is_some_and(|s| s < -slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundOptions {
    /// Lower-bound parameter; defaults to `τ/κ`.
    pub w: Option<f64>,
    /// Upper-bound parameter; defaults to `τ/κ`, must exceed `τ`.
    pub m: Option<f64>,
    pub grid: FrequencyGrid,
}

pub fn deviation_bounds(sys: &PlantObserverSystem) -> Result<BackactionReport> {
    deviation_bounds_with(sys, &BoundOptions::default())
}

pub fn deviation_bounds_with(sys: &PlantObserverSystem, opts: &BoundOptions) -> Result<BackactionReport> {
    let dyn_ = assemble(sys)?;
    let sg = smallgain_data(sys, &dyn_)?;
    let p = controllability_gramian(sys, &dyn_)?;
    let (p1, p2) = uncoupled_moments(sys)?;
    let p_star = block_diag(&p1, &p2);
    let n = sys.n();
    let [p11, _, _, _] = blocks(&p, n);
    let dev = &p11 - &p1;
    let star_norm = p_star.norm();
    let (bound_p11, bound_full) = if sg.applicable() {
        let eps = sg.eps;
        (
            Some(eps / (1.0 - eps) * star_norm),
            Some((1.0 + sg.norm_delta1.powi(2)).sqrt() / (1.0 - eps) * sg.norm_delta2 * star_norm),
        )
    } else {
        (None, None)
    };
    let kappa = kappa_from(sys, &p1, &p)?;
    let lmi = lmi_check(sys, &p1, &p, &dev, kappa, opts)?;
    let (gamma1, gamma2) = frequency_gains(sys, &dyn_, &opts.grid)?;
    Ok(BackactionReport {
        eps: sg.eps,
        norm_delta1: sg.norm_delta1,
        norm_delta2: sg.norm_delta2,
        bound_p11,
        bound_full,
        observed_p11_dev: dev.norm(),
        observed_full_dev: (&p - &p_star).norm(),
        kappa,
        gamma1,
        gamma2,
        lmi,
    })
}

fn lmi_check(
    sys: &PlantObserverSystem,
    p1: &RealMatrix,
    p_gram: &RealMatrix,
    dev: &RealMatrix,
    kappa: f64,
    opts: &BoundOptions,
) -> Result<LmiCheck> {
    let tau = sys.tau;
    let n = sys.n();
    let default = if kappa > 0.0 { tau / kappa } else { f64::INFINITY };
    let w = opts.w.unwrap_or(default);
    let m = opts.m.unwrap_or(default);
    if !(w > 0.0) {
        return Err(Error::InvalidParameter(format!("w must be positive, got {w}")));
    }
    if opts.m.is_some() && !(m > tau) {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed tau = {tau}")));
    }
    let a = &sys.theta1 * &sys.k_energy * 2.0;
    let id = RealMatrix::identity(n, n);
    let bnb = coupling_source(sys, p_gram);

    let lower = if w.is_infinite() {
        RealMatrix::zeros(n, n)
    } else {
        let varsigma = w * tau / (w + tau);
        -solve_lyapunov(&(&a - &id / (2.0 * varsigma)), &(p1 / w + &bnb * w))?
    };
    let upper = if m.is_infinite() {
        Some(RealMatrix::zeros(n, n))
    } else if m > tau {
        let theta = m * tau / (m - tau);
        let a_theta = &a - &id / (2.0 * theta);
        if stability_report(&a_theta)?.is_hurwitz {
            Some(solve_lyapunov(&a_theta, &(p1 / m + &bnb * m))?)
        } else {
            None
        }
    } else {
        None
    };
    let lower_slack = min_eigenvalue_sym(&(dev - &lower));
    let upper_slack = upper.as_ref().map(|u| min_eigenvalue_sym(&(u - dev)));
    Ok(LmiCheck {
        w,
        m,
        lower,
        upper,
        lower_slack,
        upper_slack,
    })
}

/// `Σ_k tr(S_k P_k S_kᵀ) - ‖SSᵀ‖₂ · √(1+‖Δ₁‖²)/(1-ε) ‖Δ₂‖ ‖𝒫_*‖₂`.
pub fn estimation_error_lower_bound(sys: &PlantObserverSystem) -> Result<f64> {
    let dyn_ = assemble(sys)?;
    let sg = smallgain_data(sys, &dyn_)?;
    if !sg.applicable() {
        return Err(Error::SmallGainViolated(sg.eps));
    }
    let (p1, p2) = uncoupled_moments(sys)?;
    let base = (&sys.s1 * &p1 * sys.s1.transpose()).trace() + (&sys.s2 * &p2 * sys.s2.transpose()).trace();
    if sg.eps == 0.0 {
        return Ok(base);
    }
    let sst = &sys.s1 * sys.s1.transpose() + &sys.s2 * sys.s2.transpose();
    let star_norm = block_diag(&p1, &p2).norm();
    let dev = (1.0 + sg.norm_delta1.powi(2)).sqrt() / (1.0 - sg.eps) * sg.norm_delta2 * star_norm;
    Ok(base - sst.norm() * dev)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockBoundSlack {
    /// Smallest eigenvalue of `wN₁₁ + N₂₂/w ∓ (N₁₂ + N₂₁)` over both signs.
    pub weighted: f64,
    /// Smallest eigenvalue of `2√(r(N₁₁⁻¹N₂₂)) N₁₁ ∓ (N₁₂ + N₂₁)` over both signs.
    pub spectral: f64,
}

/// Slack in both forms of the block bound for a PSD matrix with equal square blocks.
pub fn block_bound_slack(n_mat: &RealMatrix, w: f64) -> Result<BlockBoundSlack> {
    let dim = n_mat.nrows();
    if !n_mat.is_square() || !dim.is_multiple_of(2) {
        return Err(Error::DimensionMismatch("block bound needs equal square blocks".into()));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("w must be positive, got {w}")));
    }
    let [n11, n12, n21, n22] = blocks(n_mat, dim / 2);
    let cross = &n12 + &n21;
    let weighted_rhs = &n11 * w + &n22 / w;
    let inv = n11
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("leading block is singular".into()))?;
    let r = spectral_radius(&(inv * &n22))?;
    let spectral_rhs = &n11 * (2.0 * r.sqrt());
    let slack = |rhs: &RealMatrix| {
        min_eigenvalue_sym(&(rhs - &cross)).min(min_eigenvalue_sym(&(rhs + &cross)))
    };
    Ok(BlockBoundSlack {
        weighted: slack(&weighted_rhs),
        spectral: slack(&spectral_rhs),
    })
}

/// `[vec 𝒫₁₁; vec 𝒫₂₂]` and `[vec 𝒫₂₁; vec 𝒫₁₂]` for a partitioned matrix.
pub fn split_vectors(p: &RealMatrix, n: usize) -> (DVector<f64>, DVector<f64>) {
    let [p11, p12, p21, p22] = blocks(p, n);
    let cat = |a: &RealMatrix, b: &RealMatrix| {
        DVector::from_iterator(
            a.len() + b.len(),
            a.as_slice().iter().chain(b.as_slice()).copied(),
        )
    };
    (cat(&p11, &p22), cat(&p21, &p12))
}
