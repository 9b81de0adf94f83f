//! Cost, gradients and first-order optimality conditions of the coherent
//! filtering problem.

use crate::composite::{assemble, blocks, gramian_set, jacobi_residual, GramianSet, PlantObserverSystem};
use crate::error::{Error, Result};
use crate::matlib::{inner, min_eigenvalue_sym, spectral_norm, sym, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// `𝒵 = ⟨𝒞ᵀ𝒞, 𝒫⟩`
    pub total: f64,
    /// `⟨SᵀS, 𝒫⟩`
    pub error_ms: f64,
    /// `λ tr(ΠL𝒫₂₂Lᵀ)`
    pub penalty: f64,
    /// `(1/τ)⟨𝒬, Σ⟩`
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub grad_l: RealMatrix,
    /// Symmetric.
    pub grad_m: RealMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityResidual {
    /// `‖Θ₁ℰ₁₂ - ℰ₂₁ᵀΘ₂ - (λ/2)ΠL𝒫₂₂‖`
    pub res_l: f64,
    /// `‖Θ₂ℰ₂₂ - ℰ₂₂ᵀΘ₂‖`
    pub res_m: f64,
    /// `‖D₁₂ - (λ/2)ΠLP₂₂‖`
    pub res_lie_l: f64,
    /// `‖D₂₂‖`
    pub res_lie_m: f64,
}

struct Evaluated {
    sys: PlantObserverSystem,
    ctc: RealMatrix,
    g: GramianSet,
}

fn evaluate(sys: &PlantObserverSystem) -> Result<Evaluated> {
    let d = assemble(sys)?;
    let g = gramian_set(sys, &d)?;
    Ok(Evaluated {
        sys: sys.clone(),
        ctc: d.ctc(),
        g,
    })
}

fn cost_from(e: &Evaluated) -> CostReport {
    let sys = &e.sys;
    let s = sys.error_weight();
    let [_, _, _, p22] = blocks(&e.g.p_gram, sys.n());
    CostReport {
        total: inner(&e.ctc, &e.g.p_gram),
        error_ms: inner(&(s.transpose() * &s), &e.g.p_gram),
        penalty: sys.lambda * (&sys.pi_weight * &sys.coupling * p22 * sys.coupling.transpose()).trace(),
        dual: inner(&e.g.q_gram, &sys.sigma()) / sys.tau,
    }
}

pub fn cost(sys: &PlantObserverSystem) -> Result<CostReport> {
    Ok(cost_from(&evaluate(sys)?))
}

/// `Θ₁ℰ₁₂ - ℰ₂₁ᵀΘ₂` and `Θ₂ℰ₂₂ - ℰ₂₂ᵀΘ₂`.
fn hankel_terms(sys: &PlantObserverSystem, g: &GramianSet) -> (RealMatrix, RealMatrix) {
    let [_, e12, e21, e22] = blocks(&g.hankelian, sys.n());
    (
        &sys.theta1 * e12 - e21.transpose() * &sys.theta2,
        &sys.theta2 * &e22 - e22.transpose() * &sys.theta2,
    )
}

pub fn gradients(sys: &PlantObserverSystem) -> Result<GradientPair> {
    let e = evaluate(sys)?;
    Ok(gradients_from(&e))
}

fn gradients_from(e: &Evaluated) -> GradientPair {
    let sys = &e.sys;
    let (t_l, t_m) = hankel_terms(sys, &e.g);
    let [_, _, _, p22] = blocks(&e.g.p_gram, sys.n());
    GradientPair {
        grad_l: (&sys.pi_weight * &sys.coupling * p22 * sys.lambda - t_l * 2.0) * 2.0,
        grad_m: sym(&(t_m * -2.0)),
    }
}

pub fn stationarity(sys: &PlantObserverSystem) -> Result<StationarityResidual> {
    let e = evaluate(sys)?;
    stationarity_from(sys, &e.g)
}

pub fn stationarity_from(sys: &PlantObserverSystem, g: &GramianSet) -> Result<StationarityResidual> {
    let n = sys.n();
    let (t_l, t_m) = hankel_terms(sys, g);
    let [_, _, _, p22] = blocks(&g.p_gram, n);
    let [_, d12, _, d22] = blocks(&g.lie_d, n);
    let [_, _, _, lie_p22] = blocks(&g.lie_p, n);
    let half = sys.lambda / 2.0;
    Ok(StationarityResidual {
        res_l: (t_l - &sys.pi_weight * &sys.coupling * p22 * half).norm(),
        res_m: t_m.norm(),
        res_lie_l: (d12 - &sys.pi_weight * &sys.coupling * lie_p22 * half).norm(),
        res_lie_m: d22.norm(),
    })
}

fn check_p22(p22: &RealMatrix) -> Result<()> {
    if !(min_eigenvalue_sym(p22) > 1e-10) {
        return Err(Error::DegenerateP22);
    }
    Ok(())
}

fn inverse(m: &RealMatrix, err: Error) -> Result<RealMatrix> {
    m.clone().try_inverse().ok_or(err)
}

/// `(2/λ) Π⁻¹ (Θ₁ℰ₁₂ - ℰ₂₁ᵀΘ₂) 𝒫₂₂⁻¹`
pub fn recover_coupling(g: &GramianSet, sys: &PlantObserverSystem) -> Result<RealMatrix> {
    let [_, _, _, p22] = blocks(&g.p_gram, sys.n());
    check_p22(&p22)?;
    let (t_l, _) = hankel_terms(sys, g);
    let pi_inv = inverse(&sys.pi_weight, Error::BadWeights("Pi is singular".into()))?;
    Ok(pi_inv * t_l * inverse(&p22, Error::DegenerateP22)? * (2.0 / sys.lambda))
}

/// `(2/λ) Π⁻¹ D₁₂ P₂₂⁻¹`
pub fn recover_coupling_lie(g: &GramianSet, sys: &PlantObserverSystem) -> Result<RealMatrix> {
    let n = sys.n();
    let [_, _, _, p22] = blocks(&g.p_gram, n);
    check_p22(&p22)?;
    let [_, d12, _, _] = blocks(&g.lie_d, n);
    let [_, _, _, lie_p22] = blocks(&g.lie_p, n);
    let pi_inv = inverse(&sys.pi_weight, Error::BadWeights("Pi is singular".into()))?;
    Ok(pi_inv * d12 * inverse(&lie_p22, Error::DegenerateP22)? * (2.0 / sys.lambda))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecovery {
    /// Symmetrized recovered energy.
    pub m: RealMatrix,
    /// `‖M - Mᵀ‖` before symmetrization.
    pub symmetry_defect: f64,
}

/// Pieces of the (1,2) block of the Jacobi identity.
struct JacobiBlocks {
    d11: RealMatrix,
    d12: RealMatrix,
    d22: RealMatrix,
    /// `((1/τ)[ΣΘ⁻¹,Q] + [Θ𝒞ᵀ𝒞,P])₁₂`
    source12: RealMatrix,
}

fn jacobi_blocks(g: &GramianSet, sys: &PlantObserverSystem) -> Result<JacobiBlocks> {
    let n = sys.n();
    if sys.nu() != n {
        return Err(Error::DimensionMismatch(format!(
            "energy recovery needs equal plant and observer orders, got {n} and {}",
            sys.nu()
        )));
    }
    let [_, _, _, p22] = blocks(&g.p_gram, n);
    check_p22(&p22)?;
    let [d11, d12, _, d22] = blocks(&g.lie_d, n);
    let det = d12.determinant().abs();
    if !(det > 1e-10 * spectral_norm(&d12).powi(n as i32)) || det == 0.0 {
        return Err(Error::DegenerateD12);
    }
    let d = assemble(sys)?;
    // [D, 𝒜] is linear in M; strip it to isolate the M-independent sources
    let full = jacobi_residual(sys, &d, g)? - crate::matlib::commutator(&g.lie_d, &d.a_full);
    let [_, source12, _, _] = blocks(&full, n);
    Ok(JacobiBlocks {
        d11,
        d12,
        d22,
        source12,
    })
}

fn solve_energy(j: &JacobiBlocks, sys: &PlantObserverSystem, rhs: RealMatrix) -> Result<EnergyRecovery> {
    let theta2_inv = inverse(&sys.theta2, Error::BadCcr("singular".into()))?;
    let m = theta2_inv * inverse(&j.d12, Error::DegenerateD12)? * rhs;
    Ok(EnergyRecovery {
        symmetry_defect: (&m - m.transpose()).norm(),
        m: sym(&m),
    })
}

/// `M = Θ₂⁻¹D₁₂⁻¹(Θ₁KD₁₂ - D₁₁Θ₁L - ½((1/τ)[ΣΘ⁻¹,Q]₁₂ + [Θ𝒞ᵀ𝒞,P]₁₂))`.
///
/// Valid where `D₂₂ = 0`; see [`recover_observer_energy_exact`] otherwise.
pub fn recover_observer_energy(g: &GramianSet, sys: &PlantObserverSystem) -> Result<EnergyRecovery> {
    let j = jacobi_blocks(g, sys)?;
    let t1 = &sys.theta1;
    let rhs = t1 * &sys.k_energy * &j.d12 - &j.d11 * t1 * &sys.coupling - &j.source12 * 0.5;
    solve_energy(&j, sys, rhs)
}

/// Same as [`recover_observer_energy`] with the `Θ₁LD₂₂` term kept, so it
/// returns the input `M` for any nondegenerate admissible observer.
pub fn recover_observer_energy_exact(g: &GramianSet, sys: &PlantObserverSystem) -> Result<EnergyRecovery> {
    let j = jacobi_blocks(g, sys)?;
    let t1 = &sys.theta1;
    let rhs = t1 * &sys.k_energy * &j.d12 - &j.d11 * t1 * &sys.coupling
        + t1 * &sys.coupling * &j.d22
        - &j.source12 * 0.5;
    solve_energy(&j, sys, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceRelation {
    /// `‖Θ₂ℰ₂₂ - ℰ₂₂ᵀΘ₂‖`
    pub lower: f64,
    /// `‖Θ₁ℰ₁₂ - ℰ₂₁ᵀΘ₂ - (λ/2)ΠL𝒫₂₂‖`
    pub upper: f64,
}

impl CovarianceRelation {
    pub fn norm(&self) -> f64 {
        self.lower.hypot(self.upper)
    }
}

/// Blocks of `Θℰ_{·2} - ℰ_{2·}ᵀΘ₂`, both zero at a stationary point.
pub fn covariance_relation_check(sys: &PlantObserverSystem, g: &GramianSet) -> CovarianceRelation {
    let (t_l, t_m) = hankel_terms(sys, g);
    let [_, _, _, p22] = blocks(&g.p_gram, sys.n());
    CovarianceRelation {
        lower: t_m.norm(),
        upper: (t_l - &sys.pi_weight * &sys.coupling * p22 * (sys.lambda / 2.0)).norm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub max_iter: usize,
    /// Stop once `‖∇𝒵‖ ≤ tol (1 + 𝒵)`.
    pub tol: f64,
    pub initial_step: f64,
    /// Keep `M` fixed and move only `L`.
    pub fix_observer_energy: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-6,
            initial_step: 1e-2,
            fix_observer_energy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub system: PlantObserverSystem,
    pub cost: CostReport,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain gradient descent on `(L, M)` with step halving.
pub fn gradient_descent(sys: &PlantObserverSystem, opts: &DescentOptions) -> Result<DescentResult> {
    let mut cur = sys.clone();
    let mut e = evaluate(&cur)?;
    let mut c = cost_from(&e);
    let mut step = opts.initial_step;
    let grad_norm = |g: &GradientPair, fix: bool| {
        if fix {
            g.grad_l.norm()
        } else {
            g.grad_l.norm().hypot(g.grad_m.norm())
        }
    };
    for it in 0..opts.max_iter {
        let g = gradients_from(&e);
        let gn = grad_norm(&g, opts.fix_observer_energy);
        if gn <= opts.tol * (1.0 + c.total.abs()) {
            return Ok(DescentResult {
                system: cur,
                cost: c,
                grad_norm: gn,
                iterations: it,
                converged: true,
            });
        }
        let mut accepted = false;
        while step > 1e-16 {
            let mut trial = cur.with_coupling(&cur.coupling - &g.grad_l * step);
            if !opts.fix_observer_energy {
                trial.m_energy = sym(&(&cur.m_energy - &g.grad_m * step));
            }
            if let Ok(te) = evaluate(&trial) {
                let tc = cost_from(&te);
                if tc.total < c.total {
                    cur = trial;
                    e = te;
                    c = tc;
                    step *= 2.0;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(DescentResult {
                system: cur,
                cost: c,
                grad_norm: gn,
                iterations: it,
                converged: false,
            });
        }
    }
    let gn = grad_norm(&gradients_from(&e), opts.fix_observer_energy);
    Ok(DescentResult {
        system: cur,
        cost: c,
        grad_norm: gn,
        iterations: opts.max_iter,
        converged: false,
    })
}
