//! Observers with `M = K` and symmetric `L`, whose estimation error evolves
//! autonomously, and the continuation method for their optimal coupling.

use nalgebra::DVector;

use crate::composite::{blocks, gramians_from_parts, positivity_of, PlantObserverSystem};
use crate::error::{Error, Result};
use crate::matlib::{
    block2x2, block_diag, inner, is_symmetric, min_eigenvalue_sym, smat, solve_lyapunov, svec,
    sym, RealMatrix,
};
use crate::qho::{validate_ccr, InitialMoments};

const STRUCT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AutonomousObserverProblem {
    /// Common CCR matrix of plant and observer.
    pub theta0: RealMatrix,
    pub k_energy: RealMatrix,
    /// Common error weight `S₀ = S₁ = S₂`.
    pub s0: RealMatrix,
    pub sigma1: RealMatrix,
    pub sigma2: RealMatrix,
    pub pi_weight: RealMatrix,
    pub tau: f64,
}

impl AutonomousObserverProblem {
    pub fn n(&self) -> usize {
        self.theta0.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        validate_ccr(&self.theta0)?;
        let n = self.n();
        for (name, m) in [
            ("K", &self.k_energy),
            ("S0", &self.s0),
            ("Sigma1", &self.sigma1),
            ("Sigma2", &self.sigma2),
            ("Pi", &self.pi_weight),
        ] {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {:?}, expected {n}x{n}",
                    m.shape()
                )));
            }
        }
        if !is_symmetric(&self.k_energy, STRUCT_TOL * (1.0 + self.k_energy.amax())) {
            return Err(Error::BadEnergy);
        }
        if self.s0.determinant().abs() <= 1e-14 * self.s0.amax().powi(n as i32) {
            return Err(Error::InvalidParameter("S0 is singular".into()));
        }
        InitialMoments::new(&self.sigma1, &self.theta0)?;
        InitialMoments::new(&self.sigma2, &self.theta0)?;
        if !is_symmetric(&self.pi_weight, STRUCT_TOL * (1.0 + self.pi_weight.amax()))
            || min_eigenvalue_sym(&self.pi_weight) <= 0.0
        {
            return Err(Error::BadWeights("Pi must be symmetric positive definite".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// The general problem instance with `M = K`, `S₁ = S₂ = S₀` and `λ = 1/μ`.
    pub fn to_system(&self, coupling: RealMatrix, mu: f64) -> PlantObserverSystem {
        PlantObserverSystem {
            theta1: self.theta0.clone(),
            theta2: self.theta0.clone(),
            k_energy: self.k_energy.clone(),
            m_energy: self.k_energy.clone(),
            coupling,
            sigma1: self.sigma1.clone(),
            sigma2: self.sigma2.clone(),
            s1: self.s0.clone(),
            s2: self.s0.clone(),
            pi_weight: self.pi_weight.clone(),
            lambda: 1.0 / mu,
            tau: self.tau,
        }
    }

    fn theta(&self) -> RealMatrix {
        block_diag(&self.theta0, &self.theta0)
    }

    fn sigma(&self) -> RealMatrix {
        block_diag(&self.sigma1, &self.sigma2)
    }

    /// `S = [S₀, -S₀]`
    pub fn error_weight(&self) -> RealMatrix {
        let n = self.n();
        let mut s = RealMatrix::zeros(n, 2 * n);
        s.view_mut((0, 0), (n, n)).copy_from(&self.s0);
        s.view_mut((0, n), (n, n)).copy_from(&(-&self.s0));
        s
    }

    /// `2Θ[[K, L], [L, K]]`
    pub fn composite_dynamics(&self, l: &RealMatrix) -> RealMatrix {
        self.theta() * block2x2(&self.k_energy, l, l, &self.k_energy) * 2.0
    }
}

/// True iff `M = K` and `L = Lᵀ`.
pub fn structure_check(k: &RealMatrix, m: &RealMatrix, l: &RealMatrix) -> Result<bool> {
    if !k.is_square() || m.shape() != k.shape() || l.shape() != k.shape() {
        return Err(Error::DimensionMismatch(
            "structure check needs equal plant and observer orders".into(),
        ));
    }
    Ok((m - k).amax() <= STRUCT_TOL && is_symmetric(l, STRUCT_TOL))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDynamics {
    /// `Â = 2Θ̂R̂ = 2S₀Θ₀(K - L)S₀⁻¹`
    pub a_hat: RealMatrix,
    /// `Θ̂ = 2S₀Θ₀S₀ᵀ`
    pub theta_hat: RealMatrix,
    /// `R̂ = ½S₀⁻ᵀ(K - L)S₀⁻¹`
    pub r_hat: RealMatrix,
}

pub fn error_dynamics(prob: &AutonomousObserverProblem, l: &RealMatrix) -> Result<ErrorDynamics> {
    if !structure_check(&prob.k_energy, &prob.k_energy, l)? {
        return Err(Error::StructureViolated("coupling is not symmetric".into()));
    }
    let s_inv = prob
        .s0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("S0 is singular".into()))?;
    let theta_hat = &prob.s0 * &prob.theta0 * prob.s0.transpose() * 2.0;
    let r_hat = sym(&(s_inv.transpose() * (&prob.k_energy - l) * &s_inv * 0.5));
    let a_hat = &theta_hat * &r_hat * 2.0;
    Ok(ErrorDynamics {
        a_hat,
        theta_hat,
        r_hat,
    })
}

/// Gramians, `𝒫₂₂` and the discounted error moment at one `(μ, L)`.
struct Evaluation {
    f: RealMatrix,
    p22: RealMatrix,
    error_ms: f64,
}

fn evaluate(prob: &AutonomousObserverProblem, mu: f64, l: &RealMatrix) -> Result<Evaluation> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be nonnegative, got {mu}")));
    }
    let n = prob.n();
    let theta = prob.theta();
    let s = prob.error_weight();
    let sts = s.transpose() * &s;
    let mut ctc = sts.clone();
    if mu > 0.0 {
        let extra = l * &prob.pi_weight * l / mu;
        let mut v = ctc.view_mut((n, n), (n, n));
        v += &extra;
    }
    let g = gramians_from_parts(
        &theta,
        &prob.composite_dynamics(l),
        &prob.sigma(),
        &sym(&ctc),
        prob.tau,
    )?;
    let [_, _, _, p22] = blocks(&g.p_gram, n);
    if !(min_eigenvalue_sym(&p22) > 1e-10) {
        return Err(Error::DegenerateP22);
    }
    let ste = (&theta * &g.hankelian - g.hankelian.transpose() * &theta) * 0.5;
    let [_, ste12, _, _] = blocks(&ste, n);
    let pi_inv = prob
        .pi_weight
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::BadWeights("Pi is singular".into()))?;
    let l_tilde = solve_lyapunov(&(&p22 * &pi_inv), &sym(&ste12))? * -8.0;
    Ok(Evaluation {
        f: sym(&(&pi_inv * l_tilde * &pi_inv)),
        error_ms: inner(&sts, &g.p_gram),
        p22,
    })
}

/// `f(μ, L)` with `L_μ = μ f(μ, L_μ)` along the optimal path.
pub fn fixed_point_map(prob: &AutonomousObserverProblem, mu: f64, l: &RealMatrix) -> Result<RealMatrix> {
    if !is_symmetric(l, STRUCT_TOL * (1.0 + l.amax())) {
        return Err(Error::StructureViolated("coupling is not symmetric".into()));
    }
    Ok(evaluate(prob, mu, l)?.f)
}

/// `L′ = 2Π⁻¹ L(P₂Π⁻¹, Θ₀𝒬₀(P₁+P₂) - (P₁+P₂)𝒬₀Θ₀) Π⁻¹`, the slope of `L_μ` at `μ = 0`.
pub fn weak_coupling_direction(prob: &AutonomousObserverProblem) -> Result<RealMatrix> {
    prob.validate()?;
    let n = prob.n();
    let id = RealMatrix::identity(n, n);
    let shift = &id / (2.0 * prob.tau);
    let a_tau = &prob.theta0 * &prob.k_energy * 2.0 - &shift;
    let p1 = solve_lyapunov(&a_tau, &(&prob.sigma1 / prob.tau))?;
    let p2 = solve_lyapunov(&a_tau, &(&prob.sigma2 / prob.tau))?;
    if !(min_eigenvalue_sym(&p2) > 1e-12 * p2.amax()) {
        return Err(Error::DegenerateP2);
    }
    let ed = error_dynamics(prob, &RealMatrix::zeros(n, n))?;
    let q_hat = solve_lyapunov(&(&ed.a_hat - &shift).transpose(), &id)?;
    let q0 = prob.s0.transpose() * q_hat * &prob.s0;
    let pi_inv = prob
        .pi_weight
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::BadWeights("Pi is singular".into()))?;
    let ps = &p1 + &p2;
    let source = &prob.theta0 * &q0 * &ps - &ps * &q0 * &prob.theta0;
    let inner_sol = solve_lyapunov(&(&p2 * &pi_inv), &source)?;
    Ok(sym(&(&pi_inv * inner_sol * &pi_inv * 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopyOptions {
    pub mu_max: f64,
    pub steps: usize,
    /// Corrector stops once `‖L - μf‖ ≤ tol (1 + ‖L‖)`.
    pub tol: f64,
    /// Relative finite-difference step for `∂_L f` and `∂_μ f`.
    pub fd_step: f64,
    pub min_step: f64,
    pub max_corrector_iter: usize,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            mu_max: 5.0,
            steps: 64,
            tol: 1e-10,
            fd_step: 1e-6,
            min_step: 1e-8,
            max_corrector_iter: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Completed,
    /// The corrector failed even at the minimum step; holds the last accepted `μ`.
    Stalled(f64),
    /// The composite energy lost positivity or the horizon became inadmissible
    /// at the first `μ` where this was detected.
    AdmissibilityLost(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisTrace {
    pub mu_grid: Vec<f64>,
    pub l_path: Vec<RealMatrix>,
    pub cost_path: Vec<f64>,
    pub error_path: Vec<f64>,
    /// `λ E_τ(ηᵀΠη)`
    pub penalty_path: Vec<f64>,
    /// `‖L - μf(μ, L)‖`
    pub residual_path: Vec<f64>,
    /// Composite energy positive definite and horizon admissible.
    pub admissibility_path: Vec<bool>,
    pub stop: StopReason,
}

impl SynthesisTrace {
    fn new() -> Self {
        Self {
            mu_grid: Vec::new(),
            l_path: Vec::new(),
            cost_path: Vec::new(),
            error_path: Vec::new(),
            penalty_path: Vec::new(),
            residual_path: Vec::new(),
            admissibility_path: Vec::new(),
            stop: StopReason::Completed,
        }
    }

    pub fn len(&self) -> usize {
        self.mu_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_grid.is_empty()
    }

    /// Coupling at the last accepted point not exceeding `mu`.
    pub fn coupling_at(&self, mu: f64) -> Option<&RealMatrix> {
        let idx = self.mu_grid.iter().rposition(|m| *m <= mu + 1e-12)?;
        Some(&self.l_path[idx])
    }

    fn push(&mut self, mu: f64, l: RealMatrix, ev: &Evaluation, residual: f64, ok: bool, pi: &RealMatrix) {
        let penalty = if mu > 0.0 {
            (pi * &l * &ev.p22 * &l).trace() / mu
        } else {
            0.0
        };
        self.mu_grid.push(mu);
        self.l_path.push(l);
        self.error_path.push(ev.error_ms);
        self.penalty_path.push(penalty);
        self.cost_path.push(ev.error_ms + penalty);
        self.residual_path.push(residual);
        self.admissibility_path.push(ok);
    }
}

fn residual(prob: &AutonomousObserverProblem, mu: f64, l: &RealMatrix) -> Result<(RealMatrix, Evaluation)> {
    let ev = evaluate(prob, mu, l)?;
    Ok((l - &ev.f * mu, ev))
}

fn basis(n: usize, k: usize) -> RealMatrix {
    let d = n * (n + 1) / 2;
    let mut e = DVector::zeros(d);
    e[k] = 1.0;
    smat(&e, n)
}

/// Central differences of `svec(map(L))` along the symmetric coordinates of `L`.
fn jacobian<F>(n: usize, l: &RealMatrix, h: f64, mut map: F) -> Result<RealMatrix>
where
    F: FnMut(&RealMatrix) -> Result<RealMatrix>,
{
    let d = n * (n + 1) / 2;
    let mut jac = RealMatrix::zeros(d, d);
    for k in 0..d {
        let e = basis(n, k) * h;
        let plus = svec(&map(&(l + &e))?);
        let minus = svec(&map(&(l - &e))?);
        jac.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// Tangent `∂_μ L = (ℐ - μ∂_L f)⁻¹(f + μ∂_μ f)`.
fn tangent(prob: &AutonomousObserverProblem, mu: f64, l: &RealMatrix, opts: &HomotopyOptions) -> Result<RealMatrix> {
    let n = prob.n();
    let f0 = evaluate(prob, mu, l)?.f;
    let h = opts.fd_step * (1.0 + l.norm());
    let hm = opts.fd_step * (1.0 + mu);
    let df_dmu = if mu > hm {
        (evaluate(prob, mu + hm, l)?.f - evaluate(prob, mu - hm, l)?.f) / (2.0 * hm)
    } else {
        (evaluate(prob, mu + hm, l)?.f - &f0) / hm
    };
    let rhs = svec(&(&f0 + df_dmu * mu));
    if mu == 0.0 {
        return Ok(smat(&rhs, n));
    }
    let jf = jacobian(n, l, h, |x| Ok(evaluate(prob, mu, x)?.f))?;
    let d = rhs.len();
    let op = RealMatrix::identity(d, d) - jf * mu;
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvariantViolated("singular continuation tangent".into()))?;
    Ok(smat(&x, n))
}

/// Damped fixed-point iteration with a finite-difference Newton fallback.
fn correct(
    prob: &AutonomousObserverProblem,
    mu: f64,
    start: RealMatrix,
    opts: &HomotopyOptions,
) -> Option<(RealMatrix, f64, Evaluation)> {
    let n = prob.n();
    let mut l = start;
    let (mut g, mut ev) = residual(prob, mu, &l).ok()?;
    let mut newton = false;
    for _ in 0..opts.max_corrector_iter {
        let gn = g.norm();
        if gn <= opts.tol * (1.0 + l.norm()) {
            return Some((l, gn, ev));
        }
        let mut next = None;
        if !newton {
            for s in [1.0, 0.5, 0.25] {
                let cand = sym(&(&l * (1.0 - s) + &ev.f * (mu * s)));
                if let Ok((cg, cev)) = residual(prob, mu, &cand) {
                    if cg.norm() < 0.5 * gn {
                        next = Some((cand, cg, cev));
                        break;
                    }
                }
            }
            if next.is_none() {
                newton = true;
            }
        }
        if newton {
            let h = opts.fd_step * (1.0 + l.norm());
            let jac = jacobian(n, &l, h, |x| Ok(residual(prob, mu, x)?.0)).ok()?;
            let step = smat(&jac.lu().solve(&-svec(&g))?, n);
            let mut t = 1.0;
            while t > 1e-4 {
                let cand = sym(&(&l + &step * t));
                if let Ok((cg, cev)) = residual(prob, mu, &cand) {
                    if cg.norm() < gn {
                        next = Some((cand, cg, cev));
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        let (nl, ng, nev) = next?;
        l = nl;
        g = ng;
        ev = nev;
    }
    let gn = g.norm();
    (gn <= opts.tol * (1.0 + l.norm())).then_some((l, gn, ev))
}

fn admissible_point(prob: &AutonomousObserverProblem, l: &RealMatrix) -> bool {
    positivity_of(&prob.k_energy, l, &prob.k_energy).positive
        && crate::composite::admissibility_of(&prob.composite_dynamics(l), prob.tau)
            .is_ok_and(|a| a.admissible)
}

/// Predictor-corrector continuation of `L = μf(μ, L)` from `L₀ = 0`.
pub fn homotopy_solve(prob: &AutonomousObserverProblem, opts: &HomotopyOptions) -> Result<SynthesisTrace> {
    prob.validate()?;
    if !(opts.mu_max >= 0.0 && opts.mu_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu_max must be nonnegative, got {}", opts.mu_max)));
    }
    if opts.steps < 8 {
        return Err(Error::InvalidParameter(format!("at least 8 steps required, got {}", opts.steps)));
    }
    let n = prob.n();
    let mut trace = SynthesisTrace::new();
    let mut l = RealMatrix::zeros(n, n);
    let ev0 = evaluate(prob, 0.0, &l)?;
    trace.push(0.0, l.clone(), &ev0, 0.0, admissible_point(prob, &l), &prob.pi_weight);
    if opts.mu_max == 0.0 {
        return Ok(trace);
    }
    let base = opts.mu_max / opts.steps as f64;
    let mut h = base;
    let mut mu = 0.0;
    while mu < opts.mu_max {
        // snap to the uniform grid when the step reaches it
        let mut next = (mu + h).min(opts.mu_max);
        let k = (next / base).round();
        if (next - k * base).abs() < 1e-9 * base {
            next = k * base;
        }
        let accepted = tangent(prob, mu, &l, opts)
            .ok()
            .and_then(|t| correct(prob, next, sym(&(&l + t * (next - mu))), opts));
        match accepted {
            Some((nl, res, ev)) => {
                let ok = admissible_point(prob, &nl);
                trace.push(next, nl.clone(), &ev, res, ok, &prob.pi_weight);
                if !ok {
                    trace.stop = StopReason::AdmissibilityLost(next);
                    return Ok(trace);
                }
                l = nl;
                mu = next;
                h = (h * 2.0).min(base);
            }
            None => {
                h *= 0.5;
                if h < opts.min_step {
                    trace.stop = StopReason::Stalled(mu);
                    return Ok(trace);
                }
            }
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeDefect {
    pub l_prime: RealMatrix,
    /// `L_μ/μ` at `μ = 0.01`.
    pub raw_slope: RealMatrix,
    /// Richardson estimate `2L_{0.01}/0.01 - L_{0.02}/0.02`.
    pub fitted_slope: RealMatrix,
    /// `‖L_μ/μ - L′‖/‖L′‖` at `μ = 0.01`.
    pub raw_defect: f64,
    /// `‖fitted - L′‖/‖L′‖`.
    pub fitted_defect: f64,
}

/// Compares the path near the origin with the weak-coupling direction.
pub fn slope_defect(prob: &AutonomousObserverProblem) -> Result<SlopeDefect> {
    let l_prime = weak_coupling_direction(prob)?;
    let opts = HomotopyOptions {
        mu_max: 0.02,
        steps: 8,
        ..Default::default()
    };
    let trace = homotopy_solve(prob, &opts)?;
    let pick = |mu: f64| {
        trace
            .mu_grid
            .iter()
            .position(|m| (m - mu).abs() < 1e-12)
            .map(|i| &trace.l_path[i] / mu)
            .ok_or_else(|| Error::InvariantViolated(format!("continuation did not reach mu = {mu}")))
    };
    let s1 = pick(0.01)?;
    let s2 = pick(0.02)?;
    let fitted = &s1 * 2.0 - s2;
    let scale = l_prime.norm();
    Ok(SlopeDefect {
        raw_defect: (&s1 - &l_prime).norm() / scale,
        fitted_defect: (&fitted - &l_prime).norm() / scale,
        raw_slope: s1,
        fitted_slope: fitted,
        l_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ex2, mat, EX2_L_PRIME};

    pub(crate) fn ex2_problem() -> AutonomousObserverProblem {
        let e = ex2();
        AutonomousObserverProblem {
            theta0: e.theta0,
            k_energy: e.k,
            s0: e.s0,
            sigma1: e.sigma1,
            sigma2: e.sigma2,
            pi_weight: e.pi,
            tau: e.tau,
        }
    }

    #[test]
    fn structure_examples() {
        let k = mat(2, &[2.0, 0.5, 0.5, 1.0]);
        let l = mat(2, &[0.1, 0.2, 0.2, 0.3]);
        assert!(structure_check(&k, &k, &l).unwrap());
        let shifted = &k + RealMatrix::identity(2, 2) * 1e-3;
        assert!(!structure_check(&k, &shifted, &l).unwrap());
        let skew = mat(2, &[0.0, 1e-3, -1e-3, 0.0]);
        let asym = &l + &skew;
        assert!(!structure_check(&k, &(&k + &asym - asym.transpose()), &asym).unwrap());
        assert!(structure_check(&k, &k, &RealMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn frozen_error_when_coupling_equals_energy() {
        let p = ex2_problem();
        let ed = error_dynamics(&p, &p.k_energy).unwrap();
        assert!(ed.a_hat.amax() < 1e-14);
        let s_inv = p.s0.clone().try_inverse().unwrap();
        let ed0 = error_dynamics(&p, &RealMatrix::zeros(2, 2)).unwrap();
        let expect = &p.s0 * &p.theta0 * &p.k_energy * s_inv * 2.0;
        assert!((ed0.a_hat - expect).amax() < 1e-12);
    }

    #[test]
    fn weak_coupling_reference() {
        let p = ex2_problem();
        let lp = weak_coupling_direction(&p).unwrap();
        assert!((&lp - mat(2, &EX2_L_PRIME)).amax() < 1e-3);
        let f0 = fixed_point_map(&p, 0.0, &RealMatrix::zeros(2, 2)).unwrap();
        assert!((f0 - lp).amax() < 1e-10);
    }

    #[test]
    fn zero_range_single_point() {
        let p = ex2_problem();
        let t = homotopy_solve(
            &p,
            &HomotopyOptions {
                mu_max: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.l_path[0].amax(), 0.0);
    }

    #[test]
    fn rejects_asymmetric_coupling() {
        let p = ex2_problem();
        let l = mat(2, &[0.0, 0.1, 0.0, 0.0]);
        assert!(matches!(
            fixed_point_map(&p, 0.1, &l),
            Err(Error::StructureViolated(_))
        ));
    }
}
