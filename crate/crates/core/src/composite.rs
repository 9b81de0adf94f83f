//! Directly coupled plant and observer as one closed oscillator.

use crate::error::{Error, Result};
use crate::matlib::{
    block2x2, block_diag, commutator, is_symmetric, kron, min_eigenvalue_sym, solve_lyapunov,
    spectral_norm, sqrtm_psd, inv_sqrtm_pd, stability_report, sub_block, sym, unvectorize,
    vectorize, RealMatrix, TOL_HURWITZ,
};
use crate::qho::{validate_ccr, InitialMoments};

const STRUCT_TOL: f64 = 1e-12;
const PSD_SLACK: f64 = 1e-9;

/// A full coherent filtering problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantObserverSystem {
    pub theta1: RealMatrix,
    pub theta2: RealMatrix,
    /// Plant energy `K`.
    pub k_energy: RealMatrix,
    /// Observer energy `M`.
    pub m_energy: RealMatrix,
    /// Plant-observer coupling `L`, `n × ν`.
    pub coupling: RealMatrix,
    pub sigma1: RealMatrix,
    pub sigma2: RealMatrix,
    pub s1: RealMatrix,
    pub s2: RealMatrix,
    pub pi_weight: RealMatrix,
    pub lambda: f64,
    pub tau: f64,
}

impl PlantObserverSystem {
    pub fn n(&self) -> usize {
        self.theta1.nrows()
    }

    pub fn nu(&self) -> usize {
        self.theta2.nrows()
    }

    pub fn p(&self) -> usize {
        self.s1.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        validate_ccr(&self.theta1)?;
        validate_ccr(&self.theta2)?;
        let (n, nu, p) = (self.n(), self.nu(), self.p());
        let shapes = [
            ("K", &self.k_energy, (n, n)),
            ("M", &self.m_energy, (nu, nu)),
            ("L", &self.coupling, (n, nu)),
            ("Sigma1", &self.sigma1, (n, n)),
            ("Sigma2", &self.sigma2, (nu, nu)),
            ("S1", &self.s1, (p, n)),
            ("S2", &self.s2, (p, nu)),
            ("Pi", &self.pi_weight, (n, n)),
        ];
        for (name, m, shape) in shapes {
            if m.shape() != shape {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {:?}, expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has a non-finite entry")));
            }
        }
        for m in [&self.k_energy, &self.m_energy] {
            if !is_symmetric(m, STRUCT_TOL * (1.0 + m.amax())) {
                return Err(Error::BadEnergy);
            }
        }
        InitialMoments::new(&self.sigma1, &self.theta1)?;
        InitialMoments::new(&self.sigma2, &self.theta2)?;
        if !is_symmetric(&self.pi_weight, STRUCT_TOL * (1.0 + self.pi_weight.amax()))
            || min_eigenvalue_sym(&self.pi_weight) <= 0.0
        {
            return Err(Error::BadWeights("Pi must be symmetric positive definite".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::BadWeights(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// `Θ = diag(Θ₁, Θ₂)`
    pub fn theta(&self) -> RealMatrix {
        block_diag(&self.theta1, &self.theta2)
    }

    /// `Σ = diag(Σ₁, Σ₂)`
    pub fn sigma(&self) -> RealMatrix {
        block_diag(&self.sigma1, &self.sigma2)
    }

    /// `R = [[K, L], [Lᵀ, M]]`
    pub fn energy(&self) -> RealMatrix {
        block2x2(
            &self.k_energy,
            &self.coupling,
            &self.coupling.transpose(),
            &self.m_energy,
        )
    }

    /// `S = [S₁, -S₂]`
    pub fn error_weight(&self) -> RealMatrix {
        let mut s = RealMatrix::zeros(self.p(), self.n() + self.nu());
        s.view_mut((0, 0), (self.p(), self.n())).copy_from(&self.s1);
        s.view_mut((0, self.n()), (self.p(), self.nu()))
            .copy_from(&(-&self.s2));
        s
    }

    pub fn with_coupling(&self, coupling: RealMatrix) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }

    pub fn with_observer_energy(&self, m_energy: RealMatrix) -> Self {
        Self {
            m_energy,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeDynamics {
    /// `𝒜 = 2ΘR`
    pub a_full: RealMatrix,
    /// `𝒜 - I/(2τ)`
    pub a_tau: RealMatrix,
    /// `𝒞 = [[S₁, -S₂], [0, √(λΠ) L]]`
    pub c_full: RealMatrix,
}

impl CompositeDynamics {
    /// `𝒞ᵀ𝒞`
    pub fn ctc(&self) -> RealMatrix {
        sym(&(self.c_full.transpose() * &self.c_full))
    }
}

pub fn assemble(sys: &PlantObserverSystem) -> Result<CompositeDynamics> {
    sys.validate()?;
    let (n, nu, p) = (sys.n(), sys.nu(), sys.p());
    let theta = sys.theta();
    let a_full = &theta * sys.energy() * 2.0;
    let pr = &a_full * &theta + &theta * a_full.transpose();
    if pr.amax() > STRUCT_TOL * (1.0 + a_full.amax() * theta.amax()) {
        return Err(Error::InvariantViolated(format!("Hamiltonian defect {:.3e}", pr.amax())));
    }
    let dim = n + nu;
    let a_tau = &a_full - RealMatrix::identity(dim, dim) / (2.0 * sys.tau);
    let root = sqrtm_psd(&(&sys.pi_weight * sys.lambda))
        .map_err(|_| Error::BadWeights("Pi must be positive definite".into()))?;
    let mut c_full = RealMatrix::zeros(p + n, dim);
    c_full.view_mut((0, 0), (p, dim)).copy_from(&sys.error_weight());
    c_full
        .view_mut((p, n), (n, nu))
        .copy_from(&(root * &sys.coupling));
    Ok(CompositeDynamics {
        a_full,
        a_tau,
        c_full,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// `1/(2 max(0, abscissa)) - τ`, infinite for a non-growing spectrum.
    pub margin: f64,
    pub abscissa: f64,
}

/// Abscissae within `TOL_HURWITZ` of zero count as zero, so a purely
/// oscillatory spectrum is admissible for every horizon.
pub fn admissibility_of(a_full: &RealMatrix, tau: f64) -> Result<Admissibility> {
    let abscissa = stability_report(a_full)?.spectral_abscissa;
    let margin = if abscissa <= TOL_HURWITZ {
        f64::INFINITY
    } else {
        1.0 / (2.0 * abscissa) - tau
    };
    Ok(Admissibility {
        admissible: margin > 0.0,
        margin,
        abscissa,
    })
}

pub fn admissibility(sys: &PlantObserverSystem, dyn_: &CompositeDynamics) -> Result<Admissibility> {
    admissibility_of(&dyn_.a_full, sys.tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    /// `K ≻ 0`, `M ≻ 0` and `‖K^{-1/2} L M^{-1/2}‖ < 1`.
    pub positive: bool,
    /// `‖K^{-1/2} L M^{-1/2}‖`; infinite when `K` or `M` is not positive definite.
    pub contraction: f64,
    /// Smallest eigenvalue of the composite energy matrix.
    pub min_eigenvalue: f64,
}

pub fn positivity_criterion(sys: &PlantObserverSystem) -> PositivityReport {
    positivity_of(&sys.k_energy, &sys.coupling, &sys.m_energy)
}

pub fn positivity_of(k: &RealMatrix, l: &RealMatrix, m: &RealMatrix) -> PositivityReport {
    let min_eigenvalue = min_eigenvalue_sym(&block2x2(k, l, &l.transpose(), m));
    let contraction = if min_eigenvalue_sym(k) > 0.0 && min_eigenvalue_sym(m) > 0.0 {
        match (inv_sqrtm_pd(k), inv_sqrtm_pd(m)) {
            (Ok(a), Ok(b)) => spectral_norm(&(a * l * b)),
            _ => f64::INFINITY,
        }
    } else {
        f64::INFINITY
    };
    PositivityReport {
        positive: contraction < 1.0 - 1e-12,
        contraction,
        min_eigenvalue,
    }
}

fn require_admissible(a_full: &RealMatrix, tau: f64) -> Result<()> {
    let adm = admissibility_of(a_full, tau)?;
    if !adm.admissible {
        return Err(Error::HorizonTooLong {
            tau,
            bound: tau + adm.margin,
        });
    }
    Ok(())
}

fn check_psd(m: &RealMatrix, what: &str) -> Result<()> {
    let lmin = min_eigenvalue_sym(m);
    if lmin < -PSD_SLACK * (1.0 + m.amax()) {
        return Err(Error::InvariantViolated(format!("{what} has eigenvalue {lmin:.3e}")));
    }
    Ok(())
}

/// `𝒫 = (1/τ) L(𝒜_τ, Σ)`
pub fn controllability_gramian(sys: &PlantObserverSystem, dyn_: &CompositeDynamics) -> Result<RealMatrix> {
    require_admissible(&dyn_.a_full, sys.tau)?;
    let p = solve_lyapunov(&dyn_.a_tau, &(sys.sigma() / sys.tau))?;
    check_psd(&p, "controllability Gramian")?;
    Ok(p)
}

/// `𝒬 = L(𝒜_τᵀ, 𝒞ᵀ𝒞)`
pub fn observability_gramian(sys: &PlantObserverSystem, dyn_: &CompositeDynamics) -> Result<RealMatrix> {
    require_admissible(&dyn_.a_full, sys.tau)?;
    let q = solve_lyapunov(&dyn_.a_tau.transpose(), &dyn_.ctc())?;
    check_psd(&q, "observability Gramian")?;
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianSet {
    /// Controllability Gramian `𝒫`.
    pub p_gram: RealMatrix,
    /// Observability Gramian `𝒬`.
    pub q_gram: RealMatrix,
    /// `ℰ = 𝒬𝒫`
    pub hankelian: RealMatrix,
    /// `P = 𝒫Θ⁻¹`
    pub lie_p: RealMatrix,
    /// `Q = Θ𝒬`
    pub lie_q: RealMatrix,
    /// `D = [Q, P]`
    pub lie_d: RealMatrix,
}

pub fn gramian_set(sys: &PlantObserverSystem, dyn_: &CompositeDynamics) -> Result<GramianSet> {
    gramians_from_parts(&sys.theta(), &dyn_.a_full, &sys.sigma(), &dyn_.ctc(), sys.tau)
}

/// Gramians of a composite oscillator given directly by `Θ`, `𝒜`, `Σ` and `𝒞ᵀ𝒞`.
pub fn gramians_from_parts(
    theta: &RealMatrix,
    a_full: &RealMatrix,
    sigma: &RealMatrix,
    ctc: &RealMatrix,
    tau: f64,
) -> Result<GramianSet> {
    require_admissible(a_full, tau)?;
    let dim = a_full.nrows();
    let a_tau = a_full - RealMatrix::identity(dim, dim) / (2.0 * tau);
    let p_gram = solve_lyapunov(&a_tau, &(sigma / tau))?;
    check_psd(&p_gram, "controllability Gramian")?;
    let q_gram = solve_lyapunov(&a_tau.transpose(), ctc)?;
    check_psd(&q_gram, "observability Gramian")?;
    let theta_inv = theta
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::BadCcr("singular".into()))?;
    let hankelian = &q_gram * &p_gram;
    let lie_p = &p_gram * &theta_inv;
    let lie_q = theta * &q_gram;
    let lie_d = commutator(&lie_q, &lie_p);
    Ok(GramianSet {
        p_gram,
        q_gram,
        hankelian,
        lie_p,
        lie_q,
        lie_d,
    })
}

/// Matrix of `M ↦ 𝒜M - M𝒜` acting on column-stacked vectors.
pub fn ad_operator(a: &RealMatrix) -> RealMatrix {
    let n = a.nrows();
    let id = RealMatrix::identity(n, n);
    kron(&id, a) - kron(&a.transpose(), &id)
}

fn solve_vec(op: RealMatrix, rhs: &RealMatrix, s: (f64, f64)) -> Result<RealMatrix> {
    let n = rhs.nrows();
    let x = op
        .lu()
        .solve(&vectorize(rhs))
        .ok_or(Error::ResolventSingular { re: s.0, im: s.1 })?;
    unvectorize(&x, n, n)
}

/// `P = (ℐ - τ ad_𝒜)⁻¹(ΣΘ⁻¹)`
pub fn lie_p_resolvent(sys: &PlantObserverSystem, dyn_: &CompositeDynamics) -> Result<RealMatrix> {
    let dim = sys.n() + sys.nu();
    let theta_inv = sys.theta().try_inverse().ok_or_else(|| Error::BadCcr("singular".into()))?;
    let op = RealMatrix::identity(dim * dim, dim * dim) - ad_operator(&dyn_.a_full) * sys.tau;
    solve_vec(op, &(sys.sigma() * theta_inv), (1.0 / sys.tau, 0.0))
}

/// `Q = τ(ℐ + τ ad_𝒜)⁻¹(Θ𝒞ᵀ𝒞)`
pub fn lie_q_resolvent(sys: &PlantObserverSystem, dyn_: &CompositeDynamics) -> Result<RealMatrix> {
    let dim = sys.n() + sys.nu();
    let op = RealMatrix::identity(dim * dim, dim * dim) + ad_operator(&dyn_.a_full) * sys.tau;
    Ok(solve_vec(op, &(sys.theta() * dyn_.ctc()), (-1.0 / sys.tau, 0.0))? * sys.tau)
}

/// Frobenius norms of the two Lie-form Lyapunov residuals
/// `[𝒜,P] - (P - ΣΘ⁻¹)/τ` and `[𝒜,Q] - Θ𝒞ᵀ𝒞 + Q/τ`.
pub fn lie_ale_residuals(
    sys: &PlantObserverSystem,
    dyn_: &CompositeDynamics,
    g: &GramianSet,
) -> Result<(f64, f64)> {
    let theta = sys.theta();
    let theta_inv = theta.clone().try_inverse().ok_or_else(|| Error::BadCcr("singular".into()))?;
    let tau = sys.tau;
    let rp = commutator(&dyn_.a_full, &g.lie_p) - (&g.lie_p - sys.sigma() * theta_inv) / tau;
    let rq = commutator(&dyn_.a_full, &g.lie_q) - theta * dyn_.ctc() + &g.lie_q / tau;
    Ok((rp.norm(), rq.norm()))
}

/// `(1/τ)[ΣΘ⁻¹, Q] + [Θ𝒞ᵀ𝒞, P] + [D, 𝒜]`, zero for every admissible observer.
pub fn jacobi_residual(
    sys: &PlantObserverSystem,
    dyn_: &CompositeDynamics,
    g: &GramianSet,
) -> Result<RealMatrix> {
    let theta = sys.theta();
    let theta_inv = theta.clone().try_inverse().ok_or_else(|| Error::BadCcr("singular".into()))?;
    Ok(commutator(&(sys.sigma() * theta_inv), &g.lie_q) / sys.tau
        + commutator(&(theta * dyn_.ctc()), &g.lie_p)
        + commutator(&g.lie_d, &dyn_.a_full))
}

/// Splits a square matrix at row and column `n` into `[x11, x12, x21, x22]`.
pub fn blocks(m: &RealMatrix, n: usize) -> [RealMatrix; 4] {
    let r = m.nrows() - n;
    let c = m.ncols() - n;
    [
        sub_block(m, 0, 0, n, n),
        sub_block(m, 0, n, n, c),
        sub_block(m, n, 0, r, n),
        sub_block(m, n, n, r, c),
    ]
}
