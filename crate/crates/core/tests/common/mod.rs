//! Independent reference routes and random instance generators for tests.

#![allow(dead_code)]

use qho_core::autonomous::AutonomousObserverProblem;
use qho_core::composite::PlantObserverSystem;
use qho_core::matlib::{canonical_ccr, kron, symplectic_unit, RealMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    // Box-Muller keeps the generator dependency-free beyond `rand`
    RealMatrix::from_fn(rows, cols, |_, _| {
        let u: f64 = rng.random::<f64>().max(1e-300);
        let v: f64 = rng.random();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    })
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> RealMatrix {
    let g = gaussian(rng, n, n);
    let m = &g * g.transpose() / n as f64 + RealMatrix::identity(n, n) * floor;
    (&m + m.transpose()) * 0.5
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> RealMatrix {
    let g = gaussian(rng, n, n);
    (&g + g.transpose()) * 0.5
}

/// A CCR matrix `½ T (I ⊗ J) Tᵀ` with `T` near the identity.
pub fn random_ccr(rng: &mut ChaCha8Rng, n: usize) -> RealMatrix {
    let t = RealMatrix::identity(n, n) + gaussian(rng, n, n) * 0.2;
    let j = kron(&RealMatrix::identity(n / 2, n / 2), &symplectic_unit());
    let th = &t * j * t.transpose() * 0.5;
    (&th - th.transpose()) * 0.5
}

/// Covariance satisfying `Σ + iΘ ⪰ 0` with margin.
pub fn random_covariance(rng: &mut ChaCha8Rng, theta: &RealMatrix) -> RealMatrix {
    let n = theta.nrows();
    let bound = theta.singular_values().max();
    random_spd(rng, n, bound + 0.1)
}

pub struct QhoInstance {
    pub theta: RealMatrix,
    pub energy: RealMatrix,
    pub sigma: RealMatrix,
}

/// Oscillator with `R ≻ 0` and canonical CCRs.
pub fn random_qho(rng: &mut ChaCha8Rng, n: usize) -> QhoInstance {
    let theta = canonical_ccr(n).unwrap();
    let energy = random_spd(rng, n, 0.2);
    let sigma = random_covariance(rng, &theta);
    QhoInstance {
        theta,
        energy,
        sigma,
    }
}

/// Composite instance with `R ≻ 0` (hence admissible for every τ).
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, nu: usize, p: usize) -> PlantObserverSystem {
    let theta1 = random_ccr(rng, n);
    let theta2 = random_ccr(rng, nu);
    let k = random_spd(rng, n, 0.3);
    let m = random_spd(rng, nu, 0.3);
    let raw = gaussian(rng, n, nu);
    let ki = qho_core::matlib::inv_sqrtm_pd(&k).unwrap();
    let mi = qho_core::matlib::inv_sqrtm_pd(&m).unwrap();
    let contraction = qho_core::matlib::spectral_norm(&(&ki * &raw * &mi));
    let target: f64 = rng.random_range(0.05..0.7);
    let l = raw * (target / contraction);
    PlantObserverSystem {
        sigma1: random_covariance(rng, &theta1),
        sigma2: random_covariance(rng, &theta2),
        theta1,
        theta2,
        k_energy: k,
        m_energy: m,
        coupling: l,
        s1: gaussian(rng, p, n),
        s2: gaussian(rng, p, nu),
        pi_weight: random_spd(rng, n, 0.3),
        lambda: rng.random_range(0.5..2.0),
        tau: rng.random_range(0.5..3.0),
    }
}

pub fn random_autonomous(rng: &mut ChaCha8Rng, n: usize) -> AutonomousObserverProblem {
    let theta0 = random_ccr(rng, n);
    AutonomousObserverProblem {
        sigma1: random_covariance(rng, &theta0),
        sigma2: random_covariance(rng, &theta0),
        k_energy: random_spd(rng, n, 0.5),
        s0: RealMatrix::identity(n, n) + gaussian(rng, n, n) * 0.3,
        pi_weight: random_spd(rng, n, 0.5),
        tau: rng.random_range(0.5..3.0),
        theta0,
    }
}

pub fn rel_err(a: &RealMatrix, b: &RealMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// `(1/τ) ∫₀^∞ e^{-t/τ} e^{tA} Σ e^{tAᵀ} dt` by composite Gauss-Kronrod 15.
///
/// Panels share one width, so the node exponentials are computed once and the
/// panel start is propagated by multiplication. The width is halved until the
/// Gauss-Kronrod difference is below `1e-12` relative on every panel.
/// Integration stops once the integrand norm falls below `1e-14` relative.
pub fn quadrature_moments(a: &RealMatrix, sigma: &RealMatrix, tau: f64) -> RealMatrix {
    let n = a.nrows();
    let a_tau = a - RealMatrix::identity(n, n) / (2.0 * tau);
    let rho = a.clone().complex_eigenvalues().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut h = (1.5 / rho.max(1e-3)).min(tau);
    let scale = sigma.norm();
    for _ in 0..8 {
        let (val, worst) = gk_pass(&a_tau, sigma, h, scale);
        if worst < 1e-12 {
            return val / tau;
        }
        h *= 0.5;
    }
    panic!("quadrature oracle did not converge");
}

fn gk_pass(a: &RealMatrix, sigma: &RealMatrix, h: f64, scale: f64) -> (RealMatrix, f64) {
    let n = a.nrows();
    let half = h / 2.0;
    // offsets within a panel: centre ± half·x
    let mut offsets = Vec::with_capacity(15);
    for &x in &XGK[..7] {
        offsets.push(half * (1.0 - x));
        offsets.push(half * (1.0 + x));
    }
    offsets.push(half);
    let node_exp: Vec<RealMatrix> = offsets.iter().map(|t| (a * *t).exp()).collect();
    let step = (a * h).exp();
    let mut start = RealMatrix::identity(n, n);
    let mut total = RealMatrix::zeros(n, n);
    let mut worst = 0.0f64;
    for _ in 0..10_000_000 {
        let f: Vec<RealMatrix> = node_exp
            .iter()
            .map(|e| {
                let u = &start * e;
                &u * sigma * u.transpose()
            })
            .collect();
        let mut k = &f[14] * WGK[7];
        let mut g = &f[14] * WG[3];
        for i in 0..7 {
            let pair = &f[2 * i] + &f[2 * i + 1];
            k += &pair * WGK[i];
            if i % 2 == 1 {
                g += &pair * WG[i / 2];
            }
        }
        k *= half;
        g *= half;
        worst = worst.max((&k - &g).norm() / scale);
        total += &k;
        let tail = (&start * sigma * start.transpose()).norm();
        if tail < 1e-14 * scale {
            break;
        }
        start = &start * &step;
    }
    (total, worst)
}

/// Central difference of `f` at `x` along `dir` with step `h`.
pub fn central_difference<F>(f: F, x: &RealMatrix, dir: &RealMatrix, h: f64) -> f64
where
    F: Fn(&RealMatrix) -> f64,
{
    (f(&(x + dir * h)) - f(&(x - dir * h))) / (2.0 * h)
}

/// Unit-norm random direction, symmetrized when `symmetric`.
pub fn random_direction(rng: &mut ChaCha8Rng, rows: usize, cols: usize, symmetric: bool) -> RealMatrix {
    let mut d = gaussian(rng, rows, cols);
    if symmetric {
        d = (&d + d.transpose()) * 0.5;
    }
    let norm = d.norm();
    d / norm
}

pub fn ex2_problem() -> AutonomousObserverProblem {
    let e = qho_core::fixtures::ex2();
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

/// Largest `|XΘ + ΘXᵀ|` entry.
pub fn hamiltonian_defect(x: &RealMatrix, theta: &RealMatrix) -> f64 {
    (x * theta + theta * x.transpose()).amax()
}
