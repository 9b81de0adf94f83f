mod common;

use common::{ex2_problem, quadrature_moments, random_autonomous, random_symmetric, rng};
use qho_core::autonomous::*;
use qho_core::fixtures::{mat, EX2_L_PRIME, EX2_UNCOUPLED_ERROR};
use qho_core::matlib::{kron_sum, min_eigenvalue_sym, unvectorize, vectorize, RealMatrix};
use std::sync::OnceLock;

fn ex2_sweep() -> &'static SynthesisTrace {
    static TRACE: OnceLock<SynthesisTrace> = OnceLock::new();
    TRACE.get_or_init(|| homotopy_solve(&ex2_problem(), &HomotopyOptions::default()).unwrap())
}

/// `αX + Xαᵀ + β = 0` by the dense Kronecker system.
fn kron_lyapunov(alpha: &RealMatrix, beta: &RealMatrix) -> RealMatrix {
    let n = alpha.nrows();
    let x = kron_sum(alpha, alpha).lu().solve(&(-vectorize(beta))).unwrap();
    unvectorize(&x, n, n).unwrap()
}

#[test]
fn error_dynamics_intertwines_and_preserves_ccr() {
    let mut r = rng(61);
    for n in [2, 4] {
        let p = random_autonomous(&mut r, n);
        let l = random_symmetric(&mut r, n) * 0.3;
        let ed = error_dynamics(&p, &l).unwrap();
        let th = &ed.theta_hat;
        assert!((&ed.a_hat * th + th * ed.a_hat.transpose()).amax() < 1e-10 * (1.0 + ed.a_hat.amax()));
        let s = p.error_weight();
        let lhs = &s * p.composite_dynamics(&l);
        let rhs = &ed.a_hat * &s;
        assert!((lhs - rhs).amax() < 1e-10 * (1.0 + ed.a_hat.amax()));
    }
}

#[test]
fn weak_coupling_direction_against_oracles() {
    let p = ex2_problem();
    let lp = weak_coupling_direction(&p).unwrap();
    assert!((&lp - mat(2, &EX2_L_PRIME)).amax() < 1e-3);
    let a = &p.theta0 * &p.k_energy * 2.0;
    let p1 = quadrature_moments(&a, &p.sigma1, p.tau);
    let p2 = quadrature_moments(&a, &p.sigma2, p.tau);
    let ed = error_dynamics(&p, &RealMatrix::zeros(2, 2)).unwrap();
    let q_hat = quadrature_moments(&ed.a_hat.transpose(), &RealMatrix::identity(2, 2), p.tau) * p.tau;
    let q0 = p.s0.transpose() * q_hat * &p.s0;
    let ps = &p1 + &p2;
    let pi_inv = p.pi_weight.clone().try_inverse().unwrap();
    let src = &p.theta0 * &q0 * &ps - &ps * &q0 * &p.theta0;
    let want = &pi_inv * kron_lyapunov(&(&p2 * &pi_inv), &src) * &pi_inv * 2.0;
    assert!((&lp - &want).amax() < 1e-7 * (1.0 + want.amax()));
    let f0 = fixed_point_map(&p, 0.0, &RealMatrix::zeros(2, 2)).unwrap();
    assert!((f0 - lp).amax() < 1e-10);
}

#[test]
fn fixed_point_map_is_symmetric() {
    let mut r = rng(62);
    for _ in 0..5 {
        let p = random_autonomous(&mut r, 2);
        let l = random_symmetric(&mut r, 2) * 0.1;
        for mu in [0.0, 0.1, 1.0] {
            let f = fixed_point_map(&p, mu, &l).unwrap();
            assert!((&f - f.transpose()).amax() <= 1e-12 * (1.0 + f.amax()));
        }
    }
}

#[test]
fn ex2_sweep_properties() {
    let p = ex2_problem();
    let t = ex2_sweep();
    assert_eq!(t.stop, StopReason::Completed);
    assert!((t.mu_grid.last().unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(t.l_path[0].amax(), 0.0);
    assert!((t.error_path[0] - EX2_UNCOUPLED_ERROR).abs() < 1e-3);
    for w in t.error_path.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
    }
    for w in t.mu_grid.windows(2) {
        assert!(w[1] > w[0]);
    }
    for (i, l) in t.l_path.iter().enumerate() {
        assert!((l - l.transpose()).amax() <= 1e-12);
        assert!(t.residual_path[i] <= 1e-8 * (1.0 + l.norm()));
        assert!(t.admissibility_path[i]);
        let r = qho_core::matlib::block2x2(&p.k_energy, l, l, &p.k_energy);
        assert!(min_eigenvalue_sym(&r) > 0.0);
        let ed = error_dynamics(&p, l).unwrap();
        let th = &ed.theta_hat;
        assert!((&ed.a_hat * th + th * ed.a_hat.transpose()).amax() < 1e-10 * (1.0 + ed.a_hat.amax()));
    }
    // the recorded residual is the real one
    let mid = t.len() / 2;
    let mu = t.mu_grid[mid];
    let l = &t.l_path[mid];
    let g = l - fixed_point_map(&p, mu, l).unwrap() * mu;
    assert!(g.norm() <= 1e-8 * (1.0 + l.norm()));
    assert_eq!(t.coupling_at(mu), Some(l));
}

#[test]
fn restricted_gradient_vanishes_iff_fixed_point() {
    let p = ex2_problem();
    let t = ex2_sweep();
    let mu = t.mu_grid[8];
    let l = &t.l_path[8];
    let grad = |l: &RealMatrix| {
        let g = qho_core::synthesis::gradients(&p.to_system(l.clone(), mu)).unwrap();
        qho_core::matlib::sym(&g.grad_l).norm()
    };
    let z = qho_core::synthesis::cost(&p.to_system(l.clone(), mu)).unwrap().total;
    assert!(grad(l) <= 1e-6 * (1.0 + z));
    let off = l + mat(2, &[0.05, 0.0, 0.0, -0.02]);
    let res = (&off - fixed_point_map(&p, mu, &off).unwrap() * mu).norm();
    assert!(grad(&off) > 1e-3 && res > 1e-3);
}

#[test]
fn slope_converges_linearly() {
    let p = ex2_problem();
    let lp = weak_coupling_direction(&p).unwrap();
    let opts = HomotopyOptions {
        mu_max: 0.04,
        steps: 8,
        ..Default::default()
    };
    let t = homotopy_solve(&p, &opts).unwrap();
    let defect = |mu: f64| (t.coupling_at(mu).unwrap() / mu - &lp).norm();
    let (d4, d2, d1) = (defect(0.04), defect(0.02), defect(0.01));
    assert!(d1 < d2 && d2 < d4);
    // halving μ roughly halves the defect; the second-order term shows at 1e-1
    for ratio in [d2 / d4, d1 / d2] {
        assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
    }
    let s = slope_defect(&p).unwrap();
    assert!(s.fitted_defect <= 0.05, "{}", s.fitted_defect);
    assert!((s.raw_defect - d1 / lp.norm()).abs() < 1e-6);
}

#[test]
fn random_problems_continue_from_origin() {
    let mut r = rng(63);
    for _ in 0..3 {
        let p = random_autonomous(&mut r, 2);
        let opts = HomotopyOptions {
            mu_max: 0.05,
            steps: 8,
            ..Default::default()
        };
        let t = homotopy_solve(&p, &opts).unwrap();
        assert_eq!(t.stop, StopReason::Completed);
        for (l, res) in t.l_path.iter().zip(&t.residual_path) {
            assert!(*res <= 1e-8 * (1.0 + l.norm()));
        }
    }
}

#[test]
fn bad_options_rejected() {
    let p = ex2_problem();
    let few = HomotopyOptions {
        steps: 4,
        ..Default::default()
    };
    assert!(homotopy_solve(&p, &few).is_err());
    let neg = HomotopyOptions {
        mu_max: -1.0,
        ..Default::default()
    };
    assert!(homotopy_solve(&p, &neg).is_err());
}
