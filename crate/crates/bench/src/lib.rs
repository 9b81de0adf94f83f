//! Deterministic inputs for the solver benchmarks in `benches/`.

use qho_core::autonomous::AutonomousObserverProblem;
use qho_core::fixtures;
use qho_core::matlib::{canonical_ccr, RealMatrix};
use qho_core::qho::{build_model, InitialMoments, QhoModel};

pub fn ex2_problem() -> AutonomousObserverProblem {
    let e = fixtures::ex2();
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

/// Chain of `n/2` modes with nearest-neighbour coupling.
pub fn chain(n: usize) -> (QhoModel, InitialMoments) {
    let theta = canonical_ccr(n).expect("even order");
    let energy = RealMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 1.0 + 0.37 * (i as f64 + 1.0).sqrt(),
        1 | 2 => 0.11,
        _ => 0.0,
    });
    let model = build_model(&theta, &energy).expect("valid chain");
    let init = InitialMoments::new(&RealMatrix::identity(n, n), &theta).expect("identity is admissible");
    (model, init)
}
