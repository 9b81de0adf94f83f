//! Reference instances with published four-decimal data.
//!
//! `ex1` is a two-mode oscillator; `ex2` is a one-mode plant with an
//! identically structured observer. Values are kept exactly as printed.

use crate::matlib::{canonical_ccr, symplectic_unit, RealMatrix};

pub const EX1_ENERGY: [f64; 16] = [
    3.4048, 3.0478, -2.2402, -1.4028, //
    3.0478, 4.1266, -2.0050, -2.4614, //
    -2.2402, -2.0050, 2.0076, 0.8484, //
    -1.4028, -2.4614, 0.8484, 4.7504,
];

pub const EX1_SIGMA: [f64; 16] = [
    5.9068, -2.2359, -0.8477, 2.0721, //
    -2.2359, 4.7534, 4.6272, -2.8090, //
    -0.8477, 4.6272, 6.7367, -4.1352, //
    2.0721, -2.8090, -4.1352, 4.8525,
];

/// Printed real part of the infinite-horizon second-moment matrix.
pub const EX1_E_INF: [f64; 16] = [
    8.3140, -4.8573, 0.3322, 1.8803, //
    -4.8573, 5.7935, 1.5480, -1.6743, //
    0.3322, 1.5480, 9.3853, -0.7758, //
    1.8803, -1.6743, -0.7758, 2.8441,
];

pub const EX1_FREQUENCIES: [f64; 4] = [4.3074, 0.6540, -4.3074, -0.6540];
pub const EX1_MARGIN: f64 = 0.7645;

pub const EX2_TAU: f64 = 4.0614;
pub const EX2_K: [f64; 4] = [2.7604, -1.7564, -1.7564, 2.4982];
pub const EX2_SIGMA1: [f64; 4] = [4.1400, -2.4687, -2.4687, 4.3641];
pub const EX2_SIGMA2: [f64; 4] = [2.2174, 1.3387, 1.3387, 2.4695];
pub const EX2_PI: [f64; 4] = [1.2907, 0.9694, 0.9694, 3.7716];
pub const EX2_S0: [f64; 4] = [-1.7389, 0.2192, 0.0170, 1.0458];

pub const EX2_P1: [f64; 4] = [9.7049, 7.0975, 7.0975, 11.6664];
pub const EX2_P2: [f64; 4] = [2.4681, 1.7476, 1.7476, 2.7674];
pub const EX2_UNCOUPLED_ERROR: f64 = 46.8634;
pub const EX2_L_PRIME: [f64; 4] = [-0.7297, -1.7445, -1.7445, 1.1737];
pub const EX2_FREQUENCY: f64 = 1.9522;
pub const EX2_MARGIN: f64 = 0.2561;

pub fn mat(rows: usize, data: &[f64]) -> RealMatrix {
    RealMatrix::from_row_slice(rows, data.len() / rows, data)
}

#[derive(Debug, Clone)]
pub struct Ex1 {
    pub theta: RealMatrix,
    pub energy: RealMatrix,
    pub sigma: RealMatrix,
}

pub fn ex1() -> Ex1 {
    Ex1 {
        theta: canonical_ccr(4).expect("order 4 is even"),
        energy: mat(4, &EX1_ENERGY),
        sigma: mat(4, &EX1_SIGMA),
    }
}

#[derive(Debug, Clone)]
pub struct Ex2 {
    pub theta0: RealMatrix,
    pub k: RealMatrix,
    pub sigma1: RealMatrix,
    pub sigma2: RealMatrix,
    pub pi: RealMatrix,
    pub s0: RealMatrix,
    pub tau: f64,
}

pub fn ex2() -> Ex2 {
    Ex2 {
        theta0: symplectic_unit() * 0.5,
        k: mat(2, &EX2_K),
        sigma1: mat(2, &EX2_SIGMA1),
        sigma2: mat(2, &EX2_SIGMA2),
        pi: mat(2, &EX2_PI),
        s0: mat(2, &EX2_S0),
        tau: EX2_TAU,
    }
}

/// FNV-1a over the bit patterns of every stored constant.
pub fn checksum() -> u64 {
    let groups: [&[f64]; 15] = [
        &EX1_ENERGY,
        &EX1_SIGMA,
        &EX1_E_INF,
        &EX1_FREQUENCIES,
        &[EX1_MARGIN],
        &[EX2_TAU],
        &EX2_K,
        &EX2_SIGMA1,
        &EX2_SIGMA2,
        &EX2_PI,
        &EX2_S0,
        &EX2_P1,
        &EX2_P2,
        &[EX2_UNCOUPLED_ERROR, EX2_FREQUENCY, EX2_MARGIN],
        &EX2_L_PRIME,
    ];
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in groups.iter().flat_map(|g| g.iter()) {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_data_unchanged() {
        assert_eq!(checksum(), 2701698832725501172);
    }

    #[test]
    fn fixture_matrices_symmetric() {
        let e = ex1();
        assert_eq!(e.energy, e.energy.transpose());
        assert_eq!(e.sigma, e.sigma.transpose());
        let e = ex2();
        for m in [&e.k, &e.sigma1, &e.sigma2, &e.pi] {
            assert_eq!(*m, m.transpose());
        }
    }
}
