use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("Lyapunov operator is singular (eigenvalue pair sums to zero)")]
    SingularLyapunov,

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("invalid CCR matrix: {0}")]
    BadCcr(String),

    #[error("energy matrix is not symmetric")]
    BadEnergy,

    #[error("dimension {0} is not even")]
    OddDimension(usize),

    #[error("invalid initial covariance: {0}")]
    BadCovariance(String),

    #[error("spectrum is not purely imaginary (max |Re| = {0:.3e})")]
    NotOscillatory(f64),

    #[error("eigenbasis is degenerate (condition number {0:.3e})")]
    DegenerateEigenbasis(f64),

    #[error("horizon tau = {tau} exceeds admissible bound {bound}")]
    HorizonTooLong { tau: f64, bound: f64 },

    #[error("all frequencies are zero")]
    AllFrequenciesZero,

    #[error("search space of {0} integer vectors is too large")]
    SearchSpaceTooLarge(u128),

    #[error("invalid weights: {0}")]
    BadWeights(String),

    #[error("uncoupled plant or observer block is not Hurwitz at the given horizon")]
    UncoupledBlocksNotStable,

    #[error("small-gain condition violated (eps = {0:.4})")]
    SmallGainViolated(f64),

    #[error("uncoupled plant moment matrix P1 is singular")]
    SingularP1,

    #[error("uncoupled observer moment matrix P2 is not positive definite")]
    DegenerateP2,

    #[error("resolvent is singular at s = {re} + {im}i")]
    ResolventSingular { re: f64, im: f64 },

    #[error("observer block P22 of the Gramian is not positive definite")]
    DegenerateP22,

    #[error("block D12 of the Lie commutator is singular")]
    DegenerateD12,

    #[error("observer is outside the autonomous-error class: {0}")]
    StructureViolated(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}
