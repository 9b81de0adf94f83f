//! Closed quantum harmonic oscillators at the covariance level, discounted
//! moment analysis, back-action bounds and coherent observer synthesis.

mod error;
pub mod matlib;
pub mod qho;
pub mod fixtures;
pub mod composite;
pub mod backaction;
pub mod synthesis;
pub mod autonomous;

pub use error::{Error, Result};
pub use matlib::{ComplexMatrix, RealMatrix, StabilityReport};
pub use qho::{DiscountedMoments, Horizon, InitialMoments, QhoModel, SpectralData};
