//! Asymptotic and post-selected secret key rates for continuous-variable
//! measurement-device-independent QKD with an untrusted relay.
//!
//! The crate is layered bottom-up:
//!
//! - [`gaussian`]: covariance-matrix toolbox (beam splitters, homodyne
//!   conditioning, symplectic eigenvalues, entropies, overlaps).
//! - [`protocol`]: channel/detector parameters, derived noise scalars and the
//!   construction of Eve's conditional Gaussian states.
//! - [`probability`]: closed-form densities and sign posteriors.
//! - [`rates`]: single-point mutual information, Eve's information and the
//!   single-point rate.
//! - [`integration`]: tensor Gauss-Legendre and Monte Carlo estimates of the
//!   raw and post-selected rates.
//! - [`optimize`]: Nelder-Mead over the free modulation parameters and the
//!   distance-sweep drivers.
//!
//! All quantities are in shot-noise units with quadrature ordering
//! `(q1, p1, q2, p2, ...)`; entropies and rates are in bits.

pub mod error;
pub mod gaussian;
pub mod integration;
mod linalg;
pub mod optimize;
pub mod probability;
pub mod protocol;
pub mod rates;

pub use error::{Error, Result};
pub use integration::{GridSpec, RateEstimate};
pub use optimize::{OptResult, SweepRow};
pub use probability::{PSPoint, SignPair};
pub use protocol::{BetaMode, DerivedNoise, DetectorModel, OmegaPair, ProtocolParams, Scenario};
pub use rates::{RateBreakdown, RateModel};
