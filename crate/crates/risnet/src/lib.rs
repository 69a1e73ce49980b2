//! Power-efficient multi-RIS MISO downlink optimization.
//!
//! The crate implements a unified alternating-optimization stack for a
//! multi-antenna base station serving single-antenna users through a set of
//! reconfigurable intelligent surfaces (RIS):
//!
//! * [`netmodel`] — scenario configuration, seeded Rayleigh/path-loss channel
//!   generation, effective channels, SINR and the network power model;
//! * [`conic`] — the SOCP/SDP builder and interior-point solver contract;
//! * [`beamform`] — QoS-constrained transmit power minimization (SOCP);
//! * [`ris_select`] — joint active-RIS-set and phase-shift optimization via
//!   matrix lifting, semidefinite relaxation and difference-of-convex
//!   iterations, plus the outer alternating loop;
//! * [`zf`] — a low-complexity zero-forcing phase design with exhaustive
//!   active-set search;
//! * [`admission`] — slack-based user admission control when the power
//!   minimization is infeasible;
//! * [`harness`] — Monte-Carlo experiment runner, baselines and CSV/JSON
//!   emission.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the CLI and tests.

pub mod admission;
pub mod beamform;
pub mod conic;
pub mod harness;
pub mod netmodel;
pub mod ris_select;
pub mod scalar;
pub mod zf;

pub use scalar::Scalar;

use nalgebra::{Complex, DMatrix, DVector};

/// Complex column vector over scalar `T`.
pub type CVector<T> = DVector<Complex<T>>;
/// Complex dense matrix over scalar `T`.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Double-precision aliases for the common instantiation.
pub type Cplx64 = Complex<f64>;
pub type CVector64 = CVector<f64>;
pub type CMatrix64 = CMatrix<f64>;
pub type SystemConfig64 = netmodel::SystemConfig<f64>;
pub type ChannelRealization64 = netmodel::ChannelRealization<f64>;
pub type RisConfiguration64 = netmodel::RisConfiguration<f64>;
pub type BeamformingSolution64 = netmodel::BeamformingSolution<f64>;
