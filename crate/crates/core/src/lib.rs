//! Entropic optimal transport and multi-marginal Schrödinger bridges on the
//! flat torus `T^d` (d = 1, 2), with the spectral asymptotic-expansion
//! machinery needed to verify small-regularization convergence rates at desk
//! scale.
//!
//! Layout:
//! - [`grid`]: periodic grids, FFTs, spectral calculus, quadrature.
//! - [`heat`]: wrapped Gaussian kernel, transport cost, heat convolution.
//! - [`curves`]: analytic density evolutions with exact time-Taylor data.
//! - [`elliptic`]: divergence-form periodic elliptic solver.
//! - [`eot`]: log-domain Sinkhorn, dual functionals, couplings, KL utilities.
//! - [`expansion`]: coefficient recursion, proxy potentials, remainders,
//!   Fredholm correctors, and the coupling ansatz.
//! - [`ot1d`]: exact circle optimal transport, displacement geodesics.
//! - [`bridge`]: multi-marginal bridges, KL decomposition, stability reports.
//! - [`study`]: experiment driver, CSV/slope/summary emission.

pub mod bridge;
pub mod curves;
pub mod elliptic;
pub mod eot;
pub mod error;
pub mod exec;
pub mod expansion;
pub mod grid;
pub mod heat;
pub mod jets;
pub mod ot1d;
pub mod plot;
pub mod study;

pub use error::{Error, Result};
