//! Second-moment bounds, Lyapunov rates and intermittency fronts for the
//! stochastic heat equation `∂u/∂t = (ν/2)Δu + ρ(u) Ṁ` driven by Gaussian
//! noise that is white in time and spatially correlated through `f`, with
//! measure-valued initial data.
//!
//! Layout:
//! - [`special`]: Mittag-Leffler, incomplete gamma, normal distribution.
//! - [`quadrature`]: adaptive integration, radial reduction, product
//!   integration on time grids.
//! - [`kernel`]: correlation kernels, heat kernel, `k(t)`, `J_0`.
//! - [`moments`]: the `h_n` family, `H` and `H*`, `L_n`/`K_λ` envelopes,
//!   the discrete `▷` oracle and two-point bounds.
//! - [`spectral`]: `Υ(β)` and the three equivalent phase-transition tests.
//! - [`asymptotics`]: `θ`, `θ*`, phase classification, growth indices.
//! - [`sim`]: Monte Carlo solver in one space dimension.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod kernel;
pub mod moments;
pub mod quadrature;
pub mod rhd;
pub mod sim;
pub mod special;
pub mod spectral;

pub use kernel::{CorrelationKernel, HeatParams, InitialMeasure, KernelError, KernelVariant, Point};
pub use quadrature::{QuadOptions, SingularWeight, TimeGrid};
