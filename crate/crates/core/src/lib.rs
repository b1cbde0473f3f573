//! Numerics for the stochastic heat equation `u_t = u_xx + Ẇ` on `(0, 1)`
//! with homogeneous Dirichlet conditions, zero initial data and additive
//! space-time white noise.
//!
//! The noise is replaced by its cell averages on an `N★ × J★` space-time grid
//! ([`noise`]); the regularized problem is solved exactly in the sine basis
//! ([`stochastic::regularized_exact`]), by Crank–Nicolson in time
//! ([`stochastic::cn_time_discrete`]) and by Crank–Nicolson with piecewise
//! linear finite elements ([`stochastic::cn_fem_spde`]). Because every solver
//! is linear in the Gaussian cell increments, mean-square errors between any
//! two of them are computed in closed form ([`error_lab`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod deterministic;
pub mod error;
pub mod error_lab;
pub mod fem;
pub mod noise;
pub mod quadrature;
pub mod spectral;
pub mod stochastic;

pub use error::{Error, Result};

pub use fem::{FemEigenBasis, FemSystem, Mesh};
pub use noise::{GridDims, NoiseGrid};
pub use spectral::{HdotIndex, SpectralField};
