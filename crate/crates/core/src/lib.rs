//! Multimode NLSE tooling: fiber model, normalization and δβ₀ scaling,
//! analytic linear solutions, a split-step Fourier reference solver, a
//! jet-propagating residual network and its PINN trainer.

// NaN-rejecting validation reads best as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod exec;
pub mod fiber;
pub mod io;
pub mod net;
pub mod pinn;
pub mod presets;
pub mod spectral;
pub mod tables;
pub mod ssf;
pub mod transforms;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
