//! Stochastic unraveling of time-local quantum master equations of the form
//!
//! ```text
//! d rho/dt = A rho + rho A^dagger + sum_k (C_k rho E_k^dagger + E_k rho C_k^dagger)
//! ```
//!
//! which need not be of Lindblad form. Realizations are pairs of wave functions
//! with a sign; see [`engine`]. [`oracle`] integrates the same equation on the
//! density matrix directly, and [`models`] builds the quantum Brownian motion,
//! Redfield electron-transfer and diabatic-damping Lindblad models.

pub mod engine;
pub mod error;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod qme;
pub mod time_grid;

pub use error::{Error, Result};
