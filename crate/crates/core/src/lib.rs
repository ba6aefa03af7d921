//! Exact and Monte Carlo tools for homogenization of non-gradient exclusion
//! processes (speed-change Kawasaki dynamics).
//!
//! The crate is organized bottom-up:
//! [`lattice`] geometry, [`ensemble`] configuration-space algebra, [`rates`]
//! jump-rate laws, [`solver`] the conjugate-gradient kernel, [`variational`]
//! the finite-volume homogenization quantities, [`lifting`] the
//! independent-particle bridge, [`dynamics`] kinetic Monte Carlo on the torus,
//! and [`hydro`] the limiting PDE with the H^{-α} comparison harness.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hydro;
pub mod inequalities;
pub mod lattice;
pub mod lifting;
pub mod rates;
pub mod solver;
pub mod variational;

pub use error::{Error, Result};
