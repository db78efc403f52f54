//! Boundary-control reconstruction of conformally flat metrics from
//! time-domain boundary data, plus stationary channel scattering on the
//! four model ends (cylindrical, euclidean, hyperbolic, cusp).
//!
//! The pipeline runs bottom-up:
//!
//! * [`geometry`] builds the discrete domain and an independent distance oracle.
//! * [`wave`] solves the Neumann-source wave equation and assembles the
//!   response operator.
//! * [`bc`] computes inner products, controls and localized energies from
//!   boundary data alone.
//! * [`reconstruction`] turns those into the boundary distance representation.
//! * [`scattering`] handles the stationary side.
//! * [`config`] and [`runner`] drive experiments from plain-text configs.

pub mod bc;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod reconstruction;
pub mod runner;
pub mod scattering;
pub mod wave;

pub use error::{Error, Result};
