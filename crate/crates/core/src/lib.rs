//! Secure beamforming with a reconfigurable intelligent surface (RIS) over
//! placement areas.
//!
//! A multi-antenna base station reaches a single-antenna receiver through an
//! RIS, while an eavesdropper listens from a neighbouring area. Channel
//! statistics are integrated over both areas into correlation matrices, and
//! the transmit precoder and RIS phase profile are chosen jointly to maximize
//! the spatially averaged secrecy spectral efficiency. The crate also carries
//! the Monte-Carlo harness that evaluates the resulting configurations.

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod optimizer;
mod selftest;
pub mod spatial;

pub use error::{Error, Result};

/// Complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
