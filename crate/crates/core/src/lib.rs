//! Simulation and analysis toolkit for fully-passive decoy-state BB84.
//!
//! The pipeline mirrors what a passive transmitter does with its local
//! measurements:
//!
//! 1. [`phase_source`] draws phase-randomized pulses and interferes them into
//!    `(mu_h, mu_v, phi_hv)` samples with a U-shaped (arcsine) intensity law.
//! 2. [`postselect`] reshapes that law into a truncated exponential by
//!    acceptance-rejection and sorts samples into Z-key and X-decoy regions.
//! 3. [`detection`] sends the surviving pulses through a lossy channel into a
//!    threshold-detector BB84 receiver and tallies gains and error gains.
//! 4. [`decoy`] bounds the single-photon yield and error with a small linear
//!    program over region-averaged Poisson moments.
//! 5. [`keyrate`] turns the bounds into an asymptotic secret key rate.
//!
//! [`pipeline`] ties the stages together for both Monte Carlo runs and the
//! analytic (expected-tally) sweep.

pub mod decoy;
pub mod detection;
pub mod error;
pub mod keyrate;
pub mod phase_source;
pub mod pipeline;
pub mod postselect;
pub mod quadrature;
pub mod rng;
pub mod simplex;
mod state;

pub use error::{Error, Result};
pub use state::{Basis, State};
