//! Greedy, measurement-efficient identification of SISO linear time-invariant
//! systems with the Loewner framework.
//!
//! The frequency-domain driver ([`greedy::greedy_loop`]) repeatedly realizes
//! two nested interpolants, measures the plant where they disagree most
//! (weighted by a notch-shaped mask around recent points) and stops once the
//! interpolants agree on the whole grid. [`time_domain`] runs the same loop
//! from sampled input/output data, estimating two frequency-response values
//! per experiment by least squares.

pub mod error;
pub mod greedy;
pub mod lti;
pub mod loewner;
pub mod lu;
pub mod measurement;
pub mod par;
pub mod report;
pub mod time_domain;

pub use error::{Error, Result};
pub use lti::{FrequencyGrid, StateSpace};
pub use num_complex::Complex64;
