//! Spectrum sensing with reconfigurable intelligent surfaces (RIS).
//!
//! This crate models a primary transmitter, a secondary terminal running an
//! energy detector, and an RIS (passive phase shifters, or active elements
//! with per-element amplification) that strengthens the sensed link. It
//! provides:
//!
//! - closed-form detector design: test statistic, threshold, false-alarm and
//!   detection probabilities under a Gaussian approximation of the averaged
//!   energy ([`detector`]);
//! - distance-based channel generation with Rayleigh or Rician small-scale
//!   fading ([`channel`]);
//! - closed-form receive beamforming and phase alignment for a passive RIS
//!   ([`passive`]);
//! - two convex-programming algorithms for the active RIS: a joint
//!   difference-of-convex ascent and a bisection on the detection target with
//!   alternating feasibility subproblems ([`active`]);
//! - analytic element-count sizing rules and the active-versus-passive
//!   comparison predicates ([`sizing`]);
//! - a Monte-Carlo harness that validates the closed forms by simulating the
//!   receive chain sample by sample and sweeping scenario parameters into CSV
//!   curve files ([`harness`]).
//!
//! Powers are carried in watts everywhere inside the library; dBm appears
//! only at input/output boundaries (see [`math::PowerValue`]).

pub mod active;
pub mod channel;
pub mod detector;
mod error;
pub mod harness;
pub mod math;
pub mod passive;
pub mod seeds;
pub mod sizing;

pub use error::{Error, Result};
