//! Keystroke verification benchmark engine.
//!
//! The crate covers the whole evaluation chain for keystroke-dynamics
//! verification: keystroke corpora ([`corpus`]), timing features
//! ([`features`]), the enrollment/verification comparison protocol
//! ([`protocol`]), two baseline verifiers ([`verifier`]) and the biometric
//! metrics suite ([`metrics`]).

pub mod corpus;
pub mod error;
pub mod features;
pub mod metrics;
pub mod protocol;
mod seed;
pub mod verifier;

pub use error::{Error, Result};
