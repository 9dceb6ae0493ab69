//! Two-stage speech intention identification: a character-level text sieve
//! decides fragments and clear-cut intentions, and an audio-text network
//! disambiguates only the intonation-dependent remainder.

pub mod cascade;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod labels;
pub mod matrix;
pub mod models;
pub mod neural;
pub mod synth;
pub mod textenc;
pub mod train;

pub use error::{Error, Result};
pub use labels::{IntentLabel6, IntentLabel7};
pub use matrix::Matrix;
