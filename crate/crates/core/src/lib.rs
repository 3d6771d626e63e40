//! Acoustic surveillance toolkit for hydrophone arrays.
//!
//! The crate covers the full chain from raw hydrophone audio to an operator
//! notification: Mel preprocessing ([`dsp`]), a GRU sequence-to-sequence
//! autoencoder and MLP classifier ([`nnet`]), evaluation protocols
//! ([`eval`]), time-delay localization ([`localization`]), synthetic data and
//! storage ([`sim`]), rule-based risk levels ([`risk`]) and the live pipeline
//! with its HTTP API ([`service`]).

pub mod dsp;
pub mod nnet;
pub mod eval;
pub mod localization;
pub mod sim;
pub mod risk;
pub mod service;
