//! Bit-exact model of a sigma-delta decimation chain.
//!
//! The chain is a 5-stage truncated, pipelined CIC decimator (÷16) built on
//! a carry-lookahead adder model, followed by two half-band filters and a
//! droop-correction filter (each ÷2), for an overall decimation of 128.
//!
//! * [`arith`]: two's-complement words, truncation, lookahead adder.
//! * [`cic`]: register growth, truncation schedules, the CIC engine and its
//!   FIR reference.
//! * [`fir`]: half-band and droop-correction design and application.
//! * [`chain`]: multi-stage decimation chain.
//! * [`source`]: test-signal generators and the sigma-delta modulator.
//! * [`spectral`]: analytic responses, PSD and SNR measurement.
//! * [`config`]: the chain configuration file.
//! * [`verify`]: oracle-equivalence suites.
//! * [`analysis`]: end-to-end SNR, truncation noise and dynamic range runs.
//! * [`stream`]: sample streams and their file formats.

pub mod analysis;
pub mod arith;
pub mod chain;
pub mod cic;
pub mod config;
pub mod error;
pub mod fir;
pub mod source;
pub mod spectral;
pub mod stream;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
