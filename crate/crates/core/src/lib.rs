//! Unique-word OFDM baseband toolkit.
//!
//! Builds systematic and optimized non-systematic complex-number RS code
//! generator matrices, runs BLUE/LMMSE/channel-inversion receivers over AWGN
//! and multipath channels, and measures BER and spectra against a CP-OFDM
//! reference.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod codegen;
pub mod error;
pub mod fec;
pub mod linalg;
pub mod ofdm;
pub mod receiver;
pub mod rng;
pub mod sim;

pub use codegen::{GeneratorKind, GeneratorMatrix};
pub use error::{Error, Result};
pub use linalg::{CMat, CVec, RMat, C64};
pub use ofdm::{FreqSymbol, Layout, SystemConfig, TimeSymbol};
