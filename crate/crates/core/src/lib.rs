//! Simulation of a dual-polarization Stokes-vector Kramers-Kronig (SVKK)
//! direct-detection link: transmitter DSP, fiber channel, Stokes receiver,
//! KK field reconstruction, adaptive MIMO equalization and link metrics.

// NaN inputs must fail the validation comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod equalizer;
pub mod error;
pub mod kk;
pub mod metrics;
pub mod modulation;
pub mod pipeline;
pub mod seed;
pub mod signal;
pub mod studies;
pub mod svr;
pub mod sweep;
pub mod txdsp;

pub use error::{Error, Result};
pub use signal::{RealSignal, Signal, C64};
