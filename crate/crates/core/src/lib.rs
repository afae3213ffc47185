//! Single-shot interferogram demodulation.
//!
//! Recovers a complex object wave `O` from one intensity frame
//! `H = |O + R|²` recorded against a known reference wave `R`. The main
//! solver ([`mgd`]) steps along the bisector of the normalized data-error
//! and total-variation descent directions, so no regularization weight has
//! to be tuned. A Fourier-filtering baseline ([`ftm`]), a hologram simulator
//! ([`simulate`]) and evaluation helpers ([`metrics`]) make it possible to
//! run complete, reproducible experiments from a flat config file
//! ([`config`], [`cli`]).
//!
//! Fields are stored row-major with `(row = y, col = x)` indexing; pixel
//! coordinates are zero-based integers.

pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod ftm;
pub mod io;
pub mod metrics;
pub mod mgd;
pub mod simulate;

pub use error::{Error, Result};
pub use field::{ComplexField, Grid, RealField};
pub use num_complex::Complex64;
