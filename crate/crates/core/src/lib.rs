//! Least-squares equalization filters for acoustic transparency of hearing
//! devices with one or more loudspeakers.
//!
//! The crate covers the signal model (microphone, forward path, equalizer,
//! loudspeakers and leakage into the ear canal), the family of regularized
//! least-squares designs, an auditory-weighted spectral distance for
//! evaluation, and a seeded generator of synthetic measurement sets.

pub mod design;
pub mod error;
pub mod eval;
pub mod scenario;
pub mod signals;
pub mod sweep;

pub use error::{Error, Result};
