//! Spectral solver and diagnostics for u'' + 2δA^σu' + Au = f on a finite
//! diagonal model of A.

pub mod charpoly;
pub mod counterexamples;
pub mod duhamel;
pub mod error;
pub mod numeric;
pub mod oracle;
pub mod probe;
pub mod propagator;
pub mod spectrum;

pub use error::{Error, Result};
