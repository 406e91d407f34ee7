//! Generative adversarial training toward a desired sub-distribution using
//! pairwise preferences and a differential critic.

pub mod corrections;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod neural;
pub mod preferences;

pub use error::{Error, Result};
