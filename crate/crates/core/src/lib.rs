//! Competitive bidirectional projection learning for zero- and few-shot
//! classification, with perturbation-based feature synthesis.

pub mod data;
pub mod error;
pub mod fsl;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
