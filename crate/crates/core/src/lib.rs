//! Relay selection and power allocation in a two-hop decode-and-forward
//! network, learned with a robust clipped policy-gradient method and
//! compared against standard baselines.

pub mod algo;
pub mod channel;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod nn;
pub mod robustness;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
