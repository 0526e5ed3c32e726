//! Small dense networks with hand-written backpropagation.

mod adam;
mod gaussian;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gaussian::{gaussian_log_density, log_prob_and_sample, GaussianHead, STD_FLOOR};
pub use mlp::{ForwardCache, Mlp, HIDDEN_LAYERS, HIDDEN_WIDTH};
