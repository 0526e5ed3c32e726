//! Two-hop decode-and-forward channel simulation.
//!
//! Rayleigh fading vectors, per-hop mutual information, the binary outage
//! reward, and the finite-state Markov channel that the agent interacts with.

mod env;
mod fading;
mod grid;
mod markov;
mod rates;

pub use env::{env_step, RelayEnv, RelayFamily, StepOutcome};
pub use fading::{link_variance, sample_channel, sample_channel_into, squared_norm, ChannelRealization};
pub use grid::{generate_locations, EnvironmentParameter, Geometry, ParameterGrid, RelayLocation};
pub use markov::{build_markov_model, Hop, LinkModel, MarkovChannelModel, MarkovOptions};
pub use rates::{closed_form_outage, mutual_information, outage_indicator, OutageMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static physical constants of the relay network.
///
/// Relay transmit power is never stored: it is always `max_power - P_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Number of candidate relays `K`.
    pub relays: usize,
    pub source_antennas: usize,
    pub destination_antennas: usize,
    /// Path-loss constant `h_0` (element variance is `h_0 * d^-alpha`).
    pub path_loss_constant: f64,
    pub path_loss_exponent: f64,
    /// Noise power `P_0` in watts, shared by relay and destination.
    pub noise_power: f64,
    /// Total source + relay power budget in watts.
    pub max_power: f64,
    /// Destination rate threshold `lambda_d` in bits/s/Hz.
    pub destination_threshold: f64,
    #[serde(default)]
    pub outage_mode: OutageMode,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.relays == 0 || self.source_antennas == 0 || self.destination_antennas == 0 {
            return Err(Error::invalid(
                "relay and antenna counts must be at least 1",
            ));
        }
        for (name, v) in [
            ("path_loss_constant", self.path_loss_constant),
            ("path_loss_exponent", self.path_loss_exponent),
            ("noise_power", self.noise_power),
            ("max_power", self.max_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        // A zero destination threshold is allowed so degenerate always-success
        // scenarios can be expressed.
        if !(self.destination_threshold.is_finite() && self.destination_threshold >= 0.0) {
            return Err(Error::invalid("destination_threshold must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn relay_power(&self, source_power: f64) -> f64 {
        (self.max_power - source_power).max(0.0)
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            relays: 3,
            source_antennas: 2,
            destination_antennas: 2,
            path_loss_constant: 1.0,
            path_loss_exponent: 3.0,
            noise_power: 8e-8,
            max_power: 0.1,
            destination_threshold: 1.0,
            outage_mode: OutageMode::Or,
        }
    }
}
