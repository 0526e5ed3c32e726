use std::sync::Arc;

use rand::Rng;

use super::markov::{Hop, MarkovChannelModel};
use super::rates::{mutual_information, outage_indicator};
use super::{EnvironmentParameter, NetworkConfig, ParameterGrid};
use crate::algo::tv_distance_params;
use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, EnvFamily, Environment, ObservationEncoding};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<usize>,
    /// Success reward `1 - outage`.
    pub reward: u8,
    pub source_rate: f64,
    pub destination_rate: f64,
}

fn link_hop(link: usize) -> (usize, Hop) {
    let hop = if link % 2 == 0 {
        Hop::SourceRelay
    } else {
        Hop::RelayDestination
    };
    (link / 2, hop)
}

/// Advances the channel by one slot.
///
/// The reward is computed from the current link states of the chosen relay;
/// every link then makes one Markov transition drawn from `rng`. Exactly one
/// uniform is consumed per link whatever the action, so the channel
/// trajectory never depends on the agent.
pub fn env_step(
    model: &MarkovChannelModel,
    network: &NetworkConfig,
    param: &EnvironmentParameter,
    state: &[usize],
    action: &Action,
    rng: &mut StreamRng,
) -> Result<StepOutcome> {
    let k = network.relays;
    if state.len() != 2 * k {
        return Err(Error::Shape {
            context: "link state vector",
            expected: 2 * k,
            got: state.len(),
        });
    }
    if let Some(bad) = state.iter().find(|&&s| s >= model.states()) {
        return Err(Error::invalid(format!("link state {bad} outside 0..{}", model.states())));
    }
    ActionSpace {
        relays: k,
        max_power: network.max_power,
    }
    .validate(action)?;

    let relay = action.relay - 1;
    let loc = param.location[relay];
    let g_sr = model.link(relay, Hop::SourceRelay, loc).representatives[state[2 * relay]];
    let g_rd = model.link(relay, Hop::RelayDestination, loc).representatives[state[2 * relay + 1]];
    let source_rate = mutual_information(action.source_power, g_sr, network.noise_power)?;
    let destination_rate = mutual_information(network.relay_power(action.source_power), g_rd, network.noise_power)?;
    let outage = outage_indicator(
        source_rate,
        destination_rate,
        param.lambda_k[relay],
        network.destination_threshold,
        network.outage_mode,
    );

    let next_state = state
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let (r, hop) = link_hop(i);
            let u: f64 = rng.random();
            model.link(r, hop, param.location[r]).next_state(s, u)
        })
        .collect();
    Ok(StepOutcome {
        next_state,
        reward: 1 - outage,
        source_rate,
        destination_rate,
    })
}

/// The relay network under one environment parameter.
///
/// The agent sees the link states of the previous slot while the reward is
/// decided by the current slot.
#[derive(Debug, Clone)]
pub struct RelayEnv {
    model: Arc<MarkovChannelModel>,
    network: Arc<NetworkConfig>,
    param: EnvironmentParameter,
    encoding: ObservationEncoding,
    previous: Vec<usize>,
    current: Vec<usize>,
}

impl RelayEnv {
    pub fn new(
        model: Arc<MarkovChannelModel>,
        network: Arc<NetworkConfig>,
        param: EnvironmentParameter,
        encoding: ObservationEncoding,
    ) -> Result<Self> {
        if model.relays() != network.relays || param.location.len() != network.relays {
            return Err(Error::Mismatch("model, network and parameter disagree on the relay count".into()));
        }
        if param.location.iter().any(|&l| l >= model.locations_per_relay()) {
            return Err(Error::Mismatch("parameter location outside the channel model".into()));
        }
        let links = 2 * network.relays;
        Ok(Self {
            model,
            network,
            param,
            encoding,
            previous: vec![0; links],
            current: vec![0; links],
        })
    }

    pub fn parameter(&self) -> &EnvironmentParameter {
        &self.param
    }

    /// Current (hidden) link states.
    pub fn state(&self) -> &[usize] {
        &self.current
    }

    fn observe(&self) -> Vec<f64> {
        self.encoding.encode(&self.previous, self.model.states())
    }
}

impl Environment for RelayEnv {
    fn observation_dim(&self) -> usize {
        2 * self.network.relays * self.encoding.width(self.model.states())
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        let m = self.model.states();
        for s in self.previous.iter_mut() {
            *s = rng.random_range(0..m);
        }
        for (i, &p) in self.previous.iter().enumerate() {
            let (r, hop) = link_hop(i);
            let u: f64 = rng.random();
            self.current[i] = self.model.link(r, hop, self.param.location[r]).next_state(p, u);
        }
        self.observe()
    }

    fn step(&mut self, action: &Action, rng: &mut StreamRng) -> Result<(u8, Vec<f64>)> {
        let out = env_step(&self.model, &self.network, &self.param, &self.current, action, rng)?;
        self.previous = std::mem::replace(&mut self.current, out.next_state);
        Ok((out.reward, self.observe()))
    }
}

/// Every environment of a parameter grid, sharing one channel model.
#[derive(Debug, Clone)]
pub struct RelayFamily {
    pub network: Arc<NetworkConfig>,
    pub grid: ParameterGrid,
    pub model: Arc<MarkovChannelModel>,
    pub encoding: ObservationEncoding,
}

impl RelayFamily {
    pub fn new(
        network: NetworkConfig,
        grid: ParameterGrid,
        model: MarkovChannelModel,
        encoding: ObservationEncoding,
    ) -> Result<Self> {
        network.validate()?;
        if grid.relays() != network.relays
            || model.relays() != network.relays
            || model.locations_per_relay() != grid.locations_per_relay()
        {
            return Err(Error::Mismatch("network, grid and channel model disagree on relays or locations".into()));
        }
        Ok(Self {
            network: Arc::new(network),
            grid,
            model: Arc::new(model),
            encoding,
        })
    }
}

impl EnvFamily for RelayFamily {
    type Env = RelayEnv;

    fn action_space(&self) -> ActionSpace {
        ActionSpace {
            relays: self.network.relays,
            max_power: self.network.max_power,
        }
    }

    fn observation_dim(&self) -> usize {
        2 * self.network.relays * self.encoding.width(self.model.states())
    }

    fn parameter_count(&self) -> usize {
        self.grid.len()
    }

    fn instantiate(&self, id: usize) -> Result<RelayEnv> {
        RelayEnv::new(
            Arc::clone(&self.model),
            Arc::clone(&self.network),
            self.grid.param(id)?,
            self.encoding,
        )
    }

    fn parameter_distance(&self, a: usize, b: usize) -> Result<f64> {
        tv_distance_params(&self.grid.param(a)?, &self.grid.param(b)?, &self.grid)
    }
}
