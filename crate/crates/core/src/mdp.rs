//! MDP plumbing shared by every learner: actions, observations,
//! trajectories, the environment-parameter distribution and returns.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// An executable action: 1-based relay index and source power in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub relay: usize,
    pub source_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpace {
    pub relays: usize,
    pub max_power: f64,
}

impl ActionSpace {
    pub fn validate(&self, action: &Action) -> Result<()> {
        if action.relay < 1 || action.relay > self.relays {
            return Err(Error::InvalidAction(format!(
                "relay {} outside 1..={}",
                action.relay, self.relays
            )));
        }
        if !(0.0..=self.max_power).contains(&action.source_power) {
            return Err(Error::InvalidAction(format!(
                "source power {} outside [0, {}]",
                action.source_power, self.max_power
            )));
        }
        Ok(())
    }

    /// Center and half-width of each raw action dimension.
    pub fn raw_scale(&self) -> [(f64, f64); 2] {
        let k = self.relays as f64;
        [((k + 2.0) / 2.0, k / 2.0), (self.max_power / 2.0, self.max_power / 2.0)]
    }
}

/// Maps a continuous policy output onto an executable action: the relay
/// value is clamped into `[1, K+1)` and floored, the power is clamped into
/// `[0, P_max]`.
pub fn decode_action(raw: [f64; 2], relays: usize, max_power: f64) -> Result<Action> {
    if !(raw[0].is_finite() && raw[1].is_finite()) {
        return Err(Error::InvalidAction(format!("non-finite raw action {raw:?}")));
    }
    if relays == 0 {
        return Err(Error::invalid("relay count must be >= 1"));
    }
    let relay = (raw[0].clamp(1.0, relays as f64 + 1.0).floor() as usize).min(relays);
    Ok(Action {
        relay,
        source_power: raw[1].clamp(0.0, max_power),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationEncoding {
    /// `M` indicator features per link.
    #[default]
    OneHot,
    /// One feature per link: `index / (M - 1)`.
    Normalized,
}

impl ObservationEncoding {
    pub fn width(self, states: usize) -> usize {
        match self {
            ObservationEncoding::OneHot => states,
            ObservationEncoding::Normalized => 1,
        }
    }

    /// Encodes per-link state indices into a flat feature vector.
    pub fn encode(self, link_states: &[usize], states: usize) -> Vec<f64> {
        let mut out = vec![0.0; link_states.len() * self.width(states)];
        for (i, &s) in link_states.iter().enumerate() {
            match self {
                ObservationEncoding::OneHot => out[i * states + s] = 1.0,
                ObservationEncoding::Normalized => out[i] = s as f64 / (states - 1) as f64,
            }
        }
        out
    }
}

/// An environment the learners can roll out in.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64>;
    /// Executes `action` and returns the binary reward and next observation.
    fn step(&mut self, action: &Action, rng: &mut StreamRng) -> Result<(u8, Vec<f64>)>;
}

/// A family of environments indexed by environment-parameter id.
pub trait EnvFamily: Sync {
    type Env: Environment + Send;

    fn action_space(&self) -> ActionSpace;
    fn observation_dim(&self) -> usize;
    fn parameter_count(&self) -> usize;
    fn instantiate(&self, id: usize) -> Result<Self::Env>;
    /// Distance in `[0, 1]` between two parameters of the family.
    fn parameter_distance(&self, a: usize, b: usize) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    /// Pre-decode policy sample.
    pub raw_action: [f64; 2],
    pub action: Action,
    pub reward: u8,
    pub next_observation: Vec<f64>,
    /// Log-density of `raw_action` under the behavior policy.
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub parameter_id: usize,
    pub seed: u64,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn successes(&self) -> usize {
        self.transitions.iter().map(|t| t.reward as usize).sum()
    }

    pub fn discounted_reward(&self, gamma: f64) -> f64 {
        let mut discount = 1.0;
        let mut total = 0.0;
        for t in &self.transitions {
            total += discount * t.reward as f64;
            discount *= gamma;
        }
        total
    }
}

/// Average over trials of `sum_t gamma^t r_t`, with `t` counted from 0.
pub fn discounted_return(trials: &[Trajectory], gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if trials.is_empty() {
        return Err(Error::invalid("discounted_return needs at least one trial"));
    }
    Ok(trials.iter().map(|t| t.discounted_reward(gamma)).sum::<f64>() / trials.len() as f64)
}

/// Probability weights over grid parameter ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistribution {
    ids: Vec<usize>,
    weights: Vec<f64>,
}

impl ParameterDistribution {
    pub fn new(ids: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("parameter distribution over an empty grid"));
        }
        if ids.len() != weights.len() {
            return Err(Error::Shape {
                context: "parameter weights",
                expected: ids.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("parameter weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("parameter weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { ids, weights })
    }

    pub fn uniform(ids: Vec<usize>) -> Result<Self> {
        let n = ids.len();
        Self::new(ids, vec![1.0; n])
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (id, w) in self.ids.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return *id;
            }
        }
        // u landed in the rounding gap above the last cumulative weight
        *self
            .ids
            .iter()
            .zip(&self.weights)
            .rev()
            .find(|(_, w)| **w > 0.0)
            .map(|(id, _)| id)
            .unwrap_or(&self.ids[0])
    }
}

/// Draws `count` i.i.d. parameter ids.
pub fn sample_parameters<R: Rng + ?Sized>(
    dist: &ParameterDistribution,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::invalid("must sample at least one parameter"));
    }
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Writes each trajectory as one JSON line.
pub fn write_trajectory_log<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory_log<R: BufRead>(input: R) -> Result<Vec<Trajectory>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))?;
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}
