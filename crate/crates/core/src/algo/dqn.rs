//! Deep Q-learning over the discretized action set `K x power_levels`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::offpolicy::{off_policy_loop, OffPolicyLearner, UpdateLosses};
use super::replay::ReplayBuffer;
use super::{Policy, RolloutConfig, RunSettings, TrainObserver, Trained, TrainedModel};
use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, EnvFamily, ParameterDistribution, Transition};
use crate::nn::{AdamConfig, AdamState, Mlp};
use crate::rng::{self, tag, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub power_levels: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions stored before the first update.
    pub warmup: usize,
    /// Environment steps between updates.
    pub train_every: usize,
    /// Updates between hard target-network copies.
    pub target_sync: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_decay_steps: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            power_levels: 5,
            learning_rate: 0.001,
            replay_capacity: 10_000,
            batch_size: 32,
            warmup: 256,
            train_every: 4,
            target_sync: 250,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.power_levels < 2 {
            return Err(Error::invalid("power_levels must be >= 2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.train_every == 0 || self.target_sync == 0 {
            return Err(Error::invalid("replay_capacity, batch_size, train_every and target_sync must be >= 1"));
        }
        let unit = 0.0..=1.0;
        if !(unit.contains(&self.epsilon_start) && unit.contains(&self.epsilon_end)) {
            return Err(Error::invalid("epsilon bounds must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        let frac = if self.epsilon_decay_steps == 0 {
            1.0
        } else {
            (step as f64 / self.epsilon_decay_steps as f64).min(1.0)
        };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Midpoints of `levels` equal-width bins over `[0, max_power]`.
pub fn power_levels(levels: usize, max_power: f64) -> Vec<f64> {
    (0..levels)
        .map(|i| (i as f64 + 0.5) / levels as f64 * max_power)
        .collect()
}

fn index_action(index: usize, levels: usize, max_power: f64) -> Action {
    Action {
        relay: index / levels + 1,
        source_power: (index % levels) as f64 * max_power / levels as f64 + 0.5 * max_power / levels as f64,
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Greedy policy over the Q-network outputs.
pub struct DqnPolicy<'a> {
    q: &'a Mlp,
    space: ActionSpace,
    levels: usize,
}

impl<'a> DqnPolicy<'a> {
    pub fn new(q: &'a Mlp, space: ActionSpace, levels: usize) -> Self {
        Self { q, space, levels }
    }
}

impl Policy for DqnPolicy<'_> {
    fn act(&self, observation: &[f64], _rng: &mut StreamRng) -> Result<Action> {
        let values = self.q.forward(observation)?;
        Ok(index_action(argmax(&values), self.levels, self.space.max_power))
    }
}

struct Experience {
    observation: Vec<f64>,
    index: usize,
    reward: f64,
    next_observation: Vec<f64>,
}

struct DqnLearner {
    config: DqnConfig,
    space: ActionSpace,
    q: Mlp,
    target: Mlp,
    opt: AdamState,
    buffer: ReplayBuffer<Experience>,
    replay_rng: StreamRng,
    steps: usize,
    updates: usize,
    last_index: usize,
}

impl DqnLearner {
    fn update(&mut self, gamma: f64) -> Result<f64> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng);
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.q.param_count()];
        let mut loss = 0.0;
        let mut upstream = vec![0.0; self.q.output_dim()];
        for e in batch {
            let next = self.target.forward(&e.next_observation)?;
            let y = e.reward + gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let cache = self.q.forward_cached(&e.observation)?;
            let delta = y - cache.output()[e.index];
            loss += delta * delta / n;
            upstream.iter_mut().for_each(|u| *u = 0.0);
            upstream[e.index] = -2.0 * delta / n;
            self.q.backward(&cache, &upstream, &mut grads)?;
        }
        self.opt.step(self.q.params_mut(), &grads)?;
        self.updates += 1;
        if self.updates % self.config.target_sync == 0 {
            self.target.copy_from(&self.q)?;
        }
        Ok(loss)
    }
}

impl OffPolicyLearner for DqnLearner {
    fn behave(&mut self, observation: &[f64], rng: &mut StreamRng) -> Result<([f64; 2], Action)> {
        let outputs = self.q.output_dim();
        let index = if rng.random::<f64>() < self.config.epsilon(self.steps) {
            rng.random_range(0..outputs)
        } else {
            argmax(&self.q.forward(observation)?)
        };
        self.last_index = index;
        let action = index_action(index, self.config.power_levels, self.space.max_power);
        Ok(([action.relay as f64 + 0.5, action.source_power], action))
    }

    fn observe(&mut self, tr: &Transition, gamma: f64) -> Result<Option<UpdateLosses>> {
        self.buffer.push(Experience {
            observation: tr.observation.clone(),
            index: self.last_index,
            reward: tr.reward as f64,
            next_observation: tr.next_observation.clone(),
        });
        self.steps += 1;
        if self.buffer.len() < self.config.warmup.max(1) || self.steps % self.config.train_every != 0 {
            return Ok(None);
        }
        Ok(Some(UpdateLosses {
            actor: None,
            critic: self.update(gamma)?,
        }))
    }

    fn snapshot(&self) -> TrainedModel {
        TrainedModel::Dqn {
            q: self.q.clone(),
            power_levels: self.config.power_levels,
        }
    }
}

pub fn train_dqn<F: EnvFamily>(
    family: &F,
    distribution: &ParameterDistribution,
    rollout: &RolloutConfig,
    config: &DqnConfig,
    run: RunSettings,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    config.validate()?;
    let space = family.action_space();
    let q = Mlp::standard(
        family.observation_dim(),
        space.relays * config.power_levels,
        &mut rng::stream(run.seed, &[tag::INIT_CRITIC]),
    )?;
    let mut learner = DqnLearner {
        config: config.clone(),
        space,
        target: q.clone(),
        opt: AdamState::new(q.param_count(), AdamConfig::with_lr(config.learning_rate)),
        q,
        buffer: ReplayBuffer::new(config.replay_capacity)?,
        replay_rng: rng::stream(run.seed, &[tag::REPLAY]),
        steps: 0,
        updates: 0,
        last_index: 0,
    };
    off_policy_loop(family, distribution, rollout, run, &mut learner, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_midpoints() {
        assert_eq!(power_levels(4, 1.0), vec![0.125, 0.375, 0.625, 0.875]);
        let a = index_action(7, 4, 1.0);
        assert_eq!(a.relay, 2);
        assert!((a.source_power - 0.875).abs() < 1e-15);
    }

    #[test]
    fn greedy_action_covers_every_output() {
        let space = ActionSpace { relays: 3, max_power: 0.1 };
        let mut q = Mlp::zeros(&[2, 3 * 5]).unwrap();
        for target in 0..15 {
            q.set_bias(0, target, 1.0);
            let a = DqnPolicy::new(&q, space, 5).act(&[0.0, 0.0], &mut rng::stream(0, &[])).unwrap();
            assert_eq!((a.relay - 1) * 5 + ((a.source_power / 0.02) as usize), target);
            q.set_bias(0, target, 0.0);
        }
        assert_eq!(q.output_dim(), 15);
    }

    #[test]
    fn epsilon_decays_linearly() {
        let c = DqnConfig {
            epsilon_decay_steps: 100,
            ..DqnConfig::default()
        };
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(50) - 0.525).abs() < 1e-12);
        assert!((c.epsilon(1000) - 0.05).abs() < 1e-15);
        assert!(DqnConfig { power_levels: 1, ..DqnConfig::default() }.validate().is_err());
    }
}
