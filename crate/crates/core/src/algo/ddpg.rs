//! Deterministic actor-critic with target networks and Gaussian exploration.
//!
//! The actor emits `tanh`-squashed outputs in `(-1, 1)` per raw action
//! dimension, mapped to raw actions by the same `(center, half_width)` scale
//! as the Gaussian head. The critic sees the observation followed by the
//! normalized, clamped raw action. Until the replay buffer holds `warmup`
//! transitions, behavior is uniform over the action box.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::offpolicy::{off_policy_loop, OffPolicyLearner, UpdateLosses};
use super::replay::ReplayBuffer;
use super::{Policy, RolloutConfig, RunSettings, TrainObserver, Trained, TrainedModel};
use crate::error::{Error, Result};
use crate::mdp::{decode_action, Action, ActionSpace, EnvFamily, ParameterDistribution, Transition};
use crate::nn::{AdamConfig, AdamState, Mlp};
use crate::rng::{self, tag, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    /// Soft target-update rate.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Exploration noise standard deviation in units of the half-width.
    pub noise_std: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub warmup: usize,
    pub train_every: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            tau: 0.005,
            actor_lr: 0.001,
            critic_lr: 0.001,
            noise_std: 0.2,
            replay_capacity: 10_000,
            batch_size: 32,
            warmup: 256,
            train_every: 4,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::invalid("learning rates must be > 0"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.train_every == 0 {
            return Err(Error::invalid("replay_capacity, batch_size and train_every must be >= 1"));
        }
        Ok(())
    }
}

fn squash(outputs: &[f64]) -> [f64; 2] {
    [outputs[0].tanh(), outputs[1].tanh()]
}

fn to_raw(norm: [f64; 2], space: ActionSpace) -> [f64; 2] {
    let s = space.raw_scale();
    [s[0].0 + s[0].1 * norm[0], s[1].0 + s[1].1 * norm[1]]
}

fn to_norm(raw: [f64; 2], space: ActionSpace) -> [f64; 2] {
    let s = space.raw_scale();
    [
        ((raw[0] - s[0].0) / s[0].1).clamp(-1.0, 1.0),
        ((raw[1] - s[1].0) / s[1].1).clamp(-1.0, 1.0),
    ]
}

fn critic_input(observation: &[f64], norm: [f64; 2]) -> Vec<f64> {
    let mut x = Vec::with_capacity(observation.len() + 2);
    x.extend_from_slice(observation);
    x.extend_from_slice(&norm);
    x
}

pub struct DdpgPolicy<'a> {
    actor: &'a Mlp,
    space: ActionSpace,
}

impl<'a> DdpgPolicy<'a> {
    pub fn new(actor: &'a Mlp, space: ActionSpace) -> Self {
        Self { actor, space }
    }
}

impl Policy for DdpgPolicy<'_> {
    fn act(&self, observation: &[f64], _rng: &mut StreamRng) -> Result<Action> {
        let raw = to_raw(squash(&self.actor.forward(observation)?), self.space);
        decode_action(raw, self.space.relays, self.space.max_power)
    }
}

struct Experience {
    observation: Vec<f64>,
    norm_action: [f64; 2],
    reward: f64,
    next_observation: Vec<f64>,
}

struct DdpgLearner {
    config: DdpgConfig,
    space: ActionSpace,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    buffer: ReplayBuffer<Experience>,
    replay_rng: StreamRng,
    steps: usize,
}

impl DdpgLearner {
    fn update(&mut self, gamma: f64) -> Result<UpdateLosses> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng);
        let n = batch.len() as f64;

        let mut c_grads = vec![0.0; self.critic.param_count()];
        let mut c_loss = 0.0;
        for e in &batch {
            let next = squash(&self.actor_target.forward(&e.next_observation)?);
            let y = e.reward + gamma * self.critic_target.forward(&critic_input(&e.next_observation, next))?[0];
            let cache = self.critic.forward_cached(&critic_input(&e.observation, e.norm_action))?;
            let delta = y - cache.output()[0];
            c_loss += delta * delta / n;
            self.critic.backward(&cache, &[-2.0 * delta / n], &mut c_grads)?;
        }
        self.critic_opt.step(self.critic.params_mut(), &c_grads)?;

        let mut a_grads = vec![0.0; self.actor.param_count()];
        let mut scratch = vec![0.0; self.critic.param_count()];
        let mut objective = 0.0;
        let obs_dim = self.actor.input_dim();
        for e in &batch {
            let a_cache = self.actor.forward_cached(&e.observation)?;
            let a = squash(a_cache.output());
            let c_cache = self.critic.forward_cached(&critic_input(&e.observation, a))?;
            objective += c_cache.output()[0] / n;
            let dq = self.critic.backward(&c_cache, &[1.0], &mut scratch)?;
            let upstream = [
                -dq[obs_dim] * (1.0 - a[0] * a[0]) / n,
                -dq[obs_dim + 1] * (1.0 - a[1] * a[1]) / n,
            ];
            self.actor.backward(&a_cache, &upstream, &mut a_grads)?;
        }
        self.actor_opt.step(self.actor.params_mut(), &a_grads)?;

        self.actor_target.soft_update(&self.actor, self.config.tau)?;
        self.critic_target.soft_update(&self.critic, self.config.tau)?;
        Ok(UpdateLosses {
            actor: Some(-objective),
            critic: c_loss,
        })
    }
}

impl OffPolicyLearner for DdpgLearner {
    fn behave(&mut self, observation: &[f64], rng: &mut StreamRng) -> Result<([f64; 2], Action)> {
        let scale = self.space.raw_scale();
        if self.buffer.len() < self.config.warmup {
            // Uniform over the action box until the first update.
            let raw = [0, 1].map(|d| scale[d].0 + scale[d].1 * rng.random_range(-1.0..1.0));
            return Ok((raw, decode_action(raw, self.space.relays, self.space.max_power)?));
        }
        let mut raw = to_raw(squash(&self.actor.forward(observation)?), self.space);
        if self.config.noise_std > 0.0 {
            for d in 0..2 {
                let z: f64 = StandardNormal.sample(rng);
                raw[d] += self.config.noise_std * scale[d].1 * z;
            }
        }
        Ok((raw, decode_action(raw, self.space.relays, self.space.max_power)?))
    }

    fn observe(&mut self, tr: &Transition, gamma: f64) -> Result<Option<UpdateLosses>> {
        self.buffer.push(Experience {
            observation: tr.observation.clone(),
            norm_action: to_norm(tr.raw_action, self.space),
            reward: tr.reward as f64,
            next_observation: tr.next_observation.clone(),
        });
        self.steps += 1;
        if self.buffer.len() < self.config.warmup.max(1) || self.steps % self.config.train_every != 0 {
            return Ok(None);
        }
        self.update(gamma).map(Some)
    }

    fn snapshot(&self) -> TrainedModel {
        TrainedModel::Ddpg {
            actor: self.actor.clone(),
            critic: self.critic.clone(),
        }
    }
}

pub fn train_ddpg<F: EnvFamily>(
    family: &F,
    distribution: &ParameterDistribution,
    rollout: &RolloutConfig,
    config: &DdpgConfig,
    run: RunSettings,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    config.validate()?;
    let space = family.action_space();
    let obs = family.observation_dim();
    let actor = Mlp::standard(obs, 2, &mut rng::stream(run.seed, &[tag::INIT_ACTOR]))?;
    let critic = Mlp::standard(obs + 2, 1, &mut rng::stream(run.seed, &[tag::INIT_CRITIC]))?;
    let mut learner = DdpgLearner {
        config: config.clone(),
        space,
        actor_target: actor.clone(),
        critic_target: critic.clone(),
        actor_opt: AdamState::new(actor.param_count(), AdamConfig::with_lr(config.actor_lr)),
        critic_opt: AdamState::new(critic.param_count(), AdamConfig::with_lr(config.critic_lr)),
        actor,
        critic,
        buffer: ReplayBuffer::new(config.replay_capacity)?,
        replay_rng: rng::stream(run.seed, &[tag::REPLAY]),
        steps: 0,
    };
    off_policy_loop(family, distribution, rollout, run, &mut learner, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_round_trips_inside_the_box() {
        let space = ActionSpace { relays: 3, max_power: 0.1 };
        let raw = to_raw([0.3, -0.7], space);
        let back = to_norm(raw, space);
        assert!((back[0] - 0.3).abs() < 1e-12 && (back[1] + 0.7).abs() < 1e-12);
        assert_eq!(to_norm([10.0, -5.0], space), [1.0, -1.0]);
    }

    #[test]
    fn tau_one_copies_online_network() {
        let a = Mlp::standard(3, 2, &mut rng::stream(1, &[])).unwrap();
        let mut t = Mlp::standard(3, 2, &mut rng::stream(2, &[])).unwrap();
        t.soft_update(&a, 1.0).unwrap();
        assert_eq!(t, a);
    }

    #[test]
    fn noiseless_behavior_is_deterministic() {
        let space = ActionSpace { relays: 3, max_power: 0.1 };
        let actor = Mlp::standard(4, 2, &mut rng::stream(1, &[])).unwrap();
        let critic = Mlp::standard(6, 1, &mut rng::stream(2, &[])).unwrap();
        let cfg = DdpgConfig { noise_std: 0.0, warmup: 0, ..DdpgConfig::default() };
        let make = || DdpgLearner {
            config: cfg.clone(),
            space,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: AdamState::new(actor.param_count(), AdamConfig::with_lr(0.001)),
            critic_opt: AdamState::new(critic.param_count(), AdamConfig::with_lr(0.001)),
            actor: actor.clone(),
            critic: critic.clone(),
            buffer: ReplayBuffer::new(10).unwrap(),
            replay_rng: rng::stream(0, &[]),
            steps: 0,
        };
        let (mut l1, mut l2) = (make(), make());
        let obs = [1.0, 0.0, 0.0, 1.0];
        let a1 = l1.behave(&obs, &mut rng::stream(5, &[])).unwrap();
        let a2 = l2.behave(&obs, &mut rng::stream(6, &[])).unwrap();
        assert_eq!(a1, a2);
        assert!(DdpgConfig { tau: 0.0, ..DdpgConfig::default() }.validate().is_err());

        // Before the buffer fills, behavior ignores the actor and covers the box.
        let mut l3 = DdpgLearner { config: DdpgConfig { warmup: 5, ..cfg.clone() }, ..make() };
        let mut r = rng::stream(7, &[]);
        let mut relays = [0usize; 3];
        for _ in 0..3000 {
            let (raw, action) = l3.behave(&obs, &mut r).unwrap();
            assert!((1.0..=4.0).contains(&raw[0]) && (0.0..=0.1).contains(&raw[1]));
            relays[action.relay - 1] += 1;
        }
        assert!(relays.iter().all(|&c| (900..1100).contains(&c)), "{relays:?}");
    }
}
