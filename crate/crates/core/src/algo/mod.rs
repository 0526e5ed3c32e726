//! Learners: PPO and its robust variant, DQN, DDPG and the random baseline.

mod bandit;
mod ddpg;
mod dqn;
mod offpolicy;
mod ppo;
mod random;
mod replay;
mod robust;

pub use bandit::{BanditEnv, BanditFamily};
pub use ddpg::{train_ddpg, DdpgConfig, DdpgPolicy};
pub use dqn::{power_levels, train_dqn, DqnConfig, DqnPolicy};
pub use ppo::{
    actor_loss, advantage, critic_input, critic_loss, critic_objective, ppo_update, surrogate_objective,
    AdvantageBaseline, PpoAgent, PpoConfig, PpoPolicy, UpdateStats,
};
pub use random::{random_policy, RandomPolicy};
pub use replay::ReplayBuffer;
pub use robust::{robust_filter, train_ppo, train_robust, tv_distance_params};
pub(crate) use robust::run_parallel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace};
use crate::nn::Mlp;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Robust,
    Ppo,
    Ddpg,
    Dqn,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Robust, Method::Ppo, Method::Ddpg, Method::Dqn, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::Ppo => "ppo",
            Method::Ddpg => "ddpg",
            Method::Dqn => "dqn",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}` (expected robust, ppo, ddpg, dqn or random)")))
    }
}

/// Loop bounds shared by every learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    /// Training episodes `u_max`.
    pub episodes: usize,
    /// Environment parameters sampled per episode `m_max`.
    pub parameters_per_episode: usize,
    /// Trials per parameter `l_max`.
    pub trials: usize,
    /// Time slots per trial `t_max`.
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            parameters_per_episode: 8,
            trials: 8,
            horizon: 50,
            gamma: 0.9,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.episodes == 0 || self.parameters_per_episode == 0 || self.trials == 0 || self.horizon == 0 {
            return Err(Error::invalid("episodes, parameters_per_episode, trials and horizon must be >= 1"));
        }
        Ok(())
    }
}

/// Root seed and rollout parallelism of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub seed: u64,
    /// Rollout threads; 1 runs everything on the caller's thread.
    pub workers: usize,
}

impl RunSettings {
    pub fn new(seed: u64) -> Self {
        Self { seed, workers: 1 }
    }
}

/// Anything that maps an observation to an executable action.
pub trait Policy: Sync {
    fn act(&self, observation: &[f64], rng: &mut StreamRng) -> Result<Action>;
}

/// Trained networks of any method, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Ppo { actor: Mlp, critic: Mlp },
    Dqn { q: Mlp, power_levels: usize },
    Ddpg { actor: Mlp, critic: Mlp },
    Random,
}

impl TrainedModel {
    pub fn policy(&self, space: ActionSpace) -> Box<dyn Policy + '_> {
        match self {
            TrainedModel::Ppo { actor, .. } => Box::new(PpoPolicy::new(actor, space)),
            TrainedModel::Dqn { q, power_levels } => Box::new(DqnPolicy::new(q, space, *power_levels)),
            TrainedModel::Ddpg { actor, .. } => Box::new(DdpgPolicy::new(actor, space)),
            TrainedModel::Random => Box::new(RandomPolicy::new(space)),
        }
    }

    /// Networks in a fixed order with their section names.
    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        match self {
            TrainedModel::Ppo { actor, critic } | TrainedModel::Ddpg { actor, critic } => {
                vec![("actor", actor), ("critic", critic)]
            }
            TrainedModel::Dqn { q, .. } => vec![("q", q)],
            TrainedModel::Random => vec![],
        }
    }
}

/// Per-episode training metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub avg_eta: f64,
    pub worst_eta: f64,
    /// Mean over sampled parameters of the fraction of successful slots.
    pub avg_rate: f64,
    /// Minimum over sampled parameters of the same.
    pub worst_rate: f64,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    /// Parameters whose experience was used for updates.
    pub accepted: usize,
    pub mean_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
}

impl EpisodeMetrics {
    pub const CSV_HEADER: &'static str =
        "episode,avg_eta,worst_eta,avg_rate,worst_rate,actor_loss,critic_loss,accepted,mean_ratio,max_ratio";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.avg_eta,
            self.worst_eta,
            self.avg_rate,
            self.worst_rate,
            opt(self.actor_loss),
            opt(self.critic_loss),
            self.accepted,
            opt(self.mean_ratio),
            opt(self.max_ratio)
        )
    }
}

/// Called by the training loops after each episode.
pub trait TrainObserver {
    /// Whether [`TrainObserver::observe`] should run after `episode`.
    fn wants(&self, _episode: usize) -> bool {
        false
    }

    fn observe(&mut self, _episode: usize, _model: &TrainedModel) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: TrainedModel,
    pub episodes: Vec<EpisodeMetrics>,
}

/// Success-rate summary of a batch of trajectories grouped by parameter.
pub(crate) fn rate_of(trials: &[crate::mdp::Trajectory]) -> f64 {
    let slots: usize = trials.iter().map(|t| t.transitions.len()).sum();
    let ok: usize = trials.iter().map(|t| t.successes()).sum();
    ok as f64 / slots.max(1) as f64
}

pub(crate) fn episode_metrics(
    episode: usize,
    etas: &[f64],
    rates: &[f64],
    actor_loss: Option<f64>,
    critic_loss: Option<f64>,
    accepted: usize,
) -> EpisodeMetrics {
    EpisodeMetrics {
        episode,
        avg_eta: mean(etas),
        worst_eta: min(etas),
        avg_rate: mean(rates),
        worst_rate: min(rates),
        actor_loss,
        critic_loss,
        accepted,
        mean_ratio: None,
        max_ratio: None,
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

pub(crate) fn min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}
