//! Outer loop shared by the replay-based learners: the same episode and
//! parameter sampling as the PPO loop, with updates interleaved into the
//! rollout.

use super::{episode_metrics, mean, rate_of, RolloutConfig, RunSettings, TrainObserver, Trained, TrainedModel};
use crate::error::Result;
use crate::mdp::{
    discounted_return, sample_parameters, Action, EnvFamily, Environment, ParameterDistribution, Trajectory,
    Transition,
};
use crate::rng::{self, tag, StreamRng};

pub(crate) struct UpdateLosses {
    pub actor: Option<f64>,
    pub critic: f64,
}

pub(crate) trait OffPolicyLearner {
    /// Behavior action for `observation`, returning the raw form stored in
    /// the trajectory and the decoded action.
    fn behave(&mut self, observation: &[f64], rng: &mut StreamRng) -> Result<([f64; 2], Action)>;

    /// Stores one transition and trains if due.
    fn observe(&mut self, transition: &Transition, gamma: f64) -> Result<Option<UpdateLosses>>;

    fn snapshot(&self) -> TrainedModel;
}

pub(crate) fn off_policy_loop<F: EnvFamily, L: OffPolicyLearner>(
    family: &F,
    distribution: &ParameterDistribution,
    rollout: &RolloutConfig,
    run: RunSettings,
    learner: &mut L,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    rollout.validate()?;
    let mut sampler = rng::stream(run.seed, &[tag::PARAM_SAMPLING]);
    let mut explore = rng::stream(run.seed, &[tag::EXPLORATION]);
    let mut episodes = Vec::with_capacity(rollout.episodes);
    for u in 0..rollout.episodes {
        let ids = sample_parameters(distribution, rollout.parameters_per_episode, &mut sampler)?;
        let (mut etas, mut rates) = (Vec::new(), Vec::new());
        let (mut actor_losses, mut critic_losses) = (Vec::new(), Vec::new());
        for (m, &id) in ids.iter().enumerate() {
            let mut env = family.instantiate(id)?;
            let mut env_rng = rng::stream(run.seed, &[tag::ROLLOUT, u as u64, m as u64]);
            let mut obs = env.reset(&mut env_rng);
            let mut trials = Vec::with_capacity(rollout.trials);
            for l in 0..rollout.trials {
                let mut transitions = Vec::with_capacity(rollout.horizon);
                for _ in 0..rollout.horizon {
                    let (raw, action) = learner.behave(&obs, &mut explore)?;
                    let (reward, next) = env.step(&action, &mut env_rng)?;
                    let tr = Transition {
                        observation: std::mem::replace(&mut obs, next.clone()),
                        raw_action: raw,
                        action,
                        reward,
                        next_observation: next,
                        log_prob: 0.0,
                    };
                    if let Some(losses) = learner.observe(&tr, rollout.gamma)? {
                        actor_losses.extend(losses.actor);
                        critic_losses.push(losses.critic);
                    }
                    transitions.push(tr);
                }
                trials.push(Trajectory {
                    parameter_id: id,
                    seed: rng::derive_seed(run.seed, &[tag::ROLLOUT, u as u64, m as u64, l as u64]),
                    transitions,
                });
            }
            etas.push(discounted_return(&trials, rollout.gamma)?);
            rates.push(rate_of(&trials));
        }
        let opt_mean = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
        episodes.push(episode_metrics(
            u,
            &etas,
            &rates,
            opt_mean(&actor_losses),
            opt_mean(&critic_losses),
            ids.len(),
        ));
        if observer.wants(u) {
            observer.observe(u, &learner.snapshot())?;
        }
    }
    Ok(Trained {
        model: learner.snapshot(),
        episodes,
    })
}
