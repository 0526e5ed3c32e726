//! Clipped-surrogate actor-critic update with a state-action critic.

use serde::{Deserialize, Serialize};

use super::Policy;
use crate::error::{Error, Result};
use crate::mdp::{decode_action, Action, ActionSpace, Trajectory, Transition};
use crate::nn::{AdamConfig, AdamState, ForwardCache, GaussianHead, Mlp};
use crate::rng::{self, tag, StreamRng};

/// What the one-step target is compared against when forming the actor's
/// advantage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageBaseline {
    /// `r + gamma Q(s', mu(s')) - Q(s, a)`: the temporal-difference error.
    #[default]
    ExecutedAction,
    /// `r + gamma Q(s', mu(s')) - Q(s, mu(s))`.
    PolicyMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    /// Clip range of the probability ratio.
    pub kappa: f64,
    /// Weight of the parameter distance in the robust filter.
    pub zeta: f64,
    pub epochs: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub baseline: AdvantageBaseline,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            kappa: 0.2,
            zeta: 1.0,
            epochs: 4,
            actor_lr: 0.001,
            critic_lr: 0.005,
            baseline: AdvantageBaseline::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::invalid(format!("zeta must be finite and >= 0, got {}", self.zeta)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::invalid("learning rates must be > 0"));
        }
        Ok(())
    }
}

const MIN_LOG_RATIO: f64 = -700.0;

/// One-step temporal-difference error.
pub fn advantage(reward: f64, gamma: f64, next_value: f64, value: f64) -> f64 {
    reward + gamma * next_value - value
}

pub fn critic_loss(delta: f64) -> f64 {
    delta * delta
}

/// Clipped surrogate `min(rho A, clip(rho, 1-kappa, 1+kappa) A)` of one
/// sample; larger is better.
pub fn actor_loss(ratio: f64, advantage: f64, kappa: f64) -> Result<f64> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::invalid(format!("probability ratio must be finite and > 0, got {ratio}")));
    }
    let clipped = ratio.clamp(1.0 - kappa, 1.0 + kappa);
    Ok((ratio * advantage).min(clipped * advantage))
}

/// Critic input: observation, relay one-hot and normalized source power.
pub fn critic_input(observation: &[f64], action: &Action, space: ActionSpace) -> Vec<f64> {
    let mut x = Vec::with_capacity(observation.len() + space.relays + 1);
    x.extend_from_slice(observation);
    x.extend((1..=space.relays).map(|k| if k == action.relay { 1.0 } else { 0.0 }));
    x.push(action.source_power / space.max_power);
    x
}

fn mean_action(outputs: &[f64], space: ActionSpace) -> Result<Action> {
    let head = GaussianHead::from_outputs(outputs, space.raw_scale());
    decode_action(head.mean, space.relays, space.max_power)
}

/// Actor and critic with their optimizers.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    space: ActionSpace,
}

impl PpoAgent {
    pub fn new(observation_dim: usize, space: ActionSpace, config: &PpoConfig, seed: u64) -> Result<Self> {
        let actor = Mlp::standard(
            observation_dim,
            GaussianHead::OUTPUTS,
            &mut rng::stream(seed, &[tag::INIT_ACTOR]),
        )?;
        let critic = Mlp::standard(
            observation_dim + space.relays + 1,
            1,
            &mut rng::stream(seed, &[tag::INIT_CRITIC]),
        )?;
        Ok(Self {
            actor_opt: AdamState::new(actor.param_count(), AdamConfig::with_lr(config.actor_lr)),
            critic_opt: AdamState::new(critic.param_count(), AdamConfig::with_lr(config.critic_lr)),
            actor,
            critic,
            space,
        })
    }

    pub fn space(&self) -> ActionSpace {
        self.space
    }

    /// Samples a raw action, returning it with its log-density and decoded form.
    pub fn sample(&self, observation: &[f64], rng: &mut StreamRng) -> Result<([f64; 2], f64, Action)> {
        let head = GaussianHead::from_outputs(&self.actor.forward(observation)?, self.space.raw_scale());
        let raw = head.sample(rng);
        let action = decode_action(raw, self.space.relays, self.space.max_power)?;
        Ok((raw, head.log_prob(raw), action))
    }

    pub fn mean_action(&self, observation: &[f64]) -> Result<Action> {
        mean_action(&self.actor.forward(observation)?, self.space)
    }
}

/// Deterministic evaluation policy: the decoded mean of the actor's head.
pub struct PpoPolicy<'a> {
    actor: &'a Mlp,
    space: ActionSpace,
}

impl<'a> PpoPolicy<'a> {
    pub fn new(actor: &'a Mlp, space: ActionSpace) -> Self {
        Self { actor, space }
    }
}

impl Policy for PpoPolicy<'_> {
    fn act(&self, observation: &[f64], _rng: &mut StreamRng) -> Result<Action> {
        mean_action(&self.actor.forward(observation)?, self.space)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Negated surrogate averaged over epochs.
    pub actor_loss: f64,
    /// Mean squared TD error averaged over epochs.
    pub critic_loss: f64,
    pub first_epoch_mean_ratio: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

/// Mean squared error of the critic against fixed `targets`, with its
/// gradient. Also returns `Q(s, a)` per sample.
pub fn critic_objective(
    critic: &Mlp,
    samples: &[&Transition],
    targets: &[f64],
    space: ActionSpace,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_len("critic targets", samples.len(), targets.len())?;
    let n = samples.len() as f64;
    let mut grads = vec![0.0; critic.param_count()];
    let mut values = Vec::with_capacity(samples.len());
    let mut loss = 0.0;
    for (s, &y) in samples.iter().zip(targets) {
        let cache = critic.forward_cached(&critic_input(&s.observation, &s.action, space))?;
        let q = cache.output()[0];
        let delta = y - q;
        loss += critic_loss(delta) / n;
        critic.backward(&cache, &[-2.0 * delta / n], &mut grads)?;
        values.push(q);
    }
    Ok((loss, grads, values))
}

/// Mean clipped surrogate over `samples` with its gradient (ascent
/// direction) and the per-sample ratios.
pub fn surrogate_objective(
    actor: &Mlp,
    samples: &[&Transition],
    old_log_probs: &[f64],
    advantages: &[f64],
    kappa: f64,
    space: ActionSpace,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let caches = samples
        .iter()
        .map(|s| actor.forward_cached(&s.observation))
        .collect::<Result<Vec<_>>>()?;
    surrogate_with_caches(actor, &caches, samples, old_log_probs, advantages, kappa, space)
}

fn surrogate_with_caches(
    actor: &Mlp,
    caches: &[ForwardCache],
    samples: &[&Transition],
    old_log_probs: &[f64],
    advantages: &[f64],
    kappa: f64,
    space: ActionSpace,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_len("old log-probabilities", samples.len(), old_log_probs.len())?;
    check_len("advantages", samples.len(), advantages.len())?;
    let n = samples.len() as f64;
    let scale = space.raw_scale();
    let mut grads = vec![0.0; actor.param_count()];
    let mut ratios = Vec::with_capacity(samples.len());
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let head = GaussianHead::from_outputs(caches[i].output(), scale);
        // Floored so a vanishing ratio stays a positive normal number.
        let ratio = (head.log_prob(s.raw_action) - old_log_probs[i]).max(MIN_LOG_RATIO).exp();
        let a = advantages[i];
        let value = actor_loss(ratio, a, kappa)?;
        total += value / n;
        ratios.push(ratio);
        // Only the unclipped branch depends on the parameters.
        if ratio * a <= ratio.clamp(1.0 - kappa, 1.0 + kappa) * a && a != 0.0 {
            let w = ratio * a / n;
            let g = head.log_prob_grad(s.raw_action);
            actor.backward(&caches[i], &g.map(|x| x * w), &mut grads)?;
        }
    }
    Ok((total, grads, ratios))
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { context, expected, got });
    }
    Ok(())
}

/// Runs `config.epochs` joint critic/actor steps on the experience of one
/// environment parameter. Ratios are taken against `old_actor`.
pub fn ppo_update(
    agent: &mut PpoAgent,
    old_actor: &Mlp,
    trajectories: &[Trajectory],
    gamma: f64,
    config: &PpoConfig,
) -> Result<UpdateStats> {
    let samples: Vec<&Transition> = trajectories.iter().flat_map(|t| &t.transitions).collect();
    if samples.is_empty() {
        return Err(Error::invalid("ppo_update needs at least one transition"));
    }
    let space = agent.space;
    let scale = space.raw_scale();
    let old_log_probs = samples
        .iter()
        .map(|s| Ok(GaussianHead::from_outputs(&old_actor.forward(&s.observation)?, scale).log_prob(s.raw_action)))
        .collect::<Result<Vec<f64>>>()?;

    let mut stats = UpdateStats {
        actor_loss: 0.0,
        critic_loss: 0.0,
        first_epoch_mean_ratio: 0.0,
        mean_ratio: 0.0,
        max_ratio: f64::NEG_INFINITY,
        samples: samples.len(),
    };
    let epochs = config.epochs as f64;
    for epoch in 0..config.epochs {
        let caches = samples
            .iter()
            .map(|s| agent.actor.forward_cached(&s.observation))
            .collect::<Result<Vec<_>>>()?;

        // Targets use the critic as it stands before this epoch's step.
        let mut targets = Vec::with_capacity(samples.len());
        let mut i = 0;
        for traj in trajectories {
            let tr = &traj.transitions;
            for t in 0..tr.len() {
                let next = if t + 1 < tr.len() && tr[t + 1].observation == tr[t].next_observation {
                    mean_action(caches[i + 1].output(), space)?
                } else {
                    agent.mean_action(&tr[t].next_observation)?
                };
                let q_next = agent.critic.forward(&critic_input(&tr[t].next_observation, &next, space))?[0];
                targets.push(tr[t].reward as f64 + gamma * q_next);
                i += 1;
            }
        }

        let (c_loss, c_grads, q_sa) = critic_objective(&agent.critic, &samples, &targets, space)?;
        let advantages = match config.baseline {
            AdvantageBaseline::ExecutedAction => targets.iter().zip(&q_sa).map(|(y, q)| y - q).collect::<Vec<_>>(),
            AdvantageBaseline::PolicyMean => samples
                .iter()
                .zip(&caches)
                .zip(&targets)
                .map(|((s, c), y)| {
                    let mu = mean_action(c.output(), space)?;
                    Ok(y - agent.critic.forward(&critic_input(&s.observation, &mu, space))?[0])
                })
                .collect::<Result<Vec<_>>>()?,
        };

        let (surrogate, a_grads, ratios) = surrogate_with_caches(
            &agent.actor,
            &caches,
            &samples,
            &old_log_probs,
            &advantages,
            config.kappa,
            space,
        )?;
        // Adam descends, so the surrogate gradient is negated.
        let a_grads: Vec<f64> = a_grads.iter().map(|g| -g).collect();
        agent.critic_opt.step(agent.critic.params_mut(), &c_grads)?;
        agent.actor_opt.step(agent.actor.params_mut(), &a_grads)?;

        let mean_ratio = super::mean(&ratios);
        if epoch == 0 {
            stats.first_epoch_mean_ratio = mean_ratio;
        }
        stats.mean_ratio += mean_ratio / epochs;
        stats.max_ratio = ratios.iter().copied().fold(stats.max_ratio, f64::max);
        stats.actor_loss -= surrogate / epochs;
        stats.critic_loss += c_loss / epochs;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SPACE: ActionSpace = ActionSpace {
        relays: 3,
        max_power: 0.1,
    };

    fn transitions(actor: &Mlp, n: usize, seed: u64) -> Vec<Trajectory> {
        let mut rng = rng::stream(seed, &[99]);
        let agent_space = SPACE;
        let mut out = Vec::new();
        let mut obs = vec![0.0; actor.input_dim()];
        for t in 0..n {
            obs.iter_mut().enumerate().for_each(|(j, x)| *x = ((t * 7 + j * 3) % 5) as f64 / 4.0);
            let head = GaussianHead::from_outputs(&actor.forward(&obs).unwrap(), agent_space.raw_scale());
            let raw = head.sample(&mut rng);
            let next: Vec<f64> = obs.iter().map(|x| 1.0 - x).collect();
            out.push(Transition {
                observation: obs.clone(),
                raw_action: raw,
                action: decode_action(raw, SPACE.relays, SPACE.max_power).unwrap(),
                reward: (t % 3 == 0) as u8,
                next_observation: next,
                log_prob: head.log_prob(raw),
            });
        }
        vec![Trajectory {
            parameter_id: 0,
            seed,
            transitions: out,
        }]
    }

    #[test]
    fn scalar_losses() {
        assert_eq!(advantage(1.0, 0.9, 2.0, 0.5), 1.0 + 1.8 - 0.5);
        assert_eq!(critic_loss(-3.0), 9.0);
        // Inside the clip range both branches agree.
        assert!((actor_loss(1.1, 2.0, 0.2).unwrap() - 2.2).abs() < 1e-12);
        // Positive advantage, ratio above the range: clipped.
        assert!((actor_loss(1.5, 2.0, 0.2).unwrap() - 2.4).abs() < 1e-12);
        // Negative advantage, ratio above the range: unclipped is smaller.
        assert!((actor_loss(1.5, -2.0, 0.2).unwrap() + 3.0).abs() < 1e-12);
        // Negative advantage, ratio below the range: clipped.
        assert!((actor_loss(0.5, -2.0, 0.2).unwrap() + 1.6).abs() < 1e-12);
        assert!(actor_loss(0.0, 1.0, 0.2).is_err());
        assert!(actor_loss(-1.0, 1.0, 0.2).is_err());
        assert!(actor_loss(f64::NAN, 1.0, 0.2).is_err());
    }

    #[test]
    fn critic_input_layout() {
        let x = critic_input(&[0.5, 0.25], &Action { relay: 2, source_power: 0.025 }, SPACE);
        assert_eq!(x, vec![0.5, 0.25, 0.0, 1.0, 0.0, 0.25]);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let actor = Mlp::standard(6, 4, &mut rng::stream(1, &[1])).unwrap();
        let trajs = transitions(&actor, 12, 5);
        let samples: Vec<&Transition> = trajs[0].transitions.iter().collect();
        // Old policy differs slightly so ratios are spread around 1.
        let mut old = actor.clone();
        for p in old.params_mut().iter_mut().step_by(7) {
            *p += 0.05;
        }
        let old_lp: Vec<f64> = samples
            .iter()
            .map(|s| GaussianHead::from_outputs(&old.forward(&s.observation).unwrap(), SPACE.raw_scale()).log_prob(s.raw_action))
            .collect();
        let adv: Vec<f64> = (0..samples.len()).map(|i| (i as f64 - 5.5) / 3.0).collect();
        let (_, grad, _) = surrogate_objective(&actor, &samples, &old_lp, &adv, 0.2, SPACE).unwrap();
        let h = 1e-6;
        for idx in [0, 13, 50, actor.param_count() - 1, actor.param_count() - 6] {
            let mut plus = actor.clone();
            plus.params_mut()[idx] += h;
            let mut minus = actor.clone();
            minus.params_mut()[idx] -= h;
            let f = |m: &Mlp| surrogate_objective(m, &samples, &old_lp, &adv, 0.2, SPACE).unwrap().0;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - grad[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "param {idx}: fd {fd} vs {}", grad[idx]);
        }
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let critic = Mlp::standard(6 + 4, 1, &mut rng::stream(2, &[1])).unwrap();
        let actor = Mlp::standard(6, 4, &mut rng::stream(1, &[1])).unwrap();
        let trajs = transitions(&actor, 10, 6);
        let samples: Vec<&Transition> = trajs[0].transitions.iter().collect();
        let targets: Vec<f64> = (0..samples.len()).map(|i| i as f64 * 0.1).collect();
        let (_, grad, _) = critic_objective(&critic, &samples, &targets, SPACE).unwrap();
        let h = 1e-6;
        for idx in [0, 21, 77, critic.param_count() - 1] {
            let mut plus = critic.clone();
            plus.params_mut()[idx] += h;
            let mut minus = critic.clone();
            minus.params_mut()[idx] -= h;
            let f = |m: &Mlp| critic_objective(m, &samples, &targets, SPACE).unwrap().0;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - grad[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn first_epoch_ratio_is_one_against_current_actor() {
        let cfg = PpoConfig::default();
        let mut agent = PpoAgent::new(6, SPACE, &cfg, 3).unwrap();
        let trajs = transitions(&agent.actor, 20, 7);
        let old = agent.actor.clone();
        let stats = ppo_update(&mut agent, &old, &trajs, 0.9, &cfg).unwrap();
        assert!((stats.first_epoch_mean_ratio - 1.0).abs() < 1e-12);
        assert!(stats.max_ratio.is_finite() && stats.critic_loss.is_finite());
        assert_ne!(agent.actor, old);
    }

    #[test]
    fn critic_fits_constant_reward() {
        // Every reward is 1, so Q converges towards 1 / (1 - gamma).
        let cfg = PpoConfig {
            epochs: 1,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(6, SPACE, &cfg, 4).unwrap();
        let mut trajs = transitions(&agent.actor, 30, 8);
        trajs[0].transitions.iter_mut().for_each(|t| t.reward = 1);
        let gamma = 0.5;
        let mut last = f64::INFINITY;
        for _ in 0..400 {
            let old = agent.actor.clone();
            last = ppo_update(&mut agent, &old, &trajs, gamma, &cfg).unwrap().critic_loss;
        }
        assert!(last < 1e-2, "critic loss {last}");
        let s = &trajs[0].transitions[0];
        let q = agent.critic.forward(&critic_input(&s.observation, &s.action, SPACE)).unwrap()[0];
        assert!((q - 2.0).abs() < 0.2, "q = {q}");
    }

    #[test]
    fn empty_update_is_rejected() {
        let cfg = PpoConfig::default();
        let mut agent = PpoAgent::new(6, SPACE, &cfg, 3).unwrap();
        let old = agent.actor.clone();
        assert!(ppo_update(&mut agent, &old, &[], 0.9, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        for bad in [
            PpoConfig { kappa: 0.0, ..PpoConfig::default() },
            PpoConfig { kappa: 1.0, ..PpoConfig::default() },
            PpoConfig { zeta: -1.0, ..PpoConfig::default() },
            PpoConfig { epochs: 0, ..PpoConfig::default() },
            PpoConfig { actor_lr: 0.0, ..PpoConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn surrogate_never_exceeds_unclipped(ratio in 0.01f64..5.0, adv in -10.0f64..10.0, kappa in 0.01f64..0.99) {
            let v = actor_loss(ratio, adv, kappa).unwrap();
            prop_assert!(v <= ratio * adv + 1e-12);
            let clipped = ratio.clamp(1.0 - kappa, 1.0 + kappa);
            prop_assert!(v <= clipped * adv + 1e-12);
        }
    }
}
