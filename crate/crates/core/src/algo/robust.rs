//! The alternating loop: roll out on sampled environment parameters, find
//! the worst one, keep the parameters that are good enough relative to it,
//! and update on their experience.

use rayon::prelude::*;

use super::ppo::{ppo_update, PpoAgent, PpoConfig};
use super::{mean, min, rate_of, EpisodeMetrics, RolloutConfig, RunSettings, TrainObserver, Trained, TrainedModel};
use crate::channel::{EnvironmentParameter, ParameterGrid};
use crate::error::{Error, Result};
use crate::mdp::{
    discounted_return, sample_parameters, EnvFamily, Environment, ParameterDistribution, Trajectory, Transition,
};
use crate::rng::{self, tag};

/// Distance in `[0, 1]` between two parameters of `grid`: the mean absolute
/// difference of their index-fraction features.
pub fn tv_distance_params(a: &EnvironmentParameter, b: &EnvironmentParameter, grid: &ParameterGrid) -> Result<f64> {
    grid.check(a)?;
    grid.check(b)?;
    let (fa, fb) = (grid.features(a), grid.features(b));
    if fa.is_empty() {
        return Ok(0.0);
    }
    Ok(fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>() / fa.len() as f64)
}

/// Indices `m` with `etas[m] - zeta * distances[m] >= eta_worst`, in order.
pub fn robust_filter(etas: &[f64], distances: &[f64], zeta: f64, eta_worst: f64) -> Result<Vec<usize>> {
    if etas.is_empty() {
        return Err(Error::invalid("robust_filter needs at least one return"));
    }
    if etas.len() != distances.len() {
        return Err(Error::Shape {
            context: "robust_filter distances",
            expected: etas.len(),
            got: distances.len(),
        });
    }
    if !zeta.is_finite() || zeta < 0.0 {
        return Err(Error::invalid(format!("zeta must be finite and >= 0, got {zeta}")));
    }
    Ok((0..etas.len())
        .filter(|&m| etas[m] - zeta * distances[m] >= eta_worst)
        .collect())
}

/// Robust training: updates only on parameters that pass [`robust_filter`].
pub fn train_robust<F: EnvFamily>(
    family: &F,
    distribution: &ParameterDistribution,
    rollout: &RolloutConfig,
    config: &PpoConfig,
    run: RunSettings,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    train_loop(family, distribution, rollout, config, run, true, observer)
}

/// Baseline: the same loop updating on every sampled parameter.
pub fn train_ppo<F: EnvFamily>(
    family: &F,
    distribution: &ParameterDistribution,
    rollout: &RolloutConfig,
    config: &PpoConfig,
    run: RunSettings,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    train_loop(family, distribution, rollout, config, run, false, observer)
}

/// `l_max` trials of `t_max` slots on one parameter, sampling from the
/// current actor. The environment is reset once; trials run back to back.
fn collect<F: EnvFamily>(
    family: &F,
    agent: &PpoAgent,
    id: usize,
    rollout: &RolloutConfig,
    seed: u64,
    episode: usize,
    slot: usize,
) -> Result<Vec<Trajectory>> {
    let mut env = family.instantiate(id)?;
    let mut rng = rng::stream(seed, &[tag::ROLLOUT, episode as u64, slot as u64]);
    let mut obs = env.reset(&mut rng);
    let mut trials = Vec::with_capacity(rollout.trials);
    for l in 0..rollout.trials {
        let mut transitions = Vec::with_capacity(rollout.horizon);
        for _ in 0..rollout.horizon {
            let (raw, log_prob, action) = agent.sample(&obs, &mut rng)?;
            let (reward, next) = env.step(&action, &mut rng)?;
            transitions.push(Transition {
                observation: std::mem::replace(&mut obs, next.clone()),
                raw_action: raw,
                action,
                reward,
                next_observation: next,
                log_prob,
            });
        }
        trials.push(Trajectory {
            parameter_id: id,
            seed: rng::derive_seed(seed, &[tag::ROLLOUT, episode as u64, slot as u64, l as u64]),
            transitions,
        });
    }
    Ok(trials)
}

pub(crate) fn run_parallel<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync + Send,
{
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}

fn train_loop<F: EnvFamily>(
    family: &F,
    distribution: &ParameterDistribution,
    rollout: &RolloutConfig,
    config: &PpoConfig,
    run: RunSettings,
    robust: bool,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    rollout.validate()?;
    config.validate()?;
    let mut agent = PpoAgent::new(family.observation_dim(), family.action_space(), config, run.seed)?;
    let mut sampler = rng::stream(run.seed, &[tag::PARAM_SAMPLING]);
    let mut episodes = Vec::with_capacity(rollout.episodes);

    for u in 0..rollout.episodes {
        let ids = sample_parameters(distribution, rollout.parameters_per_episode, &mut sampler)?;
        let batches = run_parallel(&ids, run.workers, |m, &id| collect(family, &agent, id, rollout, run.seed, u, m))?;
        let etas = batches
            .iter()
            .map(|b| discounted_return(b, rollout.gamma))
            .collect::<Result<Vec<_>>>()?;
        let rates: Vec<f64> = batches.iter().map(|b| rate_of(b)).collect();
        let worst = etas
            .iter()
            .enumerate()
            .fold(0, |w, (m, &e)| if e < etas[w] { m } else { w });

        let accepted = if robust {
            let distances = ids
                .iter()
                .map(|&id| family.parameter_distance(ids[worst], id))
                .collect::<Result<Vec<_>>>()?;
            robust_filter(&etas, &distances, config.zeta, etas[worst])?
        } else {
            (0..ids.len()).collect()
        };

        let (mut a_loss, mut c_loss, mut ratio_sum, mut ratio_max) = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
        for &m in &accepted {
            let old = agent.actor.clone();
            let stats = ppo_update(&mut agent, &old, &batches[m], rollout.gamma, config)?;
            a_loss += stats.actor_loss;
            c_loss += stats.critic_loss;
            ratio_sum += stats.mean_ratio;
            ratio_max = ratio_max.max(stats.max_ratio);
        }
        let n = accepted.len() as f64;
        episodes.push(EpisodeMetrics {
            episode: u,
            avg_eta: mean(&etas),
            worst_eta: etas[worst],
            avg_rate: mean(&rates),
            worst_rate: min(&rates),
            actor_loss: Some(a_loss / n),
            critic_loss: Some(c_loss / n),
            accepted: accepted.len(),
            mean_ratio: Some(ratio_sum / n),
            max_ratio: Some(ratio_max),
        });
        if observer.wants(u) {
            observer.observe(
                u,
                &TrainedModel::Ppo {
                    actor: agent.actor.clone(),
                    critic: agent.critic.clone(),
                },
            )?;
        }
    }
    Ok(Trained {
        model: TrainedModel::Ppo {
            actor: agent.actor,
            critic: agent.critic,
        },
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_locations, Geometry};
    use proptest::prelude::*;

    fn grid(l: usize, j: usize) -> ParameterGrid {
        let locs = generate_locations(
            &Geometry {
                locations_per_relay: l,
                ..Geometry::default()
            },
            3,
        )
        .unwrap();
        let thr: Vec<f64> = (0..j).map(|i| 0.5 + i as f64).collect();
        ParameterGrid::new(locs, vec![thr; 3]).unwrap()
    }

    #[test]
    fn distance_examples() {
        let g = grid(5, 2);
        let a = g.param(0).unwrap();
        let z = g.param(g.len() - 1).unwrap();
        assert_eq!(tv_distance_params(&a, &a, &g).unwrap(), 0.0);
        assert!((tv_distance_params(&a, &z, &g).unwrap() - 1.0).abs() < 1e-12);
        // One relay moves one of four location steps: 0.25 / 6 features.
        let b = g.param(g.id_of(&[1, 0, 0], &[0, 0, 0]).unwrap()).unwrap();
        assert!((tv_distance_params(&a, &b, &g).unwrap() - 0.25 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn distance_rejects_foreign_parameter() {
        let g = grid(5, 1);
        let other = grid(3, 1);
        let p = other.param(other.len() - 1).unwrap();
        assert!(tv_distance_params(&p, &g.param(0).unwrap(), &g).is_err());
    }

    #[test]
    fn filter_examples() {
        assert_eq!(robust_filter(&[5.0, 4.0], &[0.5, 0.0], 10.0, 4.0).unwrap(), vec![1]);
        assert_eq!(robust_filter(&[5.0, 4.0, 7.0], &[0.3, 0.0, 1.0], 0.0, 4.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(
            robust_filter(&[2.0, 2.0, 2.0], &[0.0, 0.4, 0.0], 1.0, 2.0).unwrap(),
            vec![0, 2]
        );
        assert!(robust_filter(&[], &[], 1.0, 0.0).is_err());
        assert!(robust_filter(&[1.0], &[0.0, 1.0], 1.0, 1.0).is_err());
        assert!(robust_filter(&[1.0], &[0.0], -1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_bounded(a in 0usize..1000, b in 0usize..1000) {
            let g = grid(5, 2);
            let (pa, pb) = (g.param(a % g.len()).unwrap(), g.param(b % g.len()).unwrap());
            let d = tv_distance_params(&pa, &pb, &g).unwrap();
            prop_assert_eq!(d, tv_distance_params(&pb, &pa, &g).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn filter_is_monotone_in_zeta(
            etas in prop::collection::vec(0.0f64..10.0, 1..10),
            seed in 0u64..1000,
            z1 in 0.0f64..20.0,
            z2 in 0.0f64..20.0,
        ) {
            let w = etas.iter().cloned().fold(f64::INFINITY, f64::min);
            let d: Vec<f64> = etas.iter().enumerate()
                .map(|(i, &e)| if e == w { 0.0 } else { ((seed + i as u64 * 37) % 11) as f64 / 10.0 })
                .collect();
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            let small = robust_filter(&etas, &d, lo, w).unwrap();
            let large = robust_filter(&etas, &d, hi, w).unwrap();
            prop_assert!(large.iter().all(|m| small.contains(m)));
            prop_assert_eq!(robust_filter(&etas, &d, 0.0, w).unwrap().len(), etas.len());
            let wi = etas.iter().position(|&e| e == w).unwrap();
            prop_assert!(large.contains(&wi));
        }
    }
}
