//! Two-state, two-relay contextual bandit with a known optimal action,
//! used as an oracle for the learners.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, EnvFamily, Environment};
use crate::rng::StreamRng;

/// A single-parameter family: the state is redrawn uniformly each slot and
/// the reward is 1 iff the chosen relay equals `optimal[state]`.
#[derive(Debug, Clone, Copy)]
pub struct BanditFamily {
    /// 1-based optimal relay per state.
    pub optimal: [usize; 2],
}

impl Default for BanditFamily {
    fn default() -> Self {
        Self { optimal: [1, 2] }
    }
}

#[derive(Debug, Clone)]
pub struct BanditEnv {
    optimal: [usize; 2],
    state: usize,
}

impl BanditEnv {
    pub fn state(&self) -> usize {
        self.state
    }

    fn observe(&self) -> Vec<f64> {
        let mut o = vec![0.0; 2];
        o[self.state] = 1.0;
        o
    }
}

impl Environment for BanditEnv {
    fn observation_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        self.state = rng.random_range(0..2);
        self.observe()
    }

    fn step(&mut self, action: &Action, rng: &mut StreamRng) -> Result<(u8, Vec<f64>)> {
        BANDIT_SPACE.validate(action)?;
        let reward = (action.relay == self.optimal[self.state]) as u8;
        self.state = rng.random_range(0..2);
        Ok((reward, self.observe()))
    }
}

const BANDIT_SPACE: ActionSpace = ActionSpace {
    relays: 2,
    max_power: 1.0,
};

impl EnvFamily for BanditFamily {
    type Env = BanditEnv;

    fn action_space(&self) -> ActionSpace {
        BANDIT_SPACE
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn parameter_count(&self) -> usize {
        1
    }

    fn instantiate(&self, id: usize) -> Result<BanditEnv> {
        if id != 0 {
            return Err(Error::invalid(format!("bandit has a single parameter, got id {id}")));
        }
        if self.optimal.iter().any(|&k| !(1..=2).contains(&k)) {
            return Err(Error::invalid("optimal relays must lie in 1..=2"));
        }
        Ok(BanditEnv {
            optimal: self.optimal,
            state: 0,
        })
    }

    fn parameter_distance(&self, a: usize, b: usize) -> Result<f64> {
        if a != 0 || b != 0 {
            return Err(Error::invalid("bandit has a single parameter"));
        }
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn reward_follows_optimal_relay() {
        let fam = BanditFamily::default();
        let mut env = fam.instantiate(0).unwrap();
        let mut r = rng::stream(3, &[]);
        let mut obs = env.reset(&mut r);
        for _ in 0..100 {
            let s = obs.iter().position(|&x| x == 1.0).unwrap();
            let good = Action { relay: fam.optimal[s], source_power: 0.5 };
            let (rew, next) = env.step(&good, &mut r).unwrap();
            assert_eq!(rew, 1);
            obs = next;
        }
        assert!(fam.instantiate(1).is_err());
        assert!(env.step(&Action { relay: 3, source_power: 0.0 }, &mut r).is_err());
    }
}
