use rand::Rng;

use super::Policy;
use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace};
use crate::rng::StreamRng;

/// Uniform relay on `1..=K` and uniform source power on `[0, P_max]`.
pub fn random_policy<R: Rng + ?Sized>(relays: usize, max_power: f64, rng: &mut R) -> Result<Action> {
    if relays == 0 || !(max_power > 0.0 && max_power.is_finite()) {
        return Err(Error::invalid(format!(
            "random policy needs K >= 1 and P_max > 0, got K = {relays}, P_max = {max_power}"
        )));
    }
    Ok(Action {
        relay: rng.random_range(1..=relays),
        source_power: rng.random_range(0.0..=max_power),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    space: ActionSpace,
}

impl RandomPolicy {
    pub fn new(space: ActionSpace) -> Self {
        Self { space }
    }
}

impl Policy for RandomPolicy {
    fn act(&self, _observation: &[f64], rng: &mut StreamRng) -> Result<Action> {
        random_policy(self.space.relays, self.space.max_power, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn relay_frequencies_are_uniform() {
        let mut r = rng::stream(11, &[]);
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        let mut power = 0.0;
        for _ in 0..n {
            let a = random_policy(4, 0.1, &mut r).unwrap();
            counts[a.relay - 1] += 1;
            power += a.source_power;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01 * 0.25, "{counts:?}");
        }
        assert!((power / n as f64 - 0.05).abs() < 0.01 * 0.05);
    }

    #[test]
    fn single_relay_and_errors() {
        let mut r = rng::stream(1, &[]);
        for _ in 0..100 {
            assert_eq!(random_policy(1, 1.0, &mut r).unwrap().relay, 1);
        }
        assert!(random_policy(0, 1.0, &mut r).is_err());
        assert!(random_policy(2, 0.0, &mut r).is_err());
    }
}
