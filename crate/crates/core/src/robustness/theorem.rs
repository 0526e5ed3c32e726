use super::{check_row, check_table, tv_slices};
use crate::error::{Error, Result};

/// Finite MDP family: per-parameter state transitions that do not depend on
/// the action, one reward table shared by every parameter, and one initial
/// distribution at `t = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    pub initial: Vec<f64>,
    /// `transitions[p][s][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`, bounded in absolute value by `r_max`.
    pub reward: Vec<Vec<f64>>,
    pub r_max: f64,
    pub gamma: f64,
    /// Number of discounted slots `t = 1..=horizon`.
    pub horizon: usize,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 || self.transitions.is_empty() || self.horizon == 0 {
            return Err(Error::invalid("enumerable MDP needs states, actions, parameters and horizon >= 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.r_max >= 0.0 && self.r_max.is_finite()) {
            return Err(Error::invalid("r_max must be finite and >= 0"));
        }
        check_row(&self.initial, "initial distribution")?;
        if self.initial.len() != self.states {
            return Err(Error::Shape {
                context: "initial distribution",
                expected: self.states,
                got: self.initial.len(),
            });
        }
        for (p, t) in self.transitions.iter().enumerate() {
            check_table(t, self.states, self.states, &format!("parameter {p} transition"))?;
        }
        if self.reward.len() != self.states || self.reward.iter().any(|r| r.len() != self.actions) {
            return Err(Error::invalid("reward table must be states x actions"));
        }
        if self
            .reward
            .iter()
            .flatten()
            .any(|r| !(r.is_finite() && r.abs() <= self.r_max))
        {
            return Err(Error::invalid("rewards must be finite and bounded by r_max"));
        }
        Ok(())
    }

    pub fn parameters(&self) -> usize {
        self.transitions.len()
    }

    /// State marginals `d_t` for `t = 1..=horizon` under parameter `p`.
    pub fn marginals(&self, p: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon);
        let mut d = self.initial.clone();
        for t in 0..self.horizon {
            if t > 0 {
                let mut next = vec![0.0; self.states];
                for (s, &w) in d.iter().enumerate() {
                    for (j, &q) in self.transitions[p][s].iter().enumerate() {
                        next[j] += w * q;
                    }
                }
                d = next;
            }
            out.push(d.clone());
        }
        out
    }

    /// Truncated return `sum_{t=1}^{horizon} gamma^t E[r(s_t, a_t)]`.
    pub fn eta(&self, p: usize, policy: &[Vec<f64>]) -> f64 {
        let expected: Vec<f64> = (0..self.states)
            .map(|s| policy[s].iter().zip(&self.reward[s]).map(|(a, r)| a * r).sum())
            .collect();
        let mut discount = 1.0;
        let mut total = 0.0;
        for d in self.marginals(p) {
            discount *= self.gamma;
            total += discount * d.iter().zip(&expected).map(|(w, r)| w * r).sum::<f64>();
        }
        total
    }

    /// Bound on the discounted tail beyond the horizon.
    pub fn truncation_tolerance(&self) -> f64 {
        self.r_max * self.gamma.powi(self.horizon as i32 + 1) / (1.0 - self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Index of the parameter with the lowest return under the new policy.
    pub worst: usize,
    /// `eta(new | p_w)`.
    pub lhs: f64,
    /// `E_P[eta(new | p)]`.
    pub expected_eta: f64,
    pub rhs: f64,
    pub slack: f64,
    pub truncation_tolerance: f64,
    /// `max_t E_{s_t ~ p_w} TV(new(.|s), old(.|s))`.
    pub eps_policy: f64,
    /// `max_t E_{s_{t-1} ~ p_w} TV(p(.|s, p_w), p(.|s, p))` per parameter.
    pub eps_param: Vec<f64>,
    pub eps_param_expected: f64,
    /// `|eta(new | p_w) - eta(old | p_w)|`.
    pub policy_gap: f64,
    /// `2 r_max sum_t gamma^t eps_policy`.
    pub policy_gap_bound: f64,
    pub holds: bool,
}

/// Evaluates both sides of the worst-case lower bound exactly by forward
/// propagation of the state marginals.
pub fn theorem1_verify(
    mdp: &TabularMdp,
    weights: &[f64],
    policy: &[Vec<f64>],
    new_policy: &[Vec<f64>],
) -> Result<BoundReport> {
    mdp.validate()?;
    check_row(weights, "parameter distribution")?;
    if weights.len() != mdp.parameters() {
        return Err(Error::Shape {
            context: "parameter distribution",
            expected: mdp.parameters(),
            got: weights.len(),
        });
    }
    check_table(policy, mdp.states, mdp.actions, "old policy")?;
    check_table(new_policy, mdp.states, mdp.actions, "new policy")?;

    let etas: Vec<f64> = (0..mdp.parameters()).map(|p| mdp.eta(p, new_policy)).collect();
    let worst = etas
        .iter()
        .enumerate()
        .fold(0, |w, (p, &e)| if e < etas[w] { p } else { w });
    let expected_eta: f64 = weights.iter().zip(&etas).map(|(w, e)| w * e).sum();

    // Transitions ignore the action, so these marginals are the same under
    // either policy.
    let d_w = mdp.marginals(worst);
    let policy_tv: Vec<f64> = (0..mdp.states)
        .map(|s| tv_slices(&new_policy[s], &policy[s]))
        .collect::<Result<_>>()?;
    let eps_policy = d_w
        .iter()
        .map(|d| d.iter().zip(&policy_tv).map(|(w, e)| w * e).sum::<f64>())
        .fold(0.0, f64::max);

    let mut eps_param = Vec::with_capacity(mdp.parameters());
    for p in 0..mdp.parameters() {
        let row_tv: Vec<f64> = (0..mdp.states)
            .map(|s| tv_slices(&mdp.transitions[worst][s], &mdp.transitions[p][s]))
            .collect::<Result<_>>()?;
        // s_{t-1} for t = 2..=horizon.
        let eps = d_w[..mdp.horizon - 1]
            .iter()
            .map(|d| d.iter().zip(&row_tv).map(|(w, e)| w * e).sum::<f64>())
            .fold(0.0, f64::max);
        eps_param.push(eps);
    }
    let eps_param_expected: f64 = weights.iter().zip(&eps_param).map(|(w, e)| w * e).sum();

    let g = mdp.gamma;
    let r = mdp.r_max;
    let rhs = expected_eta
        - 4.0 * r * g / (1.0 - g) * eps_policy
        - 2.0 * r * g * g / ((1.0 - g) * (1.0 - g)) * eps_param_expected;
    let lhs = etas[worst];
    let slack = lhs - rhs;
    let truncation_tolerance = mdp.truncation_tolerance();

    let discount_sum: f64 = (1..=mdp.horizon).map(|t| g.powi(t as i32)).sum();
    let policy_gap = (lhs - mdp.eta(worst, policy)).abs();
    let policy_gap_bound = 2.0 * r * discount_sum * eps_policy;

    Ok(BoundReport {
        worst,
        lhs,
        expected_eta,
        rhs,
        slack,
        truncation_tolerance,
        eps_policy,
        eps_param,
        eps_param_expected,
        policy_gap,
        policy_gap_bound,
        holds: slack >= -(truncation_tolerance + 1e-9) && policy_gap <= policy_gap_bound + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mdp(gamma: f64, transitions: Vec<Vec<Vec<f64>>>) -> TabularMdp {
        TabularMdp {
            states: 2,
            actions: 2,
            initial: vec![0.5, 0.5],
            transitions,
            reward: vec![vec![1.0, 0.0], vec![0.2, 0.6]],
            r_max: 1.0,
            gamma,
            horizon: 60,
        }
    }

    fn chain() -> Vec<Vec<f64>> {
        vec![vec![0.7, 0.3], vec![0.4, 0.6]]
    }

    #[test]
    fn eta_matches_closed_form_for_absorbing_state() {
        // Always in state 0, reward 1 under the first action.
        let m = TabularMdp {
            initial: vec![1.0, 0.0],
            ..mdp(0.5, vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]])
        };
        let pi = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let expected: f64 = (1..=60).map(|t| 0.5f64.powi(t)).sum();
        assert!((m.eta(0, &pi) - expected).abs() < 1e-15);
    }

    #[test]
    fn same_policy_single_parameter_has_zero_slack() {
        let m = mdp(0.9, vec![chain()]);
        let pi = vec![vec![0.3, 0.7], vec![0.5, 0.5]];
        let r = theorem1_verify(&m, &[1.0], &pi, &pi).unwrap();
        assert!(r.slack.abs() < 1e-9);
        assert_eq!(r.eps_policy, 0.0);
        assert_eq!(r.eps_param, vec![0.0]);
        assert!(r.holds);
    }

    #[test]
    fn zero_discount_is_degenerate() {
        let m = mdp(0.0, vec![chain(), vec![vec![0.1, 0.9], vec![0.9, 0.1]]]);
        let pi = vec![vec![0.3, 0.7], vec![0.5, 0.5]];
        let r = theorem1_verify(&m, &[0.5, 0.5], &pi, &pi).unwrap();
        assert_eq!((r.lhs, r.rhs, r.slack), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perturbed_instance_satisfies_bound() {
        let m = mdp(0.9, vec![chain(), vec![vec![0.2, 0.8], vec![0.9, 0.1]]]);
        let pi = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let new = vec![vec![0.8, 0.2], vec![0.1, 0.9]];
        let r = theorem1_verify(&m, &[0.3, 0.7], &pi, &new).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.eps_policy > 0.0 && r.eps_param_expected > 0.0);
        assert!(r.lhs <= r.expected_eta + 1e-12);
    }

    #[test]
    fn invalid_inputs_error() {
        let m = mdp(0.9, vec![chain()]);
        let pi = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!(theorem1_verify(&m, &[0.5, 0.5], &pi, &pi).is_err());
        assert!(theorem1_verify(&m, &[1.0], &pi, &[vec![1.0, 0.0]]).is_err());
        let bad = TabularMdp {
            reward: vec![vec![2.0, 0.0], vec![0.0, 0.0]],
            ..m.clone()
        };
        assert!(theorem1_verify(&bad, &[1.0], &pi, &pi).is_err());
        let bad_gamma = TabularMdp { gamma: 1.0, ..m };
        assert!(bad_gamma.validate().is_err());
    }
}
