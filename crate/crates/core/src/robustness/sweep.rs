//! Randomized sweeps of the verifiers with per-instance random streams.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use super::{dirichlet_row, lemma1_check, lemma2_check, theorem1_verify, DiscreteDist, MarkovChain, TabularMdp};
use crate::error::{Error, Result};
use crate::rng::{self, tag, StreamRng};

const LEMMA1: u64 = 1;
const LEMMA2: u64 = 2;
const THEOREM1: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub instance: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for the lemmas, `lhs - rhs` for the bound; the worst
    /// time step for the marginal lemma.
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub check: &'static str,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn instances(&self) -> usize {
        self.rows.len()
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds).count()
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn max_lhs(&self) -> f64 {
        self.rows.iter().map(|r| r.lhs).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_rhs(&self) -> f64 {
        self.rows.iter().map(|r| r.rhs).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_text(&self) -> String {
        format!(
            "check: {}\ninstances: {}\nviolations: {}\nmin_slack: {:e}\nmax_lhs: {}\nmax_rhs: {}\n",
            self.check,
            self.instances(),
            self.violations(),
            self.min_slack(),
            self.max_lhs(),
            self.max_rhs()
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("instance,lhs,rhs,slack,holds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.instance, r.lhs, r.rhs, r.slack, r.holds);
        }
        s
    }
}

fn table<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows).map(|_| dirichlet_row(cols, rng)).collect()
}

/// Convex mixture `(1 - w) a + w b`, row by row.
fn mix(a: &[Vec<f64>], b: &[Vec<f64>], w: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (1.0 - w) * p + w * q).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Lemma1Instance {
    pub p1_x: DiscreteDist,
    pub p2_x: DiscreteDist,
    pub p1_y_given_x: Vec<Vec<f64>>,
    pub p2_y_given_x: Vec<Vec<f64>>,
}

/// Supports of size 1 to 6; a third of the instances share marginals and a
/// third share conditionals.
pub fn random_lemma1_instance(rng: &mut StreamRng) -> Lemma1Instance {
    let nx = rng.random_range(1..=6);
    let ny = rng.random_range(1..=6);
    let p1_x = DiscreteDist::random(nx, rng);
    let c1 = table(nx, ny, rng);
    let kind = rng.random_range(0..3);
    let p2_x = if kind == 0 { p1_x.clone() } else { DiscreteDist::random(nx, rng) };
    let c2 = if kind == 1 { c1.clone() } else { table(nx, ny, rng) };
    Lemma1Instance {
        p1_x,
        p2_x,
        p1_y_given_x: c1,
        p2_y_given_x: c2,
    }
}

/// Chains on 1 to 5 states with a shared initial distribution; the second
/// chain's rows are a random mixture towards fresh rows.
pub fn random_chain_pair(rng: &mut StreamRng) -> (MarkovChain, MarkovChain) {
    let n = rng.random_range(1..=5);
    let initial = dirichlet_row(n, rng);
    let t1 = table(n, n, rng);
    let w: f64 = rng.random();
    let t2 = mix(&t1, &table(n, n, rng), w);
    (
        MarkovChain {
            initial: initial.clone(),
            transition: t1,
        },
        MarkovChain { initial, transition: t2 },
    )
}

#[derive(Debug, Clone)]
pub struct Theorem1Instance {
    pub mdp: TabularMdp,
    pub weights: Vec<f64>,
    pub policy: Vec<Vec<f64>>,
    pub new_policy: Vec<Vec<f64>>,
}

/// Up to 4 states, 3 actions and 3 parameters, `gamma` in {0.5, 0.9},
/// horizon 60, rewards uniform in `[0, 1]`.
pub fn random_theorem1_instance(rng: &mut StreamRng) -> Theorem1Instance {
    let states = rng.random_range(1..=4);
    let actions = rng.random_range(1..=3);
    let params = rng.random_range(1..=3);
    let gamma = if rng.random::<bool>() { 0.5 } else { 0.9 };
    let base = table(states, states, rng);
    let transitions = (0..params)
        .map(|_| {
            let w: f64 = rng.random();
            mix(&base, &table(states, states, rng), w)
        })
        .collect();
    let reward = (0..states)
        .map(|_| (0..actions).map(|_| rng.random_range(0.0..=1.0)).collect())
        .collect();
    let policy = table(states, actions, rng);
    let w: f64 = rng.random();
    let new_policy = mix(&policy, &table(states, actions, rng), w);
    Theorem1Instance {
        mdp: TabularMdp {
            states,
            actions,
            initial: dirichlet_row(states, rng),
            transitions,
            reward,
            r_max: 1.0,
            gamma,
            horizon: 60,
        },
        weights: dirichlet_row(params, rng),
        policy,
        new_policy,
    }
}

fn sweep<F>(count: usize, seed: u64, kind: u64, check: &'static str, f: F) -> Result<SweepReport>
where
    F: Fn(usize, &mut StreamRng) -> Result<SweepRow> + Sync,
{
    if count == 0 {
        return Err(Error::invalid("sweep count must be >= 1"));
    }
    let rows = (0..count)
        .into_par_iter()
        .map(|i| f(i, &mut rng::stream(seed, &[tag::SWEEP, kind, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { check, rows })
}

pub fn sweep_lemma1(count: usize, seed: u64) -> Result<SweepReport> {
    sweep(count, seed, LEMMA1, "lemma1", |i, rng| {
        let inst = random_lemma1_instance(rng);
        let r = lemma1_check(&inst.p1_x, &inst.p2_x, &inst.p1_y_given_x, &inst.p2_y_given_x)?;
        Ok(SweepRow {
            instance: i,
            lhs: r.lhs,
            rhs: r.rhs,
            slack: r.rhs - r.lhs,
            holds: r.holds,
        })
    })
}

pub fn sweep_lemma2(count: usize, seed: u64, horizon: usize) -> Result<SweepReport> {
    sweep(count, seed, LEMMA2, "lemma2", |i, rng| {
        let (a, b) = random_chain_pair(rng);
        let r = lemma2_check(&a, &b, horizon)?;
        let slack = r.lhs.iter().zip(&r.rhs).map(|(l, u)| u - l).fold(f64::INFINITY, f64::min);
        Ok(SweepRow {
            instance: i,
            lhs: r.lhs.iter().copied().fold(0.0, f64::max),
            rhs: r.rhs.iter().copied().fold(0.0, f64::max),
            slack,
            holds: r.holds,
        })
    })
}

pub fn sweep_theorem1(count: usize, seed: u64) -> Result<SweepReport> {
    sweep(count, seed, THEOREM1, "theorem1", |i, rng| {
        let inst = random_theorem1_instance(rng);
        let r = theorem1_verify(&inst.mdp, &inst.weights, &inst.policy, &inst.new_policy)?;
        Ok(SweepRow {
            instance: i,
            lhs: r.lhs,
            rhs: r.rhs,
            slack: r.slack,
            holds: r.holds,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweeps_hold_and_are_deterministic() {
        let a = sweep_lemma1(200, 5).unwrap();
        assert_eq!(a.violations(), 0);
        assert_eq!(a, sweep_lemma1(200, 5).unwrap());
        assert_eq!(sweep_lemma2(100, 5, 10).unwrap().violations(), 0);
        assert_eq!(sweep_theorem1(20, 5).unwrap().violations(), 0);
        assert!(sweep_lemma1(0, 1).is_err());
    }

    #[test]
    fn report_formats() {
        let r = sweep_lemma1(3, 1).unwrap();
        assert!(r.to_text().contains("instances: 3"));
        assert_eq!(r.to_csv().lines().count(), 4);
    }
}
