use super::{check_row, check_table, tv_slices, DiscreteDist};
use crate::error::{Error, Result};

const HOLD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    /// TV distance of the two joints.
    pub lhs: f64,
    /// Expected conditional TV under the first marginal.
    pub conditional_term: f64,
    /// TV distance of the marginals.
    pub marginal_term: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Joint TV versus expected conditional TV plus marginal TV, for
/// `p_i(x, y) = p_i(x) p_i(y | x)`.
pub fn lemma1_check(
    p1_x: &DiscreteDist,
    p2_x: &DiscreteDist,
    p1_y_given_x: &[Vec<f64>],
    p2_y_given_x: &[Vec<f64>],
) -> Result<Lemma1Report> {
    let nx = p1_x.len();
    if p2_x.len() != nx {
        return Err(Error::Shape {
            context: "lemma 1 marginals",
            expected: nx,
            got: p2_x.len(),
        });
    }
    let ny = p1_y_given_x.first().map_or(0, Vec::len);
    check_table(p1_y_given_x, nx, ny, "first conditional")?;
    check_table(p2_y_given_x, nx, ny, "second conditional")?;

    let (a, b) = (p1_x.probs(), p2_x.probs());
    let mut lhs = 0.0;
    let mut conditional_term = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            lhs += (a[x] * p1_y_given_x[x][y] - b[x] * p2_y_given_x[x][y]).abs();
        }
        conditional_term += a[x] * tv_slices(&p1_y_given_x[x], &p2_y_given_x[x])?;
    }
    lhs *= 0.5;
    let marginal_term = tv_slices(a, b)?;
    let rhs = conditional_term + marginal_term;
    Ok(Lemma1Report {
        lhs,
        conditional_term,
        marginal_term,
        rhs,
        holds: lhs <= rhs + HOLD_TOLERANCE,
    })
}

/// A finite Markov chain with a row-stochastic transition table.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        check_row(&initial, "initial distribution")?;
        check_table(&transition, initial.len(), initial.len(), "transition")?;
        Ok(Self { initial, transition })
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    /// One step of forward propagation `d' = d T`.
    pub fn propagate(&self, d: &[f64]) -> Vec<f64> {
        let n = self.states();
        let mut next = vec![0.0; n];
        for (s, &p) in d.iter().enumerate() {
            for (j, &q) in self.transition[s].iter().enumerate() {
                next[j] += p * q;
            }
        }
        next
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma2Report {
    /// TV of the time-`t` marginals, `t = 1..=horizon`.
    pub lhs: Vec<f64>,
    /// `(t - 1) * max_{2 <= i <= t} E_{s ~ d1_{i-1}} TV(T1[s], T2[s])`.
    pub rhs: Vec<f64>,
    pub holds: bool,
}

/// Marginal TV growth bound for two chains sharing an initial distribution.
pub fn lemma2_check(chain1: &MarkovChain, chain2: &MarkovChain, horizon: usize) -> Result<Lemma2Report> {
    if chain1.states() != chain2.states() {
        return Err(Error::Shape {
            context: "lemma 2 chains",
            expected: chain1.states(),
            got: chain2.states(),
        });
    }
    if horizon == 0 {
        return Err(Error::invalid("lemma 2 horizon must be >= 1"));
    }
    if tv_slices(&chain1.initial, &chain2.initial)? > HOLD_TOLERANCE {
        return Err(Error::invalid(
            "precondition violated: the two chains must share the same initial state distribution",
        ));
    }
    let row_tv: Vec<f64> = (0..chain1.states())
        .map(|s| tv_slices(&chain1.transition[s], &chain2.transition[s]))
        .collect::<Result<_>>()?;

    let (mut d1, mut d2) = (chain1.initial.clone(), chain2.initial.clone());
    let mut lhs = Vec::with_capacity(horizon);
    let mut rhs = Vec::with_capacity(horizon);
    let mut worst = 0.0_f64;
    for t in 1..=horizon {
        if t > 1 {
            // Expectation over the first chain's marginal at t - 1.
            worst = worst.max(d1.iter().zip(&row_tv).map(|(p, e)| p * e).sum());
            d1 = chain1.propagate(&d1);
            d2 = chain2.propagate(&d2);
        }
        lhs.push(tv_slices(&d1, &d2)?);
        rhs.push((t - 1) as f64 * worst);
    }
    let holds = lhs.iter().zip(&rhs).all(|(l, r)| *l <= r + HOLD_TOLERANCE);
    Ok(Lemma2Report { lhs, rhs, holds })
}
