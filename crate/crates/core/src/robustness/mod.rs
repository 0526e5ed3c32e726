//! Exact checks of the total-variation lemmas and the worst-case
//! performance lower bound on small enumerable problems.

mod lemma;
mod sweep;
mod theorem;

pub use lemma::{lemma1_check, lemma2_check, Lemma1Report, Lemma2Report, MarkovChain};
pub use sweep::{
    random_chain_pair, random_lemma1_instance, random_theorem1_instance, sweep_lemma1, sweep_lemma2, sweep_theorem1,
    Lemma1Instance, SweepReport, SweepRow, Theorem1Instance,
};
pub use theorem::{theorem1_verify, BoundReport, TabularMdp};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-12;

/// Probability vector over `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_row(&probs, "distribution")?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Flat Dirichlet draw: normalized unit exponentials.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            probs: dirichlet_row(n, rng),
        }
    }
}

pub(crate) fn dirichlet_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

pub(crate) fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return Err(Error::invalid(format!("{what} has an empty support")));
    }
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE * row.len() as f64 {
        return Err(Error::invalid(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Checks a row-stochastic `rows x cols` table.
pub(crate) fn check_table(table: &[Vec<f64>], rows: usize, cols: usize, what: &str) -> Result<()> {
    if table.len() != rows {
        return Err(Error::Shape {
            context: "stochastic table rows",
            expected: rows,
            got: table.len(),
        });
    }
    for (i, row) in table.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Shape {
                context: "stochastic table columns",
                expected: cols,
                got: row.len(),
            });
        }
        check_row(row, &format!("{what} row {i}"))?;
    }
    Ok(())
}

/// Half the L1 distance between two vectors on the same support.
pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            context: "total variation support",
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn tv_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    tv_slices(&p.probs, &q.probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> DiscreteDist {
        DiscreteDist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(tv_distance(&d(&[0.2, 0.8]), &d(&[0.2, 0.8])).unwrap(), 0.0);
        assert_eq!(tv_distance(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tv_distance(&d(&[0.5, 0.5]), &d(&[0.75, 0.25])).unwrap() - 0.25).abs() < 1e-15);
        assert!(tv_distance(&d(&[1.0]), &d(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn malformed_distributions_are_rejected() {
        assert!(DiscreteDist::new(vec![]).is_err());
        assert!(DiscreteDist::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDist::new(vec![f64::NAN, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(n in 1usize..8, seed in any::<u64>()) {
            let mut r = rng::stream(seed, &[]);
            let (p, q, s) = (DiscreteDist::random(n, &mut r), DiscreteDist::random(n, &mut r), DiscreteDist::random(n, &mut r));
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
            prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
            prop_assert!(pq <= tv_distance(&p, &s).unwrap() + tv_distance(&s, &q).unwrap() + 1e-12);
        }
    }
}
