//! Training orchestration and frozen-model evaluation over the full grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::algo::{
    train_ddpg, train_dqn, train_ppo, train_robust, EpisodeMetrics, Method, Policy, RunSettings, TrainObserver,
    Trained, TrainedModel,
};
use crate::error::{Error, Result};
use crate::mdp::{EnvFamily, Environment};
use crate::rng::{self, tag};
use crate::scenario::Experiment;

/// MAX, MIN, MEAN and STDEV of a series; STDEV is the population standard
/// deviation computed with the two-pass formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub stdev: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Stats> {
        if values.is_empty() {
            return Err(Error::invalid("statistics of an empty series"));
        }
        let n = values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if max == min {
            // Summation rounding would otherwise leave a tiny spread.
            return Ok(Stats { max, min, mean: min, stdev: 0.0 });
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Stats {
            max,
            min,
            mean,
            stdev: var.sqrt(),
        })
    }

    fn as_array(&self) -> [f64; 4] {
        [self.max, self.min, self.mean, self.stdev]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEval {
    /// Mean over test parameters of the slot success rate.
    pub average: f64,
    /// Minimum over test parameters of the slot success rate.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeEval>,
    pub average: Stats,
    pub worst: Stats,
}

impl EvalSummary {
    fn from_episodes(episodes: Vec<EpisodeEval>) -> Result<Self> {
        let avg: Vec<f64> = episodes.iter().map(|e| e.average).collect();
        let worst: Vec<f64> = episodes.iter().map(|e| e.worst).collect();
        Ok(Self {
            average: Stats::of(&avg)?,
            worst: Stats::of(&worst)?,
            episodes,
        })
    }
}

/// Success rate of one `horizon`-slot rollout of `policy` on parameter `id`.
pub fn rollout_rate<F: EnvFamily>(
    family: &F,
    policy: &dyn Policy,
    id: usize,
    horizon: usize,
    seed: u64,
    episode: usize,
) -> Result<f64> {
    let mut env = family.instantiate(id)?;
    let mut rng = rng::stream(seed, &[tag::EVALUATION, episode as u64, id as u64]);
    let mut obs = env.reset(&mut rng);
    let mut ok = 0usize;
    for _ in 0..horizon {
        let action = policy.act(&obs, &mut rng)?;
        let (r, next) = env.step(&action, &mut rng)?;
        ok += r as usize;
        obs = next;
    }
    Ok(ok as f64 / horizon as f64)
}

/// Per-episode, per-parameter success rates of a frozen policy.
pub fn evaluate_rates<F: EnvFamily>(
    family: &F,
    policy: &dyn Policy,
    test_ids: &[usize],
    episodes: usize,
    horizon: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    if test_ids.is_empty() {
        return Err(Error::invalid("evaluation needs at least one test parameter"));
    }
    if episodes == 0 || horizon == 0 {
        return Err(Error::invalid("evaluation episodes and horizon must be >= 1"));
    }
    (0..episodes)
        .map(|e| {
            crate::algo::run_parallel(test_ids, workers, |_, &id| {
                rollout_rate(family, policy, id, horizon, seed, e)
            })
        })
        .collect()
}

/// Rolls out `policy` on every test parameter in every episode; the
/// episode's average and worst case are the mean and minimum over
/// parameters.
pub fn evaluate_model<F: EnvFamily>(
    family: &F,
    policy: &dyn Policy,
    test_ids: &[usize],
    episodes: usize,
    horizon: usize,
    seed: u64,
    workers: usize,
) -> Result<EvalSummary> {
    let rates = evaluate_rates(family, policy, test_ids, episodes, horizon, seed, workers)?;
    EvalSummary::from_episodes(
        rates
            .iter()
            .map(|r| EpisodeEval {
                average: r.iter().sum::<f64>() / r.len() as f64,
                worst: r.iter().copied().fold(f64::INFINITY, f64::min),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub avg_rate: f64,
    pub worst_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub method: Method,
    pub seed: u64,
    pub episodes: Vec<EpisodeMetrics>,
    pub curve: Vec<CurvePoint>,
    /// Frozen-model evaluation on the test parameters.
    pub evaluation: EvalSummary,
}

pub fn metrics_csv(episodes: &[EpisodeMetrics]) -> String {
    let mut s = String::from(EpisodeMetrics::CSV_HEADER);
    s.push('\n');
    for e in episodes {
        s.push_str(&e.csv_row());
        s.push('\n');
    }
    s
}

pub const CURVES_HEADER: &str = "episode,avg_rate,worst_rate,method,seed";

pub fn curves_csv(reports: &[&TrainReport]) -> String {
    let mut s = format!("{CURVES_HEADER}\n");
    for r in reports {
        for p in &r.curve {
            let _ = writeln!(s, "{},{},{},{},{}", p.episode, p.avg_rate, p.worst_rate, r.method, r.seed);
        }
    }
    s
}

struct CurveObserver<'a> {
    experiment: &'a Experiment,
    interval: usize,
    last: usize,
    seed: u64,
    workers: usize,
    points: Vec<CurvePoint>,
}

impl CurveObserver<'_> {
    fn record(&mut self, episode: usize, model: &TrainedModel) -> Result<()> {
        let e = self.experiment;
        let policy = model.policy(e.family.action_space());
        let s = evaluate_model(
            &e.family,
            policy.as_ref(),
            &e.train_ids,
            e.scenario.protocol.curve_episodes,
            e.scenario.training.horizon,
            rng::derive_seed(self.seed, &[tag::CURVE, episode as u64]),
            self.workers,
        )?;
        self.points.push(CurvePoint {
            episode,
            avg_rate: s.average.mean,
            worst_rate: s.worst.mean,
        });
        Ok(())
    }
}

impl TrainObserver for CurveObserver<'_> {
    fn wants(&self, episode: usize) -> bool {
        (episode + 1) % self.interval == 0 || episode == self.last
    }

    fn observe(&mut self, episode: usize, model: &TrainedModel) -> Result<()> {
        self.record(episode, model)
    }
}

/// Trains `method` with `seed`, records the learning curve and evaluates the
/// frozen result on the test parameters.
pub fn run_method(experiment: &Experiment, method: Method, seed: u64, workers: usize) -> Result<(Trained, TrainReport)> {
    let sc = &experiment.scenario;
    let episodes = sc.training.episodes;
    let mut observer = CurveObserver {
        experiment,
        interval: (episodes / sc.protocol.training_evaluations.max(1)).max(1),
        last: episodes - 1,
        seed,
        workers,
        points: Vec::new(),
    };
    let run = RunSettings { seed, workers };
    let dist = experiment.train_distribution()?;
    let family = &experiment.family;
    let trained = match method {
        Method::Robust => train_robust(family, &dist, &sc.training, &sc.ppo, run, &mut observer)?,
        Method::Ppo => train_ppo(family, &dist, &sc.training, &sc.ppo, run, &mut observer)?,
        Method::Dqn => train_dqn(family, &dist, &sc.training, &sc.dqn, run, &mut observer)?,
        Method::Ddpg => train_ddpg(family, &dist, &sc.training, &sc.ddpg, run, &mut observer)?,
        Method::Random => {
            let model = TrainedModel::Random;
            for u in 0..episodes {
                if observer.wants(u) {
                    observer.record(u, &model)?;
                }
            }
            Trained {
                model,
                episodes: Vec::new(),
            }
        }
    };
    let evaluation = evaluate_trained(experiment, &trained.model, seed, workers)?;
    let report = TrainReport {
        method,
        seed,
        episodes: trained.episodes.clone(),
        curve: observer.points,
        evaluation,
    };
    Ok((trained, report))
}

/// Test-set evaluation of a frozen model under the scenario's protocol.
pub fn evaluate_trained(experiment: &Experiment, model: &TrainedModel, seed: u64, workers: usize) -> Result<EvalSummary> {
    let policy = model.policy(experiment.family.action_space());
    evaluate_model(
        &experiment.family,
        policy.as_ref(),
        &experiment.test_ids,
        experiment.scenario.protocol.test_episodes,
        experiment.scenario.training.horizon,
        seed,
        workers,
    )
}

/// One row of a method comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub average: Stats,
    pub worst: Stats,
}

impl ComparisonRow {
    pub fn new(method: impl Into<String>, summary: &EvalSummary) -> Self {
        Self {
            method: method.into(),
            average: summary.average,
            worst: summary.worst,
        }
    }

    /// Column-wise median over several seeds' summaries.
    pub fn median(method: impl Into<String>, summaries: &[EvalSummary]) -> Result<Self> {
        if summaries.is_empty() {
            return Err(Error::invalid("median of no summaries"));
        }
        let pick = |f: &dyn Fn(&EvalSummary) -> [f64; 4]| -> Stats {
            let cols: Vec<[f64; 4]> = summaries.iter().map(f).collect();
            let m = |i: usize| median(&cols.iter().map(|c| c[i]).collect::<Vec<_>>());
            Stats {
                max: m(0),
                min: m(1),
                mean: m(2),
                stdev: m(3),
            }
        };
        Ok(Self {
            method: method.into(),
            average: pick(&|s| s.average.as_array()),
            worst: pick(&|s| s.worst.as_array()),
        })
    }

    fn values(&self) -> [f64; 8] {
        let (a, w) = (self.average.as_array(), self.worst.as_array());
        [a[0], a[1], a[2], a[3], w[0], w[1], w[2], w[3]]
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub const COMPARISON_COLUMNS: [&str; 9] = [
    "method",
    "avg_max",
    "avg_min",
    "avg_mean",
    "avg_stdev",
    "worst_max",
    "worst_min",
    "worst_mean",
    "worst_stdev",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Per value column, the row holding the unique best value, if any.
    pub best: [Option<usize>; 8],
}

/// Tabulates rows in input order and marks the unique best entry of each
/// column: highest for MAX/MIN/MEAN, lowest for STDEV.
pub fn compare_methods(rows: Vec<ComparisonRow>) -> Comparison {
    let mut best = [None; 8];
    for (c, slot) in best.iter_mut().enumerate() {
        let lower_is_better = c % 4 == 3;
        let vals: Vec<f64> = rows.iter().map(|r| r.values()[c]).collect();
        let target = if lower_is_better {
            vals.iter().copied().fold(f64::INFINITY, f64::min)
        } else {
            vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let hits: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] == target).collect();
        if hits.len() == 1 {
            *slot = Some(hits[0]);
        }
    }
    Comparison { rows, best }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = COMPARISON_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let vals: Vec<String> = r.values().iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{},{}", r.method, vals.join(","));
        }
        s
    }

    /// Fixed-width table; `*` marks the best value of a column.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10}", COMPARISON_COLUMNS[0]);
        for h in &COMPARISON_COLUMNS[1..] {
            let _ = write!(s, " {h:>12}");
        }
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(s, "{:<10}", r.method);
            for (c, v) in r.values().iter().enumerate() {
                let mark = if self.best[c] == Some(i) { "*" } else { " " };
                let _ = write!(s, " {:>11.4}{mark}", v);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::BanditFamily;
    use crate::mdp::Action;
    use crate::rng::StreamRng;

    struct Fixed(usize);

    impl Policy for Fixed {
        fn act(&self, _o: &[f64], _r: &mut StreamRng) -> Result<Action> {
            Ok(Action {
                relay: self.0,
                source_power: 0.5,
            })
        }
    }

    struct Oracle;

    impl Policy for Oracle {
        fn act(&self, o: &[f64], _r: &mut StreamRng) -> Result<Action> {
            Ok(Action {
                relay: if o[0] == 1.0 { 1 } else { 2 },
                source_power: 0.5,
            })
        }
    }

    #[test]
    fn stats_two_pass() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.max, s.min, s.mean), (4.0, 1.0, 2.5));
        assert!((s.stdev - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[0.7; 9]).unwrap().stdev, 0.0);
        assert!(Stats::of(&[]).is_err());
    }

    #[test]
    fn oracle_policy_always_succeeds() {
        let s = evaluate_model(&BanditFamily::default(), &Oracle, &[0], 10, 20, 1, 1).unwrap();
        assert_eq!(s.average.min, 1.0);
        assert_eq!(s.worst.stdev, 0.0);
    }

    #[test]
    fn fixed_policy_scores_about_half() {
        let s = evaluate_model(&BanditFamily::default(), &Fixed(1), &[0], 200, 50, 3, 1).unwrap();
        assert!((s.average.mean - 0.5).abs() < 0.03);
        assert!(s.average.stdev > 0.0);
        assert!(s.episodes.iter().all(|e| e.worst <= e.average));
        assert!(evaluate_model(&BanditFamily::default(), &Fixed(1), &[], 1, 1, 1, 1).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let a = evaluate_model(&BanditFamily::default(), &Fixed(2), &[0], 5, 30, 9, 1).unwrap();
        let b = evaluate_model(&BanditFamily::default(), &Fixed(2), &[0], 5, 30, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    fn summary(vals: &[f64]) -> EvalSummary {
        EvalSummary::from_episodes(vals.iter().map(|&v| EpisodeEval { average: v, worst: v / 2.0 }).collect()).unwrap()
    }

    #[test]
    fn comparison_layout_and_marks() {
        let a = ComparisonRow::new("robust", &summary(&[0.9, 0.8]));
        let b = ComparisonRow::new("ppo", &summary(&[0.7, 0.6]));
        let c = compare_methods(vec![a.clone(), b]);
        let csv = c.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), 9);
        assert!(lines.iter().all(|l| l.split(',').count() == 9));
        assert!(lines[1].starts_with("robust,") && lines[2].starts_with("ppo,"));
        assert_eq!(c.best[0], Some(0));
        assert!(c.to_table().contains('*'));

        let same = compare_methods(vec![a.clone(), a]);
        assert!(same.best.iter().all(Option::is_none));
        assert_eq!(same.rows[0], same.rows[1]);
    }

    #[test]
    fn median_rows() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let r = ComparisonRow::median("x", &[summary(&[0.1]), summary(&[0.5]), summary(&[0.3])]).unwrap();
        assert_eq!(r.average.mean, 0.3);
    }
}
