//! Text checkpoints of trained networks with their grid and seed, and the
//! run manifest.

use std::fmt::Write as _;

use crate::algo::{Method, TrainedModel};
use crate::channel::{ParameterGrid, RelayLocation};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::scenario::Experiment;

pub const CHECKPOINT_HEADER: &str = "relaynet-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub method: Method,
    pub seed: u64,
    pub scenario_hash: String,
    pub grid: ParameterGrid,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = format!("{CHECKPOINT_HEADER}\n");
        let _ = writeln!(s, "method {}", self.method);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "scenario_hash {}", self.scenario_hash);
        let g = &self.grid;
        let _ = writeln!(
            s,
            "grid {} {} {}",
            g.relays(),
            g.locations_per_relay(),
            g.thresholds_per_relay()
        );
        for (k, locs) in g.locations.iter().enumerate() {
            for (l, loc) in locs.iter().enumerate() {
                let _ = writeln!(s, "location {k} {l} {:e} {:e} {:e} {:e}", loc.x, loc.y, loc.d_sr, loc.d_rd);
            }
        }
        for (k, thr) in g.thresholds.iter().enumerate() {
            for (j, t) in thr.iter().enumerate() {
                let _ = writeln!(s, "threshold {k} {j} {t:e}");
            }
        }
        if let TrainedModel::Dqn { power_levels, .. } = &self.model {
            let _ = writeln!(s, "power_levels {power_levels}");
        }
        for (name, net) in self.model.networks() {
            s.push_str(&net.to_text(name));
        }
        s.push_str("end checkpoint\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != CHECKPOINT_HEADER {
            return Err(Error::Version {
                expected: CHECKPOINT_HEADER.into(),
                found: header.into(),
            });
        }
        let method: Method = keyed(&mut lines, "method")?
            .parse()
            .map_err(|e: Error| Error::parse("method", e.to_string()))?;
        let seed = number::<u64>(keyed(&mut lines, "seed")?, "seed")?;
        let scenario_hash = keyed(&mut lines, "scenario_hash")?.to_string();

        let dims: Vec<usize> = keyed(&mut lines, "grid")?
            .split_whitespace()
            .enumerate()
            .map(|(i, v)| number(v, &format!("grid[{i}]")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::parse("grid", "expected relays, locations and thresholds"));
        }
        let (relays, per_relay, per_threshold) = (dims[0], dims[1], dims[2]);
        let mut locations = vec![Vec::with_capacity(per_relay); relays];
        for k in 0..relays {
            for l in 0..per_relay {
                let field = format!("location[{k}][{l}]");
                let v = indexed_values(keyed(&mut lines, "location")?, &[k, l], 4, &field)?;
                locations[k].push(RelayLocation {
                    x: v[0],
                    y: v[1],
                    d_sr: v[2],
                    d_rd: v[3],
                });
            }
        }
        let mut thresholds = vec![Vec::with_capacity(per_threshold); relays];
        for (k, thr) in thresholds.iter_mut().enumerate() {
            for j in 0..per_threshold {
                let field = format!("threshold[{k}][{j}]");
                thr.push(indexed_values(keyed(&mut lines, "threshold")?, &[k, j], 1, &field)?[0]);
            }
        }
        let grid = ParameterGrid::new(locations, thresholds).map_err(|e| Error::parse("grid", e.to_string()))?;

        let model = match method {
            Method::Robust | Method::Ppo => TrainedModel::Ppo {
                actor: Mlp::from_text(&mut lines, "actor")?,
                critic: Mlp::from_text(&mut lines, "critic")?,
            },
            Method::Ddpg => TrainedModel::Ddpg {
                actor: Mlp::from_text(&mut lines, "actor")?,
                critic: Mlp::from_text(&mut lines, "critic")?,
            },
            Method::Dqn => {
                let power_levels = number(keyed(&mut lines, "power_levels")?, "power_levels")?;
                TrainedModel::Dqn {
                    q: Mlp::from_text(&mut lines, "q")?,
                    power_levels,
                }
            }
            Method::Random => TrainedModel::Random,
        };
        if lines.next() != Some("end checkpoint") {
            return Err(Error::parse("end", "missing checkpoint terminator"));
        }
        Ok(Self {
            method,
            seed,
            scenario_hash,
            grid,
            model,
        })
    }

    /// Fails unless the checkpoint was trained on the experiment's grid.
    pub fn check_grid(&self, experiment: &Experiment) -> Result<()> {
        if self.grid != experiment.family.grid {
            return Err(Error::Mismatch(
                "checkpoint grid differs from the scenario's parameter grid".into(),
            ));
        }
        Ok(())
    }
}

fn keyed<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let line = lines.next().ok_or_else(|| Error::parse(key, "unexpected end of checkpoint"))?;
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok(rest),
        _ => Err(Error::parse(key, format!("expected `{key} ...`, found `{line}`"))),
    }
}

fn number<T: std::str::FromStr>(text: &str, field: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::parse(field, format!("`{}` is not a valid number", text.trim())))
}

fn indexed_values(rest: &str, index: &[usize], count: usize, field: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != index.len() + count {
        return Err(Error::parse(field, format!("expected {} fields", index.len() + count)));
    }
    for (i, &want) in index.iter().enumerate() {
        if number::<usize>(parts[i], field)? != want {
            return Err(Error::parse(field, "entries out of order"));
        }
    }
    parts[index.len()..]
        .iter()
        .map(|p| {
            let v: f64 = number(p, field)?;
            if !v.is_finite() {
                return Err(Error::parse(field, "non-finite value"));
            }
            Ok(v)
        })
        .collect()
}

/// Plain-text record of what a run used: config hash, seeds, grid size and
/// the parameters held out from training.
pub fn manifest(experiment: &Experiment, method: Method, seeds: &[u64], workers: usize) -> String {
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let g = &experiment.family.grid;
    let mut s = String::new();
    let _ = writeln!(s, "scenario_hash: {}", experiment.scenario.hash());
    let _ = writeln!(s, "method: {method}");
    let _ = writeln!(
        s,
        "seeds: {}",
        seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(s, "workers: {workers}");
    let _ = writeln!(
        s,
        "grid: relays={} locations={} thresholds={} size={}",
        g.relays(),
        g.locations_per_relay(),
        g.thresholds_per_relay(),
        g.len()
    );
    let _ = writeln!(s, "train_locations: {}", join(&experiment.scenario.grid.train_locations));
    let _ = writeln!(s, "train_thresholds: {}", join(&experiment.scenario.grid.train_thresholds));
    let _ = writeln!(s, "train_ids: {}", join(&experiment.train_ids));
    let _ = writeln!(s, "test_ids: {}", join(&experiment.test_ids));
    let _ = writeln!(s, "unseen_ids: {}", join(&experiment.unseen_ids));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_locations, Geometry};
    use crate::rng;

    fn sample(method: Method) -> Checkpoint {
        let grid = ParameterGrid::new(
            generate_locations(&Geometry::default(), 2).unwrap(),
            vec![vec![0.5, 1.5]; 2],
        )
        .unwrap();
        let net = |i, o, s| Mlp::standard(i, o, &mut rng::stream(s, &[])).unwrap();
        let model = match method {
            Method::Robust | Method::Ppo => TrainedModel::Ppo {
                actor: net(8, 4, 1),
                critic: net(11, 1, 2),
            },
            Method::Ddpg => TrainedModel::Ddpg {
                actor: net(8, 2, 1),
                critic: net(10, 1, 2),
            },
            Method::Dqn => TrainedModel::Dqn {
                q: net(8, 6, 3),
                power_levels: 3,
            },
            Method::Random => TrainedModel::Random,
        };
        Checkpoint {
            method,
            seed: 42,
            scenario_hash: "ab".repeat(32),
            grid,
            model,
        }
    }

    #[test]
    fn round_trip_every_method() {
        for m in Method::ALL {
            let c = sample(m);
            assert_eq!(Checkpoint::from_text(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let text = sample(Method::Ppo).to_text().replacen("v1", "v9", 1);
        assert!(matches!(Checkpoint::from_text(&text), Err(Error::Version { .. })));
    }

    #[test]
    fn corrupted_fields_are_named() {
        let text = sample(Method::Ppo).to_text();
        let bad = text.replacen("seed 42", "seed 4x2", 1);
        let err = Checkpoint::from_text(&bad).unwrap_err().to_string();
        assert!(err.contains("`seed`"), "{err}");

        let lines: Vec<&str> = text.lines().collect();
        let i = lines.iter().position(|l| l.starts_with("layer 1 weights")).unwrap();
        let mut parts: Vec<String> = lines[i].split(' ').map(String::from).collect();
        parts[5] = "1.2.3".into();
        let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        broken[i] = parts.join(" ");
        let err = Checkpoint::from_text(&broken.join("\n")).unwrap_err().to_string();
        assert!(err.contains("actor.layer[1].weights[2]"), "{err}");

        let loc = text.replacen("location 0 1 ", "location 0 1 nan ", 1);
        assert!(Checkpoint::from_text(&loc).unwrap_err().to_string().contains("location[0][1]"));
    }
}
