//! TOML scenario files: one file fixes the physics, the grid, every learner's
//! hyperparameters and the evaluation protocol.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algo::{DdpgConfig, DqnConfig, PpoConfig, RolloutConfig};
use crate::channel::{build_markov_model, generate_locations, Geometry, MarkovOptions, NetworkConfig, ParameterGrid, RelayFamily};
use crate::error::{Error, Result};
use crate::mdp::{ObservationEncoding, ParameterDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub states: usize,
    pub rho: f64,
    pub sample_budget: usize,
    pub seed: u64,
    pub encoding: ObservationEncoding,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let m = MarkovOptions::default();
        Self {
            states: m.states,
            rho: m.rho,
            sample_budget: m.sample_budget,
            seed: m.seed,
            encoding: ObservationEncoding::default(),
        }
    }
}

impl ChannelSection {
    pub fn markov_options(&self) -> MarkovOptions {
        MarkovOptions {
            states: self.states,
            rho: self.rho,
            sample_budget: self.sample_budget,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Candidate decode thresholds `lambda_k` (bits/s/Hz), shared by every relay.
    pub thresholds: Vec<f64>,
    /// Location indices (per relay, sorted by source distance) used for training.
    pub train_locations: Vec<usize>,
    /// Threshold indices used for training.
    pub train_thresholds: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            thresholds: vec![1.0],
            train_locations: vec![0, 1, 2],
            train_thresholds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    /// Evaluation episodes of frozen models.
    pub test_episodes: usize,
    /// Evaluation points spread over training for the learning curves.
    pub training_evaluations: usize,
    /// Episodes per learning-curve point, on the training parameters.
    pub curve_episodes: usize,
    pub seeds: Vec<u64>,
    /// Evaluate on at most this many test parameters (evenly strided); 0 uses all.
    pub test_subsample: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            test_episodes: 100,
            training_evaluations: 20,
            curve_episodes: 5,
            seeds: vec![1, 2, 3, 4, 5],
            test_subsample: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.test_episodes == 0 || self.curve_episodes == 0 {
            return Err(Error::invalid("evaluation episodes must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("protocol needs at least one seed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub geometry: Geometry,
    pub channel: ChannelSection,
    pub grid: GridSection,
    pub training: RolloutConfig,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub ddpg: DdpgConfig,
    pub protocol: EvalProtocol,
}

/// A built scenario: the environment family and the train/test split.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub family: RelayFamily,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    /// Test parameters never sampled during training.
    pub unseen_ids: Vec<usize>,
}

impl Experiment {
    pub fn train_distribution(&self) -> Result<ParameterDistribution> {
        ParameterDistribution::uniform(self.train_ids.clone())
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::parse("scenario", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Parses `text` and applies `key=value` overrides, where `key` is a
    /// dotted path such as `ppo.kappa` and `value` is a TOML literal (bare
    /// words are taken as strings).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| Error::parse("scenario", e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    fn from_value(value: toml::Value) -> Result<Self> {
        let s: Scenario = value.try_into().map_err(|e: toml::de::Error| Error::parse("scenario", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.channel.markov_options().validate()?;
        self.training.validate()?;
        self.ppo.validate()?;
        self.dqn.validate()?;
        self.ddpg.validate()?;
        self.protocol.validate()?;
        let g = &self.grid;
        if g.thresholds.is_empty() || g.train_locations.is_empty() || g.train_thresholds.is_empty() {
            return Err(Error::invalid("grid needs thresholds and non-empty training subsets"));
        }
        if g.train_locations.iter().any(|&l| l >= self.geometry.locations_per_relay) {
            return Err(Error::invalid("train_locations index outside locations_per_relay"));
        }
        if g.train_thresholds.iter().any(|&t| t >= g.thresholds.len()) {
            return Err(Error::invalid("train_thresholds index outside thresholds"));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<ParameterGrid> {
        let locations = generate_locations(&self.geometry, self.network.relays)?;
        ParameterGrid::new(locations, vec![self.grid.thresholds.clone(); self.network.relays])
    }

    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let grid = self.build_grid()?;
        let model = build_markov_model(&self.network, &grid.locations, &self.channel.markov_options())?;
        let train_ids = grid.subset(&self.grid.train_locations, &self.grid.train_thresholds)?;
        let all: Vec<usize> = (0..grid.len()).collect();
        let test_ids = if self.protocol.test_subsample == 0 || self.protocol.test_subsample >= all.len() {
            all
        } else {
            let n = self.protocol.test_subsample;
            (0..n).map(|i| i * grid.len() / n).collect()
        };
        let unseen_ids = test_ids.iter().copied().filter(|id| !train_ids.contains(id)).collect();
        let family = RelayFamily::new(self.network.clone(), grid, model, self.channel.encoding)?;
        Ok(Experiment {
            scenario: self.clone(),
            family,
            train_ids,
            test_ids,
            unseen_ids,
        })
    }
}

fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("override key `{key}` is malformed")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::invalid(format!("override key `{key}` walks through a non-table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::invalid(format!("override key `{key}` walks through a non-table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
