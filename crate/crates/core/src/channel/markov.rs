//! Finite-state Markov channel built from a Gauss-Markov fading process.
//!
//! For every (relay, hop, location) triple a correlated complex Gaussian
//! process `h(t) = rho h(t-1) + sqrt(1 - rho^2) w(t)` is simulated, its
//! squared norm is quantized into `M` equal-probability bins, and the bin
//! transition frequencies become the row-stochastic transition matrix.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fading::{link_variance, sample_channel_into, squared_norm};
use super::grid::RelayLocation;
use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::rng;

const FORMAT_HEADER: &str = "relaynet-markov v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hop {
    SourceRelay,
    RelayDestination,
}

impl Hop {
    fn index(self) -> usize {
        match self {
            Hop::SourceRelay => 0,
            Hop::RelayDestination => 1,
        }
    }

    fn from_index(i: usize) -> Option<Hop> {
        match i {
            0 => Some(Hop::SourceRelay),
            1 => Some(Hop::RelayDestination),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovOptions {
    /// States per link `M`.
    pub states: usize,
    /// Temporal correlation of consecutive fading samples.
    pub rho: f64,
    /// Samples simulated per (link, location).
    pub sample_budget: usize,
    pub seed: u64,
}

impl Default for MarkovOptions {
    fn default() -> Self {
        Self {
            states: 8,
            rho: 0.9,
            sample_budget: 200_000,
            seed: 2024,
        }
    }
}

impl MarkovOptions {
    pub fn validate(&self) -> Result<()> {
        if self.states < 2 {
            return Err(Error::invalid("markov model needs at least 2 states"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.sample_budget < 10_000 {
            return Err(Error::invalid("sample_budget must be at least 10^4"));
        }
        Ok(())
    }
}

/// Quantized Markov chain of one link at one relay location.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub relay: usize,
    pub hop: Hop,
    pub location: usize,
    pub variance: f64,
    /// `M + 1` increasing boundaries on `||h||^2`; first is 0, last is +inf.
    pub bin_edges: Vec<f64>,
    /// Median channel gain of the samples that fell in each bin.
    pub representatives: Vec<f64>,
    transitions: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LinkModel {
    pub fn states(&self) -> usize {
        self.representatives.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.states();
        &self.transitions[i * m..(i + 1) * m]
    }

    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.transitions[i * self.states() + j]
    }

    /// Bin index of a channel gain; every non-negative gain lands in exactly one bin.
    pub fn quantize(&self, gain: f64) -> usize {
        let m = self.states();
        self.bin_edges[1..m].partition_point(|&e| e <= gain)
    }

    /// Next state from state `i` given a uniform draw `u` in `[0, 1)`.
    pub fn next_state(&self, i: usize, u: f64) -> usize {
        let m = self.states();
        let row = &self.cumulative[i * m..(i + 1) * m];
        row.partition_point(|&c| c <= u).min(m - 1)
    }

    fn from_parts(
        relay: usize,
        hop: Hop,
        location: usize,
        variance: f64,
        bin_edges: Vec<f64>,
        representatives: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        let m = representatives.len();
        if bin_edges.len() != m + 1 || transitions.len() != m * m {
            return Err(Error::Construction(format!(
                "link (relay {relay}, {hop:?}, location {location}): inconsistent table sizes"
            )));
        }
        if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Construction(format!(
                "link (relay {relay}, {hop:?}, location {location}): bin edges not strictly increasing"
            )));
        }
        for (i, r) in representatives.iter().enumerate() {
            if !(bin_edges[i] <= *r && *r <= bin_edges[i + 1]) {
                return Err(Error::Construction(format!(
                    "link (relay {relay}, {hop:?}, location {location}): representative {i} outside its bin"
                )));
            }
        }
        let mut cumulative = vec![0.0; m * m];
        for i in 0..m {
            let row = &transitions[i * m..(i + 1) * m];
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Construction(format!(
                    "link (relay {relay}, {hop:?}, location {location}): row {i} is not stochastic"
                )));
            }
            let mut acc = 0.0;
            for j in 0..m {
                acc += row[j];
                cumulative[i * m + j] = acc;
            }
            cumulative[i * m + m - 1] = 1.0;
        }
        Ok(Self {
            relay,
            hop,
            location,
            variance,
            bin_edges,
            representatives,
            transitions,
            cumulative,
        })
    }
}

/// Simulates one Gauss-Markov link and estimates its quantized chain.
pub fn build_link<R: Rng + ?Sized>(
    rng: &mut R,
    variance: f64,
    vector_len: usize,
    options: &MarkovOptions,
    ident: (usize, Hop, usize),
) -> Result<LinkModel> {
    options.validate()?;
    let (relay, hop, location) = ident;
    let m = options.states;
    let n = options.sample_budget;
    let a = options.rho;
    let b = (1.0 - a * a).sqrt();

    let mut h = vec![Complex64::new(0.0, 0.0); vector_len];
    let mut w = h.clone();
    sample_channel_into(rng, variance, &mut h)?;
    let mut gains = Vec::with_capacity(n);
    gains.push(squared_norm(&h));
    for _ in 1..n {
        sample_channel_into(rng, variance, &mut w)?;
        for (hi, wi) in h.iter_mut().zip(&w) {
            *hi = *hi * a + *wi * b;
        }
        gains.push(squared_norm(&h));
    }

    let mut sorted = gains.clone();
    sorted.sort_by(f64::total_cmp);
    let mut edges = Vec::with_capacity(m + 1);
    edges.push(0.0);
    for i in 1..m {
        edges.push(sorted[i * n / m]);
    }
    edges.push(f64::INFINITY);
    for i in 1..=m {
        if !(edges[i - 1] < edges[i]) {
            return Err(Error::Construction(format!(
                "link (relay {relay}, {hop:?}, location {location}): bin {} is empty",
                i - 1
            )));
        }
    }

    let mut representatives = Vec::with_capacity(m);
    for i in 0..m {
        let lo = sorted.partition_point(|&g| g < edges[i]);
        let hi = sorted.partition_point(|&g| g < edges[i + 1]);
        if lo == hi {
            return Err(Error::Construction(format!(
                "link (relay {relay}, {hop:?}, location {location}): bin {i} is empty"
            )));
        }
        let bin = &sorted[lo..hi];
        let mid = bin.len() / 2;
        let median = if bin.len() % 2 == 1 {
            bin[mid]
        } else {
            0.5 * (bin[mid - 1] + bin[mid])
        };
        representatives.push(median);
    }

    let quantize = |g: f64| edges[1..m].partition_point(|&e| e <= g);
    let mut counts = vec![0u64; m * m];
    let mut prev = quantize(gains[0]);
    for &g in &gains[1..] {
        let s = quantize(g);
        counts[prev * m + s] += 1;
        prev = s;
    }
    let mut transitions = vec![0.0; m * m];
    for i in 0..m {
        let total: u64 = counts[i * m..(i + 1) * m].iter().sum();
        if total == 0 {
            return Err(Error::Construction(format!(
                "link (relay {relay}, {hop:?}, location {location}): bin {i} has no outgoing transitions"
            )));
        }
        for j in 0..m {
            transitions[i * m + j] = counts[i * m + j] as f64 / total as f64;
        }
        let s: f64 = transitions[i * m..(i + 1) * m].iter().sum();
        for p in &mut transitions[i * m..(i + 1) * m] {
            *p /= s;
        }
    }

    LinkModel::from_parts(relay, hop, location, variance, edges, representatives, transitions)
}

/// Quantized channel model for every (relay, hop, location) of the network.
///
/// Immutable once built; share it behind an `Arc` across rollout workers.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChannelModel {
    states: usize,
    relays: usize,
    locations_per_relay: usize,
    links: Vec<LinkModel>,
}

pub fn build_markov_model(
    network: &NetworkConfig,
    locations: &[Vec<RelayLocation>],
    options: &MarkovOptions,
) -> Result<MarkovChannelModel> {
    network.validate()?;
    options.validate()?;
    if locations.len() != network.relays {
        return Err(Error::Shape {
            context: "relay location sets",
            expected: network.relays,
            got: locations.len(),
        });
    }
    let per_relay = locations[0].len();
    if per_relay == 0 || locations.iter().any(|l| l.len() != per_relay) {
        return Err(Error::invalid("every relay needs the same non-zero number of locations"));
    }
    let mut links = Vec::with_capacity(network.relays * 2 * per_relay);
    for (k, candidates) in locations.iter().enumerate() {
        for hop in [Hop::SourceRelay, Hop::RelayDestination] {
            for (l, loc) in candidates.iter().enumerate() {
                let (distance, len) = match hop {
                    Hop::SourceRelay => (loc.d_sr, network.source_antennas),
                    Hop::RelayDestination => (loc.d_rd, network.destination_antennas),
                };
                let variance = link_variance(network.path_loss_constant, network.path_loss_exponent, distance);
                let mut r = rng::stream(
                    options.seed,
                    &[rng::tag::MARKOV, k as u64, hop.index() as u64, l as u64],
                );
                links.push(build_link(&mut r, variance, len, options, (k, hop, l))?);
            }
        }
    }
    Ok(MarkovChannelModel {
        states: options.states,
        relays: network.relays,
        locations_per_relay: per_relay,
        links,
    })
}

impl MarkovChannelModel {
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn locations_per_relay(&self) -> usize {
        self.locations_per_relay
    }

    pub fn links(&self) -> &[LinkModel] {
        &self.links
    }

    fn index(&self, relay: usize, hop: Hop, location: usize) -> usize {
        (relay * 2 + hop.index()) * self.locations_per_relay + location
    }

    pub fn link(&self, relay: usize, hop: Hop, location: usize) -> &LinkModel {
        &self.links[self.index(relay, hop, location)]
    }

    /// Serializes the model as versioned decimal text with a fixed field order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "states {}", self.states);
        let _ = writeln!(s, "relays {}", self.relays);
        let _ = writeln!(s, "locations {}", self.locations_per_relay);
        for link in &self.links {
            let _ = writeln!(
                s,
                "link {} {} {} {:e}",
                link.relay,
                link.hop.index(),
                link.location,
                link.variance
            );
            let _ = writeln!(s, "edges {}", join_exp(&link.bin_edges));
            let _ = writeln!(s, "representatives {}", join_exp(&link.representatives));
            for i in 0..self.states {
                let _ = writeln!(s, "row {}", join_exp(link.row(i)));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or("").trim();
        if header != FORMAT_HEADER {
            return Err(Error::Version {
                expected: FORMAT_HEADER.into(),
                found: header.into(),
            });
        }
        let mut take = |key: &str| -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(key, "unexpected end of file"))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.map(str::to_owned).collect()),
                other => Err(Error::parse(key, format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
            }
        };
        let states: usize = parse_one(&take("states")?, "states")?;
        let relays: usize = parse_one(&take("relays")?, "relays")?;
        let locations: usize = parse_one(&take("locations")?, "locations")?;
        let mut links = Vec::with_capacity(relays * 2 * locations);
        for n in 0..relays * 2 * locations {
            let field = format!("link[{n}]");
            let head = take("link")?;
            if head.len() != 4 {
                return Err(Error::parse(field, "expected relay, hop, location, variance"));
            }
            let relay: usize = parse_value(&head[0], &format!("{field}.relay"))?;
            let hop_idx: usize = parse_value(&head[1], &format!("{field}.hop"))?;
            let hop = Hop::from_index(hop_idx).ok_or_else(|| Error::parse(format!("{field}.hop"), "must be 0 or 1"))?;
            let location: usize = parse_value(&head[2], &format!("{field}.location"))?;
            let variance: f64 = parse_value(&head[3], &format!("{field}.variance"))?;
            let edges = parse_vec(&take("edges")?, &format!("{field}.edges"), states + 1)?;
            let reps = parse_vec(&take("representatives")?, &format!("{field}.representatives"), states)?;
            let mut transitions = Vec::with_capacity(states * states);
            for i in 0..states {
                transitions.extend(parse_vec(&take("row")?, &format!("{field}.row[{i}]"), states)?);
            }
            links.push(LinkModel::from_parts(relay, hop, location, variance, edges, reps, transitions)?);
        }
        let model = MarkovChannelModel {
            states,
            relays,
            locations_per_relay: locations,
            links,
        };
        for (n, link) in model.links.iter().enumerate() {
            if model.index(link.relay, link.hop, link.location) != n {
                return Err(Error::parse(format!("link[{n}]"), "links out of canonical order"));
            }
        }
        Ok(model)
    }
}

fn join_exp(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_value<T: std::str::FromStr>(raw: &str, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::parse(field, format!("`{raw}`: {e}")))
}

fn parse_one<T: std::str::FromStr>(parts: &[String], field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match parts {
        [one] => parse_value(one, field),
        _ => Err(Error::parse(field, "expected exactly one value")),
    }
}

fn parse_vec(parts: &[String], field: &str, expected: usize) -> Result<Vec<f64>> {
    if parts.len() != expected {
        return Err(Error::parse(
            field,
            format!("expected {expected} values, found {}", parts.len()),
        ));
    }
    parts
        .iter()
        .enumerate()
        .map(|(i, p)| parse_value(p, &format!("{field}[{i}]")))
        .collect()
}
