//! Relay geometry and the discrete environment-parameter grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Source at the origin, destination at `(destination_distance, 0)`, and
/// candidate relay positions drawn uniformly inside an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub destination_distance: f64,
    pub box_x: [f64; 2],
    pub box_y: [f64; 2],
    /// `L`, candidate locations per relay.
    pub locations_per_relay: usize,
    pub seed: u64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            destination_distance: 100.0,
            box_x: [20.0, 80.0],
            box_y: [-30.0, 30.0],
            locations_per_relay: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayLocation {
    pub x: f64,
    pub y: f64,
    /// Source-relay distance in meters.
    pub d_sr: f64,
    /// Relay-destination distance in meters.
    pub d_rd: f64,
}

impl RelayLocation {
    pub fn new(x: f64, y: f64, destination_distance: f64) -> Self {
        Self {
            x,
            y,
            d_sr: x.hypot(y),
            d_rd: (destination_distance - x).hypot(y),
        }
    }
}

/// Candidate locations per relay, each list sorted by source distance so
/// that location indices are physically ordered.
pub fn generate_locations(geometry: &Geometry, relays: usize) -> Result<Vec<Vec<RelayLocation>>> {
    let [x0, x1] = geometry.box_x;
    let [y0, y1] = geometry.box_y;
    if !(x0 < x1 && y0 < y1) || geometry.locations_per_relay == 0 || !(geometry.destination_distance > 0.0) {
        return Err(Error::invalid("geometry: empty box, zero locations or non-positive destination distance"));
    }
    let mut out = Vec::with_capacity(relays);
    for k in 0..relays {
        let mut r = rng::stream(geometry.seed, &[rng::tag::GEOMETRY, k as u64]);
        let mut locs: Vec<RelayLocation> = (0..geometry.locations_per_relay)
            .map(|_| {
                let x = r.random_range(x0..x1);
                let y = r.random_range(y0..y1);
                RelayLocation::new(x, y, geometry.destination_distance)
            })
            .collect();
        if locs.iter().any(|l| !(l.d_sr > 0.0 && l.d_rd > 0.0)) {
            return Err(Error::invalid("geometry places a relay on top of the source or destination"));
        }
        locs.sort_by(|a, b| a.d_sr.total_cmp(&b.d_sr));
        out.push(locs);
    }
    Ok(out)
}

/// One realization of the uncertainty tuple: a location and a decode
/// threshold for every relay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParameter {
    /// Mixed-radix index into the grid.
    pub id: usize,
    pub location: Vec<usize>,
    pub threshold: Vec<usize>,
    pub d_sk: Vec<f64>,
    pub d_kd: Vec<f64>,
    pub lambda_k: Vec<f64>,
}

/// Cartesian product of per-relay location and threshold candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub locations: Vec<Vec<RelayLocation>>,
    pub thresholds: Vec<Vec<f64>>,
}

impl ParameterGrid {
    pub fn new(locations: Vec<Vec<RelayLocation>>, thresholds: Vec<Vec<f64>>) -> Result<Self> {
        if locations.is_empty() || locations.len() != thresholds.len() {
            return Err(Error::invalid("grid needs matching, non-empty per-relay location and threshold sets"));
        }
        let l = locations[0].len();
        let j = thresholds[0].len();
        if l == 0 || j == 0 || locations.iter().any(|s| s.len() != l) || thresholds.iter().any(|s| s.len() != j) {
            return Err(Error::invalid("every relay needs the same non-zero number of candidates"));
        }
        if thresholds.iter().flatten().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("thresholds must be finite and >= 0"));
        }
        Ok(Self { locations, thresholds })
    }

    pub fn relays(&self) -> usize {
        self.locations.len()
    }

    pub fn locations_per_relay(&self) -> usize {
        self.locations[0].len()
    }

    pub fn thresholds_per_relay(&self) -> usize {
        self.thresholds[0].len()
    }

    fn radix(&self) -> usize {
        self.locations_per_relay() * self.thresholds_per_relay()
    }

    pub fn len(&self) -> usize {
        self.radix().pow(self.relays() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, location: &[usize], threshold: &[usize]) -> Result<usize> {
        let (l, j) = (self.locations_per_relay(), self.thresholds_per_relay());
        if location.len() != self.relays() || threshold.len() != self.relays() {
            return Err(Error::Mismatch("parameter relay count differs from grid".into()));
        }
        let mut id = 0;
        for k in (0..self.relays()).rev() {
            if location[k] >= l || threshold[k] >= j {
                return Err(Error::Mismatch(format!("relay {k} index outside the grid")));
            }
            id = id * self.radix() + location[k] * j + threshold[k];
        }
        Ok(id)
    }

    pub fn param(&self, id: usize) -> Result<EnvironmentParameter> {
        if id >= self.len() {
            return Err(Error::invalid(format!("parameter id {id} outside grid of {}", self.len())));
        }
        let j = self.thresholds_per_relay();
        let mut rest = id;
        let mut location = Vec::with_capacity(self.relays());
        let mut threshold = Vec::with_capacity(self.relays());
        for _ in 0..self.relays() {
            let digit = rest % self.radix();
            rest /= self.radix();
            location.push(digit / j);
            threshold.push(digit % j);
        }
        Ok(EnvironmentParameter {
            id,
            d_sk: (0..self.relays()).map(|k| self.locations[k][location[k]].d_sr).collect(),
            d_kd: (0..self.relays()).map(|k| self.locations[k][location[k]].d_rd).collect(),
            lambda_k: (0..self.relays()).map(|k| self.thresholds[k][threshold[k]]).collect(),
            location,
            threshold,
        })
    }

    /// Ids whose every relay uses a location from `locations` and a threshold
    /// from `thresholds`, in increasing order.
    pub fn subset(&self, locations: &[usize], thresholds: &[usize]) -> Result<Vec<usize>> {
        if locations.iter().any(|&l| l >= self.locations_per_relay())
            || thresholds.iter().any(|&t| t >= self.thresholds_per_relay())
        {
            return Err(Error::invalid("subset index outside the grid"));
        }
        let mut ids = Vec::new();
        for id in 0..self.len() {
            let p = self.param(id)?;
            if p.location.iter().all(|l| locations.contains(l)) && p.threshold.iter().all(|t| thresholds.contains(t)) {
                ids.push(id);
            }
        }
        Ok(ids)
    }

    /// Checks that `param` was produced by this grid.
    pub fn check(&self, param: &EnvironmentParameter) -> Result<()> {
        let expected = self.param(self.id_of(&param.location, &param.threshold)?)?;
        if expected != *param {
            return Err(Error::Mismatch(format!("parameter {} does not belong to this grid", param.id)));
        }
        Ok(())
    }

    /// Index-fraction features of a parameter, one per (relay, varying field).
    ///
    /// Fields with a single candidate carry no information and are skipped,
    /// so two opposite grid corners are always at feature distance 1.
    pub fn features(&self, param: &EnvironmentParameter) -> Vec<f64> {
        let frac = |i: usize, n: usize| i as f64 / (n - 1) as f64;
        let (l, j) = (self.locations_per_relay(), self.thresholds_per_relay());
        let mut f = Vec::new();
        for k in 0..self.relays() {
            if l > 1 {
                f.push(frac(param.location[k], l));
            }
            if j > 1 {
                f.push(frac(param.threshold[k], j));
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: usize, j: usize) -> ParameterGrid {
        let locs = generate_locations(
            &Geometry {
                locations_per_relay: l,
                ..Geometry::default()
            },
            3,
        )
        .unwrap();
        let thr: Vec<f64> = (0..j).map(|i| 0.5 + 0.25 * i as f64).collect();
        ParameterGrid::new(locs, vec![thr; 3]).unwrap()
    }

    #[test]
    fn locations_are_sorted_and_reproducible() {
        let g = Geometry::default();
        let a = generate_locations(&g, 3).unwrap();
        assert_eq!(a, generate_locations(&g, 3).unwrap());
        for relay in &a {
            assert!(relay.windows(2).all(|w| w[0].d_sr <= w[1].d_sr));
            for loc in relay {
                assert!(loc.x >= 20.0 && loc.x < 80.0 && loc.y >= -30.0 && loc.y < 30.0);
                assert!((loc.d_rd - (100.0 - loc.x).hypot(loc.y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn id_encoding_round_trips() {
        let g = grid(5, 2);
        assert_eq!(g.len(), 1000);
        for id in [0, 1, 17, 999] {
            let p = g.param(id).unwrap();
            assert_eq!(g.id_of(&p.location, &p.threshold).unwrap(), id);
            g.check(&p).unwrap();
        }
        assert!(g.param(1000).is_err());
    }

    #[test]
    fn subset_keeps_only_allowed_indices() {
        let g = grid(5, 1);
        let train = g.subset(&[0, 1, 2], &[0]).unwrap();
        assert_eq!(train.len(), 27);
        for id in train {
            assert!(g.param(id).unwrap().location.iter().all(|&l| l < 3));
        }
    }

    #[test]
    fn features_skip_constant_fields() {
        let g = grid(5, 1);
        let p = g.param(g.id_of(&[4, 0, 2], &[0, 0, 0]).unwrap()).unwrap();
        assert_eq!(g.features(&p), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn check_rejects_foreign_parameters() {
        let g = grid(5, 1);
        let mut p = g.param(3).unwrap();
        p.d_sk[0] += 1.0;
        assert!(g.check(&p).is_err());
        let other = grid(4, 1);
        assert!(other.check(&g.param(124).unwrap()).is_err());
    }
}
