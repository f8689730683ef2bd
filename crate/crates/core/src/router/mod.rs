//! Earliest-arrival travel times at a fixed departure clock time, by car over
//! the road graph and by public transit over a compiled timetable.

mod raptor;
mod road;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::IngestError;
use crate::spatial::LatLon;

pub use raptor::{build_transit, transit_travel_time, CompiledRoute, TransitNetwork};
pub use road::{car_travel_time, RoadNetwork};

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("road graph has no nodes")]
    EmptyRoadGraph,
    #[error("road edge {0} has a non-positive travel time")]
    BadEdge(String),
    #[error("no road node within {radius_m} m of {id:?}")]
    SnapFailure { id: String, radius_m: f64 },
    #[error("no transit service runs on {0}")]
    NoServiceOnDate(NaiveDate),
    #[error("transit routing requested but no timetable was loaded")]
    NoTransitNetwork,
    #[error("invalid transit feed: {0}")]
    InvalidFeed(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    pub walk_speed_kmh: f64,
    /// Largest distance between a coordinate and the road node it snaps to.
    pub snap_radius_m: f64,
    /// Walk-network distance bound for access, egress, footpaths and direct walks.
    pub walk_radius_m: f64,
    pub max_transfers: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            walk_speed_kmh: 4.8,
            snap_radius_m: 500.0,
            walk_radius_m: 1000.0,
            max_transfers: 5,
        }
    }
}

impl RouterConfig {
    /// Whole seconds needed to walk `meters`, rounded up.
    pub fn walk_seconds(&self, meters: f64) -> u32 {
        let s = meters * 3.6 / self.walk_speed_kmh;
        // Absorb representation error so that e.g. 100 m at 4.8 km/h is 75 s.
        (s - 1e-9).ceil().max(0.0) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkMode {
    Car,
    Transit,
}

impl NetworkMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkMode::Car => "car",
            NetworkMode::Transit => "transit",
        }
    }
}

/// An identified coordinate used as routing origin or destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub coord: LatLon,
}

impl Place {
    pub fn new(id: impl Into<String>, coord: LatLon) -> Self {
        Self { id: id.into(), coord }
    }
}

/// Travel seconds from one origin to a list of destinations; `None` marks an
/// unreachable destination. Entries are aligned with `dest_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeMatrix {
    pub origin_id: String,
    pub mode: NetworkMode,
    pub depart_s: u32,
    pub dest_ids: Vec<String>,
    pub travel_s: Vec<Option<f64>>,
}

impl TravelTimeMatrix {
    pub fn get(&self, dest_id: &str) -> Option<f64> {
        self.dest_ids
            .iter()
            .position(|d| d == dest_id)
            .and_then(|i| self.travel_s[i])
    }

    pub fn reachable(&self) -> usize {
        self.travel_s.iter().filter(|t| t.is_some()).count()
    }
}

/// Car matrices for many origins, computed in parallel.
pub fn car_matrices(
    net: &RoadNetwork,
    origins: &[Place],
    dests: &[Place],
    depart: u32,
    config: &RouterConfig,
) -> Result<Vec<TravelTimeMatrix>, RouterError> {
    origins
        .par_iter()
        .map_init(road::SearchScratch::default, |s, o| {
            road::car_travel_time_with(net, o, dests, depart, config, s)
        })
        .collect()
}

/// The road graph plus an optional timetable, dispatching matrix requests by mode.
#[derive(Debug, Clone)]
pub struct Networks {
    pub roads: std::sync::Arc<RoadNetwork>,
    pub transit: Option<TransitNetwork>,
    pub config: RouterConfig,
}

impl Networks {
    /// One matrix per origin. A car origin that cannot be snapped yields an
    /// all-unreachable row instead of failing the batch.
    pub fn matrices(
        &self,
        mode: NetworkMode,
        origins: &[Place],
        dests: &[Place],
        depart: u32,
    ) -> Result<Vec<TravelTimeMatrix>, RouterError> {
        match mode {
            NetworkMode::Transit => {
                let net = self.transit.as_ref().ok_or(RouterError::NoTransitNetwork)?;
                Ok(transit_matrices(net, origins, dests, depart))
            }
            NetworkMode::Car => Ok(origins
                .par_iter()
                .map_init(road::SearchScratch::default, |s, o| {
                    road::car_travel_time_with(&self.roads, o, dests, depart, &self.config, s).unwrap_or_else(|e| {
                        log::warn!("{e}; treating its destinations as unreachable by car");
                        TravelTimeMatrix {
                            origin_id: o.id.clone(),
                            mode: NetworkMode::Car,
                            depart_s: depart,
                            dest_ids: dests.iter().map(|d| d.id.clone()).collect(),
                            travel_s: vec![None; dests.len()],
                        }
                    })
                })
                .collect()),
        }
    }
}

/// Transit matrices for many origins, computed in parallel.
pub fn transit_matrices(net: &TransitNetwork, origins: &[Place], dests: &[Place], depart: u32) -> Vec<TravelTimeMatrix> {
    let dest_nodes = net.snap_places(dests);
    origins
        .par_iter()
        .map_init(raptor::QueryScratch::default, |s, o| {
            net.query(o, dests, &dest_nodes, depart, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_seconds_rounding() {
        let c = RouterConfig::default();
        assert_eq!(c.walk_seconds(0.0), 0);
        assert_eq!(c.walk_seconds(100.0), 75);
        assert_eq!(c.walk_seconds(100.1), 76);
        assert_eq!(c.walk_seconds(1000.0), 750);
    }
}
