//! Space–time accessibility: which leisure opportunities fit into a
//! work → leisure → home chain under a fixed travel-time budget.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{MainMode, Poi, PersonRecord};
use crate::router::{NetworkMode, Networks, Place, RouterError, TravelTimeMatrix};
use crate::spatial::{CellId, CellIndex, Resolution, SpatialError};
use crate::stats::{weighted_mean_sd, weighted_median};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub tb_min: f64,
    /// Departure clock time in seconds after midnight.
    pub depart_s: u32,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self {
            tb_min: 90.0,
            depart_s: 17 * 3600,
        }
    }
}

impl BudgetSpec {
    pub fn new(tb_min: f64, depart_s: u32) -> Self {
        assert!(tb_min > 0.0, "travel-time budget must be positive");
        Self { tb_min, depart_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModePolicy {
    #[default]
    PersonMainMode,
    ForceCar,
    ForceTransit,
}

impl ModePolicy {
    pub fn mode_for(self, main: MainMode) -> NetworkMode {
        match (self, main) {
            (ModePolicy::ForceCar, _) | (ModePolicy::PersonMainMode, MainMode::Car) => NetworkMode::Car,
            (ModePolicy::ForceTransit, _) | (ModePolicy::PersonMainMode, MainMode::Transit) => NetworkMode::Transit,
        }
    }
}

impl FromStr for ModePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "person_main_mode" => Ok(ModePolicy::PersonMainMode),
            "force_car" => Ok(ModePolicy::ForceCar),
            "force_transit" => Ok(ModePolicy::ForceTransit),
            _ => Err(format!("unknown mode policy {s:?}")),
        }
    }
}

/// A leisure POI with its routing location and reporting cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSite {
    pub poi_id: String,
    pub place: Place,
    pub coarse_cell: CellId,
}

pub fn poi_sites(pois: &[Poi], index: &CellIndex) -> Result<Vec<PoiSite>, SpatialError> {
    pois.iter()
        .map(|p| {
            Ok(PoiSite {
                poi_id: p.poi_id.clone(),
                place: Place::new(p.poi_id.clone(), p.coord()),
                coarse_cell: index.bin_point(p.coord(), Resolution::Coarse)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleEntry {
    pub coarse_cell: CellId,
    pub best_remaining_min: f64,
    pub poi_count: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub person_id: String,
    pub mode: NetworkMode,
    /// `None` when no commute was observed and the routed fallback found no path.
    pub t_hw_min: Option<f64>,
    /// True when `t_hw_min` comes from routing rather than observed commutes.
    pub t_hw_fallback: bool,
    pub entries: Vec<FeasibleEntry>,
    pub a_i: usize,
}

impl FeasibleSet {
    pub fn log1p_a(&self) -> f64 {
        (self.a_i as f64).ln_1p()
    }

    pub fn rank_of(&self, cell: &CellId) -> Option<usize> {
        self.entries.iter().find(|e| &e.coarse_cell == cell).map(|e| e.rank)
    }
}

/// Weighted median of the person's observed commute durations in minutes,
/// or `None` without samples.
pub fn estimate_commute_time(person: &PersonRecord) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = person
        .commute_samples
        .iter()
        .map(|s| (s.duration_min, s.day_weight))
        .collect();
    weighted_median(&pairs)
}

/// Evaluates the budget condition for every POI and ranks the coarse cells
/// holding feasible POIs by their best remaining budget.
///
/// `t_wk_s` and `t_kh_s` are work→POI and POI→home seconds aligned with `pois`.
pub fn compute_spa(
    person_id: &str,
    mode: NetworkMode,
    t_hw_min: Option<f64>,
    pois: &[PoiSite],
    t_wk_s: &[Option<f64>],
    t_kh_s: &[Option<f64>],
    budget: &BudgetSpec,
) -> FeasibleSet {
    assert_eq!(pois.len(), t_wk_s.len());
    assert_eq!(pois.len(), t_kh_s.len());
    let mut cells: BTreeMap<&str, (&CellId, f64, usize)> = BTreeMap::new();
    if let Some(t_hw) = t_hw_min {
        // Seconds keep integer-valued inputs exact.
        let left_s = budget.tb_min * 60.0 - t_hw * 60.0;
        for (k, poi) in pois.iter().enumerate() {
            let (Some(wk), Some(kh)) = (t_wk_s[k], t_kh_s[k]) else { continue };
            let rem_s = left_s - wk - kh;
            if rem_s >= 0.0 {
                let e = cells
                    .entry(poi.coarse_cell.token.as_str())
                    .or_insert((&poi.coarse_cell, f64::NEG_INFINITY, 0));
                e.1 = e.1.max(rem_s / 60.0);
                e.2 += 1;
            }
        }
    }
    let mut entries: Vec<FeasibleEntry> = cells
        .into_values()
        .map(|(cell, best, count)| FeasibleEntry {
            coarse_cell: cell.clone(),
            best_remaining_min: best,
            poi_count: count,
            rank: 0,
        })
        .collect();
    // Stable sort on the token-ordered list breaks ties by token.
    entries.sort_by(|a, b| b.best_remaining_min.total_cmp(&a.best_remaining_min));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    FeasibleSet {
        person_id: person_id.to_string(),
        mode,
        t_hw_min,
        t_hw_fallback: false,
        a_i: entries.iter().map(|e| e.poi_count).sum(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaSummary {
    pub persons: usize,
    pub weighted_share_nonzero: f64,
    pub weighted_mean_log1p: f64,
    pub weighted_sd_log1p: f64,
    pub fallback_commutes: usize,
}

#[derive(Debug, Clone)]
pub struct SpaPopulation {
    pub sets: Vec<FeasibleSet>,
    /// Every work→POI and POI→home matrix computed on the way.
    pub matrices: Vec<TravelTimeMatrix>,
    pub summary: SpaSummary,
}

fn cell_places(index: &CellIndex, cells: &BTreeSet<&CellId>) -> Result<Vec<Place>, SpatialError> {
    cells
        .iter()
        .map(|c| Ok(Place::new(c.token.clone(), index.centroid(c)?)))
        .collect()
}

/// Routes and evaluates every person. Home and work anchors are routed from
/// their fine-cell centroids.
pub fn spa_population(
    persons: &[PersonRecord],
    pois: &[PoiSite],
    index: &CellIndex,
    nets: &Networks,
    budget: &BudgetSpec,
    policy: ModePolicy,
) -> Result<SpaPopulation, AccessError> {
    let modes: Vec<NetworkMode> = persons
        .iter()
        .map(|p| policy.mode_for(p.attributes.main_mode))
        .collect();
    let poi_places: Vec<Place> = pois.iter().map(|p| p.place.clone()).collect();
    let mut sets: Vec<Option<FeasibleSet>> = vec![None; persons.len()];
    let mut matrices = Vec::new();

    for mode in [NetworkMode::Car, NetworkMode::Transit] {
        let members: Vec<usize> = (0..persons.len()).filter(|&i| modes[i] == mode).collect();
        if members.is_empty() {
            continue;
        }
        let works: BTreeSet<&CellId> = members.iter().map(|&i| &persons[i].work_cell).collect();
        let homes: BTreeSet<&CellId> = members.iter().map(|&i| &persons[i].home_cell).collect();
        let work_places = cell_places(index, &works)?;
        let home_places = cell_places(index, &homes)?;
        let work_pos: HashMap<&str, usize> = works.iter().enumerate().map(|(i, c)| (c.token.as_str(), i)).collect();
        let home_pos: HashMap<&str, usize> = homes.iter().enumerate().map(|(i, c)| (c.token.as_str(), i)).collect();

        let wk = nets.matrices(mode, &work_places, &poi_places, budget.depart_s)?;
        let kh = nets.matrices(mode, &poi_places, &home_places, budget.depart_s)?;

        let commutes: Vec<Option<f64>> = members.iter().map(|&i| estimate_commute_time(&persons[i])).collect();
        let fallback_works: BTreeSet<&CellId> = members
            .iter()
            .zip(&commutes)
            .filter(|(_, c)| c.is_none())
            .map(|(&i, _)| &persons[i].work_cell)
            .collect();
        let wh: HashMap<String, TravelTimeMatrix> = if fallback_works.is_empty() {
            HashMap::new()
        } else {
            let origins = cell_places(index, &fallback_works)?;
            nets.matrices(mode, &origins, &home_places, budget.depart_s)?
                .into_iter()
                .map(|m| (m.origin_id.clone(), m))
                .collect()
        };

        let computed: Vec<(usize, FeasibleSet)> = members
            .par_iter()
            .zip(commutes.par_iter())
            .map(|(&i, commute)| {
                let p = &persons[i];
                let h = home_pos[p.home_cell.token.as_str()];
                let (t_hw, fallback) = match commute {
                    Some(t) => (Some(*t), false),
                    None => {
                        let row = &wh[p.work_cell.token.as_str()];
                        (row.travel_s[h].map(|s| s / 60.0), true)
                    }
                };
                let t_wk = &wk[work_pos[p.work_cell.token.as_str()]].travel_s;
                let t_kh: Vec<Option<f64>> = kh.iter().map(|m| m.travel_s[h]).collect();
                let mut set = compute_spa(&p.person_id, mode, t_hw, pois, t_wk, &t_kh, budget);
                set.t_hw_fallback = fallback;
                (i, set)
            })
            .collect();
        for (i, set) in computed {
            sets[i] = Some(set);
        }
        matrices.extend(wk);
        matrices.extend(kh);
    }

    let sets: Vec<FeasibleSet> = sets.into_iter().map(|s| s.expect("every person has a mode")).collect();
    let summary = summarize(persons, &sets);
    log::info!(
        "SPA for {} persons: weighted share A>0 = {:.3}, weighted mean log1p(A) = {:.3}, {} routed commute fallbacks",
        summary.persons,
        summary.weighted_share_nonzero,
        summary.weighted_mean_log1p,
        summary.fallback_commutes
    );
    Ok(SpaPopulation { sets, matrices, summary })
}

pub fn summarize(persons: &[PersonRecord], sets: &[FeasibleSet]) -> SpaSummary {
    let w: Vec<f64> = persons.iter().map(|p| p.weight).collect();
    let nonzero: Vec<f64> = sets.iter().map(|s| if s.a_i > 0 { 1.0 } else { 0.0 }).collect();
    let logs: Vec<f64> = sets.iter().map(FeasibleSet::log1p_a).collect();
    let (mean_log, sd_log) = weighted_mean_sd(&logs, &w);
    SpaSummary {
        persons: sets.len(),
        weighted_share_nonzero: weighted_mean_sd(&nonzero, &w).0,
        weighted_mean_log1p: mean_log,
        weighted_sd_log1p: sd_log,
        fallback_commutes: sets.iter().filter(|s| s.t_hw_fallback).count(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AccessError {
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}
