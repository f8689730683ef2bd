//! Synthetic cities, populations and travel diaries with known ground truth,
//! plus brute-force reference implementations for testing.

pub mod oracle;
mod pathsim;

use std::path::Path;
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::seq::index::sample;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::access::{poi_sites, spa_population, BudgetSpec, FeasibleSet, ModePolicy};
use crate::behavior::person_rng;
use crate::ingest::{
    self, attach_commutes, Attributes, Calendar, Education, Gender, GtfsBundle, HouseholdType, MainMode, ModeMask, PersonRecord,
    Poi, PoiCategory, RoadEdge, RoadGraphSource, RoadNode, Route, Stop, StopTime, TravelMode, Trip, TripPurpose,
    TripRecord,
};
use crate::router::{build_transit, Networks, RoadNetwork, RouterConfig, RouterError};
use crate::spatial::{CellId, CellIndex, HexMode, LatLon, LocalProjection, Resolution};

pub use pathsim::{simulate_path_data, vif_eight_data, ExoKind, ExogenousSpec, Noise, PathTruth, TruthEquation};

/// How leisure destinations are drawn from a person's feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum World {
    /// Uniformly without replacement.
    Null,
    /// Sequentially without replacement with weight `q^(rank-1)`.
    Selective { q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub date: NaiveDate,
    pub center_lat: f64,
    pub center_lon: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Street segment length; a multiple of 10 m keeps car seconds integral.
    pub spacing_m: f64,
    pub car_speed_kmh: f64,
    pub lines: usize,
    pub stop_every: usize,
    pub headway_s: u32,
    pub service_start_s: u32,
    pub service_end_s: u32,
    pub bus_speed_kmh: f64,
    pub dwell_s: u32,
    /// Every n-th departure gets a faster companion trip that leaves shortly
    /// after it and overtakes it along the line; 0 disables.
    pub express_every: usize,
    pub pois: usize,
    pub poi_clusters: usize,
    pub poi_spread_m: f64,
    pub poi_other_share: f64,
    pub persons: usize,
    pub car_share: f64,
    pub survey_days: usize,
    pub missing_commute_share: f64,
    pub world: World,
    pub max_visit_cells: usize,
    pub outside_visit_share: f64,
}

impl Default for SynthSpec {
    /// A desk-scale city: 12 × 12 streets, six bus lines, 300 POIs, 400 persons.
    fn default() -> Self {
        Self {
            seed: 20250701,
            date: NaiveDate::from_ymd_opt(2023, 3, 1).expect("valid date"),
            center_lat: 48.8566,
            center_lon: 2.3522,
            grid_rows: 12,
            grid_cols: 12,
            spacing_m: 400.0,
            car_speed_kmh: 36.0,
            lines: 6,
            stop_every: 2,
            headway_s: 600,
            service_start_s: 6 * 3600,
            service_end_s: 22 * 3600,
            bus_speed_kmh: 18.0,
            dwell_s: 20,
            express_every: 4,
            pois: 300,
            poi_clusters: 5,
            poi_spread_m: 900.0,
            poi_other_share: 0.2,
            persons: 400,
            car_share: 0.45,
            survey_days: 3,
            missing_commute_share: 0.05,
            world: World::Selective { q: 0.8 },
            max_visit_cells: 6,
            outside_visit_share: 0.1,
        }
    }
}

impl SynthSpec {
    /// A small city for oracle comparisons: 6 × 6 streets, evening service only.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            grid_rows: 6,
            grid_cols: 6,
            spacing_m: 500.0,
            lines: 3,
            stop_every: 1,
            headway_s: 900,
            service_start_s: 16 * 3600 + 30 * 60,
            service_end_s: 19 * 3600,
            express_every: 3,
            pois: 50,
            poi_clusters: 2,
            poi_spread_m: 700.0,
            persons: 6,
            ..Self::default()
        }
    }
}

/// Generated road graph, timetable and POIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCity {
    pub roads: RoadGraphSource,
    pub gtfs: GtfsBundle,
    pub pois: Vec<Poi>,
}

fn stage_rng(spec: &SynthSpec, stage: &str) -> ChaCha8Rng {
    person_rng(spec.seed, stage)
}

fn node_id(r: usize, c: usize) -> String {
    format!("n{r}_{c}")
}

/// Grid of bidirectional streets, bus lines along alternate rows and
/// columns with regular headways, and POIs clustered around a few centres.
pub fn gen_city(spec: &SynthSpec) -> SynthCity {
    let proj = LocalProjection::new(LatLon::new(spec.center_lat, spec.center_lon));
    let (rows, cols) = (spec.grid_rows, spec.grid_cols);
    let x0 = -(cols as f64 - 1.0) * spec.spacing_m / 2.0;
    let y0 = -(rows as f64 - 1.0) * spec.spacing_m / 2.0;
    let xy = |r: usize, c: usize| (x0 + c as f64 * spec.spacing_m, y0 + r as f64 * spec.spacing_m);
    let mut nodes = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = xy(r, c);
            let p = proj.inverse(x, y);
            nodes.push(RoadNode {
                id: node_id(r, c),
                lat: p.lat,
                lon: p.lon,
            });
        }
    }
    let mut edges = Vec::new();
    let mut street = |a: (usize, usize), b: (usize, usize)| {
        for (f, t) in [(a, b), (b, a)] {
            edges.push(RoadEdge {
                from: node_id(f.0, f.1),
                to: node_id(t.0, t.1),
                length_m: spec.spacing_m,
                speed_kmh: spec.car_speed_kmh,
                modes: ModeMask::BOTH,
            });
        }
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                street((r, c), (r, c + 1));
            }
            if r + 1 < rows {
                street((r, c), (r + 1, c));
            }
        }
    }

    let gtfs = gen_gtfs(spec, &nodes);
    let pois = gen_pois(spec, &proj, x0, y0);
    SynthCity {
        roads: RoadGraphSource { nodes, edges },
        gtfs,
        pois,
    }
}

fn gen_gtfs(spec: &SynthSpec, nodes: &[RoadNode]) -> GtfsBundle {
    let (rows, cols) = (spec.grid_rows, spec.grid_cols);
    let mut b = GtfsBundle {
        calendars: vec![Calendar {
            service_id: "weekday".into(),
            days: [true, true, true, true, true, false, false],
            start: spec.date,
            end: spec.date + Days::new(spec.survey_days as u64 + 30),
        }],
        ..Default::default()
    };
    let mut stop_ids = std::collections::BTreeSet::new();
    let run_s = (spec.spacing_m * spec.stop_every as f64 * 3.6 / spec.bus_speed_kmh).ceil() as u32;
    let express_run_s = (run_s as f64 * 0.6).ceil() as u32;
    for l in 0..spec.lines {
        // Even lines run along rows, odd lines along columns, spread across the grid.
        let horizontal = l % 2 == 0;
        let k = l / 2;
        let span = if horizontal { rows } else { cols };
        let n_per_axis = spec.lines.div_ceil(2).max(1);
        let fixed = ((k + 1) * span / (n_per_axis + 1)).min(span - 1);
        let len = if horizontal { cols } else { rows };
        let path: Vec<(usize, usize)> = (0..len)
            .step_by(spec.stop_every.max(1))
            .map(|i| if horizontal { (fixed, i) } else { (i, fixed) })
            .collect();
        if path.len() < 2 {
            continue;
        }
        let route_id = format!("L{l}");
        b.routes.push(Route {
            id: route_id.clone(),
            short_name: format!("{}", l + 1),
            route_type: 3,
        });
        for dir in 0..2 {
            let seq: Vec<(usize, usize)> = if dir == 0 { path.clone() } else { path.iter().rev().copied().collect() };
            let mut t0 = spec.service_start_s;
            let mut k_trip = 0usize;
            while t0 <= spec.service_end_s {
                let mut variants = vec![(t0, run_s, "")];
                if spec.express_every > 0 && k_trip % spec.express_every == 0 {
                    variants.push((t0 + run_s / 2, express_run_s, "x"));
                }
                for (start, run, tag) in variants {
                    let trip_id = format!("{route_id}_{dir}_{k_trip}{tag}");
                    b.trips.push(Trip {
                        id: trip_id.clone(),
                        route_id: route_id.clone(),
                        service_id: "weekday".into(),
                    });
                    let mut t = start;
                    for (i, &(r, c)) in seq.iter().enumerate() {
                        let arrival = t;
                        let departure = if i == 0 || i + 1 == seq.len() { t } else { t + spec.dwell_s };
                        let sid = format!("s{r}_{c}");
                        stop_ids.insert((sid.clone(), r, c));
                        b.stop_times.push(StopTime {
                            trip_id: trip_id.clone(),
                            stop_id: sid,
                            arrival,
                            departure,
                            sequence: i as u32 + 1,
                        });
                        t = departure + run;
                    }
                }
                t0 += spec.headway_s;
                k_trip += 1;
            }
        }
    }
    b.stops = stop_ids
        .into_iter()
        .map(|(id, r, c)| {
            let n = &nodes[r * cols + c];
            Stop {
                id,
                name: format!("Stop {r}-{c}"),
                lat: n.lat,
                lon: n.lon,
            }
        })
        .collect();
    b.stop_times.sort_by(|a, c| a.trip_id.cmp(&c.trip_id).then(a.sequence.cmp(&c.sequence)));
    b
}

fn gen_pois(spec: &SynthSpec, proj: &LocalProjection, x0: f64, y0: f64) -> Vec<Poi> {
    let mut rng = stage_rng(spec, "pois");
    let (w, h) = (-2.0 * x0, -2.0 * y0);
    let centres: Vec<(f64, f64)> = (0..spec.poi_clusters.max(1))
        .map(|_| (x0 + rng.random::<f64>() * w, y0 + rng.random::<f64>() * h))
        .collect();
    let spread = Normal::new(0.0, spec.poi_spread_m).expect("finite spread");
    (0..spec.pois)
        .map(|i| {
            let (cx, cy) = centres[rng.random_range(0..centres.len())];
            let x = (cx + spread.sample(&mut rng)).clamp(x0, -x0);
            let y = (cy + spread.sample(&mut rng)).clamp(y0, -y0);
            let p = proj.inverse(x, y);
            let category = if rng.random_bool(spec.poi_other_share) {
                PoiCategory::Other
            } else {
                PoiCategory::SocialLeisure
            };
            Poi {
                poi_id: format!("poi{i}"),
                lat: p.lat,
                lon: p.lon,
                category,
                confidence: (50.0 + rng.random::<f64>() * 50.0).round() / 100.0,
            }
        })
        .collect()
}

/// Routing setup shared by generation and the pipeline.
pub fn city_networks(city: &SynthCity, date: NaiveDate, config: &RouterConfig) -> Result<Networks, RouterError> {
    let roads = Arc::new(RoadNetwork::build(&city.roads)?);
    let transit = build_transit(&city.gtfs, roads.clone(), date, config)?;
    Ok(Networks {
        roads,
        transit: Some(transit),
        config: *config,
    })
}

pub fn city_index(city: &SynthCity, mode: HexMode) -> CellIndex {
    CellIndex::new(ingest::study_area(&city.roads, Some(&city.gtfs)).expect("non-empty city"), mode)
}

fn random_fine_cell(spec: &SynthSpec, index: &CellIndex, rng: &mut ChaCha8Rng) -> CellId {
    let proj = LocalProjection::new(LatLon::new(spec.center_lat, spec.center_lon));
    let hw = (spec.grid_cols as f64 - 1.0) * spec.spacing_m / 2.0;
    let hh = (spec.grid_rows as f64 - 1.0) * spec.spacing_m / 2.0;
    let p = proj.inverse((rng.random::<f64>() * 2.0 - 1.0) * hw, (rng.random::<f64>() * 2.0 - 1.0) * hh);
    index.bin_point(p, Resolution::Fine).expect("grid lies inside the study area")
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// Persons with random anchors and attributes, and their WORK/HOME commute
/// trips over the survey days.
pub fn gen_persons(spec: &SynthSpec, index: &CellIndex) -> (Vec<PersonRecord>, Vec<TripRecord>) {
    let mut rng = stage_rng(spec, "persons");
    let mut persons = Vec::with_capacity(spec.persons);
    let mut trips = Vec::new();
    let minutes_per_m = 60.0 / 1000.0 / 14.0 * 1.0;
    for i in 0..spec.persons {
        let person_id = format!("P{i:05}");
        let home_cell = random_fine_cell(spec, index, &mut rng);
        let work_cell = random_fine_cell(spec, index, &mut rng);
        let car = rng.random_bool(spec.car_share);
        let attributes = Attributes {
            household_type: pick(&mut rng, &HouseholdType::ALL),
            active_mode: rng.random_bool(0.3),
            main_mode: if car { MainMode::Car } else { MainMode::Transit },
            pt_subscription: rng.random_bool(if car { 0.25 } else { 0.8 }),
            education: pick(&mut rng, &Education::ALL),
            gender: if rng.random_bool(0.5) { Gender::Woman } else { Gender::Man },
            age: rng.random_range(18..80) as f64,
            poverty_rate: (rng.random::<f64>() * 30.0 * 10.0).round() / 10.0,
        };
        let weight = (rng.random::<f64>() * 1.5 + 0.5).mul_add(100.0, 0.0).round() / 100.0;
        let home_c = index.centroid(&home_cell).expect("known cell");
        let work_c = index.centroid(&work_cell).expect("known cell");
        let dist = crate::spatial::haversine_m(home_c, work_c);
        let mode = if car { TravelMode::Car } else { TravelMode::Transit };
        let commutes = !rng.random_bool(spec.missing_commute_share);
        for d in 0..spec.survey_days {
            let date = spec.date + Days::new(d as u64);
            let day_weight = if d == 0 { 2.0 } else { 1.0 };
            if commutes {
                let base = 8.0 + dist * minutes_per_m * if car { 1.0 } else { 1.6 };
                let noise = rng.random_range(-5..=10) as f64;
                let dur = (base + noise).max(3.0).round();
                trips.push(TripRecord {
                    person_id: person_id.clone(),
                    date,
                    origin_cell: home_cell.clone(),
                    dest_cell: work_cell.clone(),
                    mode,
                    purpose: TripPurpose::Work,
                    duration_min: dur,
                    depart_time: 8 * 3600 + rng.random_range(0..5400),
                    day_weight,
                });
                trips.push(TripRecord {
                    person_id: person_id.clone(),
                    date,
                    origin_cell: work_cell.clone(),
                    dest_cell: home_cell.clone(),
                    mode,
                    purpose: TripPurpose::Home,
                    duration_min: (dur + rng.random_range(0..10) as f64).round(),
                    depart_time: 17 * 3600 + rng.random_range(0..3600),
                    day_weight,
                });
            }
        }
        persons.push(PersonRecord {
            person_id,
            home_cell,
            work_cell,
            weight,
            attributes,
            commute_samples: Vec::new(),
        });
    }
    attach_commutes(&mut persons, &trips);
    (persons, trips)
}

/// A fine cell whose parent is `coarse`.
fn fine_in(index: &CellIndex, coarse: &CellId) -> CellId {
    let c = index.centroid(coarse).expect("known cell");
    let f = index.bin_point(c, Resolution::Fine).expect("inside study area");
    debug_assert_eq!(&index.parent(&f).expect("known"), coarse);
    f
}

/// LEISURE trips for every person: distinct cells drawn from the feasible set
/// according to `world`, some visited more than once, plus occasional visits
/// outside the set.
pub fn gen_diaries(
    spec: &SynthSpec,
    persons: &[PersonRecord],
    sets: &[FeasibleSet],
    index: &CellIndex,
) -> Vec<TripRecord> {
    let mut trips = Vec::new();
    for (p, set) in persons.iter().zip(sets) {
        let mut rng = person_rng(spec.seed ^ 0x5eed, &p.person_id);
        let mut cells: Vec<CellId> = Vec::new();
        let n = set.entries.len();
        if n > 0 {
            let k = rng.random_range(1..=spec.max_visit_cells.min(n).max(1));
            let chosen: Vec<usize> = match spec.world {
                World::Null => sample(&mut rng, n, k).into_vec(),
                World::Selective { q } => {
                    let mut left: Vec<usize> = (0..n).collect();
                    let mut out = Vec::with_capacity(k);
                    for _ in 0..k {
                        let ws: Vec<f64> = left.iter().map(|&i| q.powi(i as i32)).collect();
                        let total: f64 = ws.iter().sum();
                        let mut u = rng.random::<f64>() * total;
                        let mut j = 0;
                        while j + 1 < ws.len() && u >= ws[j] {
                            u -= ws[j];
                            j += 1;
                        }
                        out.push(left.remove(j));
                    }
                    out
                }
            };
            for i in chosen {
                let coarse = &set.entries[i].coarse_cell;
                for _ in 0..rng.random_range(1..=3) {
                    cells.push(fine_in(index, coarse));
                }
            }
        }
        if n == 0 || rng.random_bool(spec.outside_visit_share) {
            let f = random_fine_cell(spec, index, &mut rng);
            let coarse = index.parent(&f).expect("known");
            if n == 0 || set.rank_of(&coarse).is_none() {
                cells.push(f);
            }
        }
        for (j, cell) in cells.into_iter().enumerate() {
            let date = spec.date + Days::new((j % spec.survey_days.max(1)) as u64);
            trips.push(TripRecord {
                person_id: p.person_id.clone(),
                date,
                origin_cell: p.work_cell.clone(),
                dest_cell: cell,
                mode: if p.attributes.main_mode == MainMode::Car {
                    TravelMode::Car
                } else {
                    TravelMode::Transit
                },
                purpose: TripPurpose::Leisure,
                duration_min: rng.random_range(5..40) as f64,
                depart_time: 17 * 3600 + 60 * rng.random_range(0..120),
                day_weight: if j % spec.survey_days.max(1) == 0 { 2.0 } else { 1.0 },
            });
        }
    }
    trips
}

#[derive(Debug, Clone)]
pub struct SynthPopulation {
    pub persons: Vec<PersonRecord>,
    pub trips: Vec<TripRecord>,
    /// Feasible sets the diaries were drawn from.
    pub sets: Vec<FeasibleSet>,
}

/// Persons, their feasible sets under the default budget, and diaries drawn
/// from those sets.
pub fn gen_population(
    spec: &SynthSpec,
    city: &SynthCity,
    index: &CellIndex,
    nets: &Networks,
    confidence_threshold: f64,
) -> Result<SynthPopulation, crate::access::AccessError> {
    let (persons, mut trips) = gen_persons(spec, index);
    let kept: Vec<Poi> = city
        .pois
        .iter()
        .filter(|p| p.category == PoiCategory::SocialLeisure && p.confidence > confidence_threshold)
        .cloned()
        .collect();
    let sites = poi_sites(&kept, index)?;
    let spa = spa_population(&persons, &sites, index, nets, &BudgetSpec::default(), ModePolicy::PersonMainMode)?;
    trips.extend(gen_diaries(spec, &persons, &spa.sets, index));
    trips.sort_by(|a, b| {
        a.person_id
            .cmp(&b.person_id)
            .then(a.date.cmp(&b.date))
            .then(a.depart_time.cmp(&b.depart_time))
    });
    Ok(SynthPopulation {
        persons,
        trips,
        sets: spa.sets,
    })
}

/// Writes a complete input directory: `gtfs/`, road tables, POIs, persons,
/// trips, and the spec itself as `synth_spec.toml`.
pub fn write_inputs(dir: &Path, spec: &SynthSpec, city: &SynthCity, pop: &SynthPopulation) -> std::io::Result<()> {
    let io = |e: ingest::IngestError| std::io::Error::other(e.to_string());
    std::fs::create_dir_all(dir.join("gtfs"))?;
    ingest::write_gtfs(&city.gtfs, &dir.join("gtfs")).map_err(io)?;
    ingest::write_roads(&city.roads, &dir.join("roads_nodes.csv"), &dir.join("roads_edges.csv")).map_err(io)?;
    ingest::write_pois(&city.pois, &dir.join("pois.csv")).map_err(io)?;
    ingest::write_persons(&pop.persons, &dir.join("persons.csv")).map_err(io)?;
    ingest::write_trips(&pop.trips, &dir.join("trips.csv")).map_err(io)?;
    let text = toml::to_string(spec).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("synth_spec.toml"), text)
}
