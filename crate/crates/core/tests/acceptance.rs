//! Acceptance suite: one check per release criterion, each against an
//! independent reference (closed form, enumeration, brute-force router or
//! known generating parameters). Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::RngExt;
use rayon::prelude::*;
use spacetime_core::access::{compute_spa, spa_population, poi_sites, BudgetSpec, FeasibleSet, ModePolicy, PoiSite};
use spacetime_core::behavior::{hill_diversity, person_rng, selectivity_test, SelectivityStatus, VisitSet};
use spacetime_core::ingest::{GtfsBundle, MainMode, PersonRecord, PoiCategory, RoadGraphSource};
use spacetime_core::pathmodel::{
    decompose_effects, fit_paths, vif_prune, Regression, EXPOSURE_VAR, MEDIATOR_VAR, MODE_VARS, OUTCOME_VAR,
};
use spacetime_core::pipeline::{self, load_synth_spec, run_pipeline, synthesize};
use spacetime_core::router::{transit_travel_time, NetworkMode, Place, RouterConfig};
use spacetime_core::spatial::{CellId, CellIndex, HexMode, LatLon, Resolution};
use spacetime_core::synth::oracle::{
    exact_rank_sum_cdf, expansion_median, oracle_car, oracle_spa, TransitOracle,
};
use spacetime_core::synth::{
    city_index, city_networks, gen_city, gen_population, simulate_path_data, vif_eight_data, PathTruth, SynthSpec,
    World,
};

/// Outcome of one criterion.
struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn coarse(i: usize) -> CellId {
    CellId {
        resolution: Resolution::Coarse,
        token: format!("C{i}_0"),
    }
}

// 1. Effect decomposition.

fn decomposition() -> Verdict {
    let eqs = [
        Regression::from_standardized(MEDIATOR_VAR, &[(EXPOSURE_VAR, -0.37, 0.0)]),
        Regression::from_standardized(OUTCOME_VAR, &[(EXPOSURE_VAR, 0.13, 0.0), (MEDIATOR_VAR, 0.23, 0.0)]),
    ];
    let r = decompose_effects(&eqs, EXPOSURE_VAR, OUTCOME_VAR).expect("paths exist");
    // Closed form: indirect = a * b, total = c + a * b.
    let (want_ind, want_tot) = (-0.0851, 0.0449);
    let ok = (r.indirect - want_ind).abs() <= 1e-6 && (r.total - want_tot).abs() <= 1e-6;
    Verdict::new(ok, format!("indirect {:.6}, total {:.6}", r.indirect, r.total))
}

// 2. SPA against the whole-second oracle on seeded cities.

fn spa_city_spec(seed: u64) -> (SynthSpec, BudgetSpec) {
    let mut rng = person_rng(seed, "acceptance/spa-city");
    let rows = rng.random_range(4..=9);
    let spec = SynthSpec {
        seed,
        grid_rows: rows,
        grid_cols: rng.random_range(4..=9),
        spacing_m: [300.0, 400.0, 500.0][rng.random_range(0..3)],
        lines: rng.random_range(1..=4),
        stop_every: rng.random_range(1..=2),
        headway_s: [300, 600, 900, 1200][rng.random_range(0..4)],
        service_start_s: 16 * 3600,
        service_end_s: 19 * 3600 + 30 * 60,
        express_every: rng.random_range(0..=3),
        pois: rng.random_range(20..=200),
        poi_clusters: rng.random_range(1..=4),
        poi_spread_m: 600.0,
        persons: 24,
        missing_commute_share: 0.2,
        ..SynthSpec::default()
    };
    let tb = [20.0, 30.0, 45.0, 60.0, 90.0][rng.random_range(0..5)];
    let depart = 16 * 3600 + 30 * 60 + 60 * rng.random_range(0..90u32);
    (spec, BudgetSpec::new(tb, depart))
}

fn whole_seconds(v: Option<f64>) -> Option<i64> {
    v.map(|s| {
        assert_eq!(s, s.round(), "leg times are whole seconds");
        s as i64
    })
}

/// Oracle leg times, computed once per origin and mode.
struct OracleLegs<'a> {
    roads: &'a RoadGraphSource,
    transit: TransitOracle<'a>,
    config: RouterConfig,
    depart: u32,
    poi_xy: Vec<LatLon>,
    homes: Vec<LatLon>,
    /// POI → every home, per mode.
    to_home: HashMap<(NetworkMode, usize), Vec<Option<i64>>>,
    /// Work cell → every POI, and work cell → every home.
    from_work: HashMap<(NetworkMode, String), (Vec<Option<i64>>, Vec<Option<i64>>)>,
}

impl OracleLegs<'_> {
    fn row(&self, mode: NetworkMode, from: LatLon, to: &[LatLon]) -> Vec<Option<i64>> {
        let row = match mode {
            NetworkMode::Car => oracle_car(self.roads, &self.config, from, to),
            NetworkMode::Transit => self.transit.query(from, to, self.depart),
        };
        row.into_iter().map(whole_seconds).collect()
    }

    fn kh(&mut self, mode: NetworkMode, poi: usize, home: usize) -> Option<i64> {
        if !self.to_home.contains_key(&(mode, poi)) {
            let r = self.row(mode, self.poi_xy[poi], &self.homes);
            self.to_home.insert((mode, poi), r);
        }
        self.to_home[&(mode, poi)][home]
    }

    fn work(&mut self, mode: NetworkMode, token: &str, at: LatLon) -> &(Vec<Option<i64>>, Vec<Option<i64>>) {
        let key = (mode, token.to_string());
        if !self.from_work.contains_key(&key) {
            let rows = (self.row(mode, at, &self.poi_xy), self.row(mode, at, &self.homes));
            self.from_work.insert(key.clone(), rows);
        }
        &self.from_work[&key]
    }
}

/// Returns the number of persons compared, or a description of the first mismatch.
fn spa_city(seed: u64) -> Result<usize, String> {
    let (spec, budget) = spa_city_spec(seed);
    let city = gen_city(&spec);
    assert!(city.gtfs.stops.len() <= 300 && city.pois.len() <= 500);
    let config = RouterConfig::default();
    let index = city_index(&city, HexMode::Lattice);
    let nets = city_networks(&city, spec.date, &config).map_err(|e| e.to_string())?;
    let pop = gen_population(&spec, &city, &index, &nets, 0.7).map_err(|e| e.to_string())?;
    let leisure: Vec<_> = city
        .pois
        .iter()
        .filter(|p| p.category == PoiCategory::SocialLeisure && p.confidence > 0.7)
        .cloned()
        .collect();
    let sites = poi_sites(&leisure, &index).map_err(|e| e.to_string())?;
    let got = spa_population(&pop.persons, &sites, &index, &nets, &budget, ModePolicy::PersonMainMode)
        .map_err(|e| e.to_string())?;

    let home_cells: Vec<&CellId> = pop.persons.iter().map(|p| &p.home_cell).collect();
    let mut legs = OracleLegs {
        roads: &city.roads,
        transit: TransitOracle::new(&city.roads, &city.gtfs, spec.date, &config),
        config,
        depart: budget.depart_s,
        poi_xy: sites.iter().map(|s| s.place.coord).collect(),
        homes: home_cells.iter().map(|c| index.centroid(c).expect("home cell")).collect(),
        to_home: HashMap::new(),
        from_work: HashMap::new(),
    };
    let poi_cells: Vec<CellId> = sites.iter().map(|s| s.coarse_cell.clone()).collect();
    for (h, (p, set)) in pop.persons.iter().zip(&got.sets).enumerate() {
        let want = oracle_person(p, h, &mut legs, &index, &poi_cells, &budget);
        compare_sets(set, &want).map_err(|e| format!("city {seed}, {}: {e}", p.person_id))?;
    }
    Ok(pop.persons.len())
}

struct OracleSet {
    cells: Vec<spacetime_core::synth::oracle::OracleCell>,
    a: usize,
}

/// `home` indexes the person's own home in `legs.homes`.
fn oracle_person(
    p: &PersonRecord,
    home: usize,
    legs: &mut OracleLegs,
    index: &CellIndex,
    poi_cells: &[CellId],
    budget: &BudgetSpec,
) -> OracleSet {
    let mode = match p.attributes.main_mode {
        MainMode::Car => NetworkMode::Car,
        MainMode::Transit => NetworkMode::Transit,
    };
    let work = index.centroid(&p.work_cell).expect("work cell");
    let samples: Vec<(f64, u32)> = p
        .commute_samples
        .iter()
        .map(|s| {
            assert_eq!(s.day_weight, s.day_weight.round());
            (s.duration_min, s.day_weight as u32)
        })
        .collect();
    let (t_wk, t_wh) = legs.work(mode, &p.work_cell.token, work).clone();
    let t_hw_s = match expansion_median(&samples) {
        Some(m) => Some((m * 60.0).round() as i64),
        None => t_wh[home],
    };
    let Some(t_hw_s) = t_hw_s else {
        return OracleSet { cells: Vec::new(), a: 0 };
    };
    let t_kh: Vec<Option<i64>> = (0..poi_cells.len()).map(|k| legs.kh(mode, k, home)).collect();
    let (cells, a) = oracle_spa((budget.tb_min * 60.0).round() as i64, t_hw_s, poi_cells, &t_wk, &t_kh);
    OracleSet { cells, a }
}

fn compare_sets(got: &FeasibleSet, want: &OracleSet) -> Result<(), String> {
    if got.a_i != want.a {
        return Err(format!("A_i {} vs oracle {}", got.a_i, want.a));
    }
    if got.entries.len() != want.cells.len() {
        return Err(format!("{} cells vs oracle {}", got.entries.len(), want.cells.len()));
    }
    for (g, w) in got.entries.iter().zip(&want.cells) {
        let best_s = (g.best_remaining_min * 60.0).round() as i64;
        if g.coarse_cell.token != w.token || g.rank != w.rank || g.poi_count != w.poi_count || best_s != w.best_remaining_s
        {
            return Err(format!("cell {:?} vs oracle {:?}", g, w));
        }
    }
    Ok(())
}

fn spa_oracle() -> Verdict {
    let results: Vec<Result<usize, String>> = (0..100u64).into_par_iter().map(spa_city).collect();
    let persons: usize = results.iter().filter_map(|r| r.as_ref().ok()).sum();
    match results.iter().find_map(|r| r.as_ref().err()) {
        None => Verdict::new(true, format!("100 cities, {persons} persons identical")),
        Some(e) => Verdict::new(false, e.clone()),
    }
}

// 3. RAPTOR against the time-expanded oracle.

/// A three-stop line where a fast trip leaves after a slow one and
/// overtakes it, a later trip connecting at the middle stop, and an explicit
/// change time there.
fn overtaking_fixture() -> (RoadGraphSource, GtfsBundle) {
    use spacetime_core::ingest::{Calendar, ModeMask, RoadEdge, RoadNode, Route, Stop, StopTime, Transfer, Trip};
    let date = chrono::NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    let nodes: Vec<RoadNode> = (0..3)
        .map(|i| RoadNode {
            id: format!("n{i}"),
            lat: 48.85 + 0.01 * i as f64,
            lon: 2.35,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..2 {
        for (a, b) in [(i, i + 1), (i + 1, i)] {
            edges.push(RoadEdge {
                from: format!("n{a}"),
                to: format!("n{b}"),
                length_m: 1110.0,
                speed_kmh: 30.0,
                modes: ModeMask::BOTH,
            });
        }
    }
    let names = ["A", "B", "C"];
    let h = 17 * 3600;
    let trips: [(&str, &[(usize, u32, u32)]); 5] = [
        ("slow", &[(0, h, h), (1, h + 900, h + 960), (2, h + 1800, h + 1800)]),
        ("fast", &[(0, h + 60, h + 60), (1, h + 400, h + 400), (2, h + 700, h + 700)]),
        ("next", &[(0, h + 120, h + 120), (1, h + 960, h + 1000), (2, h + 1900, h + 1900)]),
        ("late", &[(0, h + 3600, h + 3600), (1, h + 4000, h + 4000), (2, h + 4400, h + 4400)]),
        ("back", &[(2, h + 800, h + 800), (1, h + 1100, h + 1100), (0, h + 1400, h + 1400)]),
    ];
    let mut gtfs = GtfsBundle {
        stops: (0..3)
            .map(|i| Stop {
                id: names[i].into(),
                name: String::new(),
                lat: 48.85 + 0.01 * i as f64,
                lon: 2.35,
            })
            .collect(),
        routes: vec![Route {
            id: "r".into(),
            short_name: "1".into(),
            route_type: 3,
        }],
        calendars: vec![Calendar {
            service_id: "wk".into(),
            days: [true; 7],
            start: date,
            end: date,
        }],
        transfers: vec![Transfer {
            from_stop: "B".into(),
            to_stop: "B".into(),
            min_transfer_s: 90,
        }],
        ..Default::default()
    };
    for (id, events) in trips {
        gtfs.trips.push(Trip {
            id: id.into(),
            route_id: "r".into(),
            service_id: "wk".into(),
        });
        for (k, &(s, arr, dep)) in events.iter().enumerate() {
            gtfs.stop_times.push(StopTime {
                trip_id: id.into(),
                stop_id: names[s].into(),
                arrival: arr,
                departure: dep,
                sequence: k as u32 + 1,
            });
        }
    }
    gtfs.stop_times.sort_by(|a, b| a.trip_id.cmp(&b.trip_id).then(a.sequence.cmp(&b.sequence)));
    (RoadGraphSource { nodes, edges }, gtfs)
}

/// Compares every origin/destination pair at every departure; returns the
/// number of pairs or the first mismatch.
fn compare_transit(
    name: &str,
    roads: &RoadGraphSource,
    gtfs: &GtfsBundle,
    places: &[Place],
    departs: &[u32],
    config: &RouterConfig,
) -> Result<usize, String> {
    let date = chrono::NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    let road_net = std::sync::Arc::new(spacetime_core::router::RoadNetwork::build(roads).map_err(|e| e.to_string())?);
    let net = spacetime_core::router::build_transit(gtfs, road_net, date, config).map_err(|e| e.to_string())?;
    let oracle = TransitOracle::new(roads, gtfs, date, config);
    let coords: Vec<LatLon> = places.iter().map(|p| p.coord).collect();
    let mut pairs = 0;
    for o in places {
        for &d in departs {
            let fast = transit_travel_time(&net, o, places, d).travel_s;
            let slow = oracle.query(o.coord, &coords, d);
            if fast != slow {
                return Err(format!("{name}: from {} at {d}: {fast:?} vs {slow:?}", o.id));
            }
            pairs += places.len();
        }
    }
    Ok(pairs)
}

fn transit_oracle() -> Verdict {
    let h = 17 * 3600;
    let departs = [h - 600, h, h + 30, h + 61, h + 420, h + 1200, h + 3000];
    let (roads, gtfs) = overtaking_fixture();
    let places: Vec<Place> = (0..3)
        .map(|i| Place::new(format!("p{i}"), LatLon::new(48.85 + 0.01 * i as f64, 2.35)))
        .collect();
    let mut total = 0;
    let mut fixtures = 0;
    let mut check = |r: Result<usize, String>| -> Result<(), String> {
        total += r?;
        fixtures += 1;
        Ok(())
    };
    let result = (|| {
        for walk in [0.0, 1200.0, 2500.0] {
            for max_transfers in [0, 1, 3] {
                let cfg = RouterConfig {
                    walk_radius_m: walk,
                    max_transfers,
                    ..Default::default()
                };
                check(compare_transit("overtaking line", &roads, &gtfs, &places, &departs, &cfg))?;
            }
        }
        for seed in 0..8u64 {
            let spec = SynthSpec {
                express_every: 1 + seed as usize % 3,
                ..SynthSpec::small(100 + seed)
            };
            let city = gen_city(&spec);
            let places: Vec<Place> = city
                .pois
                .iter()
                .take(14)
                .map(|p| Place::new(p.poi_id.clone(), p.coord()))
                .collect();
            let d = [h - 300, h, h + 7 * 60, h + 23 * 60 + 11, h + 50 * 60];
            check(compare_transit(
                &format!("synthetic city {seed}"),
                &city.roads,
                &city.gtfs,
                &places,
                &d,
                &RouterConfig::default(),
            ))?;
        }
        Ok::<(), String>(())
    })();
    match result {
        Ok(()) => Verdict::new(true, format!("{fixtures} fixtures, {total} pairs identical to the second")),
        Err(e) => Verdict::new(false, e),
    }
}

// 4. Selectivity.

fn ranked(n: usize, id: &str) -> FeasibleSet {
    FeasibleSet {
        person_id: id.into(),
        mode: NetworkMode::Car,
        t_hw_min: Some(30.0),
        t_hw_fallback: false,
        entries: (1..=n)
            .map(|r| spacetime_core::access::FeasibleEntry {
                coarse_cell: coarse(r),
                best_remaining_min: (n - r) as f64,
                poi_count: 1,
                rank: r,
            })
            .collect(),
        a_i: n,
    }
}

fn selectivity() -> Verdict {
    const B: usize = 1000;
    // (a) small sets: for each N and k, the top, bottom and an alternating subset of ranks.
    let mut cases = 0;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for n in 2..=8usize {
        for k in 1..=n {
            let subsets: [Vec<usize>; 3] = [
                (1..=k).collect(),
                (n - k + 1..=n).collect(),
                (0..k).map(|i| 1 + (2 * i) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect(),
            ];
            for (j, ranks) in subsets.iter().enumerate() {
                let id = format!("n{n}k{k}s{j}");
                let visits = VisitSet::from_cells(&id, ranks.iter().map(|&r| coarse(r)));
                let r = selectivity_test(&ranked(n, &id), &visits, B, 4242).expect("testable");
                let kk = r.k_i;
                let sum: usize = ranks.iter().sum();
                let exact = exact_rank_sum_cdf(n, kk, sum as u64);
                let count = r.p_value.unwrap() * (B + 1) as f64 - 1.0;
                let sd = (B as f64 * exact * (1.0 - exact)).sqrt();
                let z = if sd > 0.0 { (count - B as f64 * exact).abs() / sd } else { (count - B as f64 * exact).abs() * 1e9 };
                worst = worst.max(z);
                if z > 3.0 {
                    failures.push(format!("{id}: p {:.4} vs exact {exact:.4}", r.p_value.unwrap()));
                }
                cases += 1;
            }
        }
    }
    // (b) null world: visits drawn uniformly from each feasible set.
    let spec = SynthSpec {
        persons: 1300,
        world: World::Null,
        outside_visit_share: 0.0,
        ..SynthSpec::default()
    };
    let city = gen_city(&spec);
    let index = city_index(&city, HexMode::Lattice);
    let nets = city_networks(&city, spec.date, &RouterConfig::default()).expect("networks");
    let pop = gen_population(&spec, &city, &index, &nets, 0.7).expect("population");
    let visits = spacetime_core::behavior::leisure_visits(&pop.trips, &index, spacetime_core::behavior::Granularity::Coarse)
        .expect("visits");
    let tested: Vec<f64> = spacetime_core::behavior::selectivity_population(&pop.sets, &visits, B, 9)
        .into_iter()
        .filter(|r| r.status == SelectivityStatus::Tested)
        .filter_map(|r| r.p_value)
        .collect();
    let frac = tested.iter().filter(|&&p| p < 0.05).count() as f64 / tested.len() as f64;
    let null_ok = tested.len() >= 1000 && (frac - 0.05).abs() <= 0.02;
    // (c) visits at the very top of a large set: no null draw beats them.
    let top = VisitSet::from_cells("top", (1..=6).map(coarse));
    let r = selectivity_test(&ranked(60, "top"), &top, B, 1).expect("testable");
    let min_ok = r.p_value == Some(1.0 / (B + 1) as f64);
    let detail = format!(
        "(a) {cases} cases, max |z| {worst:.2}{}; (b) {} persons, share p<0.05 {frac:.4}; (c) min p {:.6}",
        if failures.is_empty() { String::new() } else { format!(", off: {}", failures.join(", ")) },
        tested.len(),
        r.p_value.unwrap_or(f64::NAN)
    );
    Verdict::new(failures.is_empty() && null_ok && min_ok, detail)
}

// 5. Diversity.

fn diversity() -> Verdict {
    let single = hill_diversity(&VisitSet::from_cells("s", vec![coarse(1); 7])).unwrap();
    let mut uniform_ok = true;
    for k in 1..=30 {
        let v = VisitSet::from_cells("u", (1..=k).flat_map(|c| vec![coarse(c); 3]));
        uniform_ok &= (hill_diversity(&v).unwrap() - k as f64).abs() < 1e-9;
    }
    let mut rng = person_rng(5, "acceptance/diversity");
    let mut bounded = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..=25usize);
        let cells: Vec<CellId> = (1..=k)
            .flat_map(|c| vec![coarse(c); rng.random_range(1..=20usize)])
            .collect();
        let h = hill_diversity(&VisitSet::from_cells("r", cells)).unwrap();
        if h >= 1.0 - 1e-12 && h <= k as f64 + 1e-9 {
            bounded += 1;
        }
    }
    let v = VisitSet::from_cells("x", [coarse(1), coarse(1), coarse(2), coarse(3)]);
    let h211 = hill_diversity(&v).unwrap();
    let ok = (single - 1.0).abs() < 1e-12 && uniform_ok && bounded == 10_000 && (h211 - 2.8284).abs() <= 1e-4;
    Verdict::new(
        ok,
        format!("single {single}, uniform K=1..30 {uniform_ok}, bounded {bounded}/10000, (2,1,1) {h211:.6}"),
    )
}

// 6. Path-model recovery.

fn path_recovery() -> Verdict {
    let truth = PathTruth::default();
    let dag = truth.standard_dag();
    let target = truth.standardized();
    let fits: Vec<BTreeMap<(String, String), (f64, f64)>> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let data = simulate_path_data(&truth, 5000, 1000 + seed);
            let fit = fit_paths(&dag, &data).expect("fit");
            fit.equations
                .iter()
                .flat_map(|eq| {
                    eq.coefficients
                        .iter()
                        .map(|c| ((eq.outcome.clone(), c.predictor.clone()), (c.std_estimate, c.std_se)))
                })
                .collect()
        })
        .collect();
    let mut worst_bias = 0.0f64;
    let mut worst_cover = 1.0f64;
    let mut worst_name = String::new();
    let mut cover_sum = 0.0;
    let mut below = 0;
    for (outcome, predictor, beta) in &target {
        let key = (outcome.clone(), predictor.clone());
        let mut abs_err = 0.0;
        let mut covered = 0;
        for f in &fits {
            let (est, se) = f[&key];
            abs_err += (est - beta).abs();
            if (est - beta).abs() <= 1.959_963_984_540_054 * se {
                covered += 1;
            }
        }
        let bias = abs_err / fits.len() as f64;
        let cover = covered as f64 / fits.len() as f64;
        cover_sum += cover;
        if cover < 0.90 {
            below += 1;
        }
        if bias > worst_bias {
            worst_bias = bias;
        }
        if cover < worst_cover {
            worst_cover = cover;
            worst_name = format!("{predictor}->{outcome}");
        }
    }
    // Saturated: link the two mode variables, leaving no degrees of freedom.
    let mut sat = dag.clone();
    sat.add_edge(MODE_VARS[0], MODE_VARS[1]).expect("known vars");
    let data = simulate_path_data(&truth, 5000, 77);
    let sat_fit = fit_paths(&sat, &data).expect("fit");
    let srmr = sat_fit.fit.srmr;
    let vif_data = vif_eight_data(5000, 3);
    let vif = vif_prune(&["x1", "x2", "age"], &vif_data, 7.0, 0.005).expect("prune");
    let dropped: Vec<&str> = vif.dropped.iter().map(|d| d.name.as_str()).collect();
    let ok = worst_bias < 0.02 && worst_cover >= 0.90 && srmr.abs() <= 1e-9 && sat_fit.fit.df == 0 && dropped == ["age"];
    Verdict::new(
        ok,
        format!(
            "{} coefficients, max mean |bias| {worst_bias:.4}, min coverage {worst_cover:.2} ({worst_name}), mean coverage {:.3}, {below} below 0.90, saturated SRMR {srmr:.1e}, VIF dropped {dropped:?}",
            target.len(),
            cover_sum / target.len() as f64
        ),
    )
}

// 7. Monotonicity.

fn monotonicity() -> Verdict {
    let mut rng = person_rng(7, "acceptance/monotone");
    let mut shrinks = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=60usize);
        let sites: Vec<PoiSite> = (0..n)
            .map(|k| PoiSite {
                poi_id: format!("k{k}"),
                place: Place::new(format!("k{k}"), LatLon::new(48.85, 2.35)),
                coarse_cell: coarse(rng.random_range(0..12usize)),
            })
            .collect();
        let leg = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<f64> {
            (rng.random_range(0.0..1.0) > 0.1).then(|| rng.random_range(0..4000u32) as f64)
        };
        let wk: Vec<Option<f64>> = (0..n).map(|_| leg(&mut rng)).collect();
        let kh: Vec<Option<f64>> = (0..n).map(|_| leg(&mut rng)).collect();
        let t_hw = Some(rng.random_range(0..120u32) as f64 / 2.0);
        let tb1 = rng.random_range(1.0..180.0);
        let tb2 = tb1 + rng.random_range(0.0..120.0);
        let small = compute_spa("p", NetworkMode::Car, t_hw, &sites, &wk, &kh, &BudgetSpec::new(tb1, 61200));
        let large = compute_spa("p", NetworkMode::Car, t_hw, &sites, &wk, &kh, &BudgetSpec::new(tb2, 61200));
        let contained = small.entries.iter().all(|e| large.rank_of(&e.coarse_cell).is_some());
        if !(contained && small.a_i <= large.a_i) {
            shrinks += 1;
            eprintln!("budget case {case}: tb {tb1} -> {tb2} shrinks the set");
        }
    }
    let cities: Vec<_> = (0..4u64)
        .map(|s| {
            let spec = SynthSpec::small(300 + s);
            let city = gen_city(&spec);
            let nets = city_networks(&city, spec.date, &RouterConfig::default()).expect("networks");
            let bbox = city_index(&city, HexMode::Lattice).bbox().clone();
            (city, nets, bbox)
        })
        .collect();
    let mut earlier = 0;
    let mut reachable = 0;
    for case in 0..1000 {
        let (_, nets, bbox) = &cities[case % cities.len()];
        let mut pt = || {
            LatLon::new(
                rng.random_range(bbox.min_lat..bbox.max_lat),
                rng.random_range(bbox.min_lon..bbox.max_lon),
            )
        };
        let o = Place::new("o", pt());
        let d = Place::new("d", pt());
        let t1 = rng.random_range(16 * 3600..19 * 3600u32);
        let t2 = t1 + rng.random_range(1..=1800u32);
        let net = nets.transit.as_ref().expect("transit");
        let a1 = transit_travel_time(net, &o, std::slice::from_ref(&d), t1).travel_s[0].map(|s| t1 as f64 + s);
        let a2 = transit_travel_time(net, &o, std::slice::from_ref(&d), t2).travel_s[0].map(|s| t2 as f64 + s);
        match (a1, a2) {
            (Some(x), Some(y)) if y < x => earlier += 1,
            (None, Some(_)) => earlier += 1,
            _ => {}
        }
        reachable += a2.is_some() as usize;
    }
    Verdict::new(
        shrinks == 0 && earlier == 0,
        format!("1000 budget cases, {shrinks} shrink; 1000 departure cases ({reachable} reachable), {earlier} arrive earlier"),
    )
}

// 8. Reproducible end-to-end run.

fn bundled_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk_city.toml")
}

fn output_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("out dir")
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            (name.ends_with(".csv") || name.ends_with(".geojson")).then(|| {
                let bytes = std::fs::read(dir.join(&name)).expect("readable");
                (name, bytes)
            })
        })
        .collect()
}

fn reproducible_run() -> Verdict {
    let spec = load_synth_spec(&bundled_spec()).expect("bundled spec");
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut outputs = Vec::new();
    let mut slowest = Duration::ZERO;
    for (run, workers) in [("a", 1), ("b", 0)] {
        let start = Instant::now();
        let mut cfg = synthesize(&spec, &tmp.path().join(run).join("inputs")).expect("synthesize");
        cfg.out_dir = tmp.path().join(run).join("out");
        cfg.workers = workers;
        let out = run_pipeline(&cfg).expect("pipeline");
        slowest = slowest.max(start.elapsed());
        outputs.push(output_files(&out));
        outputs.push(output_files(&tmp.path().join(run).join("inputs")));
    }
    let same_out = outputs[0] == outputs[2];
    let same_in = outputs[1] == outputs[3];
    let files = outputs[0].len();
    let ok = same_out && same_in && files >= 9 && slowest < Duration::from_secs(300);
    Verdict::new(
        ok,
        format!(
            "{files} output files identical: {same_out}, inputs identical: {same_in}, slowest run {:.2}s",
            slowest.as_secs_f64()
        ),
    )
}

fn main() {
    let _ = pipeline::FAILURE_SENTINEL;
    let criteria: [(&str, u64, fn() -> Verdict); 8] = [
        ("effect decomposition", 1, decomposition),
        ("SPA equals oracle on 100 cities", 120, spa_oracle),
        ("transit equals time-expanded Dijkstra", 60, transit_oracle),
        ("selectivity p-values", 180, selectivity),
        ("Hill diversity", 10, diversity),
        ("path-model recovery", 300, path_recovery),
        ("monotonicity", 60, monotonicity),
        ("reproducible run", 300, reproducible_run),
    ];
    let mut failed = 0;
    for (i, (name, limit_s, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*limit_s);
        let pass = v.passed && in_time;
        failed += !pass as usize;
        println!(
            "criterion {} [{}] {name}: {} ({:.2}s of {limit_s}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
