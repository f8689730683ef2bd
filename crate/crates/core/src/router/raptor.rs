use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::NaiveDate;

use super::road::{dijkstra, RoadNetwork, SearchScratch};
use super::{NetworkMode, Place, RouterConfig, RouterError, TravelTimeMatrix};
use crate::ingest::GtfsBundle;

const INF: u32 = u32::MAX;

/// Trips sharing one stop sequence, ordered so that no trip overtakes another.
#[derive(Debug, Clone)]
pub struct CompiledRoute {
    pub stops: Vec<usize>,
    pub trip_ids: Vec<String>,
    /// (arrival, departure) per trip, row-major by trip then stop position.
    times: Vec<(u32, u32)>,
}

impl CompiledRoute {
    fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn trip_count(&self) -> usize {
        self.trip_ids.len()
    }

    pub fn arrival(&self, trip: usize, pos: usize) -> u32 {
        self.times[trip * self.len() + pos].0
    }

    pub fn departure(&self, trip: usize, pos: usize) -> u32 {
        self.times[trip * self.len() + pos].1
    }

    fn row(&self, trip: usize) -> &[(u32, u32)] {
        &self.times[trip * self.len()..(trip + 1) * self.len()]
    }

    /// Earliest trip leaving position `pos` at or after `t`.
    fn earliest_trip(&self, pos: usize, t: u32) -> Option<usize> {
        let i = partition_point(self.trip_count(), |k| self.departure(k, pos) < t);
        (i < self.trip_count()).then_some(i)
    }

    fn is_non_overtaking(&self) -> bool {
        (1..self.trip_count()).all(|k| dominates(self.row(k - 1), self.row(k)))
    }
}

fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn dominates(earlier: &[(u32, u32)], later: &[(u32, u32)]) -> bool {
    earlier.iter().zip(later).all(|(a, b)| a.0 <= b.0 && a.1 <= b.1)
}

/// Timetable compiled for one service date, tied to the road graph used for
/// walking legs.
#[derive(Debug, Clone)]
pub struct TransitNetwork {
    roads: Arc<RoadNetwork>,
    config: RouterConfig,
    stop_ids: Vec<String>,
    routes: Vec<CompiledRoute>,
    /// (route, position) pairs serving each stop.
    stop_routes: Vec<Vec<(usize, usize)>>,
    footpaths: Vec<Vec<(usize, u32)>>,
    change_s: Vec<u32>,
    node_stops: HashMap<usize, Vec<usize>>,
    /// Stops that can walk to a road node, with the walk seconds.
    egress: HashMap<usize, Vec<(usize, u32)>>,
}

/// Compiles the trips active on `date` into non-overtaking routes and derives
/// walking footpaths between stops.
pub fn build_transit(
    bundle: &GtfsBundle,
    roads: Arc<RoadNetwork>,
    date: NaiveDate,
    config: &RouterConfig,
) -> Result<TransitNetwork, RouterError> {
    bundle.validate()?;
    let feed = bundle.restrict_to_date(date);
    if feed.trips.is_empty() {
        return Err(RouterError::NoServiceOnDate(date));
    }
    let stop_pos: HashMap<&str, usize> = feed.stops.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let n_stops = feed.stops.len();

    // Stop times are sorted by (trip, sequence), so each trip is a contiguous run.
    let mut patterns: BTreeMap<Vec<usize>, Vec<(String, Vec<(u32, u32)>)>> = BTreeMap::new();
    let mut i = 0;
    while i < feed.stop_times.len() {
        let trip = &feed.stop_times[i].trip_id;
        let mut j = i;
        while j < feed.stop_times.len() && &feed.stop_times[j].trip_id == trip {
            j += 1;
        }
        let run = &feed.stop_times[i..j];
        if run.len() >= 2 {
            let seq = run.iter().map(|st| stop_pos[st.stop_id.as_str()]).collect();
            let times = run.iter().map(|st| (st.arrival, st.departure)).collect();
            patterns.entry(seq).or_default().push((trip.clone(), times));
        }
        i = j;
    }

    let mut routes = Vec::new();
    for (stops, mut trips) in patterns {
        trips.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let mut compiled: Vec<CompiledRoute> = Vec::new();
        for (id, times) in trips {
            match compiled.iter_mut().find(|r| dominates(r.row(r.trip_count() - 1), &times)) {
                Some(r) => {
                    r.trip_ids.push(id);
                    r.times.extend(times);
                }
                None => compiled.push(CompiledRoute {
                    stops: stops.clone(),
                    trip_ids: vec![id],
                    times,
                }),
            }
        }
        routes.extend(compiled);
    }
    debug_assert!(routes.iter().all(CompiledRoute::is_non_overtaking));

    let mut stop_routes = vec![Vec::new(); n_stops];
    for (r, route) in routes.iter().enumerate() {
        for (p, &s) in route.stops.iter().enumerate() {
            stop_routes[s].push((r, p));
        }
    }

    let stop_node: Vec<Option<usize>> = feed
        .stops
        .iter()
        .map(|s| roads.snap(crate::spatial::LatLon::new(s.lat, s.lon), config.snap_radius_m))
        .collect();
    let unsnapped = stop_node.iter().filter(|n| n.is_none()).count();
    if unsnapped > 0 {
        log::warn!("{unsnapped} stops have no road node within {} m and cannot be walked to", config.snap_radius_m);
    }
    let mut node_stops: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, n) in stop_node.iter().enumerate() {
        if let Some(n) = n {
            node_stops.entry(*n).or_default().push(s);
        }
    }

    let mut footpaths: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); n_stops];
    let mut egress: HashMap<usize, Vec<(usize, u32)>> = HashMap::new();
    let mut scratch = SearchScratch::default();
    for (s, node) in stop_node.iter().enumerate() {
        let Some(node) = *node else { continue };
        dijkstra(&roads.walk, roads.node_count(), node, config.walk_radius_m, &mut scratch);
        for (v, m) in scratch.reached() {
            let secs = config.walk_seconds(m);
            egress.entry(v).or_default().push((s, secs));
            for &q in node_stops.get(&v).into_iter().flatten() {
                if q != s {
                    footpaths[s].insert(q, secs);
                }
            }
        }
    }
    for list in egress.values_mut() {
        list.sort_unstable();
    }
    let mut change_s = vec![0; n_stops];
    for t in &feed.transfers {
        let (a, b) = (stop_pos[t.from_stop.as_str()], stop_pos[t.to_stop.as_str()]);
        if a == b {
            change_s[a] = t.min_transfer_s;
        } else {
            footpaths[a].insert(b, t.min_transfer_s);
        }
    }
    log::info!(
        "transit network for {date}: {} stops, {} compiled routes from {} trips",
        n_stops,
        routes.len(),
        feed.trips.len()
    );
    Ok(TransitNetwork {
        roads,
        config: *config,
        stop_ids: feed.stops.iter().map(|s| s.id.clone()).collect(),
        routes,
        stop_routes,
        footpaths: footpaths.into_iter().map(|m| m.into_iter().collect()).collect(),
        change_s,
        node_stops,
        egress,
    })
}

/// Per-thread buffers reused across queries.
#[derive(Debug, Default)]
pub(crate) struct QueryScratch {
    walk: SearchScratch,
    board: Vec<u32>,
    best_trip: Vec<u32>,
    round_trip: Vec<u32>,
    marked: Vec<bool>,
    marked_list: Vec<usize>,
    improved: Vec<usize>,
    route_start: Vec<usize>,
    route_list: Vec<usize>,
}

impl QueryScratch {
    fn reset(&mut self, n_stops: usize, n_routes: usize) {
        for v in [&mut self.board, &mut self.best_trip, &mut self.round_trip] {
            v.clear();
            v.resize(n_stops, INF);
        }
        self.marked.clear();
        self.marked.resize(n_stops, false);
        self.route_start.clear();
        self.route_start.resize(n_routes, usize::MAX);
        self.marked_list.clear();
        self.improved.clear();
        self.route_list.clear();
    }
}

impl TransitNetwork {
    pub fn roads(&self) -> &RoadNetwork {
        &self.roads
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    pub fn stop_count(&self) -> usize {
        self.stop_ids.len()
    }

    pub fn stop_id(&self, s: usize) -> &str {
        &self.stop_ids[s]
    }

    pub fn routes(&self) -> &[CompiledRoute] {
        &self.routes
    }

    pub(crate) fn snap_places(&self, places: &[Place]) -> Vec<Option<usize>> {
        places.iter().map(|p| self.roads.snap(p.coord, self.config.snap_radius_m)).collect()
    }

    pub(crate) fn query(
        &self,
        origin: &Place,
        dests: &[Place],
        dest_nodes: &[Option<usize>],
        depart: u32,
        s: &mut QueryScratch,
    ) -> TravelTimeMatrix {
        let mut travel_s = vec![None; dests.len()];
        if let Some(onode) = self.roads.snap(origin.coord, self.config.snap_radius_m) {
            self.search(onode, depart, s);
            for (k, dn) in dest_nodes.iter().enumerate() {
                let Some(dn) = *dn else { continue };
                let mut best = s.walk.cost(dn).map(|m| self.config.walk_seconds(m));
                for &(stop, e) in self.egress.get(&dn).into_iter().flatten() {
                    if s.best_trip[stop] != INF {
                        let t = s.best_trip[stop] - depart + e;
                        if best.is_none_or(|b| t < b) {
                            best = Some(t);
                        }
                    }
                }
                travel_s[k] = best.map(f64::from);
            }
        }
        TravelTimeMatrix {
            origin_id: origin.id.clone(),
            mode: NetworkMode::Transit,
            depart_s: depart,
            dest_ids: dests.iter().map(|d| d.id.clone()).collect(),
            travel_s,
        }
    }

    /// Round-based earliest-arrival search. Leaves the origin's walk search in
    /// `s.walk` and the best trip arrival per stop in `s.best_trip`.
    fn search(&self, onode: usize, depart: u32, s: &mut QueryScratch) {
        s.reset(self.stop_count(), self.routes.len());
        dijkstra(&self.roads.walk, self.roads.node_count(), onode, self.config.walk_radius_m, &mut s.walk);
        for (v, m) in s.walk.reached() {
            for &stop in self.node_stops.get(&v).into_iter().flatten() {
                let t = depart + self.config.walk_seconds(m);
                if t < s.board[stop] {
                    s.board[stop] = t;
                    if !s.marked[stop] {
                        s.marked[stop] = true;
                        s.marked_list.push(stop);
                    }
                }
            }
        }

        for _round in 0..=self.config.max_transfers {
            if s.marked_list.is_empty() {
                break;
            }
            for &stop in &s.marked_list {
                s.marked[stop] = false;
                for &(r, p) in &self.stop_routes[stop] {
                    if s.route_start[r] == usize::MAX {
                        s.route_list.push(r);
                    }
                    s.route_start[r] = s.route_start[r].min(p);
                }
            }
            s.marked_list.clear();

            for &r in &s.route_list {
                let route = &self.routes[r];
                let mut cur: Option<usize> = None;
                for pos in s.route_start[r]..route.len() {
                    let stop = route.stops[pos];
                    if let Some(t) = cur {
                        let a = route.arrival(t, pos);
                        if a < s.best_trip[stop] {
                            s.best_trip[stop] = a;
                            if s.round_trip[stop] == INF {
                                s.improved.push(stop);
                            }
                            s.round_trip[stop] = a;
                        }
                    }
                    let b = s.board[stop];
                    if b != INF && cur.is_none_or(|t| b <= route.departure(t, pos)) {
                        if let Some(t2) = route.earliest_trip(pos, b) {
                            if cur.is_none_or(|t| t2 < t) {
                                cur = Some(t2);
                            }
                        }
                    }
                }
                s.route_start[r] = usize::MAX;
            }
            s.route_list.clear();

            for &stop in &s.improved {
                let a = s.round_trip[stop];
                s.round_trip[stop] = INF;
                let targets = std::iter::once((stop, self.change_s[stop])).chain(self.footpaths[stop].iter().copied());
                for (q, f) in targets {
                    let b = a.saturating_add(f);
                    if b < s.board[q] {
                        s.board[q] = b;
                        if !s.marked[q] {
                            s.marked[q] = true;
                            s.marked_list.push(q);
                        }
                    }
                }
            }
            s.improved.clear();
        }
    }
}

/// One-to-many transit travel times departing at `depart` seconds after
/// midnight of the network's service date.
pub fn transit_travel_time(net: &TransitNetwork, origin: &Place, dests: &[Place], depart: u32) -> TravelTimeMatrix {
    let mut s = QueryScratch::default();
    net.query(origin, dests, &net.snap_places(dests), depart, &mut s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Calendar, ModeMask, RoadEdge, RoadGraphSource, RoadNode, Route, Stop, StopTime, Transfer, Trip};
    use crate::spatial::LatLon;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 3, 1).unwrap()
    }

    /// Stops A, B, C roughly 1.1 km apart along a meridian, each on its own road node.
    fn roads() -> Arc<RoadNetwork> {
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
                    length_m: 1100.0,
                    speed_kmh: 30.0,
                    modes: ModeMask::BOTH,
                });
            }
        }
        Arc::new(RoadNetwork::build(&RoadGraphSource { nodes, edges }).unwrap())
    }

    fn stop(i: usize) -> Stop {
        Stop {
            id: ["A", "B", "C"][i].into(),
            name: String::new(),
            lat: 48.85 + 0.01 * i as f64,
            lon: 2.35,
        }
    }

    fn feed(trips: &[(&str, &[(usize, u32, u32)])]) -> GtfsBundle {
        let mut b = GtfsBundle {
            stops: (0..3).map(stop).collect(),
            routes: vec![Route {
                id: "r".into(),
                short_name: "1".into(),
                route_type: 3,
            }],
            calendars: vec![Calendar {
                service_id: "wk".into(),
                days: [true; 7],
                start: date(),
                end: date(),
            }],
            ..Default::default()
        };
        for (id, events) in trips {
            b.trips.push(Trip {
                id: id.to_string(),
                route_id: "r".into(),
                service_id: "wk".into(),
            });
            for (k, &(s, arr, dep)) in events.iter().enumerate() {
                b.stop_times.push(StopTime {
                    trip_id: id.to_string(),
                    stop_id: ["A", "B", "C"][s].into(),
                    arrival: arr,
                    departure: dep,
                    sequence: k as u32 + 1,
                });
            }
        }
        b.stop_times.sort_by(|a, b| a.trip_id.cmp(&b.trip_id).then(a.sequence.cmp(&b.sequence)));
        b
    }

    fn place(i: usize) -> Place {
        Place::new(format!("p{i}"), LatLon::new(48.85 + 0.01 * i as f64, 2.35))
    }

    const H17: u32 = 17 * 3600;

    #[test]
    fn wait_included_in_travel_time() {
        let cfg = RouterConfig {
            walk_radius_m: 500.0,
            ..Default::default()
        };
        let net = build_transit(&feed(&[("t1", &[(0, H17, H17), (1, H17 + 600, H17 + 600)])]), roads(), date(), &cfg)
            .unwrap();
        assert_eq!(net.routes().len(), 1);
        let m = transit_travel_time(&net, &place(0), &[place(1), place(0)], H17 - 600);
        assert_eq!(m.travel_s, vec![Some(1200.0), Some(0.0)]);
        // Departing after the only trip leaves: B is beyond walking range.
        let late = transit_travel_time(&net, &place(0), &[place(1)], H17 + 1);
        assert_eq!(late.travel_s, vec![None]);
    }

    #[test]
    fn overtaking_trips_split() {
        let slow: &[(usize, u32, u32)] = &[(0, H17, H17), (1, H17 + 900, H17 + 960), (2, H17 + 1800, H17 + 1800)];
        let fast: &[(usize, u32, u32)] = &[(0, H17 + 60, H17 + 60), (1, H17 + 400, H17 + 400), (2, H17 + 700, H17 + 700)];
        let next: &[(usize, u32, u32)] = &[(0, H17 + 120, H17 + 120), (1, H17 + 960, H17 + 1000), (2, H17 + 1900, H17 + 1900)];
        let cfg = RouterConfig {
            walk_radius_m: 0.0,
            ..Default::default()
        };
        let net = build_transit(&feed(&[("slow", slow), ("fast", fast), ("next", next)]), roads(), date(), &cfg).unwrap();
        assert_eq!(net.routes().len(), 2);
        assert!(net.routes().iter().all(|r| r.is_non_overtaking()));
        let m = transit_travel_time(&net, &place(0), &[place(2)], H17);
        assert_eq!(m.travel_s, vec![Some(700.0)]);
    }

    #[test]
    fn no_service_on_date() {
        let b = feed(&[("t1", &[(0, H17, H17), (1, H17 + 600, H17 + 600)])]);
        let other = NaiveDate::from_ymd_opt(2023, 3, 2).unwrap();
        assert!(matches!(
            build_transit(&b, roads(), other, &RouterConfig::default()),
            Err(RouterError::NoServiceOnDate(_))
        ));
    }

    #[test]
    fn change_time_and_transfer_rounds() {
        // t1: A -> B arriving 17:10; t2 leaves B at 17:11 for C.
        let t1: &[(usize, u32, u32)] = &[(0, H17, H17), (1, H17 + 600, H17 + 600)];
        let t2: &[(usize, u32, u32)] = &[(1, H17 + 660, H17 + 660), (2, H17 + 1200, H17 + 1200)];
        let t3: &[(usize, u32, u32)] = &[(1, H17 + 1500, H17 + 1500), (2, H17 + 2000, H17 + 2000)];
        let cfg = RouterConfig {
            walk_radius_m: 0.0,
            ..Default::default()
        };
        let mut b = feed(&[("t1", t1), ("t2", t2), ("t3", t3)]);
        let net = build_transit(&b, roads(), date(), &cfg).unwrap();
        assert_eq!(transit_travel_time(&net, &place(0), &[place(2)], H17).travel_s, vec![Some(1200.0)]);

        b.transfers.push(Transfer {
            from_stop: "B".into(),
            to_stop: "B".into(),
            min_transfer_s: 120,
        });
        let net = build_transit(&b, roads(), date(), &cfg).unwrap();
        assert_eq!(transit_travel_time(&net, &place(0), &[place(2)], H17).travel_s, vec![Some(2000.0)]);

        let no_transfers = RouterConfig {
            max_transfers: 0,
            ..cfg
        };
        let net = build_transit(&b, roads(), date(), &no_transfers).unwrap();
        assert_eq!(transit_travel_time(&net, &place(0), &[place(2)], H17).travel_s, vec![None]);
    }

    #[test]
    fn post_midnight_service() {
        let t: &[(usize, u32, u32)] = &[(0, 25 * 3600, 25 * 3600), (1, 25 * 3600 + 300, 25 * 3600 + 300)];
        let cfg = RouterConfig {
            walk_radius_m: 0.0,
            ..Default::default()
        };
        let net = build_transit(&feed(&[("night", t)]), roads(), date(), &cfg).unwrap();
        let m = transit_travel_time(&net, &place(0), &[place(1)], 24 * 3600 + 1800);
        assert_eq!(m.travel_s, vec![Some(2100.0)]);
    }
}
