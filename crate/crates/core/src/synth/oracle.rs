//! Brute-force reference implementations. Each one recomputes a quantity
//! from its definition without sharing code with the production path, and is
//! only fast enough for small inputs.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use chrono::{Datelike, NaiveDate};

use crate::ingest::{ExceptionType, GtfsBundle, RoadGraphSource, TripRecord};
use crate::router::RouterConfig;
use crate::spatial::{haversine_m, CellId, LatLon};

/// Index of the nearest node within `radius_m` by linear scan, lowest index on ties.
pub fn brute_snap(roads: &RoadGraphSource, p: LatLon, radius_m: f64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, n) in roads.nodes.iter().enumerate() {
        let d = haversine_m(p, LatLon::new(n.lat, n.lon));
        if d <= radius_m && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Label-correcting shortest paths with a FIFO queue.
fn spfa(n: usize, edges: &[(usize, usize, f64)], source: usize) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut queued = vec![false; n];
    let mut q = VecDeque::from([source]);
    dist[source] = 0.0;
    queued[source] = true;
    while let Some(u) = q.pop_front() {
        queued[u] = false;
        for &(v, w) in &adj[u] {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                if !queued[v] {
                    queued[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    dist
}

/// Plain Bellman-Ford relaxation over all edges until nothing changes.
fn bellman_ford(n: usize, edges: &[(usize, usize, f64)], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, w) in edges {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

fn positions(roads: &RoadGraphSource) -> HashMap<&str, usize> {
    roads.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
}

fn car_edges(roads: &RoadGraphSource) -> Vec<(usize, usize, f64)> {
    let pos = positions(roads);
    roads
        .edges
        .iter()
        .filter(|e| e.modes.car)
        .map(|e| (pos[e.from.as_str()], pos[e.to.as_str()], e.length_m / (e.speed_kmh / 3.6)))
        .collect()
}

fn walk_edges(roads: &RoadGraphSource) -> Vec<(usize, usize, f64)> {
    let pos = positions(roads);
    roads
        .edges
        .iter()
        .filter(|e| e.modes.walk)
        .map(|e| (pos[e.from.as_str()], pos[e.to.as_str()], e.length_m))
        .collect()
}

/// Car seconds from `origin` to each destination; all `None` when the origin
/// does not snap.
pub fn oracle_car(roads: &RoadGraphSource, config: &RouterConfig, origin: LatLon, dests: &[LatLon]) -> Vec<Option<f64>> {
    let Some(o) = brute_snap(roads, origin, config.snap_radius_m) else {
        return vec![None; dests.len()];
    };
    let dist = bellman_ford(roads.nodes.len(), &car_edges(roads), o);
    dests
        .iter()
        .map(|d| brute_snap(roads, *d, config.snap_radius_m).and_then(|v| dist[v].is_finite().then_some(dist[v])))
        .collect()
}

fn walk_secs(config: &RouterConfig, meters: f64) -> u32 {
    // Same rounding contract as the router: whole seconds, rounded up, with
    // a guard against representation error.
    let s = meters / (config.walk_speed_kmh / 3.6);
    (s - 1e-9).ceil().max(0.0) as u32
}

fn service_active(gtfs: &GtfsBundle, service: &str, date: NaiveDate) -> bool {
    let mut on = gtfs
        .calendars
        .iter()
        .any(|c| c.service_id == service && c.start <= date && date <= c.end && c.days[date.weekday().num_days_from_monday() as usize]);
    for cd in gtfs.calendar_dates.iter().filter(|cd| cd.service_id == service && cd.date == date) {
        on = cd.exception == ExceptionType::Added;
    }
    on
}

/// Node of the time-expanded graph. Every node carries an intrinsic clock
/// time; `k` counts vehicles boarded so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum TeNode {
    /// Waiting at a stop for its `ev`-th departure event.
    Dep { stop: usize, ev: usize, k: usize },
    /// Aboard `trip`, leaving position `pos`.
    Ride { trip: usize, pos: usize, k: usize },
    /// Aboard `trip`, arriving at position `pos`.
    Arr { trip: usize, pos: usize, k: usize },
}

/// Earliest-arrival transit times by Dijkstra over a time-expanded graph
/// built from the raw trips active on one date. Layers by vehicle count
/// bound the number of transfers.
pub struct TransitOracle<'a> {
    roads: &'a RoadGraphSource,
    config: RouterConfig,
    walk: Vec<(usize, usize, f64)>,
    stop_node: Vec<Option<usize>>,
    /// (stop, arrival, departure) per active trip, in sequence order.
    trips: Vec<Vec<(usize, u32, u32)>>,
    /// Departure events per stop, sorted by time: (departure, trip, position).
    deps: Vec<Vec<(u32, usize, usize)>>,
    /// Minimum seconds from alighting at one stop to being ready at another.
    transfer: Vec<HashMap<usize, u32>>,
}

impl<'a> TransitOracle<'a> {
    pub fn new(roads: &'a RoadGraphSource, gtfs: &GtfsBundle, date: NaiveDate, config: &RouterConfig) -> Self {
        let walk = walk_edges(roads);
        let stop_idx: HashMap<&str, usize> = gtfs.stops.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let stop_node: Vec<Option<usize>> = gtfs
            .stops
            .iter()
            .map(|s| brute_snap(roads, LatLon::new(s.lat, s.lon), config.snap_radius_m))
            .collect();
        let active: HashMap<&str, bool> = gtfs
            .trips
            .iter()
            .map(|t| (t.id.as_str(), service_active(gtfs, &t.service_id, date)))
            .collect();
        let mut by_trip: HashMap<&str, Vec<(u32, usize, u32, u32)>> = HashMap::new();
        for st in &gtfs.stop_times {
            if active.get(st.trip_id.as_str()).copied().unwrap_or(false) {
                by_trip
                    .entry(st.trip_id.as_str())
                    .or_default()
                    .push((st.sequence, stop_idx[st.stop_id.as_str()], st.arrival, st.departure));
            }
        }
        let trips: Vec<Vec<(usize, u32, u32)>> = by_trip
            .into_values()
            .map(|mut v| {
                v.sort_unstable();
                v.into_iter().map(|(_, s, a, d)| (s, a, d)).collect()
            })
            .collect();
        let n = gtfs.stops.len();
        let mut deps = vec![Vec::new(); n];
        for (t, trip) in trips.iter().enumerate() {
            for (p, &(s, _, d)) in trip.iter().enumerate().take(trip.len().saturating_sub(1)) {
                deps[s].push((d, t, p));
            }
        }
        for d in &mut deps {
            d.sort_unstable();
        }

        let mut transfer: Vec<HashMap<usize, u32>> = vec![HashMap::new(); n];
        for s in 0..n {
            transfer[s].insert(s, 0);
            let Some(u) = stop_node[s] else { continue };
            let d = spfa(roads.nodes.len(), &walk, u);
            for q in 0..n {
                if q == s {
                    continue;
                }
                if let Some(v) = stop_node[q] {
                    if d[v] <= config.walk_radius_m {
                        transfer[s].insert(q, walk_secs(config, d[v]));
                    }
                }
            }
        }
        for t in &gtfs.transfers {
            let (a, b) = (stop_idx[t.from_stop.as_str()], stop_idx[t.to_stop.as_str()]);
            transfer[a].insert(b, t.min_transfer_s);
        }
        Self {
            roads,
            config: *config,
            walk,
            stop_node,
            trips,
            deps,
            transfer,
        }
    }

    fn time(&self, v: TeNode) -> u32 {
        match v {
            TeNode::Dep { stop, ev, .. } => self.deps[stop][ev].0,
            TeNode::Ride { trip, pos, .. } => self.trips[trip][pos].2,
            TeNode::Arr { trip, pos, .. } => self.trips[trip][pos].1,
        }
    }

    /// First departure event at `stop` not earlier than `t`.
    fn enter(&self, stop: usize, t: u32, k: usize) -> Option<TeNode> {
        let ev = self.deps[stop].iter().position(|e| e.0 >= t)?;
        Some(TeNode::Dep { stop, ev, k })
    }

    /// Earliest vehicle arrival per stop.
    fn arrivals(&self, sources: &[(usize, u32)]) -> Vec<Option<u32>> {
        let max_vehicles = self.config.max_transfers + 1;
        let mut best = vec![None; self.deps.len()];
        let mut seen = std::collections::HashSet::new();
        let mut heap = BinaryHeap::new();
        for &(s, t) in sources {
            if let Some(v) = self.enter(s, t, 0) {
                heap.push(Reverse((self.time(v), v)));
            }
        }
        while let Some(Reverse((_, v))) = heap.pop() {
            if !seen.insert(v) {
                continue;
            }
            let mut next = Vec::new();
            match v {
                TeNode::Dep { stop, ev, k } => {
                    if ev + 1 < self.deps[stop].len() {
                        next.push(TeNode::Dep { stop, ev: ev + 1, k });
                    }
                    if k < max_vehicles {
                        let (_, trip, pos) = self.deps[stop][ev];
                        next.push(TeNode::Ride { trip, pos, k: k + 1 });
                    }
                }
                TeNode::Ride { trip, pos, k } => next.push(TeNode::Arr { trip, pos: pos + 1, k }),
                TeNode::Arr { trip, pos, k } => {
                    let (stop, a, _) = self.trips[trip][pos];
                    if best[stop].is_none_or(|b| a < b) {
                        best[stop] = Some(a);
                    }
                    if pos + 1 < self.trips[trip].len() {
                        next.push(TeNode::Ride { trip, pos, k });
                    }
                    for (&q, &f) in &self.transfer[stop] {
                        next.extend(self.enter(q, a + f, k));
                    }
                }
            }
            for u in next {
                if !seen.contains(&u) {
                    heap.push(Reverse((self.time(u), u)));
                }
            }
        }
        best
    }

    pub fn query(&self, origin: LatLon, dests: &[LatLon], depart: u32) -> Vec<Option<f64>> {
        let cfg = &self.config;
        let Some(o) = brute_snap(self.roads, origin, cfg.snap_radius_m) else {
            return vec![None; dests.len()];
        };
        let n_nodes = self.roads.nodes.len();
        let from_origin = spfa(n_nodes, &self.walk, o);
        let sources: Vec<(usize, u32)> = self
            .stop_node
            .iter()
            .enumerate()
            .filter_map(|(s, sn)| {
                let v = (*sn)?;
                (from_origin[v] <= cfg.walk_radius_m).then(|| (s, depart + walk_secs(cfg, from_origin[v])))
            })
            .collect();
        let best = self.arrivals(&sources);
        let stop_dists: Vec<Option<Vec<f64>>> = self
            .stop_node
            .iter()
            .zip(&best)
            .map(|(sn, b)| b.and(*sn).map(|u| spfa(n_nodes, &self.walk, u)))
            .collect();
        dests
            .iter()
            .map(|d| {
                let dn = brute_snap(self.roads, *d, cfg.snap_radius_m)?;
                let mut out: Option<u32> = (from_origin[dn] <= cfg.walk_radius_m).then(|| walk_secs(cfg, from_origin[dn]));
                for (s, dist) in stop_dists.iter().enumerate() {
                    let (Some(a), Some(dist)) = (best[s], dist) else { continue };
                    if dist[dn] <= cfg.walk_radius_m {
                        let t = a - depart + walk_secs(cfg, dist[dn]);
                        out = Some(out.map_or(t, |x| x.min(t)));
                    }
                }
                out.map(f64::from)
            })
            .collect()
    }
}

/// One feasible cell as recomputed by [`oracle_spa`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCell {
    pub token: String,
    pub best_remaining_s: i64,
    pub poi_count: usize,
    pub rank: usize,
}

/// Feasible cells from whole-second leg times: a POI counts when the three
/// legs fit into the budget; cells rank by best remaining budget, then token.
pub fn oracle_spa(
    tb_s: i64,
    t_hw_s: i64,
    poi_cells: &[CellId],
    t_wk_s: &[Option<i64>],
    t_kh_s: &[Option<i64>],
) -> (Vec<OracleCell>, usize) {
    let mut cells: HashMap<&str, (i64, usize)> = HashMap::new();
    let mut a = 0;
    for (k, cell) in poi_cells.iter().enumerate() {
        if let (Some(wk), Some(kh)) = (t_wk_s[k], t_kh_s[k]) {
            let spare = tb_s - (t_hw_s + wk + kh);
            if spare >= 0 {
                let e = cells.entry(cell.token.as_str()).or_insert((i64::MIN, 0));
                e.0 = e.0.max(spare);
                e.1 += 1;
                a += 1;
            }
        }
    }
    let mut out: Vec<OracleCell> = cells
        .into_iter()
        .map(|(t, (b, c))| OracleCell {
            token: t.to_string(),
            best_remaining_s: b,
            poi_count: c,
            rank: 0,
        })
        .collect();
    out.sort_by(|x, y| y.best_remaining_s.cmp(&x.best_remaining_s).then_with(|| x.token.cmp(&y.token)));
    for (i, c) in out.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    (out, a)
}

/// Median of the sample obtained by repeating each value `weight` times;
/// weights must be positive integers.
pub fn expansion_median(pairs: &[(f64, u32)]) -> Option<f64> {
    let mut xs: Vec<f64> = pairs.iter().flat_map(|&(v, w)| std::iter::repeat_n(v, w as usize)).collect();
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = xs.len();
    Some(if m % 2 == 1 { xs[m / 2] } else { (xs[m / 2 - 1] + xs[m / 2]) / 2.0 })
}

/// Exact share of the `C(n, k)` rank subsets whose rank sum does not exceed
/// `t_act`, by enumeration.
pub fn exact_rank_sum_cdf(n: usize, k: usize, t_act: u64) -> f64 {
    fn walk(next: usize, n: usize, left: usize, sum: u64, t: u64, hits: &mut u64, total: &mut u64) {
        if left == 0 {
            *total += 1;
            if sum <= t {
                *hits += 1;
            }
            return;
        }
        for r in next..=n - left + 1 {
            walk(r + 1, n, left - 1, sum + r as u64, t, hits, total);
        }
    }
    let (mut hits, mut total) = (0, 0);
    walk(1, n, k, 0, t_act, &mut hits, &mut total);
    hits as f64 / total as f64
}

/// Per-person total travel minutes: trips are summed within each survey day,
/// then days are averaged with their weights.
pub fn oracle_travel_time(trips: &[TripRecord]) -> HashMap<String, f64> {
    let mut days: HashMap<(String, NaiveDate), (f64, f64)> = HashMap::new();
    for t in trips {
        days.entry((t.person_id.clone(), t.date))
            .or_insert((0.0, t.day_weight))
            .0 += t.duration_min;
    }
    let mut acc: HashMap<String, (f64, f64)> = HashMap::new();
    for ((p, _), (m, w)) in days {
        let e = acc.entry(p).or_insert((0.0, 0.0));
        e.0 += w * m;
        e.1 += w;
    }
    acc.into_iter().map(|(p, (s, w))| (p, s / w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_median_even_split() {
        assert_eq!(expansion_median(&[(10.0, 1), (20.0, 1), (100.0, 2)]), Some(60.0));
        assert_eq!(expansion_median(&[(5.0, 3), (9.0, 1)]), Some(5.0));
        assert_eq!(expansion_median(&[]), None);
    }

    #[test]
    fn rank_sum_cdf_small_cases() {
        // Subsets of {1,2,3,4} of size 2 have sums 3,4,5,5,6,7.
        assert_eq!(exact_rank_sum_cdf(4, 2, 3), 1.0 / 6.0);
        assert_eq!(exact_rank_sum_cdf(4, 2, 5), 4.0 / 6.0);
        assert_eq!(exact_rank_sum_cdf(4, 4, 10), 1.0);
    }

    #[test]
    fn spa_ties_break_by_token() {
        let cells: Vec<CellId> = ["b", "a", "c"]
            .iter()
            .map(|t| CellId {
                resolution: crate::spatial::Resolution::Coarse,
                token: t.to_string(),
            })
            .collect();
        let (out, a) = oracle_spa(5400, 1800, &cells, &[Some(600), Some(600), Some(4200)], &[Some(300); 3]);
        assert_eq!(a, 2);
        assert_eq!(out.iter().map(|c| c.token.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }
}
