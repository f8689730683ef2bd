use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rstar::primitives::GeomWithData;
use rstar::RTree;

use super::{Place, RouterConfig, RouterError, NetworkMode, TravelTimeMatrix};
use crate::ingest::RoadGraphSource;
use crate::spatial::{haversine_m, BoundingBox, LatLon, LocalProjection};

/// Compressed adjacency list with one weight per edge.
#[derive(Debug, Clone, Default)]
pub(crate) struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Csr {
    fn build(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        let mut offsets = vec![0; n + 1];
        for &(u, _, _) in &edges {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self {
            offsets,
            targets: edges.iter().map(|e| e.1).collect(),
            weights: edges.iter().map(|e| e.2).collect(),
        }
    }

    pub fn neighbours(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.targets[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // Min-heap on cost, ties on node index for deterministic settling order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable buffers for bounded Dijkstra searches.
#[derive(Debug, Default)]
pub(crate) struct SearchScratch {
    dist: Vec<f64>,
    touched: Vec<usize>,
    heap: BinaryHeap<HeapItem>,
}

impl SearchScratch {
    fn reset(&mut self, n: usize) {
        if self.dist.len() != n {
            self.dist = vec![f64::INFINITY; n];
            self.touched.clear();
        } else {
            for &v in &self.touched {
                self.dist[v] = f64::INFINITY;
            }
            self.touched.clear();
        }
        self.heap.clear();
    }

    /// Settled (node, cost) pairs of the last search.
    pub fn reached(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.touched.iter().map(|&v| (v, self.dist[v]))
    }

    pub fn cost(&self, v: usize) -> Option<f64> {
        let d = self.dist[v];
        d.is_finite().then_some(d)
    }
}

/// Single-source Dijkstra over `g`, ignoring nodes whose cost would exceed `bound`.
pub(crate) fn dijkstra(g: &Csr, n: usize, source: usize, bound: f64, s: &mut SearchScratch) {
    s.reset(n);
    s.dist[source] = 0.0;
    s.touched.push(source);
    s.heap.push(HeapItem { cost: 0.0, node: source });
    while let Some(HeapItem { cost, node }) = s.heap.pop() {
        if cost > s.dist[node] {
            continue;
        }
        for (v, w) in g.neighbours(node) {
            let c = cost + w;
            if c <= bound && c < s.dist[v] {
                if s.dist[v].is_infinite() {
                    s.touched.push(v);
                }
                s.dist[v] = c;
                s.heap.push(HeapItem { cost: c, node: v });
            }
        }
    }
}

/// Road graph compiled for routing: car edges weighted in seconds, walk edges
/// in meters, plus a point index for snapping coordinates to nodes.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    ids: Vec<String>,
    coords: Vec<LatLon>,
    pub(crate) car: Csr,
    pub(crate) walk: Csr,
    tree: RTree<GeomWithData<[f64; 2], usize>>,
    proj: LocalProjection,
    component: Vec<usize>,
    largest_component: usize,
}

impl RoadNetwork {
    pub fn build(src: &RoadGraphSource) -> Result<Self, RouterError> {
        if src.nodes.is_empty() {
            return Err(RouterError::EmptyRoadGraph);
        }
        let pos = src.node_positions();
        let n = src.nodes.len();
        let mut car = Vec::new();
        let mut walk = Vec::new();
        let mut uf = UnionFind::new(n);
        for e in &src.edges {
            let (u, v) = (pos[e.from.as_str()], pos[e.to.as_str()]);
            let secs = e.car_seconds();
            if !(secs.is_finite() && secs > 0.0) {
                return Err(RouterError::BadEdge(format!("{}->{}", e.from, e.to)));
            }
            if e.modes.car {
                car.push((u, v, secs));
            }
            if e.modes.walk {
                walk.push((u, v, e.length_m));
            }
            uf.union(u, v);
        }
        let coords: Vec<LatLon> = src.nodes.iter().map(|n| LatLon::new(n.lat, n.lon)).collect();
        let bbox = BoundingBox::around(coords.iter().copied(), 0.0).expect("non-empty");
        let proj = LocalProjection::new(bbox.center());
        let tree = RTree::bulk_load(
            coords
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let (x, y) = proj.forward(c);
                    GeomWithData::new([x, y], i)
                })
                .collect(),
        );
        let component: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for &c in &component {
            *sizes.entry(c).or_default() += 1;
        }
        let largest_component = sizes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&c, _)| c)
            .expect("non-empty");
        if sizes.len() > 1 {
            let stray: usize = n - sizes[&largest_component];
            log::warn!(
                "road graph has {} weakly connected components; {} nodes lie outside the largest",
                sizes.len(),
                stray
            );
        }
        Ok(Self {
            ids: src.nodes.iter().map(|n| n.id.clone()).collect(),
            coords,
            car: Csr::build(n, car),
            walk: Csr::build(n, walk),
            tree,
            proj,
            component,
            largest_component,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn node_coord(&self, i: usize) -> LatLon {
        self.coords[i]
    }

    pub fn car_edge_count(&self) -> usize {
        self.car.edge_count()
    }

    /// Nodes outside the largest weakly connected component.
    pub fn off_main_component(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.component[i] != self.largest_component)
            .collect()
    }

    /// Nearest node within `radius_m` by great-circle distance; equidistant
    /// nodes resolve to the lowest index.
    pub fn snap(&self, p: LatLon, radius_m: f64) -> Option<usize> {
        let (x, y) = self.proj.forward(p);
        // The equal-area projection distorts distances slightly away from its
        // centre, so candidates are gathered with slack and re-ranked exactly.
        let slack = radius_m * 1.05 + 5.0;
        let mut best: Option<(f64, usize)> = None;
        for cand in self.tree.locate_within_distance([x, y], slack * slack) {
            let i = cand.data;
            let d = haversine_m(p, self.coords[i]);
            if d > radius_m {
                continue;
            }
            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| i)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// One-to-many free-flow car travel times from the node nearest to `origin`.
pub fn car_travel_time(
    net: &RoadNetwork,
    origin: &Place,
    dests: &[Place],
    depart: u32,
    config: &RouterConfig,
) -> Result<TravelTimeMatrix, RouterError> {
    let mut scratch = SearchScratch::default();
    car_travel_time_with(net, origin, dests, depart, config, &mut scratch)
}

pub(crate) fn car_travel_time_with(
    net: &RoadNetwork,
    origin: &Place,
    dests: &[Place],
    depart: u32,
    config: &RouterConfig,
    scratch: &mut SearchScratch,
) -> Result<TravelTimeMatrix, RouterError> {
    let src = net
        .snap(origin.coord, config.snap_radius_m)
        .ok_or_else(|| RouterError::SnapFailure {
            id: origin.id.clone(),
            radius_m: config.snap_radius_m,
        })?;
    dijkstra(&net.car, net.node_count(), src, f64::INFINITY, scratch);
    let travel_s = dests
        .iter()
        .map(|d| net.snap(d.coord, config.snap_radius_m).and_then(|v| scratch.cost(v)))
        .collect();
    Ok(TravelTimeMatrix {
        origin_id: origin.id.clone(),
        mode: NetworkMode::Car,
        depart_s: depart,
        dest_ids: dests.iter().map(|d| d.id.clone()).collect(),
        travel_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ModeMask, RoadEdge, RoadNode};

    fn line_graph() -> RoadGraphSource {
        RoadGraphSource {
            nodes: vec![
                RoadNode { id: "a".into(), lat: 48.85, lon: 2.35 },
                RoadNode { id: "b".into(), lat: 48.859, lon: 2.35 },
            ],
            edges: vec![RoadEdge {
                from: "a".into(),
                to: "b".into(),
                length_m: 1000.0,
                speed_kmh: 60.0,
                modes: ModeMask::BOTH,
            }],
        }
    }

    #[test]
    fn single_edge_sixty_seconds() {
        let net = RoadNetwork::build(&line_graph()).unwrap();
        let cfg = RouterConfig::default();
        let o = Place::new("a", LatLon::new(48.85, 2.35));
        let d = [Place::new("b", LatLon::new(48.859, 2.35)), Place::new("a", LatLon::new(48.85, 2.35))];
        let m = car_travel_time(&net, &o, &d, 17 * 3600, &cfg).unwrap();
        assert_eq!(m.travel_s, vec![Some(60.0), Some(0.0)]);
        assert_eq!(m.depart_s, 17 * 3600);
        // Directed: nothing leads back from b.
        let back = car_travel_time(&net, &d[0], &[o.clone()], 0, &cfg).unwrap();
        assert_eq!(back.get("a"), None);
    }

    #[test]
    fn snap_failure() {
        let net = RoadNetwork::build(&line_graph()).unwrap();
        let far = Place::new("x", LatLon::new(48.95, 2.35));
        let err = car_travel_time(&net, &far, &[], 0, &RouterConfig::default()).unwrap_err();
        assert!(matches!(err, RouterError::SnapFailure { .. }));
    }

    #[test]
    fn snap_picks_nearest_within_radius() {
        let net = RoadNetwork::build(&line_graph()).unwrap();
        assert_eq!(net.snap(LatLon::new(48.8505, 2.35), 500.0), Some(0));
        assert_eq!(net.snap(LatLon::new(48.858, 2.35), 500.0), Some(1));
        assert_eq!(net.snap(LatLon::new(48.8545, 2.35), 100.0), None);
    }

    #[test]
    fn components_flagged() {
        let mut g = line_graph();
        g.nodes.push(RoadNode { id: "island".into(), lat: 48.86, lon: 2.36 });
        let net = RoadNetwork::build(&g).unwrap();
        assert_eq!(net.off_main_component(), vec![2]);
    }
}
