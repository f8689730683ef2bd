use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_coordinate, create_file, csv_write_err, IngestError, Result, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

/// Subset of {car, walk} allowed on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeMask {
    pub car: bool,
    pub walk: bool,
}

impl ModeMask {
    pub const BOTH: ModeMask = ModeMask { car: true, walk: true };

    fn parse(s: &str) -> Option<Self> {
        let mut m = ModeMask { car: false, walk: false };
        for part in s.split('|').map(str::trim) {
            match part {
                "car" => m.car = true,
                "walk" => m.walk = true,
                _ => return None,
            }
        }
        (m.car || m.walk).then_some(m)
    }

    fn label(self) -> &'static str {
        match (self.car, self.walk) {
            (true, true) => "car|walk",
            (true, false) => "car",
            _ => "walk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub speed_kmh: f64,
    pub modes: ModeMask,
}

impl RoadEdge {
    pub fn car_seconds(&self) -> f64 {
        self.length_m * 3.6 / self.speed_kmh
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadGraphSource {
    pub nodes: Vec<RoadNode>,
    pub edges: Vec<RoadEdge>,
}

impl RoadGraphSource {
    pub fn node_positions(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }
}

/// Reads `roads_nodes.csv` and `roads_edges.csv`.
pub fn parse_roads(nodes_path: &Path, edges_path: &Path) -> Result<RoadGraphSource> {
    let nt = Table::open(nodes_path)?;
    let (id, lat, lon) = (nt.col("node_id")?, nt.col("lat")?, nt.col("lon")?);
    let mut g = RoadGraphSource::default();
    let mut ids = HashMap::new();
    for row in 0..nt.rows.len() {
        let (la, lo) = (nt.parse_f64(row, lat, "lat")?, nt.parse_f64(row, lon, "lon")?);
        check_coordinate(&nt.file, row, la, lo)?;
        let node_id = nt.rows[row][id].to_string();
        if ids.insert(node_id.clone(), row).is_some() {
            return Err(IngestError::DuplicateId {
                file: nt.file.clone(),
                row: row + 1,
                id: node_id,
            });
        }
        g.nodes.push(RoadNode { id: node_id, lat: la, lon: lo });
    }

    let et = Table::open(edges_path)?;
    let (from, to, len, speed, modes) = (
        et.col("from")?,
        et.col("to")?,
        et.col("length_m")?,
        et.col("speed_kmh")?,
        et.col("modes")?,
    );
    for row in 0..et.rows.len() {
        let r = &et.rows[row];
        for i in [from, to] {
            if !ids.contains_key(&r[i]) {
                return Err(IngestError::DanglingReference {
                    file: et.file.clone(),
                    row: row + 1,
                    kind: "node",
                    id: r[i].to_string(),
                });
            }
        }
        let length_m = et.parse_f64(row, len, "length_m")?;
        if length_m <= 0.0 {
            return Err(et.bad(row, "length_m", &r[len]));
        }
        let speed_kmh = et.parse_f64(row, speed, "speed_kmh")?;
        if speed_kmh <= 0.0 {
            return Err(et.bad(row, "speed_kmh", &r[speed]));
        }
        let modes = ModeMask::parse(&r[modes]).ok_or_else(|| et.bad(row, "modes", &r[modes]))?;
        g.edges.push(RoadEdge {
            from: r[from].to_string(),
            to: r[to].to_string(),
            length_m,
            speed_kmh,
            modes,
        });
    }
    log::info!("roads: {} nodes, {} edges", g.nodes.len(), g.edges.len());
    Ok(g)
}

pub fn write_roads(g: &RoadGraphSource, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    let e = csv_write_err("roads_nodes.csv");
    let mut w = csv::Writer::from_writer(create_file(nodes_path)?);
    w.write_record(["node_id", "lat", "lon"]).map_err(&e)?;
    for n in &g.nodes {
        w.write_record([n.id.clone(), n.lat.to_string(), n.lon.to_string()]).map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: nodes_path.to_path_buf(),
        source,
    })?;
    let e = csv_write_err("roads_edges.csv");
    let mut w = csv::Writer::from_writer(create_file(edges_path)?);
    w.write_record(["from", "to", "length_m", "speed_kmh", "modes"]).map_err(&e)?;
    for ed in &g.edges {
        w.write_record([
            ed.from.clone(),
            ed.to.clone(),
            ed.length_m.to_string(),
            ed.speed_kmh.to_string(),
            ed.modes.label().to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: edges_path.to_path_buf(),
        source,
    })
}
