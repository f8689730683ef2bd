use super::{CellId, LatLon, Resolution, SpatialError, COARSE_AREA_KM2, EARTH_RADIUS_M, FINE_AREA_KM2};

/// Area of a regular hexagon with the given edge length.
pub fn hex_area_m2(edge_m: f64) -> f64 {
    1.5 * 3f64.sqrt() * edge_m * edge_m
}

fn edge_for_area(area_m2: f64) -> f64 {
    (area_m2 / (1.5 * 3f64.sqrt())).sqrt()
}

pub fn fine_edge_m() -> f64 {
    edge_for_area(FINE_AREA_KM2 * 1e6)
}

pub fn coarse_edge_m() -> f64 {
    edge_for_area(COARSE_AREA_KM2 * 1e6)
}

pub(super) fn edge_for(res: Resolution) -> f64 {
    match res {
        Resolution::Fine => fine_edge_m(),
        Resolution::Coarse => coarse_edge_m(),
    }
}

/// Spherical Lambert azimuthal equal-area projection around a fixed centre.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    lat0: f64,
    lon0: f64,
    sin0: f64,
    cos0: f64,
}

impl LocalProjection {
    pub fn new(center: LatLon) -> Self {
        let lat0 = center.lat.to_radians();
        Self {
            lat0,
            lon0: center.lon.to_radians(),
            sin0: lat0.sin(),
            cos0: lat0.cos(),
        }
    }

    pub fn forward(&self, p: LatLon) -> (f64, f64) {
        let (lat, dl) = (p.lat.to_radians(), p.lon.to_radians() - self.lon0);
        let (s, c) = (lat.sin(), lat.cos());
        let k = (2.0 / (1.0 + self.sin0 * s + self.cos0 * c * dl.cos())).sqrt();
        let x = EARTH_RADIUS_M * k * c * dl.sin();
        let y = EARTH_RADIUS_M * k * (self.cos0 * s - self.sin0 * c * dl.cos());
        (x, y)
    }

    pub fn inverse(&self, x: f64, y: f64) -> LatLon {
        let rho = (x * x + y * y).sqrt();
        if rho < 1e-12 {
            return LatLon::new(self.lat0.to_degrees(), self.lon0.to_degrees());
        }
        let c = 2.0 * (rho / (2.0 * EARTH_RADIUS_M)).asin();
        let (sc, cc) = (c.sin(), c.cos());
        let lat = (cc * self.sin0 + y * sc * self.cos0 / rho).asin();
        let lon = self.lon0 + (x * sc).atan2(rho * self.cos0 * cc - y * self.sin0 * sc);
        LatLon::new(lat.to_degrees(), lon.to_degrees())
    }
}

/// Pointy-top axial hex lattices at both resolutions on a shared projection.
#[derive(Debug, Clone)]
pub(super) struct HexLattice {
    proj: LocalProjection,
}

const NEIGHBOURS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

fn prefix(res: Resolution) -> char {
    match res {
        Resolution::Fine => 'F',
        Resolution::Coarse => 'C',
    }
}

fn token(res: Resolution, q: i64, r: i64) -> String {
    format!("{}{}_{}", prefix(res), q, r)
}

fn parse(cell: &CellId) -> Result<(i64, i64), SpatialError> {
    let bad = || SpatialError::UnknownCell(cell.token.clone());
    let rest = cell.token.strip_prefix(prefix(cell.resolution)).ok_or_else(bad)?;
    let (q, r) = rest.split_once('_').ok_or_else(bad)?;
    let q: i64 = q.parse().map_err(|_| bad())?;
    let r: i64 = r.parse().map_err(|_| bad())?;
    // Keep the canonical spelling unique: "F01_2" must not alias "F1_2".
    if token(cell.resolution, q, r) != cell.token {
        return Err(bad());
    }
    Ok((q, r))
}

fn center_xy(q: i64, r: i64, edge: f64) -> (f64, f64) {
    let (q, r) = (q as f64, r as f64);
    (edge * 3f64.sqrt() * (q + r / 2.0), edge * 1.5 * r)
}

/// Cell whose centre is nearest to (x, y). Equidistant candidates resolve to
/// the lowest token.
fn nearest_cell(x: f64, y: f64, res: Resolution) -> (i64, i64) {
    let edge = edge_for(res);
    let qf = (3f64.sqrt() / 3.0 * x - y / 3.0) / edge;
    let rf = (2.0 / 3.0 * y) / edge;
    let (q0, r0) = cube_round(qf, rf);
    let mut best: Option<(f64, String, (i64, i64))> = None;
    let candidates = std::iter::once((0, 0)).chain(NEIGHBOURS);
    for (dq, dr) in candidates {
        let (q, r) = (q0 + dq, r0 + dr);
        let (cx, cy) = center_xy(q, r, edge);
        let d = (cx - x).hypot(cy - y);
        let tok = token(res, q, r);
        let better = match &best {
            None => true,
            Some((bd, bt, _)) => {
                let tol = 1e-9 * edge;
                d < bd - tol || ((d - bd).abs() <= tol && tok < *bt)
            }
        };
        if better {
            best = Some((d, tok, (q, r)));
        }
    }
    best.expect("seven candidates").2
}

fn cube_round(q: f64, r: f64) -> (i64, i64) {
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    (rq as i64, rr as i64)
}

impl HexLattice {
    pub fn new(center: LatLon) -> Self {
        Self {
            proj: LocalProjection::new(center),
        }
    }

    pub fn fine_cell(&self, p: LatLon) -> CellId {
        let (x, y) = self.proj.forward(p);
        let (q, r) = nearest_cell(x, y, Resolution::Fine);
        CellId {
            resolution: Resolution::Fine,
            token: token(Resolution::Fine, q, r),
        }
    }

    pub fn parent(&self, fine: &CellId) -> Result<CellId, SpatialError> {
        let (q, r) = parse(fine)?;
        let (x, y) = center_xy(q, r, fine_edge_m());
        let (cq, cr) = nearest_cell(x, y, Resolution::Coarse);
        Ok(CellId {
            resolution: Resolution::Coarse,
            token: token(Resolution::Coarse, cq, cr),
        })
    }

    pub fn centroid(&self, cell: &CellId) -> Result<LatLon, SpatialError> {
        let (q, r) = parse(cell)?;
        let (x, y) = center_xy(q, r, edge_for(cell.resolution));
        Ok(self.proj.inverse(x, y))
    }

    /// Six vertices counter-clockwise, starting at the east-north-east corner.
    pub fn boundary(&self, cell: &CellId) -> Result<Vec<LatLon>, SpatialError> {
        let (q, r) = parse(cell)?;
        let edge = edge_for(cell.resolution);
        let (x, y) = center_xy(q, r, edge);
        Ok((0..6)
            .map(|i| {
                let a = (30.0 + 60.0 * i as f64).to_radians();
                self.proj.inverse(x + edge * a.cos(), y + edge * a.sin())
            })
            .collect())
    }
}
