//! Hexagonal binning at two resolutions, cell centroids and geodesic distance.
//!
//! Two interchangeable backends sit behind [`CellIndex`]:
//!
//! * [`HexMode::Lattice`]: an axial hex lattice laid on a Lambert azimuthal
//!   equal-area projection centred on the study bounding box. Edge lengths are
//!   chosen so that cells cover 0.015 km² (fine) and 0.74 km² (coarse).
//! * [`HexMode::H3`]: standard H3 cells at resolutions 10 and 8, for data that
//!   arrives already binned with H3 tokens.
//!
//! In both modes the coarse cell of a point is the parent of its fine cell, so
//! the fine→coarse mapping is a function and every point inside one fine cell
//! shares a single coarse cell.

mod h3;
mod lattice;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lattice::{fine_edge_m, coarse_edge_m, hex_area_m2, LocalProjection};

/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Target cell area of the fine resolution, km².
pub const FINE_AREA_KM2: f64 = 0.015;
/// Target cell area of the coarse resolution, km².
pub const COARSE_AREA_KM2: f64 = 0.74;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("point ({lat}, {lon}) lies outside the study bounding box")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("unknown cell token {0:?}")]
    UnknownCell(String),
    #[error("invalid coordinate ({lat}, {lon})")]
    BadCoordinate { lat: f64, lon: f64 },
}

/// WGS84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance on the mean-radius sphere.
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Fine,
    Coarse,
}

impl Resolution {
    pub fn target_area_m2(self) -> f64 {
        match self {
            Resolution::Fine => FINE_AREA_KM2 * 1e6,
            Resolution::Coarse => COARSE_AREA_KM2 * 1e6,
        }
    }
}

/// A cell at one of the two resolutions. Ordering is by resolution, then by
/// token string, which is the tie-break order used throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub resolution: Resolution,
    pub token: String,
}

impl CellId {
    pub fn token(&self) -> &str {
        &self.token
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn center(&self) -> LatLon {
        LatLon::new((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }

    /// Smallest box containing all points, grown by `margin_m` on every side.
    pub fn around<I: IntoIterator<Item = LatLon>>(points: I, margin_m: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = BoundingBox {
            min_lat: first.lat,
            min_lon: first.lon,
            max_lat: first.lat,
            max_lon: first.lon,
        };
        for p in it {
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lat = b.max_lat.max(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lon = b.max_lon.max(p.lon);
        }
        let dlat = (margin_m / EARTH_RADIUS_M).to_degrees();
        let mid = ((b.min_lat + b.max_lat) / 2.0).to_radians().cos().max(1e-6);
        let dlon = dlat / mid;
        b.min_lat = (b.min_lat - dlat).max(-90.0);
        b.max_lat = (b.max_lat + dlat).min(90.0);
        b.min_lon = (b.min_lon - dlon).max(-180.0);
        b.max_lon = (b.max_lon + dlon).min(180.0);
        Some(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HexMode {
    #[default]
    Lattice,
    H3,
}

impl std::str::FromStr for HexMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lattice" => Ok(HexMode::Lattice),
            "h3" => Ok(HexMode::H3),
            other => Err(format!("unknown hex mode {other:?} (expected lattice|h3)")),
        }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Lattice(lattice::HexLattice),
    H3,
}

/// Immutable two-resolution cell index over a study bounding box.
#[derive(Debug, Clone)]
pub struct CellIndex {
    bbox: BoundingBox,
    backend: Backend,
}

impl CellIndex {
    pub fn new(bbox: BoundingBox, mode: HexMode) -> Self {
        let backend = match mode {
            HexMode::Lattice => Backend::Lattice(lattice::HexLattice::new(bbox.center())),
            HexMode::H3 => Backend::H3,
        };
        Self { bbox, backend }
    }

    pub fn lattice(bbox: BoundingBox) -> Self {
        Self::new(bbox, HexMode::Lattice)
    }

    pub fn h3(bbox: BoundingBox) -> Self {
        Self::new(bbox, HexMode::H3)
    }

    pub fn mode(&self) -> HexMode {
        match self.backend {
            Backend::Lattice(_) => HexMode::Lattice,
            Backend::H3 => HexMode::H3,
        }
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn bin_point(&self, p: LatLon, resolution: Resolution) -> Result<CellId, SpatialError> {
        if !p.is_valid() {
            return Err(SpatialError::BadCoordinate { lat: p.lat, lon: p.lon });
        }
        if !self.bbox.contains(p) {
            return Err(SpatialError::OutOfBounds { lat: p.lat, lon: p.lon });
        }
        let fine = match &self.backend {
            Backend::Lattice(l) => l.fine_cell(p),
            Backend::H3 => h3::fine_cell(p)?,
        };
        match resolution {
            Resolution::Fine => Ok(fine),
            Resolution::Coarse => self.parent(&fine),
        }
    }

    /// Coarse parent of a fine cell.
    pub fn parent(&self, fine: &CellId) -> Result<CellId, SpatialError> {
        if fine.resolution != Resolution::Fine {
            return Err(SpatialError::UnknownCell(fine.token.clone()));
        }
        self.check_known(fine)?;
        match &self.backend {
            Backend::Lattice(l) => l.parent(fine),
            Backend::H3 => h3::parent(fine),
        }
    }

    pub fn centroid(&self, cell: &CellId) -> Result<LatLon, SpatialError> {
        self.check_known(cell)?;
        self.raw_centroid(cell)
    }

    /// Polygon vertices of a cell, counter-clockwise, without repeating the first.
    pub fn boundary(&self, cell: &CellId) -> Result<Vec<LatLon>, SpatialError> {
        self.check_known(cell)?;
        match &self.backend {
            Backend::Lattice(l) => l.boundary(cell),
            Backend::H3 => h3::boundary(cell),
        }
    }

    /// Validates an external token at the given resolution.
    pub fn parse_token(&self, token: &str, resolution: Resolution) -> Result<CellId, SpatialError> {
        let cell = CellId {
            resolution,
            token: token.trim().to_string(),
        };
        self.check_known(&cell)?;
        Ok(cell)
    }

    /// Area of one cell in m² (exact hex area for the lattice, spherical area for H3).
    pub fn cell_area_m2(&self, cell: &CellId) -> Result<f64, SpatialError> {
        self.check_known(cell)?;
        match &self.backend {
            Backend::Lattice(_) => Ok(hex_area_m2(lattice::edge_for(cell.resolution))),
            Backend::H3 => h3::area_m2(cell),
        }
    }

    fn raw_centroid(&self, cell: &CellId) -> Result<LatLon, SpatialError> {
        match &self.backend {
            Backend::Lattice(l) => l.centroid(cell),
            Backend::H3 => h3::centroid(cell),
        }
    }

    /// A cell is known when its token parses at its resolution and the cell
    /// reaches into the bounding box (centroid within one circumradius).
    fn check_known(&self, cell: &CellId) -> Result<(), SpatialError> {
        let c = self.raw_centroid(cell)?;
        let reach = match &self.backend {
            Backend::Lattice(_) => lattice::edge_for(cell.resolution),
            Backend::H3 => (cell.resolution.target_area_m2() * 2.0 / (3.0 * 3f64.sqrt())).sqrt() * 1.3,
        };
        let grown = BoundingBox::around(
            [
                LatLon::new(self.bbox.min_lat, self.bbox.min_lon),
                LatLon::new(self.bbox.max_lat, self.bbox.max_lon),
            ],
            reach,
        )
        .expect("two points");
        if grown.contains(c) {
            Ok(())
        } else {
            Err(SpatialError::UnknownCell(cell.token.clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paris_box() -> BoundingBox {
        BoundingBox {
            min_lat: 48.75,
            min_lon: 2.2,
            max_lat: 48.95,
            max_lon: 2.5,
        }
    }

    #[test]
    fn haversine_zero_and_symmetric() {
        let a = LatLon::new(48.852968, 2.349902);
        let b = LatLon::new(48.880931, 2.355323);
        assert_eq!(haversine_m(a, a), 0.0);
        assert_eq!(haversine_m(a, b), haversine_m(b, a));
    }

    #[test]
    fn haversine_notre_dame_gare_du_nord() {
        // Vincenty on WGS84 for the same pair: 3135.016 m.
        let d = haversine_m(LatLon::new(48.852968, 2.349902), LatLon::new(48.880931, 2.355323));
        assert!((d - 3135.016).abs() / 3135.016 < 0.005, "{d}");
    }

    #[test]
    fn out_of_bounds_point() {
        for idx in [CellIndex::lattice(paris_box()), CellIndex::h3(paris_box())] {
            let err = idx.bin_point(LatLon::new(40.0, 2.3), Resolution::Fine).unwrap_err();
            assert!(matches!(err, SpatialError::OutOfBounds { .. }));
        }
    }

    #[test]
    fn unknown_token() {
        let idx = CellIndex::lattice(paris_box());
        assert!(matches!(
            idx.centroid(&CellId { resolution: Resolution::Fine, token: "nonsense".into() }),
            Err(SpatialError::UnknownCell(_))
        ));
        // Well-formed but far outside the study region.
        assert!(idx.parse_token("F900000_0", Resolution::Fine).is_err());
        let h = CellIndex::h3(paris_box());
        assert!(h.parse_token("zz", Resolution::Fine).is_err());
    }

    #[test]
    fn centroid_roundtrip_both_modes() {
        for idx in [CellIndex::lattice(paris_box()), CellIndex::h3(paris_box())] {
            for (i, p) in [(48.85, 2.35), (48.80, 2.25), (48.93, 2.47)].into_iter().enumerate() {
                let p = LatLon::new(p.0, p.1);
                for res in [Resolution::Fine, Resolution::Coarse] {
                    let c = idx.bin_point(p, res).unwrap();
                    let centroid = idx.centroid(&c).unwrap();
                    assert_eq!(idx.bin_point(centroid, res).unwrap(), c, "case {i} {res:?}");
                }
            }
        }
    }

    #[test]
    fn fine_centroid_inside_coarse_parent() {
        for idx in [CellIndex::lattice(paris_box()), CellIndex::h3(paris_box())] {
            let fine = idx.bin_point(LatLon::new(48.861, 2.336), Resolution::Fine).unwrap();
            let parent = idx.parent(&fine).unwrap();
            let c = idx.centroid(&fine).unwrap();
            assert_eq!(idx.bin_point(c, Resolution::Coarse).unwrap(), parent);
            // Geometric containment: the fine centroid is closer to its parent's
            // centroid than the coarse circumradius.
            let pc = idx.centroid(&parent).unwrap();
            assert!(haversine_m(c, pc) < 1.2 * lattice::edge_for(Resolution::Coarse));
        }
    }

    #[test]
    fn cell_areas_near_targets() {
        for idx in [CellIndex::lattice(paris_box()), CellIndex::h3(paris_box())] {
            for res in [Resolution::Fine, Resolution::Coarse] {
                let c = idx.bin_point(LatLon::new(48.85, 2.35), res).unwrap();
                let a = idx.cell_area_m2(&c).unwrap();
                let rel = a / res.target_area_m2();
                assert!((0.8..=1.2).contains(&rel), "{:?} {res:?} {rel}", idx.mode());
            }
        }
    }

    #[test]
    fn boundary_surrounds_centroid() {
        for idx in [CellIndex::lattice(paris_box()), CellIndex::h3(paris_box())] {
            let c = idx.bin_point(LatLon::new(48.85, 2.35), Resolution::Coarse).unwrap();
            let centre = idx.centroid(&c).unwrap();
            let ring = idx.boundary(&c).unwrap();
            assert_eq!(ring.len(), 6);
            for v in ring {
                let d = haversine_m(centre, v);
                assert!((0.8..1.25).contains(&(d / lattice::edge_for(Resolution::Coarse))), "{d}");
            }
        }
    }
}
