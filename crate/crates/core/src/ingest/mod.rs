//! Parsing and validation of every external input into domain types.
//!
//! All tables are UTF-8, comma separated, with a header row. Column names are
//! fixed; see `FORMATS.md` at the repository root.

mod gtfs;
mod persons;
mod pois;
mod roads;
mod trips;

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::spatial::SpatialError;

pub use gtfs::{
    format_gtfs_time, parse_gtfs, parse_gtfs_time, write_gtfs, Calendar, CalendarDate, ExceptionType, GtfsBundle, Route,
    Stop, StopTime, Transfer, Trip,
};
pub use persons::{
    parse_persons, write_persons, Attributes, CellSource, CommuteSample, Education, Gender, HouseholdType,
    MainMode, PersonRecord,
};
pub use pois::{parse_pois, write_pois, Poi, PoiCategory};
pub use roads::{parse_roads, write_roads, ModeMask, RoadEdge, RoadGraphSource, RoadNode};
pub use trips::{attach_commutes, parse_trips, write_trips, TravelMode, TripPurpose, TripRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed table: {message}")]
    Csv { file: String, message: String },
    #[error("missing mandatory table {0}")]
    MissingTable(String),
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file} row {row}: dangling reference to {kind} {id:?}")]
    DanglingReference {
        file: String,
        row: usize,
        kind: &'static str,
        id: String,
    },
    #[error("trip {trip_id:?}: stop times are not monotone ({detail})")]
    NonMonotoneStopTimes { trip_id: String, detail: String },
    #[error("{file} row {row}: bad value {value:?} in column {column:?}")]
    BadValue {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{file} row {row}: duplicate id {id:?}")]
    DuplicateId { file: String, row: usize, id: String },
    #[error("{file} row {row}: weight {value} must be positive")]
    BadWeight { file: String, row: usize, value: String },
    #[error("{file} row {row}: unknown level {value:?} for {column:?}")]
    UnknownLevel {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{file} row {row}: person {person_id:?} has no valid {anchor} anchor")]
    MissingAnchor {
        file: String,
        row: usize,
        person_id: String,
        anchor: &'static str,
    },
    #[error("{file} row {row}: coordinate ({lat}, {lon}) out of range")]
    BadCoordinate { file: String, row: usize, lat: f64, lon: f64 },
    #[error("{file} row {row}: {source}")]
    Spatial {
        file: String,
        row: usize,
        #[source]
        source: SpatialError,
    },
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// A header-indexed CSV table held in memory. Rows are 1-based in error
/// messages, counting the header as row 0.
pub(crate) struct Table {
    pub file: String,
    headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn from_reader<R: Read>(file: &str, rdr: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(rdr);
        let csv_err = |e: csv::Error| IngestError::Csv {
            file: file.to_string(),
            message: e.to_string(),
        };
        let headers = r
            .headers()
            .map_err(csv_err)?
            .iter()
            // GTFS feeds frequently carry a UTF-8 BOM on the first header.
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect();
        let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err)?;
        Ok(Self {
            file: file.to_string(),
            headers,
            rows,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_reader(&name, f)
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| IngestError::MissingColumn {
            file: self.file.clone(),
            column: name.to_string(),
        })
    }

    pub fn opt_col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn bad(&self, row: usize, column: &str, value: &str) -> IngestError {
        IngestError::BadValue {
            file: self.file.clone(),
            row: row + 1,
            column: column.to_string(),
            value: value.to_string(),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, row: usize, idx: usize, column: &str) -> Result<T> {
        let v = &self.rows[row][idx];
        v.parse().map_err(|_| self.bad(row, column, v))
    }

    pub fn parse_f64(&self, row: usize, idx: usize, column: &str) -> Result<f64> {
        let v: f64 = self.parse(row, idx, column)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(row, column, &self.rows[row][idx]))
        }
    }
}

pub(crate) fn check_coordinate(file: &str, row: usize, lat: f64, lon: f64) -> Result<()> {
    if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
        Ok(())
    } else {
        Err(IngestError::BadCoordinate {
            file: file.to_string(),
            row: row + 1,
            lat,
            lon,
        })
    }
}

pub(crate) fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn csv_write_err(file: &str) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |e| IngestError::Csv {
        file: file.to_string(),
        message: e.to_string(),
    }
}

/// Margin added around the road and stop extent to form the study area.
pub const STUDY_AREA_MARGIN_M: f64 = 1000.0;

/// Bounding box of every road node and transit stop, grown by
/// [`STUDY_AREA_MARGIN_M`]. Cell tokens are defined relative to this box, so
/// any two runs over the same network share one tessellation.
pub fn study_area(roads: &RoadGraphSource, gtfs: Option<&GtfsBundle>) -> Option<crate::spatial::BoundingBox> {
    use crate::spatial::LatLon;
    let pts = roads
        .nodes
        .iter()
        .map(|n| LatLon::new(n.lat, n.lon))
        .chain(gtfs.into_iter().flat_map(|g| g.stops.iter().map(|s| LatLon::new(s.lat, s.lon))));
    crate::spatial::BoundingBox::around(pts, STUDY_AREA_MARGIN_M)
}
