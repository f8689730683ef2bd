use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{create_file, csv_write_err, CommuteSample, IngestError, PersonRecord, Result, Table};
use crate::spatial::{CellId, CellIndex, Resolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TravelMode {
    Car,
    Transit,
    Walk,
    Bike,
    Other,
}

impl TravelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TravelMode::Car => "car",
            TravelMode::Transit => "transit",
            TravelMode::Walk => "walk",
            TravelMode::Bike => "bike",
            TravelMode::Other => "other",
        }
    }
}

impl FromStr for TravelMode {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "car" => TravelMode::Car,
            "transit" => TravelMode::Transit,
            "walk" => TravelMode::Walk,
            "bike" => TravelMode::Bike,
            "other" => TravelMode::Other,
            _ => return Err(()),
        })
    }
}

/// Closed purpose vocabulary of the travel diary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TripPurpose {
    Home,
    Work,
    Study,
    Leisure,
    Shopping,
    Escort,
    Personal,
    Other,
}

impl TripPurpose {
    pub fn as_str(self) -> &'static str {
        match self {
            TripPurpose::Home => "HOME",
            TripPurpose::Work => "WORK",
            TripPurpose::Study => "STUDY",
            TripPurpose::Leisure => "LEISURE",
            TripPurpose::Shopping => "SHOPPING",
            TripPurpose::Escort => "ESCORT",
            TripPurpose::Personal => "PERSONAL",
            TripPurpose::Other => "OTHER",
        }
    }
}

impl FromStr for TripPurpose {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s.trim() {
            "HOME" => TripPurpose::Home,
            "WORK" => TripPurpose::Work,
            "STUDY" => TripPurpose::Study,
            "LEISURE" => TripPurpose::Leisure,
            "SHOPPING" => TripPurpose::Shopping,
            "ESCORT" => TripPurpose::Escort,
            "PERSONAL" => TripPurpose::Personal,
            "OTHER" => TripPurpose::Other,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub person_id: String,
    pub date: NaiveDate,
    pub origin_cell: CellId,
    pub dest_cell: CellId,
    pub mode: TravelMode,
    pub purpose: TripPurpose,
    pub duration_min: f64,
    pub depart_time: u32,
    /// Weight of the survey day this trip belongs to; 1 when the column is absent.
    pub day_weight: f64,
}

pub fn parse_trips(path: &Path, index: &CellIndex, persons: &[PersonRecord]) -> Result<Vec<TripRecord>> {
    trips_from_table(&Table::open(path)?, index, persons)
}

pub(crate) fn trips_from_table(t: &Table, index: &CellIndex, persons: &[PersonRecord]) -> Result<Vec<TripRecord>> {
    let known: std::collections::HashSet<&str> = persons.iter().map(|p| p.person_id.as_str()).collect();
    let (pid, date, o, d) = (t.col("person_id")?, t.col("date")?, t.col("origin_cell")?, t.col("dest_cell")?);
    let (mode, purpose, dur, dep) = (
        t.col("mode")?,
        t.col("purpose")?,
        t.col("duration_min")?,
        t.col("depart_time")?,
    );
    let dw = t.opt_col("day_weight");
    let mut out = Vec::with_capacity(t.rows.len());
    for row in 0..t.rows.len() {
        let r = &t.rows[row];
        if !known.contains(&r[pid]) {
            return Err(IngestError::DanglingReference {
                file: t.file.clone(),
                row: row + 1,
                kind: "person",
                id: r[pid].to_string(),
            });
        }
        let cell = |i: usize, column: &str| {
            index
                .parse_token(&r[i], Resolution::Fine)
                .map_err(|_| t.bad(row, column, &r[i]))
        };
        let duration_min = t.parse_f64(row, dur, "duration_min")?;
        if duration_min < 0.0 {
            return Err(t.bad(row, "duration_min", &r[dur]));
        }
        let day_weight = match dw {
            Some(i) if !r[i].is_empty() => {
                let v = t.parse_f64(row, i, "day_weight")?;
                if v <= 0.0 {
                    return Err(IngestError::BadWeight {
                        file: t.file.clone(),
                        row: row + 1,
                        value: r[i].to_string(),
                    });
                }
                v
            }
            _ => 1.0,
        };
        out.push(TripRecord {
            person_id: r[pid].to_string(),
            date: NaiveDate::parse_from_str(&r[date], "%Y-%m-%d").map_err(|_| t.bad(row, "date", &r[date]))?,
            origin_cell: cell(o, "origin_cell")?,
            dest_cell: cell(d, "dest_cell")?,
            mode: r[mode].parse().map_err(|_| IngestError::UnknownLevel {
                file: t.file.clone(),
                row: row + 1,
                column: "mode".into(),
                value: r[mode].to_string(),
            })?,
            purpose: r[purpose].parse().map_err(|_| IngestError::UnknownLevel {
                file: t.file.clone(),
                row: row + 1,
                column: "purpose".into(),
                value: r[purpose].to_string(),
            })?,
            duration_min,
            depart_time: t.parse(row, dep, "depart_time")?,
            day_weight,
        });
    }
    log::info!("{}: {} trips", t.file, out.len());
    Ok(out)
}

/// Fills each person's commute samples from their trips with purpose WORK.
pub fn attach_commutes(persons: &mut [PersonRecord], trips: &[TripRecord]) {
    let mut by_person: HashMap<&str, Vec<CommuteSample>> = HashMap::new();
    for t in trips.iter().filter(|t| t.purpose == TripPurpose::Work) {
        by_person.entry(t.person_id.as_str()).or_default().push(CommuteSample {
            duration_min: t.duration_min,
            day_weight: t.day_weight,
        });
    }
    for p in persons.iter_mut() {
        p.commute_samples = by_person.remove(p.person_id.as_str()).unwrap_or_default();
    }
}

pub fn write_trips(trips: &[TripRecord], path: &Path) -> Result<()> {
    let e = csv_write_err("trips.csv");
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record([
        "person_id",
        "date",
        "origin_cell",
        "dest_cell",
        "mode",
        "purpose",
        "duration_min",
        "depart_time",
        "day_weight",
    ])
    .map_err(&e)?;
    for t in trips {
        w.write_record([
            t.person_id.clone(),
            t.date.format("%Y-%m-%d").to_string(),
            t.origin_cell.token.clone(),
            t.dest_cell.token.clone(),
            t.mode.as_str().to_string(),
            t.purpose.as_str().to_string(),
            t.duration_min.to_string(),
            t.depart_time.to_string(),
            t.day_weight.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
