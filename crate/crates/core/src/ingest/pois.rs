use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_coordinate, create_file, csv_write_err, IngestError, Result, Table};
use crate::spatial::LatLon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiCategory {
    SocialLeisure,
    Other,
}

impl PoiCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PoiCategory::SocialLeisure => "social_leisure",
            PoiCategory::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub lat: f64,
    pub lon: f64,
    pub category: PoiCategory,
    pub confidence: f64,
}

impl Poi {
    pub fn coord(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Reads POIs, keeping social/leisure POIs whose confidence is strictly above
/// `confidence_threshold`.
pub fn parse_pois(path: &Path, confidence_threshold: f64) -> Result<Vec<Poi>> {
    pois_from_table(&Table::open(path)?, confidence_threshold)
}

pub(crate) fn pois_from_table(t: &Table, confidence_threshold: f64) -> Result<Vec<Poi>> {
    assert!(
        (0.0..=1.0).contains(&confidence_threshold),
        "confidence threshold must lie in [0, 1]"
    );
    let (id, lat, lon, cat, conf) = (
        t.col("poi_id")?,
        t.col("lat")?,
        t.col("lon")?,
        t.col("category")?,
        t.col("confidence")?,
    );
    let mut out = Vec::new();
    for row in 0..t.rows.len() {
        let r = &t.rows[row];
        let (la, lo) = (t.parse_f64(row, lat, "lat")?, t.parse_f64(row, lon, "lon")?);
        check_coordinate(&t.file, row, la, lo)?;
        let category = match &r[cat] {
            "social_leisure" => PoiCategory::SocialLeisure,
            "other" => PoiCategory::Other,
            v => {
                return Err(IngestError::UnknownLevel {
                    file: t.file.clone(),
                    row: row + 1,
                    column: "category".into(),
                    value: v.to_string(),
                })
            }
        };
        let confidence = t.parse_f64(row, conf, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(t.bad(row, "confidence", &r[conf]));
        }
        if category == PoiCategory::SocialLeisure && confidence > confidence_threshold {
            out.push(Poi {
                poi_id: r[id].to_string(),
                lat: la,
                lon: lo,
                category,
                confidence,
            });
        }
    }
    log::info!(
        "{}: retained {} of {} POIs (social_leisure, confidence > {})",
        t.file,
        out.len(),
        t.rows.len(),
        confidence_threshold
    );
    Ok(out)
}

pub fn write_pois(pois: &[Poi], path: &Path) -> Result<()> {
    let e = csv_write_err("pois.csv");
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(["poi_id", "lat", "lon", "category", "confidence"]).map_err(&e)?;
    for p in pois {
        w.write_record([
            p.poi_id.clone(),
            p.lat.to_string(),
            p.lon.to_string(),
            p.category.as_str().to_string(),
            p.confidence.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
