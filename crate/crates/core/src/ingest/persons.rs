use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_coordinate, create_file, csv_write_err, IngestError, Result, Table};
use crate::spatial::{CellId, CellIndex, LatLon, Resolution};

macro_rules! vocabulary {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $label:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }

        impl FromStr for $name {
            type Err = ();
            fn from_str(s: &str) -> std::result::Result<Self, ()> {
                let s = s.trim();
                $(
                    if s.eq_ignore_ascii_case($label) $(|| s.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(())
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

vocabulary!(HouseholdType {
    LivingAlone => "Living alone",
    CoupleNoChildren => "In a couple w/o children",
    SingleParent => "Single parent",
    WithParents => "Living with parent(s)",
    NotRelated => "Not related to other household members",
    SharedApartment => "In a shared apartment",
    CoupleWithChildren => "In a couple w/ child(ren)",
    OtherFamily => "Another family member in the household",
});

vocabulary!(Education {
    NoDiploma => "No diploma",
    Vocational => "Vocational",
    LowerSecondary => "Lower secondary",
    UpperSecondary => "Upper secondary",
    Higher3to4 => "3–4-year higher education" | "3-4-year higher education",
    Higher5Plus => "5-year-and-above higher education",
    Missing => "Missing",
});

vocabulary!(Gender {
    Man => "Man",
    Woman => "Woman",
});

vocabulary!(
    /// Main commute mode; decides which network a person's accessibility is computed on.
    MainMode {
        Car => "car",
        Transit => "transit" | "Public transit",
    }
);

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "yes" | "1" | "true" => Some(true),
        "no" | "0" | "false" => Some(false),
        _ => None,
    }
}

fn flag_label(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attributes {
    pub household_type: HouseholdType,
    pub active_mode: bool,
    pub main_mode: MainMode,
    pub pt_subscription: bool,
    pub education: Education,
    pub gender: Gender,
    pub age: f64,
    /// Zone-level poverty rate, percent.
    pub poverty_rate: f64,
}

impl Attributes {
    /// Named numeric covariates: 0/1 dummies for every categorical level plus
    /// the two continuous variables.
    pub fn numeric_columns(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for h in HouseholdType::ALL {
            out.push((format!("hh_{}", dummy_name(h.label())), (self.household_type == *h) as u8 as f64));
        }
        for e in Education::ALL {
            out.push((format!("edu_{}", dummy_name(e.label())), (self.education == *e) as u8 as f64));
        }
        out.push(("woman".into(), (self.gender == Gender::Woman) as u8 as f64));
        out.push(("active_mode".into(), self.active_mode as u8 as f64));
        out.push(("car_main_mode".into(), (self.main_mode == MainMode::Car) as u8 as f64));
        out.push(("pt_subscription".into(), self.pt_subscription as u8 as f64));
        out.push(("age".into(), self.age));
        out.push(("poverty_rate".into(), self.poverty_rate));
        out
    }
}

/// Lowercase snake form of a vocabulary label, used for dummy column names.
pub(crate) fn dummy_name(label: &str) -> String {
    let mut s = String::new();
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommuteSample {
    pub duration_min: f64,
    pub day_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub home_cell: CellId,
    pub work_cell: CellId,
    pub weight: f64,
    pub attributes: Attributes,
    pub commute_samples: Vec<CommuteSample>,
}

/// Where anchor cells come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellSource {
    /// `home_cell` / `work_cell` hold fine-resolution tokens.
    #[default]
    Tokens,
    /// Cells are derived from `home_lat,home_lon,work_lat,work_lon`.
    Coordinates,
}

impl FromStr for CellSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tokens" => Ok(CellSource::Tokens),
            "coordinates" => Ok(CellSource::Coordinates),
            o => Err(format!("unknown cell source {o:?} (expected tokens|coordinates)")),
        }
    }
}

pub fn parse_persons(path: &Path, index: &CellIndex, source: CellSource) -> Result<Vec<PersonRecord>> {
    persons_from_table(&Table::open(path)?, index, source)
}

pub(crate) fn persons_from_table(t: &Table, index: &CellIndex, source: CellSource) -> Result<Vec<PersonRecord>> {
    let id = t.col("person_id")?;
    let weight = t.col("weight")?;
    let cols = [
        t.col("household_type")?,
        t.col("active_mode")?,
        t.col("main_mode")?,
        t.col("pt_subscription")?,
        t.col("education")?,
        t.col("gender")?,
    ];
    let (age, pov) = (t.col("age")?, t.col("poverty_rate")?);
    let anchors = match source {
        CellSource::Tokens => Anchors::Tokens(t.col("home_cell")?, t.col("work_cell")?),
        CellSource::Coordinates => Anchors::Coords([
            t.col("home_lat")?,
            t.col("home_lon")?,
            t.col("work_lat")?,
            t.col("work_lon")?,
        ]),
    };

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for row in 0..t.rows.len() {
        let r = &t.rows[row];
        let person_id = r[id].to_string();
        if !seen.insert(person_id.clone()) {
            return Err(IngestError::DuplicateId {
                file: t.file.clone(),
                row: row + 1,
                id: person_id,
            });
        }
        let w = r[weight].parse::<f64>().ok().filter(|w| w.is_finite() && *w > 0.0);
        let Some(w) = w else {
            return Err(IngestError::BadWeight {
                file: t.file.clone(),
                row: row + 1,
                value: r[weight].to_string(),
            });
        };
        let level = |i: usize, column: &str| IngestError::UnknownLevel {
            file: t.file.clone(),
            row: row + 1,
            column: column.to_string(),
            value: r[cols[i]].to_string(),
        };
        let attributes = Attributes {
            household_type: r[cols[0]].parse().map_err(|_| level(0, "household_type"))?,
            active_mode: parse_flag(&r[cols[1]]).ok_or_else(|| level(1, "active_mode"))?,
            main_mode: r[cols[2]].parse().map_err(|_| level(2, "main_mode"))?,
            pt_subscription: parse_flag(&r[cols[3]]).ok_or_else(|| level(3, "pt_subscription"))?,
            education: r[cols[4]].parse().map_err(|_| level(4, "education"))?,
            gender: r[cols[5]].parse().map_err(|_| level(5, "gender"))?,
            age: t.parse_f64(row, age, "age")?,
            poverty_rate: t.parse_f64(row, pov, "poverty_rate")?,
        };
        let missing = |anchor: &'static str| IngestError::MissingAnchor {
            file: t.file.clone(),
            row: row + 1,
            person_id: person_id.clone(),
            anchor,
        };
        let (home_cell, work_cell) = match anchors {
            Anchors::Tokens(h, wk) => (
                index.parse_token(&r[h], Resolution::Fine).map_err(|_| missing("home"))?,
                index.parse_token(&r[wk], Resolution::Fine).map_err(|_| missing("work"))?,
            ),
            Anchors::Coords([hl, hn, wl, wn]) => {
                let cell = |la: usize, lo: usize, anchor: &'static str| -> Result<CellId> {
                    if r[la].is_empty() || r[lo].is_empty() {
                        return Err(missing(anchor));
                    }
                    let lat = t.parse_f64(row, la, &format!("{anchor}_lat"))?;
                    let lon = t.parse_f64(row, lo, &format!("{anchor}_lon"))?;
                    check_coordinate(&t.file, row, lat, lon)?;
                    index
                        .bin_point(LatLon::new(lat, lon), Resolution::Fine)
                        .map_err(|source| IngestError::Spatial {
                            file: t.file.clone(),
                            row: row + 1,
                            source,
                        })
                };
                (cell(hl, hn, "home")?, cell(wl, wn, "work")?)
            }
        };
        out.push(PersonRecord {
            person_id,
            home_cell,
            work_cell,
            weight: w,
            attributes,
            commute_samples: Vec::new(),
        });
    }
    log::info!("{}: {} persons", t.file, out.len());
    Ok(out)
}

#[derive(Clone, Copy)]
enum Anchors {
    Tokens(usize, usize),
    Coords([usize; 4]),
}

pub fn write_persons(persons: &[PersonRecord], path: &Path) -> Result<()> {
    let e = csv_write_err("persons.csv");
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record([
        "person_id",
        "home_cell",
        "work_cell",
        "weight",
        "household_type",
        "active_mode",
        "main_mode",
        "pt_subscription",
        "education",
        "gender",
        "age",
        "poverty_rate",
    ])
    .map_err(&e)?;
    for p in persons {
        let a = &p.attributes;
        w.write_record([
            p.person_id.clone(),
            p.home_cell.token.clone(),
            p.work_cell.token.clone(),
            p.weight.to_string(),
            a.household_type.label().to_string(),
            flag_label(a.active_mode).to_string(),
            a.main_mode.label().to_string(),
            flag_label(a.pt_subscription).to_string(),
            a.education.label().to_string(),
            a.gender.label().to_string(),
            a.age.to_string(),
            a.poverty_rate.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
