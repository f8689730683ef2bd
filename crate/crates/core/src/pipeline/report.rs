//! Output writers. Every file is written in a stable row order so that two
//! runs with the same seed produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{io_err, BehaviorOutputs, Inputs, PathReport, PersonBehavior, PipelineError, RunConfig};
use crate::access::FeasibleSet;
use crate::behavior::{weighted_median_bootstrap, weighted_stats, SelectivityResult};
use crate::ingest::PersonRecord;
use crate::pathmodel::{Dataset, DropReason};
use crate::router::{Place, TravelTimeMatrix};
use crate::spatial::{CellId, LatLon};

type Csv = csv::Writer<BufWriter<File>>;

fn csv_writer(path: &Path) -> Result<Csv, PipelineError> {
    let f = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_row<I, T>(w: &mut Csv, path: &Path, row: I) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| io_err(path)(e.into()))
}

fn finish(mut w: Csv, path: &Path) -> Result<(), PipelineError> {
    w.flush().map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `spa.csv` (one row per person) and `spa_sets.csv` (one row per ranked cell).
pub fn write_spa(dir: &Path, sets: &[FeasibleSet]) -> Result<(), PipelineError> {
    let p = dir.join("spa.csv");
    let mut w = csv_writer(&p)?;
    csv_row(&mut w, &p, ["person_id", "mode", "t_hw_min", "t_hw_fallback", "A_i", "log1p_A"])?;
    for s in sets {
        csv_row(
            &mut w,
            &p,
            [
                s.person_id.clone(),
                s.mode.as_str().to_string(),
                opt(s.t_hw_min),
                s.t_hw_fallback.to_string(),
                s.a_i.to_string(),
                s.log1p_a().to_string(),
            ],
        )?;
    }
    finish(w, &p)?;
    let p = dir.join("spa_sets.csv");
    let mut w = csv_writer(&p)?;
    csv_row(&mut w, &p, ["person_id", "coarse_cell", "rank", "best_remaining_min", "poi_count"])?;
    for s in sets {
        for e in &s.entries {
            csv_row(
                &mut w,
                &p,
                [
                    s.person_id.clone(),
                    e.coarse_cell.token().to_string(),
                    e.rank.to_string(),
                    e.best_remaining_min.to_string(),
                    e.poi_count.to_string(),
                ],
            )?;
        }
    }
    finish(w, &p)
}

pub fn write_selectivity(path: &Path, rows: &[SelectivityResult]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    csv_row(
        &mut w,
        path,
        ["person_id", "status", "n_i", "k_i", "share_outside", "t_act", "null_mean", "null_sd", "p_value", "d", "draws"],
    )?;
    for r in rows {
        let status = serde_json::to_value(r.status).expect("status serializes");
        csv_row(
            &mut w,
            path,
            [
                r.person_id.clone(),
                status.as_str().unwrap_or_default().to_string(),
                r.n_i.to_string(),
                r.k_i.to_string(),
                r.share_outside.to_string(),
                opt(r.t_act),
                opt(r.null_mean),
                opt(r.null_sd),
                opt(r.p_value),
                opt(r.d),
                r.b.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

pub fn write_diversity(path: &Path, rows: &[PersonBehavior]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    csv_row(&mut w, path, ["person_id", "visits", "distinct_cells", "h1", "total_travel_min"])?;
    for r in rows {
        csv_row(
            &mut w,
            path,
            [
                r.person_id.clone(),
                r.visits.to_string(),
                r.distinct_cells.to_string(),
                opt(r.h1),
                opt(r.total_travel_min),
            ],
        )?;
    }
    finish(w, path)
}

/// Long travel-time table; unreachable pairs are omitted.
pub fn write_matrix(path: &Path, matrices: &[TravelTimeMatrix]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    csv_row(&mut w, path, ["origin", "dest", "mode", "depart_s", "travel_s"])?;
    for m in matrices {
        for (d, t) in m.dest_ids.iter().zip(&m.travel_s) {
            if let Some(t) = t {
                csv_row(
                    &mut w,
                    path,
                    [m.origin_id.clone(), d.clone(), m.mode.as_str().to_string(), m.depart_s.to_string(), t.to_string()],
                )?;
            }
        }
    }
    finish(w, path)
}

#[derive(Deserialize)]
struct PlaceRow {
    id: String,
    lat: f64,
    lon: f64,
}

/// Reads `id,lat,lon` rows.
pub fn read_places(path: &Path) -> Result<Vec<Place>, PipelineError> {
    let bad = |e: csv::Error| PipelineError::Config(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(bad)?;
    let mut out = Vec::new();
    for row in r.deserialize::<PlaceRow>() {
        let row = row.map_err(bad)?;
        let c = LatLon::new(row.lat, row.lon);
        if !c.is_valid() {
            return Err(PipelineError::Config(format!("{}: invalid coordinate for {}", path.display(), row.id)));
        }
        out.push(Place::new(row.id, c));
    }
    Ok(out)
}

/// One row of the weighted summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub variable: String,
    pub persons: usize,
    pub weighted_mean: f64,
    pub weighted_sd: f64,
    pub weighted_median: f64,
    pub median_se: f64,
}

fn stat_row(variable: &str, values: &[f64], weights: &[f64], cfg: &RunConfig) -> StatRow {
    if values.is_empty() {
        return StatRow {
            variable: variable.into(),
            persons: 0,
            weighted_mean: f64::NAN,
            weighted_sd: f64::NAN,
            weighted_median: f64::NAN,
            median_se: f64::NAN,
        };
    }
    let (mean, sd) = weighted_stats(values, weights);
    let seed = cfg.stage_seed(&format!("stats/{variable}"));
    let (median, se) = weighted_median_bootstrap(values, weights, cfg.bootstrap_replicates, seed);
    StatRow {
        variable: variable.into(),
        persons: values.len(),
        weighted_mean: mean,
        weighted_sd: sd,
        weighted_median: median,
        median_se: se,
    }
}

/// Weighted summaries of the person-level measures. Persons missing a
/// measure are left out of that row only.
pub fn summary_stats(persons: &[PersonRecord], sets: &[FeasibleSet], behavior: &BehaviorOutputs, cfg: &RunConfig) -> Vec<StatRow> {
    let weight: BTreeMap<&str, f64> = persons.iter().map(|p| (p.person_id.as_str(), p.weight)).collect();
    let collect = |it: &mut dyn Iterator<Item = (&str, Option<f64>)>| -> (Vec<f64>, Vec<f64>) {
        it.filter_map(|(id, v)| Some((v?, weight[id]))).unzip()
    };
    let mut rows = Vec::new();
    let mut add = |name: &str, (v, w): (Vec<f64>, Vec<f64>)| rows.push(stat_row(name, &v, &w, cfg));
    add("A_i", collect(&mut sets.iter().map(|s| (s.person_id.as_str(), Some(s.a_i as f64)))));
    add("log1p_A", collect(&mut sets.iter().map(|s| (s.person_id.as_str(), Some(s.log1p_a())))));
    add(
        "spa_nonzero",
        collect(&mut sets.iter().map(|s| (s.person_id.as_str(), Some((s.a_i > 0) as u8 as f64)))),
    );
    add(
        "total_travel_min",
        collect(&mut behavior.persons.iter().map(|b| (b.person_id.as_str(), b.total_travel_min))),
    );
    add("h1", collect(&mut behavior.persons.iter().map(|b| (b.person_id.as_str(), b.h1))));
    add(
        "selectivity_d",
        collect(&mut behavior.selectivity.iter().map(|r| (r.person_id.as_str(), r.d))),
    );
    add(
        "selectivity_p",
        collect(&mut behavior.selectivity.iter().map(|r| (r.person_id.as_str(), r.p_value))),
    );
    rows
}

pub fn write_stats(path: &Path, rows: &[StatRow]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    csv_row(
        &mut w,
        path,
        ["variable", "persons", "weighted_mean", "weighted_sd", "weighted_median", "median_se"],
    )?;
    for r in rows {
        csv_row(
            &mut w,
            path,
            [
                r.variable.clone(),
                r.persons.to_string(),
                r.weighted_mean.to_string(),
                r.weighted_sd.to_string(),
                r.weighted_median.to_string(),
                r.median_se.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = data.names().to_vec();
    header.push("weight".into());
    csv_row(&mut w, path, &header)?;
    let cols: Vec<&[f64]> = data.names().iter().map(|n| data.column(n).expect("own column")).collect();
    for i in 0..data.len() {
        let mut row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
        row.push(data.weights[i].to_string());
        csv_row(&mut w, path, &row)?;
    }
    finish(w, path)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// `pathfit.json` with every estimate and `pathfit.txt` for reading.
pub fn write_path_report(dir: &Path, r: &PathReport) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(r).expect("report serializes");
    write_text(&dir.join("pathfit.json"), &(json + "\n"))?;
    write_text(&dir.join("pathfit.txt"), &path_report_text(r))
}

pub fn path_report_text(r: &PathReport) -> String {
    let mut s = String::new();
    let f = &r.fit;
    let _ = writeln!(s, "Weighted recursive path model, n = {}", f.n);
    let _ = writeln!(s, "\nCovariate screening");
    for d in &r.vif.dropped {
        let why = match d.reason {
            DropReason::NearConstant { variance } => format!("near-constant, variance {variance:.4}"),
            DropReason::Vif { vif } => format!("VIF {vif:.3}"),
        };
        let _ = writeln!(s, "  dropped {:<28} {why}", d.name);
    }
    for (name, v) in &r.vif.final_vif {
        let _ = writeln!(s, "  kept    {name:<28} VIF {v:.3}");
    }
    let _ = writeln!(s, "\nModel\n{}", f.model);
    let _ = writeln!(s, "Regressions (estimate, robust SE, standardized, p)");
    for eq in &f.equations {
        let _ = writeln!(s, "  {} ~ (R-residual variance {:.4})", eq.outcome, eq.residual_variance);
        for c in &eq.coefficients {
            let _ = writeln!(
                s,
                "    {:<28} {:>10.4} {:>9.4} {:>9.4} {:>8.4}",
                c.predictor, c.estimate, c.se, c.std_estimate, c.p_value
            );
        }
    }
    let fi = &f.fit;
    let _ = writeln!(s, "\nFit");
    let _ = writeln!(s, "  chi2 = {:.4}, df = {}, p = {:.4}", fi.chi2, fi.df, fi.p_value);
    let _ = writeln!(s, "  CFI = {:.4}, TLI = {:.4}, SRMR = {:.4}", fi.cfi, fi.tli, fi.srmr);
    let _ = writeln!(
        s,
        "  RMSEA = {:.4} [{:.4}, {:.4}]",
        fi.rmsea, fi.rmsea_ci_lower, fi.rmsea_ci_upper
    );
    let _ = writeln!(s, "\nStandardized effects (direct, indirect, total)");
    for e in &f.effects {
        let _ = writeln!(
            s,
            "  {} -> {}: {:.4} (p {:.4}), {:.4} (p {:.4}), {:.4} (p {:.4})",
            e.source, e.target, e.direct, e.direct_p, e.indirect, e.indirect_p, e.total, e.total_p
        );
    }
    let _ = writeln!(s, "\nImplied conditional independencies");
    for i in &r.independencies {
        let _ = writeln!(
            s,
            "  {} _||_ {} | {{{}}}: r = {:.4}, p = {:.4}",
            i.x,
            i.y,
            i.given.join(", "),
            i.partial_r,
            i.p_value
        );
    }
    s
}

/// One GeoJSON layer per map: share of persons with a non-empty feasible
/// set, median total travel time and median diversity, each by coarse home
/// cell.
pub fn write_geojson_layers(
    dir: &Path,
    inputs: &Inputs,
    sets: &[FeasibleSet],
    behavior: &[PersonBehavior],
    cfg: &RunConfig,
) -> Result<(), PipelineError> {
    let mut by_cell: BTreeMap<CellId, Vec<usize>> = BTreeMap::new();
    for (i, p) in inputs.persons.iter().enumerate() {
        by_cell.entry(inputs.index.parent(&p.home_cell)?).or_default().push(i);
    }
    type Measure<'a> = Box<dyn Fn(usize) -> Option<f64> + 'a>;
    let layers: [(&str, &str, Measure); 3] = [
        ("geo_spa_share", "share_spa_nonzero", Box::new(|i| Some((sets[i].a_i > 0) as u8 as f64))),
        ("geo_travel_time", "median_travel_min", Box::new(|i| behavior[i].total_travel_min)),
        ("geo_diversity", "median_h1", Box::new(|i| behavior[i].h1)),
    ];
    for (file, field, measure) in layers {
        let mut features = Vec::new();
        for (cell, members) in &by_cell {
            let (v, w): (Vec<f64>, Vec<f64>) = members
                .iter()
                .filter_map(|&i| Some((measure(i)?, inputs.persons[i].weight)))
                .unzip();
            if v.is_empty() {
                continue;
            }
            let (value, se) = if field.starts_with("share") {
                let total: f64 = w.iter().sum();
                let share = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
                (share, None)
            } else {
                let seed = cfg.stage_seed(&format!("{file}/{}", cell.token()));
                let (m, se) = weighted_median_bootstrap(&v, &w, cfg.bootstrap_replicates, seed);
                (m, Some(se))
            };
            let mut ring: Vec<[f64; 2]> = inputs.index.boundary(cell)?.iter().map(|p| [p.lon, p.lat]).collect();
            ring.push(ring[0]);
            let mut props = serde_json::Map::new();
            props.insert("cell".into(), json!(cell.token()));
            props.insert("persons".into(), json!(v.len()));
            props.insert(field.into(), json!(value));
            if let Some(se) = se {
                props.insert("bootstrap_se".into(), json!(se));
            }
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": props,
            }));
        }
        let fc = json!({"type": "FeatureCollection", "name": file, "features": features});
        let path = dir.join(format!("{file}.geojson"));
        let mut f = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        serde_json::to_writer(&mut f, &fc).map_err(|e| io_err(&path)(e.into()))?;
        f.write_all(b"\n").and_then(|_| f.flush()).map_err(io_err(&path))?;
    }
    Ok(())
}
