use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Cursor, Read};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{check_coordinate, create_file, csv_write_err, IngestError, Result, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    pub short_name: String,
    pub route_type: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub id: String,
    pub route_id: String,
    pub service_id: String,
}

/// One scheduled stop event. Times are seconds after midnight of the service
/// day and may exceed 24 h for post-midnight service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopTime {
    pub trip_id: String,
    pub stop_id: String,
    pub arrival: u32,
    pub departure: u32,
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub service_id: String,
    /// Monday first.
    pub days: [bool; 7],
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExceptionType {
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarDate {
    pub service_id: String,
    pub date: NaiveDate,
    pub exception: ExceptionType,
}

/// A transfer between two stops. `from_stop == to_stop` expresses a minimum
/// change time at one stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from_stop: String,
    pub to_stop: String,
    pub min_transfer_s: u32,
}

/// A validated static GTFS feed. Stop times are sorted by (trip, sequence).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GtfsBundle {
    pub stops: Vec<Stop>,
    pub routes: Vec<Route>,
    pub trips: Vec<Trip>,
    pub stop_times: Vec<StopTime>,
    pub calendars: Vec<Calendar>,
    pub calendar_dates: Vec<CalendarDate>,
    pub transfers: Vec<Transfer>,
}

impl GtfsBundle {
    /// Service ids running on `date`, after applying calendar_dates exceptions.
    pub fn active_services(&self, date: NaiveDate) -> BTreeSet<String> {
        let weekday = date.weekday().num_days_from_monday() as usize;
        let mut active: BTreeSet<String> = self
            .calendars
            .iter()
            .filter(|c| c.start <= date && date <= c.end && c.days[weekday])
            .map(|c| c.service_id.clone())
            .collect();
        for cd in self.calendar_dates.iter().filter(|cd| cd.date == date) {
            match cd.exception {
                ExceptionType::Added => {
                    active.insert(cd.service_id.clone());
                }
                ExceptionType::Removed => {
                    active.remove(&cd.service_id);
                }
            }
        }
        active
    }

    /// Copy of the feed keeping only trips whose service runs on `date`.
    pub fn restrict_to_date(&self, date: NaiveDate) -> GtfsBundle {
        let active = self.active_services(date);
        let trips: Vec<Trip> = self.trips.iter().filter(|t| active.contains(&t.service_id)).cloned().collect();
        let kept: HashSet<&str> = trips.iter().map(|t| t.id.as_str()).collect();
        let stop_times = self
            .stop_times
            .iter()
            .filter(|st| kept.contains(st.trip_id.as_str()))
            .cloned()
            .collect();
        GtfsBundle {
            trips,
            stop_times,
            ..self.clone()
        }
    }

    /// Re-runs every referential and ordering check.
    pub fn validate(&self) -> Result<()> {
        let stops = unique_ids("stops.txt", self.stops.iter().map(|s| s.id.as_str()))?;
        let routes = unique_ids("routes.txt", self.routes.iter().map(|r| r.id.as_str()))?;
        let trips = unique_ids("trips.txt", self.trips.iter().map(|t| t.id.as_str()))?;
        for (row, s) in self.stops.iter().enumerate() {
            check_coordinate("stops.txt", row, s.lat, s.lon)?;
        }
        let services: HashSet<&str> = self
            .calendars
            .iter()
            .map(|c| c.service_id.as_str())
            .chain(self.calendar_dates.iter().map(|c| c.service_id.as_str()))
            .collect();
        for (row, t) in self.trips.iter().enumerate() {
            if !routes.contains(t.route_id.as_str()) {
                return Err(dangling("trips.txt", row, "route", &t.route_id));
            }
            if !services.contains(t.service_id.as_str()) {
                return Err(dangling("trips.txt", row, "service", &t.service_id));
            }
        }
        for (row, st) in self.stop_times.iter().enumerate() {
            if !trips.contains(st.trip_id.as_str()) {
                return Err(dangling("stop_times.txt", row, "trip", &st.trip_id));
            }
            if !stops.contains(st.stop_id.as_str()) {
                return Err(dangling("stop_times.txt", row, "stop", &st.stop_id));
            }
        }
        for (row, tr) in self.transfers.iter().enumerate() {
            for id in [&tr.from_stop, &tr.to_stop] {
                if !stops.contains(id.as_str()) {
                    return Err(dangling("transfers.txt", row, "stop", id));
                }
            }
        }
        for w in self.stop_times.windows(2) {
            if w[0].trip_id != w[1].trip_id {
                continue;
            }
            if w[1].sequence <= w[0].sequence {
                return Err(IngestError::NonMonotoneStopTimes {
                    trip_id: w[0].trip_id.clone(),
                    detail: format!("stop_sequence {} followed by {}", w[0].sequence, w[1].sequence),
                });
            }
            if w[1].arrival < w[0].departure {
                return Err(IngestError::NonMonotoneStopTimes {
                    trip_id: w[0].trip_id.clone(),
                    detail: format!(
                        "departure {} at seq {} after arrival {} at seq {}",
                        format_gtfs_time(w[0].departure),
                        w[0].sequence,
                        format_gtfs_time(w[1].arrival),
                        w[1].sequence
                    ),
                });
            }
        }
        for st in &self.stop_times {
            if st.departure < st.arrival {
                return Err(IngestError::NonMonotoneStopTimes {
                    trip_id: st.trip_id.clone(),
                    detail: format!("departure before arrival at seq {}", st.sequence),
                });
            }
        }
        Ok(())
    }
}

fn dangling(file: &str, row: usize, kind: &'static str, id: &str) -> IngestError {
    IngestError::DanglingReference {
        file: file.to_string(),
        row: row + 1,
        kind,
        id: id.to_string(),
    }
}

fn unique_ids<'a, I: Iterator<Item = &'a str>>(file: &str, ids: I) -> Result<HashSet<&'a str>> {
    let mut seen = HashSet::new();
    for (row, id) in ids.enumerate() {
        if !seen.insert(id) {
            return Err(IngestError::DuplicateId {
                file: file.to_string(),
                row: row + 1,
                id: id.to_string(),
            });
        }
    }
    Ok(seen)
}

/// Parses `H:MM:SS` / `HH:MM:SS`; hours may exceed 23.
pub fn parse_gtfs_time(s: &str) -> Option<u32> {
    let mut parts = s.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let sec: u32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || m > 59 || sec > 59 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

pub fn format_gtfs_time(s: u32) -> String {
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

fn parse_date(t: &Table, row: usize, idx: usize, column: &str) -> Result<NaiveDate> {
    let v = &t.rows[row][idx];
    NaiveDate::parse_from_str(v, "%Y%m%d").map_err(|_| t.bad(row, column, v))
}

/// Table provider for a feed directory or zip archive.
enum Source {
    Dir(std::path::PathBuf),
    Zip(HashMap<String, Vec<u8>>),
}

impl Source {
    fn open(path: &Path) -> Result<Self> {
        let io_err = |source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        };
        if path.is_dir() {
            return Ok(Source::Dir(path.to_path_buf()));
        }
        if !path.exists() {
            return Err(IngestError::MissingTable(format!("{} (feed path does not exist)", path.display())));
        }
        let f = File::open(path).map_err(io_err)?;
        let mut archive = zip::ZipArchive::new(f).map_err(|e| IngestError::Csv {
            file: path.display().to_string(),
            message: format!("not a GTFS directory or zip archive: {e}"),
        })?;
        let mut entries = HashMap::new();
        for i in 0..archive.len() {
            let mut entry = archive.by_index(i).map_err(|e| IngestError::Csv {
                file: path.display().to_string(),
                message: e.to_string(),
            })?;
            if entry.is_dir() {
                continue;
            }
            // Feeds zipped with a top-level folder are accepted too.
            let full = entry.name().map_err(|e| IngestError::Csv {
                file: path.display().to_string(),
                message: e.to_string(),
            })?;
            let name = full.rsplit('/').next().unwrap_or_default().to_string();
            let mut buf = Vec::new();
            entry.read_to_end(&mut buf).map_err(io_err)?;
            entries.insert(name, buf);
        }
        Ok(Source::Zip(entries))
    }

    fn table(&self, name: &str) -> Result<Option<Table>> {
        match self {
            Source::Dir(dir) => {
                let p = dir.join(name);
                if p.is_file() {
                    Table::open(&p).map(Some)
                } else {
                    Ok(None)
                }
            }
            Source::Zip(entries) => match entries.get(name) {
                Some(bytes) => Table::from_reader(name, Cursor::new(bytes)).map(Some),
                None => Ok(None),
            },
        }
    }

    fn required(&self, name: &str) -> Result<Table> {
        self.table(name)?.ok_or_else(|| IngestError::MissingTable(name.to_string()))
    }
}

/// Reads and validates a GTFS feed from a directory or a zip archive.
pub fn parse_gtfs(path: &Path) -> Result<GtfsBundle> {
    let src = Source::open(path)?;
    let stops_t = src.required("stops.txt")?;
    let routes_t = src.required("routes.txt")?;
    let trips_t = src.required("trips.txt")?;
    let st_t = src.required("stop_times.txt")?;
    let cal_t = src.table("calendar.txt")?;
    let cd_t = src.table("calendar_dates.txt")?;
    if cal_t.is_none() && cd_t.is_none() {
        return Err(IngestError::MissingTable("calendar.txt or calendar_dates.txt".into()));
    }

    let mut bundle = GtfsBundle::default();

    let (id, lat, lon) = (stops_t.col("stop_id")?, stops_t.col("stop_lat")?, stops_t.col("stop_lon")?);
    let name = stops_t.opt_col("stop_name");
    for row in 0..stops_t.rows.len() {
        let r = &stops_t.rows[row];
        bundle.stops.push(Stop {
            id: r[id].to_string(),
            name: name.map(|i| r[i].to_string()).unwrap_or_default(),
            lat: stops_t.parse_f64(row, lat, "stop_lat")?,
            lon: stops_t.parse_f64(row, lon, "stop_lon")?,
        });
    }

    let id = routes_t.col("route_id")?;
    let short = routes_t.opt_col("route_short_name");
    let rtype = routes_t.col("route_type")?;
    for row in 0..routes_t.rows.len() {
        let r = &routes_t.rows[row];
        bundle.routes.push(Route {
            id: r[id].to_string(),
            short_name: short.map(|i| r[i].to_string()).unwrap_or_default(),
            route_type: routes_t.parse(row, rtype, "route_type")?,
        });
    }

    let (route, service, trip) = (trips_t.col("route_id")?, trips_t.col("service_id")?, trips_t.col("trip_id")?);
    for r in &trips_t.rows {
        bundle.trips.push(Trip {
            id: r[trip].to_string(),
            route_id: r[route].to_string(),
            service_id: r[service].to_string(),
        });
    }

    let (trip, arr, dep, stop, seq) = (
        st_t.col("trip_id")?,
        st_t.col("arrival_time")?,
        st_t.col("departure_time")?,
        st_t.col("stop_id")?,
        st_t.col("stop_sequence")?,
    );
    for row in 0..st_t.rows.len() {
        let r = &st_t.rows[row];
        let a = parse_gtfs_time(&r[arr]);
        let d = parse_gtfs_time(&r[dep]);
        let (arrival, departure) = match (a, d) {
            (Some(a), Some(d)) => (a, d),
            (Some(a), None) if r[dep].is_empty() => (a, a),
            (None, Some(d)) if r[arr].is_empty() => (d, d),
            _ => {
                let (column, value) = if a.is_none() { ("arrival_time", &r[arr]) } else { ("departure_time", &r[dep]) };
                return Err(st_t.bad(row, column, value));
            }
        };
        bundle.stop_times.push(StopTime {
            trip_id: r[trip].to_string(),
            stop_id: r[stop].to_string(),
            arrival,
            departure,
            sequence: st_t.parse(row, seq, "stop_sequence")?,
        });
    }
    // Stable sort keeps duplicate sequences adjacent so validation reports them.
    bundle
        .stop_times
        .sort_by(|a, b| a.trip_id.cmp(&b.trip_id).then(a.sequence.cmp(&b.sequence)));

    if let Some(t) = cal_t {
        let sid = t.col("service_id")?;
        let names = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
        let day_cols = names.iter().map(|n| t.col(n)).collect::<Result<Vec<_>>>()?;
        let (start, end) = (t.col("start_date")?, t.col("end_date")?);
        for row in 0..t.rows.len() {
            let mut days = [false; 7];
            for (k, &c) in day_cols.iter().enumerate() {
                days[k] = match &t.rows[row][c] {
                    "1" => true,
                    "0" => false,
                    v => return Err(t.bad(row, names[k], v)),
                };
            }
            bundle.calendars.push(Calendar {
                service_id: t.rows[row][sid].to_string(),
                days,
                start: parse_date(&t, row, start, "start_date")?,
                end: parse_date(&t, row, end, "end_date")?,
            });
        }
    }
    if let Some(t) = cd_t {
        let (sid, date, ex) = (t.col("service_id")?, t.col("date")?, t.col("exception_type")?);
        for row in 0..t.rows.len() {
            let exception = match &t.rows[row][ex] {
                "1" => ExceptionType::Added,
                "2" => ExceptionType::Removed,
                v => return Err(t.bad(row, "exception_type", v)),
            };
            bundle.calendar_dates.push(CalendarDate {
                service_id: t.rows[row][sid].to_string(),
                date: parse_date(&t, row, date, "date")?,
                exception,
            });
        }
    }
    if let Some(t) = src.table("transfers.txt")? {
        let (from, to) = (t.col("from_stop_id")?, t.col("to_stop_id")?);
        let min = t.opt_col("min_transfer_time");
        for row in 0..t.rows.len() {
            let min_transfer_s = match min {
                Some(i) if !t.rows[row][i].is_empty() => t.parse(row, i, "min_transfer_time")?,
                _ => 0,
            };
            bundle.transfers.push(Transfer {
                from_stop: t.rows[row][from].to_string(),
                to_stop: t.rows[row][to].to_string(),
                min_transfer_s,
            });
        }
    }

    bundle.validate()?;
    log::info!(
        "gtfs {}: {} stops, {} routes, {} trips, {} stop_times, {} calendars, {} calendar_dates, {} transfers",
        path.display(),
        bundle.stops.len(),
        bundle.routes.len(),
        bundle.trips.len(),
        bundle.stop_times.len(),
        bundle.calendars.len(),
        bundle.calendar_dates.len(),
        bundle.transfers.len()
    );
    Ok(bundle)
}

/// Writes the feed as a GTFS directory. Optional tables are written only
/// when non-empty.
pub fn write_gtfs(bundle: &GtfsBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let open = |name: &str| -> Result<csv::Writer<File>> { Ok(csv::Writer::from_writer(create_file(&dir.join(name))?)) };

    let e = csv_write_err("stops.txt");
    let mut w = open("stops.txt")?;
    w.write_record(["stop_id", "stop_name", "stop_lat", "stop_lon"]).map_err(&e)?;
    for s in &bundle.stops {
        w.write_record([s.id.clone(), s.name.clone(), s.lat.to_string(), s.lon.to_string()])
            .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: dir.join("stops.txt"), source })?;

    let e = csv_write_err("routes.txt");
    let mut w = open("routes.txt")?;
    w.write_record(["route_id", "route_short_name", "route_type"]).map_err(&e)?;
    for r in &bundle.routes {
        w.write_record([r.id.clone(), r.short_name.clone(), r.route_type.to_string()])
            .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: dir.join("routes.txt"), source })?;

    let e = csv_write_err("trips.txt");
    let mut w = open("trips.txt")?;
    w.write_record(["route_id", "service_id", "trip_id"]).map_err(&e)?;
    for t in &bundle.trips {
        w.write_record([&t.route_id, &t.service_id, &t.id]).map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: dir.join("trips.txt"), source })?;

    let e = csv_write_err("stop_times.txt");
    let mut w = open("stop_times.txt")?;
    w.write_record(["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"])
        .map_err(&e)?;
    for st in &bundle.stop_times {
        w.write_record([
            st.trip_id.clone(),
            format_gtfs_time(st.arrival),
            format_gtfs_time(st.departure),
            st.stop_id.clone(),
            st.sequence.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: dir.join("stop_times.txt"), source })?;

    if !bundle.calendars.is_empty() {
        let e = csv_write_err("calendar.txt");
        let mut w = open("calendar.txt")?;
        w.write_record([
            "service_id", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "start_date",
            "end_date",
        ])
        .map_err(&e)?;
        for c in &bundle.calendars {
            let mut rec = vec![c.service_id.clone()];
            rec.extend(c.days.iter().map(|&d| if d { "1" } else { "0" }.to_string()));
            rec.push(c.start.format("%Y%m%d").to_string());
            rec.push(c.end.format("%Y%m%d").to_string());
            w.write_record(&rec).map_err(&e)?;
        }
        w.flush().map_err(|source| IngestError::Io { path: dir.join("calendar.txt"), source })?;
    }
    if !bundle.calendar_dates.is_empty() {
        let e = csv_write_err("calendar_dates.txt");
        let mut w = open("calendar_dates.txt")?;
        w.write_record(["service_id", "date", "exception_type"]).map_err(&e)?;
        for c in &bundle.calendar_dates {
            let ex = match c.exception {
                ExceptionType::Added => "1",
                ExceptionType::Removed => "2",
            };
            w.write_record([c.service_id.clone(), c.date.format("%Y%m%d").to_string(), ex.to_string()])
                .map_err(&e)?;
        }
        w.flush().map_err(|source| IngestError::Io { path: dir.join("calendar_dates.txt"), source })?;
    }
    if !bundle.transfers.is_empty() {
        let e = csv_write_err("transfers.txt");
        let mut w = open("transfers.txt")?;
        w.write_record(["from_stop_id", "to_stop_id", "transfer_type", "min_transfer_time"])
            .map_err(&e)?;
        for t in &bundle.transfers {
            w.write_record([t.from_stop.clone(), t.to_stop.clone(), "2".to_string(), t.min_transfer_s.to_string()])
                .map_err(&e)?;
        }
        w.flush().map_err(|source| IngestError::Io { path: dir.join("transfers.txt"), source })?;
    }
    Ok(())
}
