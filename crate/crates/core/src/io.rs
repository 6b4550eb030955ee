//! Readers and writers for the sessions CSV, tariff JSON, MOER CSV and
//! catalog JSON formats.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_window, Catalog, ChargingInterval, GridRegionRef, PlugInWindow, Timestamp, UtilityRef, WindowRecord};
use crate::moer::{MoerSeries, MoerUnit};
use crate::tariff::{TariffBook, TariffDefinition, TariffError, TariffSchedule};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("{file}: {source}")]
    Json { file: String, source: serde_json::Error },
    #[error("{file}: schema violation at {path}: {detail}")]
    SchemaViolation { file: String, path: String, detail: String },
    #[error("{file}: line {line}: MOER rows must declare a unit (g_per_kwh or lb_per_mwh)")]
    UnitMissing { file: String, line: u64 },
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Open {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn schema(file: &str, path: impl Into<String>, detail: impl Into<String>) -> IoError {
    IoError::SchemaViolation {
        file: file.to_string(),
        path: path.into(),
        detail: detail.into(),
    }
}

/// RFC 3339 with the timestamp's own offset; fractional seconds only when present.
pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, false)
}

/// Deserializes JSON, reporting the document path of the first error.
fn parse_json<T: DeserializeOwned>(text: &str, file: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(file, path, e.into_inner().to_string())
    })
}

fn read_text(path: &Path) -> Result<String, IoError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = create(path)?;
    let file = file_name(path);
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| IoError::Json { file: file.clone(), source })?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|source| IoError::Open { path: path.to_path_buf(), source })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let file = file_name(path);
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|source| IoError::Csv { file: file.clone(), source })?;
    }
    w.flush().map_err(|source| IoError::Open { path: path.to_path_buf(), source })
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = file_name(path);
    csv::Reader::from_reader(open(path)?)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| IoError::Csv { file, source })
}

// ---------------------------------------------------------------- sessions

pub const SESSION_COLUMNS: [&str; 10] = [
    "window_id",
    "vehicle_id",
    "utility_id",
    "region_id",
    "plug_in",
    "plug_out",
    "charge_start",
    "charge_end",
    "energy_kwh",
    "rated_power_kw",
];

/// One input row that did not become part of a validated window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowReject {
    pub line: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_id: Option<String>,
    /// `MalformedRow` or the domain validation error kind.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct LoadedSessions {
    pub windows: Vec<PlugInWindow<f64>>,
    /// Data rows read, excluding the header.
    pub rows: usize,
    pub rows_loaded: usize,
    pub rejects: Vec<RowReject>,
}

struct SessionRow {
    window_id: String,
    vehicle_id: String,
    utility_id: String,
    region_id: String,
    plug_in: Timestamp,
    plug_out: Timestamp,
    interval: ChargingInterval<f64>,
    rated_power_kw: Option<f64>,
}

fn malformed(line: u64, window_id: Option<&str>, column: &str, detail: impl Into<String>) -> RowReject {
    RowReject {
        line,
        window_id: window_id.filter(|s| !s.is_empty()).map(str::to_string),
        kind: "MalformedRow".into(),
        column: Some(column.into()),
        detail: detail.into(),
    }
}

fn parse_row(record: &csv::StringRecord, idx: &[usize; 10], line: u64) -> Result<SessionRow, RowReject> {
    let field = |i: usize| record.get(idx[i]).unwrap_or("").trim();
    let window_id = field(0);
    let text = |i: usize| {
        let v = field(i);
        if v.is_empty() {
            Err(malformed(line, Some(window_id), SESSION_COLUMNS[i], "empty value"))
        } else {
            Ok(v.to_string())
        }
    };
    let time = |i: usize| {
        DateTime::parse_from_rfc3339(field(i))
            .map_err(|e| malformed(line, Some(window_id), SESSION_COLUMNS[i], format!("not an RFC 3339 timestamp: {e}")))
    };
    let number = |i: usize| {
        field(i)
            .parse::<f64>()
            .map_err(|e| malformed(line, Some(window_id), SESSION_COLUMNS[i], format!("not a decimal number: {e}")))
    };
    Ok(SessionRow {
        window_id: text(0)?,
        vehicle_id: text(1)?,
        utility_id: text(2)?,
        region_id: text(3)?,
        plug_in: time(4)?,
        plug_out: time(5)?,
        interval: ChargingInterval::new(time(6)?, time(7)?, number(8)?),
        rated_power_kw: if field(9).is_empty() { None } else { Some(number(9)?) },
    })
}

/// Reads sessions CSV text. Bad rows and invalid windows are reported in
/// `rejects`; every data row is either loaded or rejected exactly once.
pub fn read_sessions<R: Read>(reader: R, catalog: &Catalog, file: &str) -> Result<LoadedSessions, IoError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv.headers().map_err(|source| IoError::Csv { file: file.into(), source })?.clone();
    let mut idx = [0usize; 10];
    for (i, name) in SESSION_COLUMNS.iter().enumerate() {
        idx[i] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| schema(file, "header", format!("missing column {name}")))?;
    }

    let mut rows = 0usize;
    let mut rejects = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (WindowRecord<f64>, Vec<u64>)> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = csv.position().line();
        match csv.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                rows += 1;
                let line = e.position().map(|p| p.line()).unwrap_or(line);
                rejects.push(RowReject {
                    line,
                    window_id: None,
                    kind: "MalformedRow".into(),
                    column: None,
                    detail: e.to_string(),
                });
                continue;
            }
        }
        rows += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(line);
        if record.len() != headers.len() {
            rejects.push(RowReject {
                line,
                window_id: None,
                kind: "MalformedRow".into(),
                column: None,
                detail: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
            continue;
        }
        let row = match parse_row(&record, &idx, line) {
            Ok(r) => r,
            Err(reject) => {
                rejects.push(reject);
                continue;
            }
        };
        match groups.get_mut(&row.window_id) {
            None => {
                order.push(row.window_id.clone());
                let rec = WindowRecord {
                    window_id: row.window_id.clone(),
                    vehicle_id: row.vehicle_id,
                    utility_id: row.utility_id,
                    region_id: row.region_id,
                    plug_in: row.plug_in,
                    plug_out: row.plug_out,
                    intervals: vec![row.interval],
                    rated_power_kw: row.rated_power_kw,
                };
                groups.insert(row.window_id, (rec, vec![line]));
            }
            Some((rec, lines)) => {
                let mismatch = [
                    ("vehicle_id", rec.vehicle_id != row.vehicle_id),
                    ("utility_id", rec.utility_id != row.utility_id),
                    ("region_id", rec.region_id != row.region_id),
                    ("plug_in", rec.plug_in != row.plug_in),
                    ("plug_out", rec.plug_out != row.plug_out),
                    ("rated_power_kw", rec.rated_power_kw != row.rated_power_kw),
                ]
                .into_iter()
                .find(|(_, differs)| *differs);
                if let Some((column, _)) = mismatch {
                    rejects.push(malformed(
                        line,
                        Some(&row.window_id),
                        column,
                        format!("disagrees with the first row of window {}", row.window_id),
                    ));
                    continue;
                }
                rec.intervals.push(row.interval);
                lines.push(line);
            }
        }
    }

    let mut windows = Vec::new();
    let mut rows_loaded = 0;
    for id in order {
        let (rec, lines) = groups.remove(&id).expect("grouped");
        match validate_window(rec, catalog) {
            Ok(w) => {
                rows_loaded += lines.len();
                windows.push(w);
            }
            Err(e) => rejects.extend(lines.into_iter().map(|line| RowReject {
                line,
                window_id: Some(id.clone()),
                kind: e.kind().into(),
                column: None,
                detail: e.to_string(),
            })),
        }
    }
    rejects.sort_by_key(|r| r.line);
    Ok(LoadedSessions {
        windows,
        rows,
        rows_loaded,
        rejects,
    })
}

pub fn load_sessions(path: &Path, catalog: &Catalog) -> Result<LoadedSessions, IoError> {
    read_sessions(open(path)?, catalog, &file_name(path))
}

/// Writes one row per charging interval in the ingestion format.
pub fn write_sessions<W: Write>(writer: W, windows: &[WindowRecord<f64>]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SESSION_COLUMNS)?;
    for win in windows {
        let rated = win.rated_power_kw.map(|p| p.to_string()).unwrap_or_default();
        for i in &win.intervals {
            w.write_record([
                win.window_id.as_str(),
                &win.vehicle_id,
                &win.utility_id,
                &win.region_id,
                &format_timestamp(&win.plug_in),
                &format_timestamp(&win.plug_out),
                &format_timestamp(&i.start),
                &format_timestamp(&i.end),
                &i.energy_kwh.to_string(),
                &rated,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_sessions(path: &Path, windows: &[WindowRecord<f64>]) -> Result<(), IoError> {
    write_sessions(create(path)?, windows).map_err(|source| IoError::Csv { file: file_name(path), source })
}

// ----------------------------------------------------------------- catalog

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub utilities: Vec<UtilityRef>,
    pub regions: Vec<GridRegionRef>,
}

impl From<&Catalog> for CatalogFile {
    fn from(c: &Catalog) -> Self {
        Self {
            utilities: c.utilities.values().cloned().collect(),
            regions: c.regions.values().cloned().collect(),
        }
    }
}

pub fn parse_catalog(text: &str, file: &str) -> Result<Catalog, IoError> {
    let doc: CatalogFile = parse_json(text, file)?;
    let mut seen = BTreeSet::new();
    for (i, u) in doc.utilities.iter().enumerate() {
        if !seen.insert(u.id.clone()) {
            return Err(schema(file, format!("utilities[{i}].id"), format!("duplicate utility id {}", u.id)));
        }
    }
    seen.clear();
    for (i, r) in doc.regions.iter().enumerate() {
        if !seen.insert(r.id.clone()) {
            return Err(schema(file, format!("regions[{i}].id"), format!("duplicate region id {}", r.id)));
        }
    }
    Ok(Catalog::new(doc.utilities, doc.regions))
}

pub fn load_catalog(path: &Path) -> Result<Catalog, IoError> {
    parse_catalog(&read_text(path)?, &file_name(path))
}

// ----------------------------------------------------------------- tariffs

/// Parses and validates a tariff array. Each tariff is bound to its
/// utility's timezone from `catalog`.
pub fn parse_tariffs(text: &str, catalog: &Catalog, file: &str) -> Result<TariffBook<f64>, IoError> {
    let defs: Vec<TariffDefinition<f64>> = parse_json(text, file)?;
    let mut seen = BTreeSet::new();
    let mut schedules = Vec::with_capacity(defs.len());
    for (i, def) in defs.into_iter().enumerate() {
        if !seen.insert(def.tariff_id.clone()) {
            return Err(schema(file, format!("[{i}].tariff_id"), format!("duplicate tariff id {}", def.tariff_id)));
        }
        let tz = catalog
            .utility(&def.utility_id)
            .ok_or_else(|| schema(file, format!("[{i}].utility_id"), format!("utility {} not in catalog", def.utility_id)))?
            .timezone;
        let schedule = TariffSchedule::new(def, tz).map_err(|e| match e {
            TariffError::Invalid { path, detail } => schema(file, format!("[{i}].{path}"), detail),
            other => schema(file, format!("[{i}]"), other.to_string()),
        })?;
        schedules.push(schedule);
    }
    Ok(TariffBook::new(schedules))
}

pub fn load_tariffs(path: &Path, catalog: &Catalog) -> Result<TariffBook<f64>, IoError> {
    parse_tariffs(&read_text(path)?, catalog, &file_name(path))
}

// -------------------------------------------------------------------- MOER

/// Parses MOER CSV text into per-region series in g/kWh. Timestamps must
/// strictly increase within each region and sit on a common step grid.
pub fn read_moer<R: Read>(reader: R, file: &str) -> Result<BTreeMap<String, MoerSeries<f64>>, IoError> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers().map_err(|source| IoError::Csv { file: file.into(), source })?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (region, time, value) = match (col("region_id"), col("timestamp"), col("value")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(schema(file, "header", "expected columns region_id,timestamp,value,unit")),
    };
    let unit = col("unit").ok_or(IoError::UnitMissing { file: file.into(), line: 1 })?;

    let mut points: BTreeMap<String, Vec<(Timestamp, f64)>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while csv
        .read_record(&mut record)
        .map_err(|source| IoError::Csv { file: file.into(), source })?
    {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("").trim();
        let unit = match get(unit) {
            "" => return Err(IoError::UnitMissing { file: file.into(), line }),
            u => MoerUnit::parse(u).ok_or_else(|| schema(file, format!("line {line}.unit"), format!("unknown unit {u}")))?,
        };
        let t = DateTime::parse_from_rfc3339(get(time))
            .map_err(|e| schema(file, format!("line {line}.timestamp"), e.to_string()))?;
        let v: f64 = get(value)
            .parse()
            .map_err(|e| schema(file, format!("line {line}.value"), format!("{e}")))?;
        points.entry(get(region).to_string()).or_default().push((t, unit.to_g_per_kwh(v)));
    }

    points
        .into_iter()
        .map(|(region, pts)| {
            let step = MoerSeries::infer_step(&pts);
            MoerSeries::new(region.clone(), step, pts)
                .map(|s| (region.clone(), s))
                .map_err(|e| schema(file, format!("region {region}"), e.to_string()))
        })
        .collect()
}

pub fn load_moer(path: &Path) -> Result<BTreeMap<String, MoerSeries<f64>>, IoError> {
    read_moer(open(path)?, &file_name(path))
}

pub fn write_moer<W: Write>(writer: W, series: &[MoerSeries<f64>]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["region_id", "timestamp", "value", "unit"])?;
    for s in series {
        for (t, v) in s.points() {
            w.write_record([s.region_id(), &format_timestamp(t), &v.to_string(), "g_per_kwh"])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_moer(path: &Path, series: &[MoerSeries<f64>]) -> Result<(), IoError> {
    write_moer(create(path)?, series).map_err(|source| IoError::Csv { file: file_name(path), source })
}
