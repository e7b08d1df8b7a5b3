//! CSV files of an event log and its ground truth.
//!
//! | file                       | columns                                            |
//! |----------------------------|----------------------------------------------------|
//! | `units.csv`                | `unit,manufacture_date,accrual_rate`               |
//! | `failures.csv`             | `unit,part,cycles,date`                            |
//! | `dtc_occurrences.csv`      | `unit,part,dtc,cycles,date`                        |
//! | `service_observations.csv` | `unit,part,dtc,cycles,date`                        |
//! | `ground_truth.csv`         | `unit,part,true_fail_cycles,true_fail_date,occ_dtc0,...` |
//!
//! Dates are `YYYY-MM-DDTHH:MM:SS` (a bare `YYYY-MM-DD` is accepted on
//! read) and cycles carry three decimals, so a log quantized by the
//! simulator survives a write/read cycle bit for bit. Accrual rates are
//! written in their shortest round-trip form.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{CycleCount, DtcOccurrenceRecord, EventLog, FailureRecord, ServiceObservationRecord, TimeStamp, UnitRecord};
use crate::simulator::{GroundTruth, TruthRecord};
use crate::{Error, Result};

pub const UNITS: &str = "units.csv";
pub const FAILURES: &str = "failures.csv";
pub const OCCURRENCES: &str = "dtc_occurrences.csv";
pub const OBSERVATIONS: &str = "service_observations.csv";
pub const GROUND_TRUTH: &str = "ground_truth.csv";

#[derive(Serialize, Deserialize)]
struct UnitRow {
    unit: usize,
    manufacture_date: TimeStamp,
    accrual_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct FailureRow {
    unit: usize,
    part: usize,
    #[serde(serialize_with = "three_decimals")]
    cycles: f64,
    date: TimeStamp,
}

#[derive(Serialize, Deserialize)]
struct DtcRow {
    unit: usize,
    part: usize,
    dtc: usize,
    #[serde(serialize_with = "three_decimals")]
    cycles: f64,
    date: TimeStamp,
}

fn three_decimals<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&format_args!("{v:.3}"))
}

fn schema(file: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Schema { file: file.to_path_buf(), line, message: message.into() }
}

fn csv_error(file: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Csv(e),
        _ => schema(file, line, e.to_string()),
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    csv::Reader::from_path(path).map_err(|e| csv_error(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = open(path)?;
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                let row = rec.deserialize(rdr.headers().ok()).map_err(|e| schema(path, line, e.to_string()))?;
                out.push((line, row));
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
    Ok(out)
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    // Serializing an empty set writes no header, so write it up front.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn cycles(path: &Path, line: u64, v: f64) -> Result<CycleCount> {
    CycleCount::new(v).map_err(|e| schema(path, line, e.to_string()))
}

pub fn write_event_log(dir: &Path, log: &EventLog) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows(
        &dir.join(UNITS),
        &["unit", "manufacture_date", "accrual_rate"],
        log.units.iter().map(|u| UnitRow { unit: u.unit, manufacture_date: u.manufactured, accrual_rate: u.accrual_rate }),
    )?;
    write_rows(
        &dir.join(FAILURES),
        &["unit", "part", "cycles", "date"],
        log.failures.iter().map(|r| FailureRow { unit: r.unit, part: r.part, cycles: r.cycles.get(), date: r.time }),
    )?;
    let dtc_header = ["unit", "part", "dtc", "cycles", "date"];
    write_rows(
        &dir.join(OCCURRENCES),
        &dtc_header,
        log.occurrences.iter().map(|r| DtcRow { unit: r.unit, part: r.part, dtc: r.dtc, cycles: r.cycles.get(), date: r.time }),
    )?;
    write_rows(
        &dir.join(OBSERVATIONS),
        &dtc_header,
        log.observations.iter().map(|r| DtcRow { unit: r.unit, part: r.part, dtc: r.dtc, cycles: r.cycles.get(), date: r.time }),
    )?;
    Ok(())
}

/// Read the four event-log files from `dir`. `units.csv` may be absent, in
/// which case the roster is empty and forecasting is not possible.
pub fn read_event_log(dir: &Path) -> Result<EventLog> {
    let mut log = EventLog::default();
    let units_path = dir.join(UNITS);
    if units_path.exists() {
        for (line, r) in read_rows::<UnitRow>(&units_path)? {
            if !(r.accrual_rate > 0.0 && r.accrual_rate.is_finite()) {
                return Err(schema(&units_path, line, format!("accrual_rate must be positive, got {}", r.accrual_rate)));
            }
            log.units.push(UnitRecord { unit: r.unit, manufactured: r.manufacture_date, accrual_rate: r.accrual_rate });
        }
    }
    let path = dir.join(FAILURES);
    for (line, r) in read_rows::<FailureRow>(&path)? {
        log.failures.push(FailureRecord { unit: r.unit, part: r.part, cycles: cycles(&path, line, r.cycles)?, time: r.date });
    }
    let path = dir.join(OCCURRENCES);
    for (line, r) in read_rows::<DtcRow>(&path)? {
        let c = cycles(&path, line, r.cycles)?;
        log.occurrences.push(DtcOccurrenceRecord { unit: r.unit, part: r.part, dtc: r.dtc, cycles: c, time: r.date });
    }
    let path = dir.join(OBSERVATIONS);
    for (line, r) in read_rows::<DtcRow>(&path)? {
        let c = cycles(&path, line, r.cycles)?;
        log.observations.push(ServiceObservationRecord { unit: r.unit, part: r.part, dtc: r.dtc, cycles: c, time: r.date });
    }
    Ok(log)
}

pub fn write_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n_dtcs = truth.records.iter().map(|r| r.occurrence_cycles.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(dir.join(GROUND_TRUTH))?;
    let mut header: Vec<String> =
        ["unit", "part", "true_fail_cycles", "true_fail_date"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n_dtcs).map(|k| format!("occ_dtc{k}")));
    w.write_record(&header)?;
    for r in &truth.records {
        let mut row = vec![r.unit.to_string(), r.part.to_string(), format!("{:.3}", r.fail_cycles), r.fail_time.to_string()];
        row.extend((0..n_dtcs).map(|k| r.occurrence_cycles.get(k).map(|c| format!("{c:.3}")).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read `ground_truth.csv`, taking the roster from `units.csv` when present.
/// Parameters, gap ratios and observation cycles are not stored on disk and
/// come back empty.
pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let path = dir.join(GROUND_TRUTH);
    let mut rdr = open(&path)?;
    let header = rdr.headers().map_err(|e| csv_error(&path, e))?.clone();
    let expected = ["unit", "part", "true_fail_cycles", "true_fail_date"];
    if header.len() < 4 || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(schema(&path, 1, format!("header must start with {}", expected.join(","))));
    }
    for (k, name) in header.iter().skip(4).enumerate() {
        if name != format!("occ_dtc{k}") {
            return Err(schema(&path, 1, format!("unexpected column {name:?}")));
        }
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize| field(i).parse::<usize>().map_err(|e| schema(&path, line, format!("{}: {e}", &header[i])));
        let num = |i: usize| field(i).parse::<f64>().map_err(|e| schema(&path, line, format!("{}: {e}", &header[i])));
        let fail_time = TimeStamp::parse(field(3)).map_err(|e| schema(&path, line, e.to_string()))?;
        let occurrence_cycles = (4..header.len())
            .filter(|&i| !field(i).is_empty())
            .map(num)
            .collect::<Result<Vec<f64>>>()?;
        records.push(TruthRecord {
            unit: int(0)?,
            part: int(1)?,
            fail_cycles: cycles(&path, line, num(2)?)?.get(),
            fail_time,
            occurrence_cycles,
            observation_cycles: Vec::new(),
        });
    }
    let units = if dir.join(UNITS).exists() { read_event_units(dir)? } else { Vec::new() };
    Ok(GroundTruth { params: Vec::new(), gap_fractions: Vec::new(), units, records })
}

fn read_event_units(dir: &Path) -> Result<Vec<UnitRecord>> {
    Ok(read_rows::<UnitRow>(&dir.join(UNITS))?
        .into_iter()
        .map(|(_, r)| UnitRecord { unit: r.unit, manufactured: r.manufacture_date, accrual_rate: r.accrual_rate })
        .collect())
}

/// Paths of every file [`write_event_log`] and [`write_ground_truth`] create.
pub fn data_files(dir: &Path) -> Vec<PathBuf> {
    [UNITS, FAILURES, OCCURRENCES, OBSERVATIONS, GROUND_TRUTH].iter().map(|f| dir.join(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate_fleet, FleetConfig};

    #[test]
    fn event_log_round_trips_exactly() {
        let cfg = FleetConfig { n_units: 60, ..FleetConfig::default() };
        let (log, truth) = simulate_fleet(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_event_log(dir.path(), &log).unwrap();
        write_ground_truth(dir.path(), &truth).unwrap();
        assert_eq!(read_event_log(dir.path()).unwrap(), log);

        let back = read_ground_truth(dir.path()).unwrap();
        assert_eq!(back.units, truth.units);
        assert_eq!(back.records.len(), truth.records.len());
        for (a, b) in back.records.iter().zip(&truth.records) {
            let q = |c: f64| (c * 1000.0).round() / 1000.0;
            assert_eq!((a.unit, a.part, a.fail_cycles), (b.unit, b.part, q(b.fail_cycles)));
            assert_eq!(a.occurrence_cycles, b.occurrence_cycles.iter().map(|&c| q(c)).collect::<Vec<_>>());
            assert_eq!(a.fail_time, b.fail_time.quantized());
        }
    }

    #[test]
    fn schema_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        write_event_log(dir.path(), &EventLog::default()).unwrap();
        std::fs::write(dir.path().join(FAILURES), "unit,part,cycles,date\n0,1,10.5,2011-01-01\n1,x,3,2011-01-02\n").unwrap();
        match read_event_log(dir.path()) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(dir.path().join(FAILURES), "unit,part,cycles,date\n0,1,-4,2011-01-01\n").unwrap();
        assert!(matches!(read_event_log(dir.path()), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_event_log(dir.path()), Err(Error::MissingFile(_))));
        assert!(matches!(read_ground_truth(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn empty_log_keeps_headers() {
        let dir = tempfile::tempdir().unwrap();
        write_event_log(dir.path(), &EventLog::default()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(OCCURRENCES)).unwrap();
        assert_eq!(text, "unit,part,dtc,cycles,date\n");
        assert_eq!(read_event_log(dir.path()).unwrap(), EventLog::default());
    }
}
