//! Event records, time windows and assembly of per-(part, DTC) datasets.
//!
//! Usage is measured in cycles (miles for vehicles); wall time is measured in
//! days since 1970-01-01. Windowing is done on wall time, every model
//! quantity is in cycles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Non-negative, finite usage count.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CycleCount(f64);

impl CycleCount {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!("cycle count must be finite and >= 0, got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Wall-clock instant in days since 1970-01-01T00:00:00.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct TimeStamp(f64);

impl TimeStamp {
    pub fn from_days(days: f64) -> Result<Self> {
        if days.is_finite() {
            Ok(Self(days))
        } else {
            Err(Error::InvalidInput(format!("timestamp must be finite, got {days}")))
        }
    }

    pub fn days(self) -> f64 {
        self.0
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)
            .ok_or_else(|| Error::InvalidInput(format!("invalid date {year}-{month}-{day}")))?;
        Ok(Self(date_to_days(date)))
    }

    /// Accepts `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
            let secs = dt.and_utc().timestamp();
            return Ok(Self(secs as f64 / SECONDS_PER_DAY));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(|d| Self(date_to_days(d)))
            .map_err(|e| Error::InvalidInput(format!("bad date {s:?}: {e}")))
    }

    /// Round to whole seconds, the resolution of the on-disk format.
    pub fn quantized(self) -> Self {
        Self((self.0 * SECONDS_PER_DAY).round() / SECONDS_PER_DAY)
    }

    pub fn year(self) -> i32 {
        use chrono::Datelike;
        self.to_datetime().date().year()
    }

    fn to_datetime(self) -> NaiveDateTime {
        let secs = (self.0 * SECONDS_PER_DAY).round() as i64;
        chrono::DateTime::from_timestamp(secs, 0)
            .map(|d| d.naive_utc())
            .unwrap_or_default()
    }
}

fn date_to_days(date: NaiveDate) -> f64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch");
    (date - epoch).num_days() as f64
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%M:%S"))
    }
}

impl Serialize for TimeStamp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeStamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TimeStamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Observation,
    Forecast,
}

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow")]
pub struct Window {
    pub start: TimeStamp,
    pub end: TimeStamp,
    pub kind: WindowKind,
}

#[derive(Deserialize)]
struct RawWindow {
    start: TimeStamp,
    end: TimeStamp,
    kind: WindowKind,
}

impl TryFrom<RawWindow> for Window {
    type Error = Error;
    fn try_from(w: RawWindow) -> Result<Self> {
        Window::new(w.start, w.end, w.kind)
    }
}

impl Window {
    pub fn new(start: TimeStamp, end: TimeStamp, kind: WindowKind) -> Result<Self> {
        if start.days() < end.days() {
            Ok(Self { start, end, kind })
        } else {
            Err(Error::InvalidInput(format!("window start {start} must precede end {end}")))
        }
    }

    pub fn contains(&self, t: TimeStamp) -> bool {
        self.start.days() <= t.days() && t.days() <= self.end.days()
    }
}

/// One product in the fleet: when it entered service and how fast it
/// accumulates cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit: usize,
    pub manufactured: TimeStamp,
    /// Cycles per day.
    pub accrual_rate: f64,
}

impl UnitRecord {
    pub fn cycles_at(&self, t: TimeStamp) -> f64 {
        ((t.days() - self.manufactured.days()) * self.accrual_rate).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub unit: usize,
    pub part: usize,
    pub cycles: CycleCount,
    pub time: TimeStamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtcOccurrenceRecord {
    pub unit: usize,
    pub part: usize,
    pub dtc: usize,
    pub cycles: CycleCount,
    pub time: TimeStamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceObservationRecord {
    pub unit: usize,
    pub part: usize,
    pub dtc: usize,
    pub cycles: CycleCount,
    pub time: TimeStamp,
}

/// Raw records from the three sources plus the fleet roster.
///
/// DTC indices are local to their part, so a `(part, dtc)` pair names a code
/// that belongs to exactly one part.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub units: Vec<UnitRecord>,
    pub failures: Vec<FailureRecord>,
    pub occurrences: Vec<DtcOccurrenceRecord>,
    pub observations: Vec<ServiceObservationRecord>,
}

impl EventLog {
    pub fn n_parts(&self) -> usize {
        self.failures
            .iter()
            .map(|r| r.part + 1)
            .chain(self.occurrences.iter().map(|r| r.part + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn n_dtcs(&self, part: usize) -> usize {
        self.occurrences
            .iter()
            .filter(|r| r.part == part)
            .map(|r| r.dtc + 1)
            .chain(self.observations.iter().filter(|r| r.part == part).map(|r| r.dtc + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn unit(&self, unit: usize) -> Option<&UnitRecord> {
        match self.units.get(unit) {
            Some(u) if u.unit == unit => Some(u),
            _ => self.units.iter().find(|u| u.unit == unit),
        }
    }
}

/// The failure, occurrence and observation sets for one part and one of its
/// DTCs over an observation window.
///
/// `fail`, `ind` and `serv` are aligned with `failed_units`; `ind_prime` and
/// `serv_prime` are aligned with `future_units`, the units whose DTC occurred
/// and was observed in the window while the part itself had not failed yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDataset {
    pub part: usize,
    pub dtc: usize,
    pub failed_units: Vec<usize>,
    pub fail: Vec<f64>,
    pub ind: Vec<f64>,
    pub serv: Vec<f64>,
    pub future_units: Vec<usize>,
    pub ind_prime: Vec<f64>,
    pub serv_prime: Vec<f64>,
    /// Cycles each future unit had accrued at the window end, when the fleet
    /// roster knows the unit.
    pub future_accrued_at_end: Vec<Option<f64>>,
}

impl PartDataset {
    /// Build a dataset from already aligned sequences. Checks the cardinality
    /// and disjointness invariants, not the ordering relation (see
    /// [`validate_ordering`]).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        part: usize,
        dtc: usize,
        failed_units: Vec<usize>,
        fail: Vec<f64>,
        ind: Vec<f64>,
        serv: Vec<f64>,
        future_units: Vec<usize>,
        ind_prime: Vec<f64>,
        serv_prime: Vec<f64>,
    ) -> Result<Self> {
        let n = failed_units.len();
        if n == 0 {
            return Err(Error::EmptyFailureSet { part });
        }
        if fail.len() != n || ind.len() != n || serv.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "fail/ind/serv lengths {}/{}/{} for {n} failed units",
                fail.len(),
                ind.len(),
                serv.len()
            )));
        }
        let n_prime = future_units.len();
        if ind_prime.len() != n_prime || serv_prime.len() != n_prime {
            return Err(Error::DimensionMismatch(format!(
                "ind'/serv' lengths {}/{} for {n_prime} future units",
                ind_prime.len(),
                serv_prime.len()
            )));
        }
        let ds = Self {
            part,
            dtc,
            failed_units,
            fail,
            ind,
            serv,
            future_accrued_at_end: vec![None; n_prime],
            future_units,
            ind_prime,
            serv_prime,
        };
        ds.check_disjoint()?;
        Ok(ds)
    }

    pub fn n_failed(&self) -> usize {
        self.failed_units.len()
    }

    pub fn n_future(&self) -> usize {
        self.future_units.len()
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let failed: BTreeSet<usize> = self.failed_units.iter().copied().collect();
        let both: Vec<usize> =
            self.future_units.iter().copied().filter(|u| failed.contains(u)).collect();
        if both.is_empty() {
            Ok(())
        } else {
            Err(Error::Disjointness { part: self.part, dtc: self.dtc, units: both })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingIssue {
    /// Position in the failed (or future, when `primed`) sequences.
    pub index: usize,
    pub unit: usize,
    pub primed: bool,
    pub d: f64,
    pub s: f64,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<OrderingIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// List every aligned triple breaking `d <= s <= p`, and every primed pair
/// breaking `d' <= s'`.
pub fn validate_ordering(ds: &PartDataset) -> ValidationReport {
    let mut violations = Vec::new();
    for (index, ((&p, &d), &s)) in ds.fail.iter().zip(&ds.ind).zip(&ds.serv).enumerate() {
        if !(d <= s && s <= p) {
            violations.push(OrderingIssue {
                index,
                unit: ds.failed_units[index],
                primed: false,
                d,
                s,
                p: Some(p),
            });
        }
    }
    for (index, (&d, &s)) in ds.ind_prime.iter().zip(&ds.serv_prime).enumerate() {
        if !(d <= s) {
            violations.push(OrderingIssue {
                index,
                unit: ds.future_units[index],
                primed: true,
                d,
                s,
                p: None,
            });
        }
    }
    ValidationReport { violations }
}

// (cycles, time, record index): the "first" record is the minimum.
type FirstKey = (f64, f64, usize);

fn keep_first(map: &mut BTreeMap<usize, FirstKey>, unit: usize, key: FirstKey) {
    map.entry(unit)
        .and_modify(|cur| {
            if key.partial_cmp(cur) == Some(std::cmp::Ordering::Less) {
                *cur = key;
            }
        })
        .or_insert(key);
}

/// Assemble the failure, occurrence and observation sets of `part` and its
/// DTC `dtc` over an observation window.
pub fn assemble_sets(
    events: &EventLog,
    window: &Window,
    part: usize,
    dtc: usize,
) -> Result<PartDataset> {
    if window.kind != WindowKind::Observation {
        return Err(Error::InvalidInput("assemble_sets needs an observation window".into()));
    }

    let mut failures = BTreeMap::new();
    let mut failed_by_end = BTreeSet::new();
    for (idx, r) in events.failures.iter().enumerate().filter(|(_, r)| r.part == part) {
        if r.time.days() <= window.end.days() {
            failed_by_end.insert(r.unit);
        }
        if window.contains(r.time) {
            keep_first(&mut failures, r.unit, (r.cycles.get(), r.time.days(), idx));
        }
    }
    let mut occurrences = BTreeMap::new();
    for (idx, r) in events.occurrences.iter().enumerate() {
        if r.part == part && r.dtc == dtc && window.contains(r.time) {
            keep_first(&mut occurrences, r.unit, (r.cycles.get(), r.time.days(), idx));
        }
    }
    let mut observations = BTreeMap::new();
    for (idx, r) in events.observations.iter().enumerate() {
        if r.part == part && r.dtc == dtc && window.contains(r.time) {
            keep_first(&mut observations, r.unit, (r.cycles.get(), r.time.days(), idx));
        }
    }
    if failures.is_empty() {
        return Err(Error::EmptyFailureSet { part });
    }

    let n = failures.len();
    let (mut failed_units, mut fail, mut ind, mut serv) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (&unit, &(p, _, _)) in &failures {
        let d = occurrences
            .get(&unit)
            .ok_or(Error::MissingAlignment { unit, part, dtc, what: "DTC occurrence" })?
            .0;
        let s = observations
            .get(&unit)
            .ok_or(Error::MissingAlignment { unit, part, dtc, what: "service observation" })?
            .0;
        if !(d <= s && s <= p) {
            return Err(Error::OrderingViolation { unit, part, dtc, d, s, p });
        }
        failed_units.push(unit);
        fail.push(p);
        ind.push(d);
        serv.push(s);
    }

    let mut future_units = Vec::new();
    let mut ind_prime = Vec::new();
    let mut serv_prime = Vec::new();
    let mut future_accrued_at_end = Vec::new();
    for (&unit, &(d, _, _)) in &occurrences {
        if failed_by_end.contains(&unit) {
            continue;
        }
        let Some(&(s, _, _)) = observations.get(&unit) else {
            continue;
        };
        if !(d <= s) {
            return Err(Error::OrderingViolation { unit, part, dtc, d, s, p: f64::NAN });
        }
        future_units.push(unit);
        ind_prime.push(d);
        serv_prime.push(s);
        future_accrued_at_end.push(events.unit(unit).map(|u| u.cycles_at(window.end)));
    }

    Ok(PartDataset {
        part,
        dtc,
        failed_units,
        fail,
        ind,
        serv,
        future_units,
        ind_prime,
        serv_prime,
        future_accrued_at_end,
    })
}
