//! Synthetic fleets with known ground truth.
//!
//! Each unit gets a manufacture date and a cycle accrual rate. Every part
//! draws a first-failure cycle count from its Weibull law by inverse
//! transform sampling, and every DTC of the part draws an occurrence cycle
//! count from `N(f - f*r, sigma1)` truncated into `[0, f]`. Service visits
//! happen when a part fails and whenever six months have passed since the
//! previous visit; each visit observes the DTCs that occurred since the
//! last one. Only events dated inside the observation window reach the
//! [`EventLog`]; the full timeline goes to [`GroundTruth`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{
    CycleCount, DtcOccurrenceRecord, EventLog, FailureRecord, ServiceObservationRecord, TimeStamp,
    UnitRecord, Window, WindowKind,
};
use crate::weibull::WeibullParams;
use crate::{seed, Error, Result};

const DAYS_PER_YEAR: f64 = 365.25;
const TRUNCATION_RETRIES: usize = 100;

/// Inverse-transform draw `beta * (-ln(1 - u))^(1/alpha)`.
pub fn sample_weibull_inverse(alpha: f64, beta: f64, u: f64) -> Result<CycleCount> {
    let w = WeibullParams::new(alpha, beta)?;
    CycleCount::new(w.quantile(u)?)
}

/// DTC occurrence noise, either one value for the whole fleet, one per
/// part, or one per (part, DTC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OccurrenceNoise {
    Uniform(f64),
    PerPart(Vec<f64>),
    PerDtc(Vec<Vec<f64>>),
}

impl OccurrenceNoise {
    pub fn get(&self, part: usize, dtc: usize) -> f64 {
        match self {
            OccurrenceNoise::Uniform(s) => *s,
            OccurrenceNoise::PerPart(v) => v[part],
            OccurrenceNoise::PerDtc(v) => v[part][dtc],
        }
    }

    fn validate(&self, n_parts: usize, n_dtcs: usize) -> Result<()> {
        let ok = match self {
            OccurrenceNoise::Uniform(s) => *s >= 0.0,
            OccurrenceNoise::PerPart(v) => v.len() == n_parts && v.iter().all(|s| *s >= 0.0),
            OccurrenceNoise::PerDtc(v) => {
                v.len() == n_parts
                    && v.iter().all(|row| row.len() == n_dtcs && row.iter().all(|s| *s >= 0.0))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("occurrence_noise must be >= 0 and sized per part / DTC".into()))
        }
    }
}

/// How the first service observation of an occurred DTC is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationModel {
    /// Visits at failures and every `service_interval_days` since the last
    /// visit.
    ServiceSchedule,
    /// Observation cycles drawn from `N((f - d)*m + d, sigma2)` truncated
    /// into `[d, f]`, i.e. exactly the network's S node. Used to check
    /// inversion and parameter recovery against a correctly specified model.
    Parametric { m: f64, sigma2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub n_units: usize,
    pub n_parts: usize,
    pub dtcs_per_part: usize,
    pub true_params: Vec<WeibullParams>,
    /// Each (part, DTC) draws its lead-gap ratio `r` uniformly from this range.
    pub dtc_gap_fraction_range: (f64, f64),
    /// Overrides the draw above with one fixed `r` for every (part, DTC).
    pub fixed_gap_fraction: Option<f64>,
    pub occurrence_noise: OccurrenceNoise,
    /// Units are split evenly across these model years, uniform within each.
    pub model_years: Vec<i32>,
    /// Explicit per-unit manufacture dates; replaces `model_years` when set.
    pub manufacture_dates: Option<Vec<TimeStamp>>,
    /// Mean accrual in cycles per day.
    pub accrual_rate: f64,
    /// Per-unit uniform jitter on the accrual rate, as a fraction.
    pub accrual_jitter: f64,
    pub service_interval_days: f64,
    pub observation_model: ObservationModel,
    pub observation_window: Window,
    /// Round cycles to 3 decimals and times to whole seconds in the event
    /// log, the resolution of the CSV formats.
    pub quantize: bool,
    pub seed: u64,
}

/// Nine parts; parts 1, 3 and 4 wear out late and rarely fail inside the
/// default window, the other six fail abundantly.
pub fn default_part_params() -> Vec<WeibullParams> {
    [
        (2.0, 25_000.0),
        (5.0, 160_000.0),
        (2.5, 30_000.0),
        (4.5, 170_000.0),
        (5.5, 150_000.0),
        (1.8, 22_000.0),
        (3.0, 35_000.0),
        (2.2, 28_000.0),
        (2.8, 32_000.0),
    ]
    .into_iter()
    .map(|(alpha, beta)| WeibullParams { alpha, beta })
    .collect()
}

pub fn default_observation_window() -> Window {
    Window {
        start: TimeStamp::from_ymd(2010, 1, 1).expect("valid date"),
        end: TimeStamp::from_ymd(2013, 1, 1).expect("valid date"),
        kind: WindowKind::Observation,
    }
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            n_units: 1000,
            n_parts: 9,
            dtcs_per_part: 4,
            true_params: default_part_params(),
            dtc_gap_fraction_range: (0.1, 0.5),
            fixed_gap_fraction: None,
            occurrence_noise: OccurrenceNoise::Uniform(1000.0),
            model_years: vec![2010, 2011, 2012],
            manufacture_dates: None,
            accrual_rate: 100_000.0 / (3.0 * DAYS_PER_YEAR),
            accrual_jitter: 0.2,
            service_interval_days: DAYS_PER_YEAR / 2.0,
            observation_model: ObservationModel::ServiceSchedule,
            observation_window: default_observation_window(),
            quantize: true,
            seed: 42,
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_units < 1 {
            return fail("fleet.n_units must be >= 1".into());
        }
        if self.n_parts < 1 || self.dtcs_per_part < 1 {
            return fail("fleet.n_parts and fleet.dtcs_per_part must be >= 1".into());
        }
        if self.true_params.len() != self.n_parts {
            return fail(format!(
                "fleet.true_params has {} entries for {} parts",
                self.true_params.len(),
                self.n_parts
            ));
        }
        for (j, p) in self.true_params.iter().enumerate() {
            if WeibullParams::new(p.alpha, p.beta).is_err() {
                return fail(format!("fleet.true_params[{j}] must be positive"));
            }
        }
        let (lo, hi) = self.dtc_gap_fraction_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return fail("fleet.dtc_gap_fraction_range must satisfy 0 < low < high < 1".into());
        }
        if let Some(r) = self.fixed_gap_fraction {
            if !(0.0..1.0).contains(&r) {
                return fail("fleet.fixed_gap_fraction must lie in [0, 1)".into());
            }
        }
        self.occurrence_noise.validate(self.n_parts, self.dtcs_per_part)?;
        match &self.manufacture_dates {
            Some(d) if d.len() != self.n_units => {
                return fail("fleet.manufacture_dates must list one date per unit".into())
            }
            None if self.model_years.is_empty() => {
                return fail("fleet.model_years must not be empty".into())
            }
            _ => {}
        }
        if !(self.accrual_rate > 0.0 && self.accrual_rate.is_finite()) {
            return fail("fleet.accrual_rate must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.accrual_jitter) {
            return fail("fleet.accrual_jitter must lie in [0, 1)".into());
        }
        if !(self.service_interval_days > 0.0) {
            return fail("fleet.service_interval_days must be > 0".into());
        }
        if let ObservationModel::Parametric { m, sigma2 } = self.observation_model {
            if !(0.0..=1.0).contains(&m) || sigma2 < 0.0 {
                return fail("parametric observation model needs 0 <= m <= 1 and sigma2 >= 0".into());
            }
        }
        if self.observation_window.kind != WindowKind::Observation {
            return fail("fleet.observation_window must be an observation window".into());
        }
        Ok(())
    }
}

/// Full simulated timeline of one (unit, part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub unit: usize,
    pub part: usize,
    pub fail_cycles: f64,
    pub fail_time: TimeStamp,
    pub occurrence_cycles: Vec<f64>,
    /// First observation cycles per DTC up to the observation window end;
    /// empty when the truth was loaded from disk.
    pub observation_cycles: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// Per-part Weibull parameters used for the draws (empty when loaded
    /// from disk).
    pub params: Vec<WeibullParams>,
    /// Per (part, DTC) lead-gap ratio `r` (empty when loaded from disk).
    pub gap_fractions: Vec<Vec<f64>>,
    pub units: Vec<UnitRecord>,
    /// Unit-major, part-minor.
    pub records: Vec<TruthRecord>,
}

impl GroundTruth {
    pub fn n_parts(&self) -> usize {
        self.records.iter().map(|r| r.part + 1).max().unwrap_or(0)
    }

    pub fn get(&self, unit: usize, part: usize) -> Option<&TruthRecord> {
        let n_parts = self.n_parts();
        match self.records.get(unit * n_parts + part) {
            Some(r) if r.unit == unit && r.part == part => Some(r),
            _ => self.records.iter().find(|r| r.unit == unit && r.part == part),
        }
    }

    /// Failures of `part` dated inside `(window.start, window.end]`.
    pub fn failures_in(&self, part: usize, window: &Window) -> usize {
        self.records
            .iter()
            .filter(|r| {
                r.part == part
                    && r.fail_time.days() > window.start.days()
                    && r.fail_time.days() <= window.end.days()
            })
            .count()
    }
}

fn truncated_normal(
    rng: &mut ChaCha8Rng,
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    fallback: f64,
) -> f64 {
    for _ in 0..TRUNCATION_RETRIES {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + sd * z;
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    fallback
}

fn quantize_cycles(c: f64) -> f64 {
    (c * 1000.0).round() / 1000.0
}

/// Simulate one fleet. Identical configs (including the seed) give
/// bit-identical outputs.
pub fn simulate_fleet(cfg: &FleetConfig) -> Result<(EventLog, GroundTruth)> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, &[0x5151]);
    let window = cfg.observation_window;
    let (r_low, r_high) = cfg.dtc_gap_fraction_range;

    let gap_fractions: Vec<Vec<f64>> = (0..cfg.n_parts)
        .map(|_| {
            (0..cfg.dtcs_per_part)
                .map(|_| cfg.fixed_gap_fraction.unwrap_or_else(|| rng.random_range(r_low..r_high)))
                .collect()
        })
        .collect();

    let cq = |c: f64| if cfg.quantize { quantize_cycles(c) } else { c };
    let tq = |t: TimeStamp| if cfg.quantize { t.quantized() } else { t };

    let mut log = EventLog::default();
    let mut truth = GroundTruth {
        params: cfg.true_params.clone(),
        gap_fractions: gap_fractions.clone(),
        ..GroundTruth::default()
    };

    let n_years = cfg.model_years.len();
    for unit in 0..cfg.n_units {
        let manufactured = match &cfg.manufacture_dates {
            Some(dates) => dates[unit],
            None => {
                let year = cfg.model_years[unit * n_years / cfg.n_units];
                let start = TimeStamp::from_ymd(year, 1, 1)?;
                let end = TimeStamp::from_ymd(year + 1, 1, 1)?;
                let offset: f64 = rng.random_range(0.0..end.days() - start.days());
                TimeStamp::from_days(start.days() + offset)?
            }
        };
        let jitter: f64 = if cfg.accrual_jitter > 0.0 {
            rng.random_range(-cfg.accrual_jitter..cfg.accrual_jitter)
        } else {
            0.0
        };
        let rate = cfg.accrual_rate * (1.0 + jitter);
        let unit_rec = UnitRecord { unit, manufactured: tq(manufactured), accrual_rate: rate };
        let time_at = |c: f64| TimeStamp::from_days(manufactured.days() + c / rate);

        // Failure and occurrence draws.
        let mut fail = Vec::with_capacity(cfg.n_parts);
        let mut occ = Vec::with_capacity(cfg.n_parts);
        for (j, params) in cfg.true_params.iter().enumerate() {
            let u: f64 = rng.random();
            let f = params.quantile(u)?;
            let d: Vec<f64> = (0..cfg.dtcs_per_part)
                .map(|k| {
                    let r = gap_fractions[j][k];
                    let sd = cfg.occurrence_noise.get(j, k);
                    truncated_normal(&mut rng, f - f * r, sd, 0.0, f, f * (1.0 - r_low) / 2.0)
                })
                .collect();
            fail.push(f);
            occ.push(d);
        }

        // First observation cycles per (part, DTC), up to the window end.
        let mut obs: Vec<Vec<Option<f64>>> = vec![vec![None; cfg.dtcs_per_part]; cfg.n_parts];
        match cfg.observation_model {
            ObservationModel::ServiceSchedule => {
                let horizon = window.end.days();
                let mut last_visit = manufactured.days();
                loop {
                    let routine = last_visit + cfg.service_interval_days;
                    let next_failure = fail
                        .iter()
                        .map(|&f| (f, time_at(f).map(|t| t.days()).unwrap_or(f64::INFINITY)))
                        .filter(|&(_, t)| t > last_visit)
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    let (visit_time, visit_cycles) = match next_failure {
                        Some((f, t)) if t <= routine => (t, f),
                        _ => (routine, (routine - manufactured.days()) * rate),
                    };
                    if visit_time > horizon {
                        break;
                    }
                    for (j, part_occ) in occ.iter().enumerate() {
                        for (k, &d) in part_occ.iter().enumerate() {
                            if obs[j][k].is_none() && d <= visit_cycles {
                                obs[j][k] = Some(visit_cycles);
                            }
                        }
                    }
                    last_visit = visit_time;
                }
            }
            ObservationModel::Parametric { m, sigma2 } => {
                for j in 0..cfg.n_parts {
                    for k in 0..cfg.dtcs_per_part {
                        let (f, d) = (fail[j], occ[j][k]);
                        let mean = (f - d) * m + d;
                        let s = truncated_normal(&mut rng, mean, sigma2, d, f, mean.clamp(d, f));
                        if time_at(s)?.days() <= window.end.days() {
                            obs[j][k] = Some(s);
                        }
                    }
                }
            }
        }

        // Emit in-window events.
        for (j, &f) in fail.iter().enumerate() {
            let t = tq(time_at(f)?);
            if window.contains(t) {
                log.failures.push(FailureRecord {
                    unit,
                    part: j,
                    cycles: CycleCount::new(cq(f))?,
                    time: t,
                });
            }
        }
        for (j, part_occ) in occ.iter().enumerate() {
            for (k, &d) in part_occ.iter().enumerate() {
                let t = tq(time_at(d)?);
                if window.contains(t) {
                    log.occurrences.push(DtcOccurrenceRecord {
                        unit,
                        part: j,
                        dtc: k,
                        cycles: CycleCount::new(cq(d))?,
                        time: t,
                    });
                }
            }
        }
        for (j, part_obs) in obs.iter().enumerate() {
            for (k, s) in part_obs.iter().enumerate() {
                let Some(s) = *s else { continue };
                let t = tq(time_at(s)?);
                if window.contains(t) {
                    log.observations.push(ServiceObservationRecord {
                        unit,
                        part: j,
                        dtc: k,
                        cycles: CycleCount::new(cq(s))?,
                        time: t,
                    });
                }
            }
        }

        log.units.push(unit_rec);
        truth.units.push(unit_rec);
        for (j, (f, d)) in fail.into_iter().zip(occ).enumerate() {
            truth.records.push(TruthRecord {
                unit,
                part: j,
                fail_cycles: f,
                fail_time: time_at(f)?,
                occurrence_cycles: d,
                observation_cycles: obs[j].clone(),
            });
        }
    }
    Ok((log, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{assemble_sets, validate_ordering};

    fn small(seed: u64) -> FleetConfig {
        FleetConfig { n_units: 150, seed, ..FleetConfig::default() }
    }

    #[test]
    fn inverse_sampling_examples() {
        assert_eq!(sample_weibull_inverse(1.0, 1.0, 0.0).unwrap().get(), 0.0);
        let one = sample_weibull_inverse(1.0, 1.0, 1.0 - (-1.0f64).exp()).unwrap().get();
        assert!((one - 1.0).abs() < 1e-12);
        let median = sample_weibull_inverse(2.0, 100_000.0, 0.5).unwrap().get();
        assert!((median - 83_255.461_1).abs() < 1e-3);
        // Recover u through the CDF.
        let w = WeibullParams::new(2.0, 100_000.0).unwrap();
        assert!((w.cdf(median) - 0.5).abs() < 1e-12);
        assert!(matches!(sample_weibull_inverse(1.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn noiseless_fixed_gap_puts_occurrences_at_f_times_one_minus_r() {
        let cfg = FleetConfig {
            fixed_gap_fraction: Some(0.25),
            occurrence_noise: OccurrenceNoise::Uniform(0.0),
            quantize: false,
            ..small(3)
        };
        let (_, truth) = simulate_fleet(&cfg).unwrap();
        for r in &truth.records {
            for &d in &r.occurrence_cycles {
                assert_eq!(d, r.fail_cycles * (1.0 - 0.25));
            }
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (a, ta) = simulate_fleet(&small(9)).unwrap();
        let (b, tb) = simulate_fleet(&small(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = simulate_fleet(&small(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn observations_never_precede_occurrences() {
        let (_, truth) = simulate_fleet(&small(5)).unwrap();
        for r in &truth.records {
            assert_eq!(r.observation_cycles.len(), r.occurrence_cycles.len());
            for (d, s) in r.occurrence_cycles.iter().zip(&r.observation_cycles) {
                assert!(*d <= r.fail_cycles);
                if let Some(s) = s {
                    assert!(d <= s && *s <= r.fail_cycles);
                }
            }
        }
    }

    #[test]
    fn assembled_sets_are_ordered() {
        let cfg = small(11);
        let (log, _) = simulate_fleet(&cfg).unwrap();
        for j in [0, 2, 5] {
            for k in 0..cfg.dtcs_per_part {
                let ds = assemble_sets(&log, &cfg.observation_window, j, k).unwrap();
                assert!(validate_ordering(&ds).is_valid());
            }
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(matches!(
            simulate_fleet(&FleetConfig { n_units: 0, ..FleetConfig::default() }),
            Err(Error::Config(_))
        ));
        let bad_r = FleetConfig { dtc_gap_fraction_range: (0.5, 0.1), ..FleetConfig::default() };
        assert!(bad_r.validate().is_err());
        let bad_params = FleetConfig { n_parts: 3, ..FleetConfig::default() };
        assert!(bad_params.validate().is_err());
    }
}
