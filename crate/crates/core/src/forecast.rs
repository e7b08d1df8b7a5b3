//! Expected number of failures over a forecast window.
//!
//! Every (unit, part) pair still working at the window start contributes
//! the probability that its part fails while the unit accrues cycles from
//! `c3` (at the window start) to `c4` (at the window end). Calendar time is
//! turned into cycles with each unit's accrual rate.

use serde::{Deserialize, Serialize};

use crate::domain::{EventLog, UnitRecord, Window, WindowKind};
use crate::par::{self, Execution};
use crate::weibull::WeibullParams;
use crate::{Error, Result};

const SATURATED: f64 = 1.0 - 1e-12;

/// `1 - exp(-(t/beta)^alpha)`.
pub fn weibull_cdf(params: &WeibullParams, t: f64) -> f64 {
    params.cdf(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// Probability of failing in the window given survival to its start.
    #[default]
    Conditional,
    /// Plain `F(c4) - F(c3)`.
    Unconditional,
}

/// Fleet roster plus which (unit, part) pairs are still working.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub units: Vec<UnitRecord>,
    pub n_parts: usize,
    /// `surviving[u * n_parts + j]`.
    pub surviving: Vec<bool>,
}

impl FleetState {
    /// Every part of every unit is working.
    pub fn all_surviving(units: Vec<UnitRecord>, n_parts: usize) -> Self {
        let surviving = vec![true; units.len() * n_parts];
        Self { units, n_parts, surviving }
    }

    /// Survivors according to the failure records of an event log.
    pub fn from_log(log: &EventLog, n_parts: usize) -> Self {
        let mut state = Self::all_surviving(log.units.clone(), n_parts);
        let pos: std::collections::BTreeMap<usize, usize> =
            state.units.iter().enumerate().map(|(i, u)| (u.unit, i)).collect();
        for f in &log.failures {
            if let (Some(&i), true) = (pos.get(&f.unit), f.part < n_parts) {
                state.surviving[i * n_parts + f.part] = false;
            }
        }
        state
    }

    pub fn is_surviving(&self, unit_pos: usize, part: usize) -> bool {
        self.surviving[unit_pos * self.n_parts + part]
    }

    pub fn n_surviving(&self, part: usize) -> usize {
        (0..self.units.len()).filter(|&u| self.is_surviving(u, part)).count()
    }
}

/// Failure probability of one surviving pair between cycles `c3` and `c4`.
pub fn window_probability(params: &WeibullParams, c3: f64, c4: f64, mode: ForecastMode) -> f64 {
    let f3 = params.cdf(c3);
    let f4 = params.cdf(c4);
    let p = match mode {
        ForecastMode::Unconditional => f4 - f3,
        ForecastMode::Conditional if f3 >= SATURATED => 1.0,
        // Survival ratio avoids cancellation when both CDFs are near 1.
        ForecastMode::Conditional => -((params.survival(c4).ln() - params.survival(c3).ln()).exp_m1()),
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub per_part: Vec<f64>,
    /// `sum p*(1 - p)` per part: the variance of the failure count.
    pub variance: Vec<f64>,
    pub total: f64,
}

pub fn expected_failures(
    params: &[WeibullParams],
    fleet: &FleetState,
    window: &Window,
    mode: ForecastMode,
) -> Result<ForecastResult> {
    expected_failures_with(params, fleet, window, mode, Execution::default())
}

pub fn expected_failures_with(
    params: &[WeibullParams],
    fleet: &FleetState,
    window: &Window,
    mode: ForecastMode,
    exec: Execution,
) -> Result<ForecastResult> {
    if window.kind != WindowKind::Forecast {
        return Err(Error::InvalidInput("expected_failures needs a forecast window".into()));
    }
    if params.len() < fleet.n_parts {
        return Err(Error::InvalidInput(format!(
            "{} parameter sets for {} parts",
            params.len(),
            fleet.n_parts
        )));
    }
    let sums = par::map_range(exec, fleet.n_parts, |j| {
        let mut mean = 0.0;
        let mut var = 0.0;
        for (u, unit) in fleet.units.iter().enumerate() {
            if !fleet.is_surviving(u, j) {
                continue;
            }
            let c3 = unit.cycles_at(window.start);
            let c4 = unit.cycles_at(window.end);
            let p = window_probability(&params[j], c3, c4, mode);
            mean += p;
            var += p * (1.0 - p);
        }
        (mean, var)
    });
    let per_part: Vec<f64> = sums.iter().map(|s| s.0).collect();
    let variance = sums.iter().map(|s| s.1).collect();
    let total = per_part.iter().sum();
    Ok(ForecastResult { per_part, variance, total })
}
