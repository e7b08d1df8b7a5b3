//! Run configuration: one JSON document holding every setting of a
//! pipeline run. Missing fields take their defaults; the fully materialized
//! document is written next to the outputs as `effective-config.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayesnet::PriorConfig;
use crate::domain::{TimeStamp, Window, WindowKind};
use crate::forecast::ForecastMode;
use crate::fusion::{CaseId, PredictionMode};
use crate::mcmc::McmcConfig;
use crate::simulator::{default_observation_window, FleetConfig};
use crate::warranty::{GdConfig, WarrantyCostModel};
use crate::{Error, Result};

pub const EFFECTIVE_CONFIG: &str = "effective-config.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Windows {
    pub observation: Window,
    pub forecast: Window,
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            observation: default_observation_window(),
            forecast: Window {
                start: TimeStamp::from_ymd(2013, 1, 1).expect("valid date"),
                end: TimeStamp::from_ymd(2014, 1, 1).expect("valid date"),
                kind: WindowKind::Forecast,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub default: WarrantyCostModel,
    /// Overrides keyed by part index.
    pub per_part: BTreeMap<usize, WarrantyCostModel>,
}

impl CostConfig {
    pub fn for_part(&self, part: usize) -> WarrantyCostModel {
        self.per_part.get(&part).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of all randomness; copied into `fleet.seed` and `mcmc.seed`.
    pub seed: u64,
    pub fleet: FleetConfig,
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    pub prediction: PredictionMode,
    pub cost: CostConfig,
    pub gd: GdConfig,
    /// The observation window also bounds the simulated event log.
    pub windows: Windows,
    pub cases: Vec<CaseId>,
    pub forecast_mode: ForecastMode,
    pub output_dir: PathBuf,
    /// Where the event-log CSVs are read from; defaults to `output_dir`.
    pub data_dir: Option<PathBuf>,
    /// Samples per cost curve in the report.
    pub cost_curve_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            fleet: FleetConfig::default(),
            priors: PriorConfig::default(),
            mcmc: McmcConfig { seed: 42, ..McmcConfig::default() },
            prediction: PredictionMode::default(),
            cost: CostConfig::default(),
            gd: GdConfig::default(),
            windows: Windows::default(),
            cases: CaseId::ALL.to_vec(),
            forecast_mode: ForecastMode::default(),
            output_dir: PathBuf::from("out"),
            data_dir: None,
            cost_curve_points: 1001,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Propagate the shared seed and observation window into the
    /// sub-configurations.
    pub fn sync(&mut self) {
        self.fleet.seed = self.seed;
        self.mcmc.seed = self.seed;
        self.fleet.observation_window = self.windows.observation;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate()?;
        self.priors.validate()?;
        self.mcmc.validate()?;
        self.gd.validate()?;
        self.cost.default.validate()?;
        for m in self.cost.per_part.values() {
            m.validate()?;
        }
        let w = &self.windows;
        if w.observation.kind != WindowKind::Observation || w.forecast.kind != WindowKind::Forecast {
            return Err(Error::Config("windows: observation/forecast kinds swapped".into()));
        }
        if w.observation.end.days() > w.forecast.start.days() {
            return Err(Error::Config("windows: observation must end before the forecast starts".into()));
        }
        if self.cases.is_empty() {
            return Err(Error::Config("cases must not be empty".into()));
        }
        if self.cost_curve_points < 2 {
            return Err(Error::Config("cost_curve_points must be >= 2".into()));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> &Path {
        self.data_dir.as_deref().unwrap_or(&self.output_dir)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(EFFECTIVE_CONFIG), self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.fleet.n_units, 1000);
        assert_eq!(cfg.cost.default.penalty_base, std::f64::consts::E);
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::from_json(r#"{"seed": 7, "cases": ["case1", "best"]}"#).unwrap();
        assert_eq!(cfg.fleet.seed, 7);
        assert_eq!(cfg.mcmc.seed, 7);
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_carry_field_and_line() {
        let err = RunConfig::from_json("{\n  \"fleet\": {\"n_units\": 0}\n}").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::from_json("{\n  \"mcmc\": {\"chains\": 2}\n}").unwrap_err().to_string();
        assert!(err.contains("chains") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn windows_must_not_overlap() {
        let text = r#"{"windows": {"forecast": {"start": "2012-06-01", "end": "2013-06-01", "kind": "forecast"}}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn per_part_cost_overrides() {
        let text = r#"{"cost": {"per_part": {"3": {"replacement_cost": 250.0}}}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.cost.for_part(3).replacement_cost, 250.0);
        assert_eq!(cfg.cost.for_part(0).replacement_cost, 100.0);
    }
}
