//! The five pipeline commands behind the `failcast` binary.
//!
//! `simulate` writes an event log and its ground truth into the data
//! directory. `fit` reads the log and writes `fit_report.{csv,json}`;
//! `forecast` and `warranty` read the part-level rows of that report;
//! `report` renders the three reports into `summary.md` and per-part cost
//! curves. Every command also writes `effective-config.json`.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::domain::{assemble_sets, EventLog, PartDataset};
use crate::forecast::{window_probability, FleetState};
use crate::fusion::{aggregate_part, fit_case, CaseId, FitResult, FitSettings};
use crate::par::{self, Execution};
use crate::report::{self, FitRow, ForecastRow, Level, WarrantyRow};
use crate::simulator::{simulate_fleet, GroundTruth};
use crate::warranty::{cost_curve, optimize_warranty};
use crate::weibull::WeibullParams;
use crate::{io, seed, Error, Result};

/// Options shared by every command, as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub case: Option<CaseId>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Load a config file and apply command-line overrides.
pub fn resolve_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(case) = overrides.case {
        cfg.cases = vec![case];
    }
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = overrides.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Simulate the configured fleet into the data directory.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (log, truth) = simulate_fleet(&cfg.fleet)?;
    let dir = cfg.data_dir();
    io::write_event_log(dir, &log)?;
    io::write_ground_truth(dir, &truth)?;
    cfg.write_effective(&cfg.output_dir)?;
    Ok(io::data_files(dir))
}

fn load_truth(dir: &Path) -> Result<Option<GroundTruth>> {
    if dir.join(io::GROUND_TRUTH).exists() {
        io::read_ground_truth(dir).map(Some)
    } else {
        Ok(None)
    }
}

/// True parameters to compare against, known only for simulated data.
fn true_params(cfg: &RunConfig, truth: Option<&GroundTruth>, part: usize) -> Option<WeibullParams> {
    truth?;
    cfg.fleet.true_params.get(part).copied()
}

/// Outcome of `fit`: the report rows plus the part-level fits they came from.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub rows: Vec<FitRow>,
    pub part_fits: Vec<FitResult>,
    pub n_errors: usize,
}

/// Fit every configured case on every (part, DTC) of the event log.
///
/// Each (part, DTC) gets the sampler seed `derive(seed, [part, dtc])`
/// whatever the case, so cases that end up fitting the same data give the
/// same answer. Failures of single jobs are reported in their row and the
/// run continues.
pub fn run_fits(cfg: &RunConfig, log: &EventLog, truth: Option<&GroundTruth>) -> FitOutcome {
    let window = cfg.windows.observation;
    let n_parts = log.n_parts();
    let pairs: Vec<(usize, usize)> =
        (0..n_parts).flat_map(|j| (0..log.n_dtcs(j).max(1)).map(move |k| (j, k))).collect();
    let datasets: Vec<Result<PartDataset>> = par::map_slice(Execution::Parallel, &pairs, |&(j, k)| assemble_sets(log, &window, j, k));

    let jobs: Vec<(CaseId, usize)> =
        cfg.cases.iter().flat_map(|&c| (0..pairs.len()).map(move |p| (c, p))).collect();
    let results: Vec<Result<FitResult>> = par::map_slice(Execution::Parallel, &jobs, |&(case, p)| {
        let (j, k) = pairs[p];
        let ds = datasets[p].as_ref().map_err(|e| Error::InvalidInput(e.to_string()))?;
        let settings = FitSettings {
            priors: cfg.priors,
            mcmc: cfg.mcmc.with_seed(seed::derive(cfg.seed, &[j as u64, k as u64])),
            prediction: cfg.prediction,
            exec: Execution::Parallel,
        };
        fit_case(ds, case, truth, &settings)
    });

    let mut rows = Vec::new();
    let mut part_fits = Vec::new();
    let mut n_errors = 0;
    for &case in &cfg.cases {
        for j in 0..n_parts {
            let mut ok = Vec::new();
            for (idx, &(c, p)) in jobs.iter().enumerate() {
                if c != case || pairs[p].0 != j {
                    continue;
                }
                match &results[idx] {
                    Ok(fit) => {
                        rows.push(FitRow::from_fit(fit, true_params(cfg, truth, j).as_ref()));
                        ok.push(fit.clone());
                    }
                    Err(e) => {
                        n_errors += 1;
                        rows.push(FitRow::failed(Level::Dtc, case, j, Some(pairs[p].1), e.to_string()));
                    }
                }
            }
            match aggregate_part(&ok) {
                Ok(fit) => {
                    rows.push(FitRow::from_fit(&fit, true_params(cfg, truth, j).as_ref()));
                    part_fits.push(fit);
                }
                Err(_) => rows.push(FitRow::failed(Level::Part, case, j, None, "no successful (part, DTC) fit".into())),
            }
        }
    }
    FitOutcome { rows, part_fits, n_errors }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome> {
    let dir = cfg.data_dir();
    let log = io::read_event_log(dir)?;
    let truth = load_truth(dir)?;
    if truth.is_none() && cfg.cases.contains(&CaseId::BestScenario) {
        return Err(Error::MissingFile(dir.join(io::GROUND_TRUTH)));
    }
    let outcome = run_fits(cfg, &log, truth.as_ref());
    if outcome.part_fits.is_empty() {
        let first = outcome.rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::InvalidInput(format!("every fit failed; first error: {first}")));
    }
    cfg.write_effective(&cfg.output_dir)?;
    report::write_table(&cfg.output_dir, report::FIT_REPORT, &outcome.rows)?;
    Ok(outcome)
}

fn part_rows(cfg: &RunConfig) -> Result<Vec<FitRow>> {
    let rows: Vec<FitRow> = report::read_table(&cfg.output_dir, report::FIT_REPORT)?;
    Ok(rows.into_iter().filter(|r| r.level == Level::Part && cfg.cases.contains(&r.case)).collect())
}

/// Expected failures per part over the forecast window for every case in
/// the fit report, compared with the ground truth when it is available.
pub fn forecast_rows(cfg: &RunConfig, fits: &[FitRow], log: &EventLog, truth: Option<&GroundTruth>) -> Result<Vec<ForecastRow>> {
    if log.units.is_empty() {
        return Err(Error::MissingFile(cfg.data_dir().join(io::UNITS)));
    }
    let window = cfg.windows.forecast;
    let n_parts = fits.iter().map(|r| r.part + 1).max().unwrap_or(0).max(log.n_parts());
    let fleet = FleetState::from_log(log, n_parts);
    let rows = par::map_slice(Execution::Parallel, fits, |row| {
        let realized = truth.map(|t| t.failures_in(row.part, &window));
        let mut out = ForecastRow {
            case: row.case,
            part: row.part,
            alpha: row.alpha,
            beta: row.beta,
            n_surviving: fleet.n_surviving(row.part),
            expected: None,
            sd: None,
            realized,
            abs_error: None,
            rel_error: None,
            error: row.error.clone(),
        };
        let Some(params) = row.weibull() else { return out };
        let (mut mean, mut var) = (0.0, 0.0);
        for (u, unit) in fleet.units.iter().enumerate() {
            if fleet.is_surviving(u, row.part) {
                let p = window_probability(&params, unit.cycles_at(window.start), unit.cycles_at(window.end), cfg.forecast_mode);
                mean += p;
                var += p * (1.0 - p);
            }
        }
        out.expected = Some(mean);
        out.sd = Some(var.sqrt());
        if let Some(r) = realized {
            out.abs_error = Some((mean - r as f64).abs());
            out.rel_error = (r > 0).then(|| (mean - r as f64).abs() / r as f64);
        }
        out
    });
    Ok(rows)
}

pub fn cmd_forecast(cfg: &RunConfig) -> Result<Vec<ForecastRow>> {
    let fits = part_rows(cfg)?;
    let dir = cfg.data_dir();
    let log = io::read_event_log(dir)?;
    let truth = load_truth(dir)?;
    let rows = forecast_rows(cfg, &fits, &log, truth.as_ref())?;
    cfg.write_effective(&cfg.output_dir)?;
    report::write_table(&cfg.output_dir, report::FORECAST_REPORT, &rows)?;
    Ok(rows)
}

pub fn warranty_rows(cfg: &RunConfig, fits: &[FitRow]) -> Result<Vec<WarrantyRow>> {
    let usable: Vec<&FitRow> = fits.iter().filter(|r| r.weibull().is_some()).collect();
    par::map_slice(Execution::Parallel, &usable, |row| {
        let params = row.weibull().expect("filtered");
        let model = cfg.cost.for_part(row.part);
        let opt = optimize_warranty(&params, &model, &cfg.gd)?;
        Ok(WarrantyRow::new(row.case, row.part, &params, &model, &opt))
    })
    .into_iter()
    .collect()
}

pub fn cmd_warranty(cfg: &RunConfig) -> Result<Vec<WarrantyRow>> {
    let fits = part_rows(cfg)?;
    let rows = warranty_rows(cfg, &fits)?;
    cfg.write_effective(&cfg.output_dir)?;
    report::write_table(&cfg.output_dir, report::WARRANTY_REPORT, &rows)?;
    Ok(rows)
}

/// Render `summary.md` and `cost_curves/part<j>.csv` from the three reports.
/// Each curve spans `[0, 5 * max beta]` over the cases fitted for the part.
pub fn cmd_report(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = &cfg.output_dir;
    let fits: Vec<FitRow> = report::read_table(dir, report::FIT_REPORT)?;
    let forecasts: Vec<ForecastRow> = report::read_table(dir, report::FORECAST_REPORT)?;
    let warranty: Vec<WarrantyRow> = report::read_table(dir, report::WARRANTY_REPORT)?;

    let mut parts: Vec<usize> = warranty.iter().map(|r| r.part).collect();
    parts.sort_unstable();
    parts.dedup();
    let n = cfg.cost_curve_points;
    for part in parts {
        let rows: Vec<&WarrantyRow> = warranty.iter().filter(|r| r.part == part).collect();
        let w_max = 5.0 * rows.iter().map(|r| r.beta).fold(0.0, f64::max);
        let model = cfg.cost.for_part(part);
        let curves: Vec<Vec<(f64, f64)>> = rows
            .iter()
            .map(|r| cost_curve(&WeibullParams { alpha: r.alpha, beta: r.beta }, &model, w_max, n))
            .collect();
        let w: Vec<f64> = curves[0].iter().map(|p| p.0).collect();
        let columns: Vec<String> = rows.iter().map(|r| r.case.to_string()).collect();
        let costs: Vec<Vec<f64>> = curves.iter().map(|c| c.iter().map(|p| p.1).collect()).collect();
        report::write_cost_curve(&dir.join(report::COST_CURVE_DIR).join(format!("part{part}.csv")), &columns, &w, &costs)?;
    }
    let path = dir.join(report::SUMMARY);
    std::fs::write(&path, report::render_summary(&fits, &forecasts, &warranty))?;
    cfg.write_effective(dir)?;
    Ok(path)
}
