//! Report tables: fits, forecasts and warranty periods as CSV with JSON
//! mirrors, per-part cost curves and a Markdown summary.
//!
//! Everything written here is a pure function of the rows, so identical runs
//! give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fusion::{CaseId, FitResult};
use crate::warranty::{OptimizationMethod, WarrantyCostModel, WarrantyOptimum};
use crate::weibull::WeibullParams;
use crate::{Error, Result};

pub const FIT_REPORT: &str = "fit_report";
pub const FORECAST_REPORT: &str = "forecast_report";
pub const WARRANTY_REPORT: &str = "warranty_report";
pub const SUMMARY: &str = "summary.md";
pub const COST_CURVE_DIR: &str = "cost_curves";

/// R-hat below this counts as converged.
pub const R_HAT_OK: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Dtc,
    Part,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub level: Level,
    pub case: CaseId,
    pub part: usize,
    pub dtc: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub r: Option<f64>,
    pub m: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub n_failed: Option<usize>,
    pub n_future: Option<usize>,
    pub n_clamped: Option<usize>,
    pub max_r_hat: Option<f64>,
    pub rhat_ok: Option<bool>,
    pub true_alpha: Option<f64>,
    pub true_beta: Option<f64>,
    pub abs_err_alpha: Option<f64>,
    pub abs_err_beta: Option<f64>,
    pub error: Option<String>,
}

impl FitRow {
    pub fn from_fit(fit: &FitResult, truth: Option<&WeibullParams>) -> Self {
        let level = if fit.dtc.is_some() { Level::Dtc } else { Level::Part };
        let max_r_hat = fit.max_r_hat();
        let mut row = Self::failed(level, fit.case, fit.part, fit.dtc, String::new());
        row.error = None;
        row.alpha = Some(fit.weibull.alpha);
        row.beta = Some(fit.weibull.beta);
        if let Some(d) = &fit.dep {
            row.r = Some(d.r);
            row.m = Some(d.m);
            row.sigma1 = Some(d.sigma1);
            row.sigma2 = Some(d.sigma2);
        }
        row.n_failed = Some(fit.n_failed);
        row.n_future = Some(fit.n_future);
        row.n_clamped = Some(fit.n_clamped());
        if !max_r_hat.is_nan() {
            row.max_r_hat = Some(max_r_hat);
            row.rhat_ok = Some(max_r_hat < R_HAT_OK);
        }
        if let Some(t) = truth {
            row.true_alpha = Some(t.alpha);
            row.true_beta = Some(t.beta);
            row.abs_err_alpha = Some((fit.weibull.alpha - t.alpha).abs());
            row.abs_err_beta = Some((fit.weibull.beta - t.beta).abs());
        }
        row
    }

    pub fn failed(level: Level, case: CaseId, part: usize, dtc: Option<usize>, error: String) -> Self {
        Self {
            level,
            case,
            part,
            dtc,
            alpha: None,
            beta: None,
            r: None,
            m: None,
            sigma1: None,
            sigma2: None,
            n_failed: None,
            n_future: None,
            n_clamped: None,
            max_r_hat: None,
            rhat_ok: None,
            true_alpha: None,
            true_beta: None,
            abs_err_alpha: None,
            abs_err_beta: None,
            error: Some(error),
        }
    }

    pub fn weibull(&self) -> Option<WeibullParams> {
        Some(WeibullParams { alpha: self.alpha?, beta: self.beta? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub case: CaseId,
    pub part: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub n_surviving: usize,
    pub expected: Option<f64>,
    pub sd: Option<f64>,
    pub realized: Option<usize>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarrantyRow {
    pub case: CaseId,
    pub part: usize,
    pub alpha: f64,
    pub beta: f64,
    pub w_star: f64,
    pub cost: f64,
    pub method: OptimizationMethod,
    pub iterations: usize,
    pub converged: bool,
    pub replacement_cost: f64,
    pub penalty_base: f64,
    pub penalty_decay: f64,
}

impl WarrantyRow {
    pub fn new(case: CaseId, part: usize, params: &WeibullParams, model: &WarrantyCostModel, opt: &WarrantyOptimum) -> Self {
        Self {
            case,
            part,
            alpha: params.alpha,
            beta: params.beta,
            w_star: opt.w,
            cost: opt.cost,
            method: opt.method,
            iterations: opt.iterations,
            converged: opt.converged,
            replacement_cost: model.replacement_cost,
            penalty_base: model.penalty_base,
            penalty_decay: model.penalty_decay,
        }
    }
}

/// Write `<dir>/<stem>.csv` and `<dir>/<stem>.json`.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(rows)? + "\n")?;
    Ok(())
}

/// Read the JSON mirror written by [`write_table`].
pub fn read_table<T: DeserializeOwned>(dir: &Path, stem: &str) -> Result<Vec<T>> {
    let path = dir.join(format!("{stem}.json"));
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema { file: path, line: e.line() as u64, message: e.to_string() })
}

/// One cost curve per part: a `w` column and one cost column per entry of
/// `curves`, all sampled on the same grid.
pub fn write_cost_curve(path: &Path, columns: &[String], w: &[f64], curves: &[Vec<f64>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = csv::Writer::from_path(path)?;
    let mut header = vec!["w".to_string()];
    header.extend(columns.iter().cloned());
    out.write_record(&header)?;
    for (i, wi) in w.iter().enumerate() {
        let mut rec = vec![wi.to_string()];
        rec.extend(curves.iter().map(|c| c[i].to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Markdown tables of the part-level fits, the forecasts and the warranty
/// periods.
pub fn render_summary(fits: &[FitRow], forecasts: &[ForecastRow], warranty: &[WarrantyRow]) -> String {
    let mut s = String::from("# failcast summary\n\n## Fitted parameters (part level)\n\n");
    s.push_str("| case | part | alpha | beta | r | m | n | n' | clamped | max R-hat | true alpha | true beta | note |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in fits.iter().filter(|r| r.level == Level::Part) {
        let note = match (&r.error, r.rhat_ok) {
            (Some(e), _) => e.clone(),
            (None, Some(false)) => "R-hat above 1.05".to_string(),
            _ => String::new(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.case,
            r.part,
            opt(r.alpha, 3),
            opt(r.beta, 0),
            opt(r.r, 3),
            opt(r.m, 3),
            r.n_failed.map_or("-".into(), |v| v.to_string()),
            r.n_future.map_or("-".into(), |v| v.to_string()),
            r.n_clamped.map_or("-".into(), |v| v.to_string()),
            opt(r.max_r_hat, 3),
            opt(r.true_alpha, 3),
            opt(r.true_beta, 0),
            note
        );
    }
    let dtc_errors: Vec<&FitRow> = fits.iter().filter(|r| r.level == Level::Dtc && r.error.is_some()).collect();
    if !dtc_errors.is_empty() {
        s.push_str("\n### Failed (part, DTC) fits\n\n");
        for r in dtc_errors {
            let _ = writeln!(s, "- {} part {} dtc {}: {}", r.case, r.part, r.dtc.unwrap_or(0), r.error.as_deref().unwrap_or(""));
        }
    }

    s.push_str("\n## Expected failures in the forecast window\n\n");
    s.push_str("| case | part | expected | sd | realized | rel. error |\n|---|---|---|---|---|---|\n");
    for r in forecasts {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.case,
            r.part,
            opt(r.expected, 1),
            opt(r.sd, 1),
            r.realized.map_or("-".into(), |v| v.to_string()),
            opt(r.rel_error, 3)
        );
    }

    s.push_str("\n## Optimal warranty periods (cycles)\n\n");
    s.push_str("| case | part | alpha | beta | w* | C(w*) | method | R | b | c |\n|---|---|---|---|---|---|---|---|---|---|\n");
    for r in warranty {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.0} | {:.0} | {:.3} | {} | {} | {} | {} |",
            r.case, r.part, r.alpha, r.beta, r.w_star, r.cost, r.method, r.replacement_cost, r.penalty_base, r.penalty_decay
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_round_trip_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            FitRow::failed(Level::Dtc, CaseId::Case2, 1, Some(3), "no failures".into()),
            FitRow { alpha: Some(2.0), beta: Some(1e5), error: None, ..FitRow::failed(Level::Part, CaseId::Case1, 0, None, String::new()) },
        ];
        write_table(dir.path(), FIT_REPORT, &rows).unwrap();
        let back: Vec<FitRow> = read_table(dir.path(), FIT_REPORT).unwrap();
        assert_eq!(back, rows);
        let csv = std::fs::read_to_string(dir.path().join("fit_report.csv")).unwrap();
        assert!(csv.starts_with("level,case,part,dtc,alpha,beta,r,m,"));
        assert!(csv.contains("dtc,case2,1,3,,,"));
    }

    #[test]
    fn missing_table_is_a_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_table::<FitRow>(dir.path(), FIT_REPORT), Err(Error::MissingFile(_))));
    }

    #[test]
    fn summary_flags_unconverged_fits() {
        let mut row = FitRow::failed(Level::Part, CaseId::Case2, 4, None, String::new());
        row.error = None;
        row.rhat_ok = Some(false);
        let text = render_summary(&[row], &[], &[]);
        assert!(text.contains("R-hat above 1.05"));
    }
}
