//! Failure-only, service-record and tele-diagnostic fitting pipelines.
//!
//! - Case 1 fits the Weibull law to the observed failures alone.
//! - Cases 2 and 3 first learn the dependency between failures and DTCs
//!   (step 1), turn the DTCs of units that have not failed yet into
//!   predicted failures (step 2) and refit on observed plus predicted
//!   failures (step 3). Case 2 sees service observations only, Case 3 also
//!   sees the DTC occurrence cycles.
//! - The best scenario replaces step 2 with the true future failures of a
//!   simulated fleet.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayesnet::{BnPosterior, DependencyParams, NetworkData, ObservationMask, PriorConfig};
use crate::domain::PartDataset;
use crate::mcmc::{self, McmcConfig, Support, Target, Trace};
use crate::par::Execution;
use crate::simulator::GroundTruth;
use crate::weibull::WeibullParams;
use crate::{seed, Error, Result};

const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "case1")]
    Case1,
    #[serde(rename = "case2")]
    Case2,
    #[serde(rename = "case3")]
    Case3,
    #[serde(rename = "best")]
    BestScenario,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::BestScenario];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::BestScenario => "best",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" => Ok(CaseId::Case1),
            "case2" => Ok(CaseId::Case2),
            "case3" => Ok(CaseId::Case3),
            "best" => Ok(CaseId::BestScenario),
            other => Err(Error::Config(format!("unknown case {other:?}, expected case1|case2|case3|best"))),
        }
    }
}

/// How step 2 turns a DTC into a predicted failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Invert the mean structure of the network at the posterior-mean
    /// dependency parameters.
    #[default]
    Analytic,
    /// Posterior mean of each unit's failure cycles given its DTC cycles,
    /// with parameters fixed at the step 1 estimates and the unit known to
    /// be working at the window end.
    PosteriorPredictive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedFailure {
    pub unit: usize,
    pub cycles: f64,
    /// The service observation the prediction came from.
    pub source_s: f64,
    /// True when the raw prediction fell below the cycles the unit had
    /// already accrued without failing and was raised to that level.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: String,
    pub max_r_hat: f64,
    pub min_ess: f64,
    pub acceptance_rate: f64,
}

impl StepDiagnostics {
    fn from_trace(step: &str, trace: &Trace) -> Self {
        let (max_r_hat, min_ess) = trace
            .diagnostics
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |d| (d.max_r_hat(), d.min_ess()));
        Self { step: step.to_string(), max_r_hat, min_ess, acceptance_rate: trace.acceptance_rate() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub case: CaseId,
    pub part: usize,
    /// `None` for part-level aggregates.
    pub dtc: Option<usize>,
    pub weibull: WeibullParams,
    pub dep: Option<DependencyParams>,
    pub predicted_failures: Vec<PredictedFailure>,
    pub n_failed: usize,
    pub n_future: usize,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl FitResult {
    pub fn n_clamped(&self) -> usize {
        self.predicted_failures.iter().filter(|p| p.clamped).count()
    }

    pub fn max_r_hat(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.max_r_hat).fold(f64::NAN, f64::max)
    }
}

/// Everything a pipeline run needs besides the data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitSettings {
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    pub prediction: PredictionMode,
    pub exec: Execution,
}

impl FitSettings {
    pub fn new(priors: PriorConfig, mcmc: McmcConfig) -> Self {
        Self { priors, mcmc, ..Self::default() }
    }

    fn step_mcmc(&self, step: u64) -> McmcConfig {
        self.mcmc.with_seed(seed::derive(self.mcmc.seed, &[step]))
    }
}

fn sample(data: NetworkData, mask: ObservationMask, priors: PriorConfig, cfg: &McmcConfig, exec: Execution) -> Result<(BnPosterior, Trace)> {
    let target = BnPosterior::new(data, mask, priors)?;
    let mut rng = seed::rng(cfg.seed, &[3]);
    let init = target
        .draw_initial(&mut rng)
        .ok_or_else(|| Error::InvalidInput("no starting point for the network".into()))?;
    let trace = mcmc::run_mh_with(&target, &init, cfg, exec)?;
    Ok((target, trace))
}

fn weibull_means(trace: &Trace) -> Result<WeibullParams> {
    Ok(WeibullParams { alpha: mcmc::posterior_mean(trace, "alpha")?, beta: mcmc::posterior_mean(trace, "beta")? })
}

/// Point estimates of the dependency parameters.
///
/// With `I` observed every parameter is a posterior mean. With `I` latent
/// the data only pin down the product `r*(1 - m)` (and one combined noise
/// level), so `m` is reported as `1 - E[r*(1 - m)] / E[r]`; this keeps the
/// product of the point estimates equal to its posterior mean, which is
/// what the service-only inversion uses.
fn dependency_means(trace: &Trace, mask: ObservationMask) -> Result<DependencyParams> {
    let r = mcmc::posterior_mean(trace, "r")?;
    let mut m = mcmc::posterior_mean(trace, "m")?;
    if !mask.i_observed {
        let rs = trace.samples("r")?;
        let ms = trace.samples("m")?;
        let (sum, n) = rs
            .iter()
            .zip(&ms)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .fold((0.0, 0usize), |(s, n), (r, m)| (s + r * (1.0 - m), n + 1));
        m = (1.0 - sum / n as f64 / r).clamp(0.0, 1.0);
    }
    Ok(DependencyParams {
        r,
        sigma1: mcmc::posterior_mean(trace, "sigma1")?,
        m,
        sigma2: mcmc::posterior_mean(trace, "sigma2")?,
    })
}

fn fused_mask(case: CaseId) -> Result<ObservationMask> {
    match case {
        CaseId::Case2 => Ok(ObservationMask::SERVICE),
        CaseId::Case3 | CaseId::BestScenario => Ok(ObservationMask::FULL),
        CaseId::Case1 => Err(Error::InvalidInput("case1 has no dependency step".into())),
    }
}

/// Weibull fit on the observed failures alone.
pub fn fit_case1(ds: &PartDataset, priors: &PriorConfig, mcmc: &McmcConfig) -> Result<FitResult> {
    fit_case1_with(ds, &FitSettings::new(*priors, mcmc.clone()))
}

pub fn fit_case1_with(ds: &PartDataset, settings: &FitSettings) -> Result<FitResult> {
    let data = NetworkData::new(ds.fail.clone(), vec![], vec![]);
    let (_, trace) = sample(data, ObservationMask::FAILURES, settings.priors, &settings.mcmc, settings.exec)?;
    Ok(FitResult {
        case: CaseId::Case1,
        part: ds.part,
        dtc: Some(ds.dtc),
        weibull: weibull_means(&trace)?,
        dep: None,
        predicted_failures: vec![],
        n_failed: ds.n_failed(),
        n_future: ds.n_future(),
        diagnostics: vec![StepDiagnostics::from_trace("fit", &trace)],
    })
}

struct Step1 {
    dep: DependencyParams,
    weibull: WeibullParams,
    diagnostics: StepDiagnostics,
}

fn step1(ds: &PartDataset, case: CaseId, settings: &FitSettings) -> Result<Step1> {
    let mask = fused_mask(case)?;
    let ind = if mask.i_observed { ds.ind.clone() } else { vec![] };
    let data = NetworkData::new(ds.fail.clone(), ind, ds.serv.clone());
    let (_, trace) = sample(data, mask, settings.priors, &settings.step_mcmc(1), settings.exec)?;
    Ok(Step1 {
        dep: dependency_means(&trace, mask)?,
        weibull: weibull_means(&trace)?,
        diagnostics: StepDiagnostics::from_trace("dependency", &trace),
    })
}

/// Learn `r`, `sigma1`, `m`, `sigma2` from the failed units: service
/// observations only for Case 2, occurrences too for Case 3.
pub fn learn_dependency(ds: &PartDataset, case: CaseId, priors: &PriorConfig, mcmc: &McmcConfig) -> Result<DependencyParams> {
    Ok(step1(ds, case, &FitSettings::new(*priors, mcmc.clone()))?.dep)
}

/// Failure cycles implied by a DTC under the mean structure of the network.
///
/// Case 3: `f = i' + (s' - i')/m`. Case 2: `f = s'/(1 - r*(1 - m))`.
/// The result is never below `s'`.
pub fn invert_service_to_failure(s_prime: f64, i_prime: Option<f64>, dep: &DependencyParams, case: CaseId) -> Result<f64> {
    let f = match (case, i_prime) {
        (CaseId::Case3, Some(i)) => {
            if dep.m <= DEGENERATE_EPS {
                return Err(Error::Degenerate(format!("m = {} leaves failure cycles unidentified", dep.m)));
            }
            i + (s_prime - i) / dep.m
        }
        (CaseId::Case2, None) => {
            let k = dep.r * (1.0 - dep.m);
            if k >= 1.0 - DEGENERATE_EPS {
                return Err(Error::Degenerate(format!("r*(1 - m) = {k} leaves failure cycles unidentified")));
            }
            s_prime / (1.0 - k)
        }
        (CaseId::Case3, None) => {
            return Err(Error::InvalidInput("case3 inversion needs the occurrence cycles".into()))
        }
        (CaseId::Case2, Some(_)) => {
            return Err(Error::InvalidInput("case2 inversion takes no occurrence cycles".into()))
        }
        (other, _) => return Err(Error::InvalidInput(format!("{other} has no inversion"))),
    };
    Ok(f.max(s_prime))
}

fn clamp_to_survival(unit: usize, raw: f64, s: f64, accrued: Option<f64>) -> PredictedFailure {
    let floor = accrued.map(|a| a + 1.0);
    match floor {
        Some(fl) if raw < fl => PredictedFailure { unit, cycles: fl, source_s: s, clamped: true },
        _ => PredictedFailure { unit, cycles: raw, source_s: s, clamped: false },
    }
}

/// Step 2 with the analytic inversion.
pub fn predict_failures(ds: &PartDataset, dep: &DependencyParams, case: CaseId) -> Result<Vec<PredictedFailure>> {
    (0..ds.n_future())
        .map(|t| {
            let s = ds.serv_prime[t];
            let i = (case == CaseId::Case3).then(|| ds.ind_prime[t]);
            let raw = invert_service_to_failure(s, i, dep, case)?;
            Ok(clamp_to_survival(ds.future_units[t], raw, s, ds.future_accrued_at_end[t]))
        })
        .collect()
}

/// Per-unit failure cycles given DTC cycles with fixed parameters. Units
/// are independent, so one coordinate per unit and an additive cache.
struct PredictiveTarget {
    weibull: WeibullParams,
    dep: DependencyParams,
    case: CaseId,
    serv: Vec<f64>,
    ind: Vec<f64>,
    floor: Vec<f64>,
}

impl PredictiveTarget {
    fn term(&self, t: usize, f: f64) -> f64 {
        if !(f > self.floor[t]) {
            return f64::NEG_INFINITY;
        }
        let d = &self.dep;
        let s = self.serv[t];
        let ln_normal = |x: f64, mean: f64, sd: f64| {
            let z = (x - mean) / sd;
            -sd.ln() - 0.5 * z * z
        };
        let lik = if self.case == CaseId::Case3 {
            let i = self.ind[t];
            ln_normal(i, f - f * d.r, d.sigma1) + ln_normal(s, (f - i) * d.m + i, d.sigma2)
        } else {
            // Occurrence integrated out.
            let sd = ((1.0 - d.m).powi(2) * d.sigma1 * d.sigma1 + d.sigma2 * d.sigma2).sqrt();
            ln_normal(s, f * (1.0 - d.r * (1.0 - d.m)), sd)
        };
        self.weibull.ln_pdf(f) + lik
    }
}

impl Target for PredictiveTarget {
    type Cache = f64;

    fn dim(&self) -> usize {
        self.serv.len()
    }

    fn support(&self, _coord: usize) -> Support {
        Support::Positive
    }

    fn tracked(&self) -> Vec<(usize, String)> {
        vec![]
    }

    fn cache(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(t, &f)| self.term(t, f)).sum()
    }

    fn log_density(&self, _x: &[f64], cache: &f64) -> f64 {
        *cache
    }

    fn propose(&self, x: &[f64], cache: &f64, coord: usize, value: f64) -> (f64, f64) {
        let lp = cache - self.term(coord, x[coord]) + self.term(coord, value);
        (lp, lp)
    }
}

fn predict_failures_sampled(
    ds: &PartDataset,
    weibull: WeibullParams,
    dep: DependencyParams,
    case: CaseId,
    settings: &FitSettings,
) -> Result<Vec<PredictedFailure>> {
    if ds.n_future() == 0 {
        return Ok(vec![]);
    }
    let floor: Vec<f64> = (0..ds.n_future())
        .map(|t| ds.serv_prime[t].max(ds.future_accrued_at_end[t].unwrap_or(0.0)))
        .collect();
    let target = PredictiveTarget {
        weibull,
        dep,
        case,
        serv: ds.serv_prime.clone(),
        ind: ds.ind_prime.clone(),
        floor: floor.clone(),
    };
    let init: Vec<f64> = floor.iter().map(|f| f * 1.05 + 1.0).collect();
    let trace = mcmc::run_mh_with(&target, &init, &settings.step_mcmc(2), settings.exec)?;
    Ok((0..ds.n_future())
        .map(|t| PredictedFailure {
            unit: ds.future_units[t],
            cycles: trace.coord_means[t].max(ds.serv_prime[t]),
            source_s: ds.serv_prime[t],
            clamped: false,
        })
        .collect())
}

/// `Fail''`: observed failures followed by the predicted ones.
pub fn fused_failure_set(ds: &PartDataset, predicted: &[PredictedFailure]) -> Vec<f64> {
    ds.fail.iter().copied().chain(predicted.iter().map(|p| p.cycles)).collect()
}

fn check_prediction_disjoint(ds: &PartDataset, predicted: &[PredictedFailure]) -> Result<()> {
    ds.check_disjoint()?;
    let units: Vec<usize> =
        predicted.iter().map(|p| p.unit).filter(|u| ds.failed_units.contains(u)).collect();
    if units.is_empty() {
        Ok(())
    } else {
        Err(Error::Disjointness { part: ds.part, dtc: ds.dtc, units })
    }
}

/// Step 3: refit on `Fail''`, `Serv''` (and `Ind''` when `I` is observed).
fn refit(
    ds: &PartDataset,
    case: CaseId,
    predicted: Vec<PredictedFailure>,
    dep_step1: Option<DependencyParams>,
    mut diagnostics: Vec<StepDiagnostics>,
    settings: &FitSettings,
) -> Result<FitResult> {
    check_prediction_disjoint(ds, &predicted)?;
    let mask = fused_mask(case)?;
    let fail = fused_failure_set(ds, &predicted);
    let serv: Vec<f64> = ds.serv.iter().chain(&ds.serv_prime).copied().collect();
    let ind: Vec<f64> = if mask.i_observed { ds.ind.iter().chain(&ds.ind_prime).copied().collect() } else { vec![] };
    let (_, trace) = sample(NetworkData::new(fail, ind, serv), mask, settings.priors, &settings.step_mcmc(3), settings.exec)?;
    diagnostics.push(StepDiagnostics::from_trace("refit", &trace));
    let dep = match dep_step1 {
        Some(d) => d,
        None => dependency_means(&trace, mask)?,
    };
    Ok(FitResult {
        case,
        part: ds.part,
        dtc: Some(ds.dtc),
        weibull: weibull_means(&trace)?,
        dep: Some(dep),
        predicted_failures: predicted,
        n_failed: ds.n_failed(),
        n_future: ds.n_future(),
        diagnostics,
    })
}

/// Case 2 or Case 3: learn the dependency, predict the failures of units
/// with a DTC but no failure yet, refit on the union. With no such units
/// the result is the Case 1 fit (relabelled).
pub fn fit_fused(ds: &PartDataset, case: CaseId, priors: &PriorConfig, mcmc: &McmcConfig) -> Result<FitResult> {
    fit_fused_with(ds, case, &FitSettings::new(*priors, mcmc.clone()))
}

pub fn fit_fused_with(ds: &PartDataset, case: CaseId, settings: &FitSettings) -> Result<FitResult> {
    if !matches!(case, CaseId::Case2 | CaseId::Case3) {
        return Err(Error::InvalidInput(format!("fit_fused runs case2 or case3, not {case}")));
    }
    ds.check_disjoint()?;
    if ds.n_future() == 0 {
        return Ok(FitResult { case, ..fit_case1_with(ds, settings)? });
    }
    let s1 = step1(ds, case, settings)?;
    let predicted = match settings.prediction {
        PredictionMode::Analytic => predict_failures(ds, &s1.dep, case)?,
        PredictionMode::PosteriorPredictive => predict_failures_sampled(ds, s1.weibull, s1.dep, case, settings)?,
    };
    refit(ds, case, predicted, Some(s1.dep), vec![s1.diagnostics], settings)
}

/// The true future failures of the units in `future_units`.
pub fn best_scenario_failures(ds: &PartDataset, truth: &GroundTruth) -> Result<Vec<PredictedFailure>> {
    (0..ds.n_future())
        .map(|t| {
            let unit = ds.future_units[t];
            let rec = truth.get(unit, ds.part).ok_or(Error::MissingTruth { unit, part: ds.part })?;
            Ok(PredictedFailure { unit, cycles: rec.fail_cycles, source_s: ds.serv_prime[t], clamped: false })
        })
        .collect()
}

/// Case 3 with step 2 replaced by the true future failures.
pub fn fit_best_scenario(ds: &PartDataset, truth: &GroundTruth, priors: &PriorConfig, mcmc: &McmcConfig) -> Result<FitResult> {
    fit_best_scenario_with(ds, truth, &FitSettings::new(*priors, mcmc.clone()))
}

pub fn fit_best_scenario_with(ds: &PartDataset, truth: &GroundTruth, settings: &FitSettings) -> Result<FitResult> {
    ds.check_disjoint()?;
    if ds.n_future() == 0 {
        return Ok(FitResult { case: CaseId::BestScenario, ..fit_case1_with(ds, settings)? });
    }
    let predicted = best_scenario_failures(ds, truth)?;
    refit(ds, CaseId::BestScenario, predicted, None, vec![], settings)
}

/// Run one case on one dataset.
pub fn fit_case(ds: &PartDataset, case: CaseId, truth: Option<&GroundTruth>, settings: &FitSettings) -> Result<FitResult> {
    match case {
        CaseId::Case1 => fit_case1_with(ds, settings),
        CaseId::Case2 | CaseId::Case3 => fit_fused_with(ds, case, settings),
        CaseId::BestScenario => {
            let truth = truth.ok_or(Error::MissingTruth { unit: usize::MAX, part: ds.part })?;
            fit_best_scenario_with(ds, truth, settings)
        }
    }
}

/// Combine the per-DTC fits of one part: parameters are averaged with
/// weights `n_j + n'_j`, predicted failures keep the earliest prediction
/// per unit.
pub fn aggregate_part(fits: &[FitResult]) -> Result<FitResult> {
    let first = fits.first().ok_or_else(|| Error::InvalidInput("no fits to aggregate".into()))?;
    if fits.iter().any(|f| f.part != first.part || f.case != first.case) {
        return Err(Error::InvalidInput("aggregated fits must share part and case".into()));
    }
    let weight = |f: &FitResult| (f.n_failed + f.n_future) as f64;
    let total: f64 = fits.iter().map(weight).sum();
    let avg = |g: &dyn Fn(&FitResult) -> f64| fits.iter().map(|f| weight(f) * g(f)).sum::<f64>() / total;
    let weibull = WeibullParams { alpha: avg(&|f| f.weibull.alpha), beta: avg(&|f| f.weibull.beta) };
    let dep = if fits.iter().all(|f| f.dep.is_some()) {
        let d = |g: fn(&DependencyParams) -> f64| avg(&|f: &FitResult| g(f.dep.as_ref().unwrap()));
        Some(DependencyParams { r: d(|p| p.r), sigma1: d(|p| p.sigma1), m: d(|p| p.m), sigma2: d(|p| p.sigma2) })
    } else {
        None
    };
    let mut by_unit: BTreeMap<usize, PredictedFailure> = BTreeMap::new();
    for p in fits.iter().flat_map(|f| &f.predicted_failures) {
        by_unit
            .entry(p.unit)
            .and_modify(|cur| {
                if p.cycles < cur.cycles {
                    *cur = *p;
                }
            })
            .or_insert(*p);
    }
    let n_future = by_unit.len();
    Ok(FitResult {
        case: first.case,
        part: first.part,
        dtc: None,
        weibull,
        dep,
        predicted_failures: by_unit.into_values().collect(),
        n_failed: fits.iter().map(|f| f.n_failed).max().unwrap_or(0),
        n_future,
        diagnostics: fits.iter().flat_map(|f| f.diagnostics.clone()).collect(),
    })
}
