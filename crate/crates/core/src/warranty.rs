//! Warranty cost and the cost-optimal warranty period.
//!
//! `C(w) = R*F(w) + R*b*exp(-c*w)*(1 - F(w))`: every failure inside the
//! warranty costs a replacement `R`, every unit still working at `w` carries
//! a dissatisfaction penalty that fades as the warranty grows.

use serde::{Deserialize, Serialize};

use crate::weibull::WeibullParams;
use crate::{Error, Result};

/// The penalty defaults are `b = e` and `c = 1e-5` per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarrantyCostModel {
    pub replacement_cost: f64,
    pub penalty_base: f64,
    pub penalty_decay: f64,
}

impl Default for WarrantyCostModel {
    fn default() -> Self {
        Self { replacement_cost: 100.0, penalty_base: std::f64::consts::E, penalty_decay: 1e-5 }
    }
}

impl WarrantyCostModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.replacement_cost) && ok(self.penalty_base) && ok(self.penalty_decay) {
            Ok(())
        } else {
            Err(Error::Config("cost: replacement_cost, penalty_base and penalty_decay must be positive".into()))
        }
    }
}

/// Gradient-descent settings. Unset fields derive from the Weibull law
/// being optimized: start at `beta`, learning rate `beta^2 / R`, tolerance
/// `1e-9 * R * c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    pub initial_w: Option<f64>,
    pub learning_rate: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { initial_w: None, learning_rate: None, tolerance: None, max_iterations: 10_000 }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = [self.initial_w, self.learning_rate, self.tolerance]
            .iter()
            .flatten()
            .any(|v| !(*v > 0.0 && v.is_finite()));
        if bad || self.max_iterations == 0 {
            return Err(Error::Config("gd: settings must be positive".into()));
        }
        Ok(())
    }
}

pub fn warranty_cost(w: f64, params: &WeibullParams, model: &WarrantyCostModel) -> f64 {
    let r = model.replacement_cost;
    let f = params.cdf(w);
    r * f + r * model.penalty_base * (-model.penalty_decay * w).exp() * params.survival(w)
}

/// `dC/dw = R*[f(w) - b*c*exp(-c*w)*(1 - F(w)) - b*exp(-c*w)*f(w)]`.
pub fn cost_gradient(w: f64, params: &WeibullParams, model: &WarrantyCostModel) -> f64 {
    let (b, c) = (model.penalty_base, model.penalty_decay);
    let pdf = params.pdf(w);
    let decay = (-c * w).exp();
    model.replacement_cost * (pdf - b * c * decay * params.survival(w) - b * decay * pdf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizationMethod {
    /// Gradient descent from the configured start.
    Gd,
    /// Gradient descent restarted from the grid optimum because the first
    /// descent ended above it.
    GridSeeded,
}

impl std::fmt::Display for OptimizationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizationMethod::Gd => "gd",
            OptimizationMethod::GridSeeded => "grid-seeded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarrantyOptimum {
    pub w: f64,
    pub cost: f64,
    pub method: OptimizationMethod,
    pub iterations: usize,
    /// False when the descent hit `max_iterations`; the best iterate is
    /// still returned.
    pub converged: bool,
}

/// Points of the check grid used to catch descents stuck in a poor local
/// minimum.
const CHECK_GRID_STEPS: usize = 10_000;
const CHECK_GRID_SPAN: f64 = 5.0;
/// Relative excess over the grid cost that triggers a restart. The cost of
/// a late-failing part has a long plateau near `R` where the gradient test
/// passes well away from the minimum, so any real excess counts.
const RESTART_SLACK: f64 = 1.0 + 1e-9;

struct Descent {
    w: f64,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn descend(params: &WeibullParams, model: &WarrantyCostModel, start: f64, eta0: f64, tol: f64, max_iter: usize) -> Descent {
    let mut w = start.max(0.0);
    let mut cost = warranty_cost(w, params, model);
    let mut eta = eta0;
    for it in 0..max_iter {
        let g = cost_gradient(w, params, model);
        // Projected gradient: at the boundary only a negative slope matters.
        let pg = if w == 0.0 { g.min(0.0) } else { g };
        if pg.abs() < tol {
            return Descent { w, cost, iterations: it, converged: true };
        }
        let mut step = eta;
        loop {
            let cand = (w - step * g).max(0.0);
            let c = warranty_cost(cand, params, model);
            if c < cost {
                w = cand;
                cost = c;
                eta = step * 2.0;
                break;
            }
            step *= 0.5;
            if step < eta0 * 1e-30 || cand == w {
                // No representable decrease left along the gradient.
                return Descent { w, cost, iterations: it + 1, converged: true };
            }
        }
    }
    Descent { w, cost, iterations: max_iter, converged: false }
}

/// Projected gradient descent on `w >= 0` with backtracking. If the result
/// costs more than a 10^4-point grid over `[0, 5*beta]`, the descent is
/// rerun from the grid optimum.
pub fn optimize_warranty(params: &WeibullParams, model: &WarrantyCostModel, cfg: &GdConfig) -> Result<WarrantyOptimum> {
    model.validate()?;
    cfg.validate()?;
    let r = model.replacement_cost;
    let start = cfg.initial_w.unwrap_or(params.beta);
    let eta = cfg.learning_rate.unwrap_or(params.beta * params.beta / r);
    let tol = cfg.tolerance.unwrap_or(1e-9 * r * model.penalty_decay);

    let first = descend(params, model, start, eta, tol, cfg.max_iterations);
    let (gw, gc) = grid_search_warranty(params, model, CHECK_GRID_SPAN * params.beta, CHECK_GRID_STEPS)?;
    let (d, method) = if first.cost > RESTART_SLACK * gc {
        let second = descend(params, model, gw, eta, tol, cfg.max_iterations);
        let second = if second.cost <= gc { second } else { Descent { w: gw, cost: gc, ..second } };
        (second, OptimizationMethod::GridSeeded)
    } else {
        (first, OptimizationMethod::Gd)
    };
    Ok(WarrantyOptimum { w: d.w, cost: d.cost, method, iterations: d.iterations, converged: d.converged })
}

/// Minimum of the cost over `steps + 1` evenly spaced points of
/// `[0, w_max]`. Ties keep the smallest `w`.
pub fn grid_search_warranty(
    params: &WeibullParams,
    model: &WarrantyCostModel,
    w_max: f64,
    steps: usize,
) -> Result<(f64, f64)> {
    if steps < 2 || !(w_max > 0.0 && w_max.is_finite()) {
        return Err(Error::InvalidInput("grid search needs steps >= 2 and w_max > 0".into()));
    }
    let mut best = (0.0, warranty_cost(0.0, params, model));
    for k in 1..=steps {
        let w = w_max * k as f64 / steps as f64;
        let c = warranty_cost(w, params, model);
        if c < best.1 {
            best = (w, c);
        }
    }
    Ok(best)
}

/// `(w, C(w))` at `points` evenly spaced warranty periods on `[0, w_max]`.
pub fn cost_curve(params: &WeibullParams, model: &WarrantyCostModel, w_max: f64, points: usize) -> Vec<(f64, f64)> {
    let last = points.max(2) - 1;
    (0..=last)
        .map(|k| {
            let w = w_max * k as f64 / last as f64;
            (w, warranty_cost(w, params, model))
        })
        .collect()
}
