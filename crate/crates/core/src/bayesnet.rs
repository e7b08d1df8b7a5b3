//! The `F -> I -> S` network: uniform priors, the three conditional
//! densities and a sampler target over parameters plus latent values.
//!
//! - `F ~ Weibull(alpha, beta)`
//! - `I | F=f ~ N(f - f*r, sigma1)`
//! - `S | F=f, I=i ~ N((f - i)*m + i, sigma2)`
//!
//! An [`ObservationMask`] says which of the three nodes are observed. A node
//! contributes to the likelihood when it is observed or when an observed
//! descendant needs it; an unobserved node with no observed descendant
//! integrates out to 1 and is dropped, so a failures-only mask leaves just
//! the Weibull term.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::PartDataset;
use crate::mcmc::{Support, Target};
use crate::weibull::WeibullParams;
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Upper (and for `r`, lower) bounds of the uniform priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// `alpha ~ U(0, a)`
    pub a: f64,
    /// `beta ~ U(0, b_scale)`
    pub b_scale: f64,
    pub r1: f64,
    pub r2: f64,
    /// `sigma1 ~ U(0, c1)`
    pub c1: f64,
    /// `sigma2 ~ U(0, c3)`
    pub c3: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { a: 10.0, b_scale: 500_000.0, r1: 0.01, r2: 0.99, c1: 50_000.0, c3: 50_000.0 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.a, self.b_scale, self.c1, self.c3];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("priors: a, b_scale, c1 and c3 must be positive".into()));
        }
        if !(0.0 < self.r1 && self.r1 < self.r2 && self.r2 < 1.0) {
            return Err(Error::Config("priors: need 0 < r1 < r2 < 1".into()));
        }
        Ok(())
    }
}

/// Parameters of the `I` and `S` nodes for one (part, DTC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyParams {
    /// Lead-gap ratio: the DTC occurs on average at `f*(1 - r)`.
    pub r: f64,
    pub sigma1: f64,
    /// Observation-delay ratio: the DTC is observed on average at
    /// `(f - i)*m + i`.
    pub m: f64,
    pub sigma2: f64,
}

impl DependencyParams {
    /// Midpoint of the prior supports, used as a placeholder when the
    /// dependency is not part of a fit.
    pub fn prior_midpoint(p: &PriorConfig) -> Self {
        Self { r: 0.5 * (p.r1 + p.r2), sigma1: 0.5 * p.c1, m: 0.5, sigma2: 0.5 * p.c3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    pub f_observed: bool,
    pub i_observed: bool,
    pub s_observed: bool,
}

impl ObservationMask {
    /// Failure cycles only.
    pub const FAILURES: Self = Self { f_observed: true, i_observed: false, s_observed: false };
    /// Failures and service observations, occurrences latent.
    pub const SERVICE: Self = Self { f_observed: true, i_observed: false, s_observed: true };
    /// Everything observed.
    pub const FULL: Self = Self { f_observed: true, i_observed: true, s_observed: true };

    fn s_term(&self) -> bool {
        self.s_observed
    }

    fn i_term(&self) -> bool {
        self.i_observed || self.s_observed
    }

    fn f_term(&self) -> bool {
        self.f_observed || self.i_term()
    }

    /// Number of instances that need a latent `f` slot, given `n` instances.
    pub fn latent_f_len(&self, n: usize) -> usize {
        if !self.f_observed && self.i_term() {
            n
        } else {
            0
        }
    }

    pub fn latent_i_len(&self, n: usize) -> usize {
        if !self.i_observed && self.s_term() {
            n
        } else {
            0
        }
    }

    fn any(&self) -> bool {
        self.f_observed || self.i_observed || self.s_observed
    }
}

/// One joint assignment of the network's parameters and latent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub weibull: WeibullParams,
    pub dep: DependencyParams,
    pub latent_f: Vec<f64>,
    pub latent_i: Vec<f64>,
}

/// Per-instance values of the three nodes. A node's vector may be empty
/// when the node is not observed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkData {
    pub n: usize,
    pub fail: Vec<f64>,
    pub ind: Vec<f64>,
    pub serv: Vec<f64>,
}

impl NetworkData {
    pub fn new(fail: Vec<f64>, ind: Vec<f64>, serv: Vec<f64>) -> Self {
        let n = fail.len().max(ind.len()).max(serv.len());
        Self { n, fail, ind, serv }
    }

    /// The failed instances of a dataset.
    pub fn from_dataset(ds: &PartDataset) -> Self {
        Self::new(ds.fail.clone(), ds.ind.clone(), ds.serv.clone())
    }

    fn check(&self, mask: &ObservationMask) -> Result<()> {
        if !mask.any() {
            return Err(Error::InvalidInput("observation mask has no observed node".into()));
        }
        let need = |flag: bool, v: &Vec<f64>, what: &str| {
            if flag && v.len() != self.n {
                Err(Error::DimensionMismatch(format!(
                    "{what} has {} values for {} instances",
                    v.len(),
                    self.n
                )))
            } else {
                Ok(())
            }
        };
        need(mask.f_observed, &self.fail, "fail")?;
        need(mask.i_observed, &self.ind, "ind")?;
        need(mask.s_observed, &self.serv, "serv")
    }
}

fn ln_uniform(x: f64, lo: f64, hi: f64) -> f64 {
    if lo < x && x < hi {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -sd.ln() - LN_SQRT_2PI - 0.5 * z * z
}

/// Sum of the log uniform prior densities of all six parameters.
pub fn log_prior(state: &ModelState, priors: &PriorConfig) -> f64 {
    let d = &state.dep;
    ln_uniform(state.weibull.alpha, 0.0, priors.a)
        + ln_uniform(state.weibull.beta, 0.0, priors.b_scale)
        + ln_uniform(d.r, priors.r1, priors.r2)
        + ln_uniform(d.sigma1, 0.0, priors.c1)
        + ln_uniform(d.m, 0.0, 1.0)
        + ln_uniform(d.sigma2, 0.0, priors.c3)
}

/// Log-likelihood of a dataset's failed instances.
pub fn log_likelihood(state: &ModelState, ds: &PartDataset, mask: &ObservationMask) -> Result<f64> {
    log_likelihood_data(state, &NetworkData::from_dataset(ds), mask)
}

/// Log-likelihood of arbitrary per-instance data. Unobserved nodes are read
/// from the state's latent slots, whose lengths must match the mask.
pub fn log_likelihood_data(state: &ModelState, data: &NetworkData, mask: &ObservationMask) -> Result<f64> {
    data.check(mask)?;
    let n = data.n;
    if state.latent_f.len() != mask.latent_f_len(n) || state.latent_i.len() != mask.latent_i_len(n) {
        return Err(Error::DimensionMismatch(format!(
            "latent slots f/i = {}/{}, expected {}/{}",
            state.latent_f.len(),
            state.latent_i.len(),
            mask.latent_f_len(n),
            mask.latent_i_len(n)
        )));
    }
    let w = state.weibull;
    let d = state.dep;
    let mut total = 0.0;
    for t in 0..n {
        let f = if mask.f_observed { data.fail[t] } else { state.latent_f.get(t).copied().unwrap_or(f64::NAN) };
        if mask.f_term() {
            if !(f > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            total += w.ln_pdf(f);
        }
        if mask.i_term() {
            let i = if mask.i_observed { data.ind[t] } else { state.latent_i[t] };
            total += ln_normal(i, f - f * d.r, d.sigma1);
            if mask.s_term() {
                total += ln_normal(data.serv[t], (f - i) * d.m + i, d.sigma2);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    r: Option<usize>,
    sigma1: Option<usize>,
    m: Option<usize>,
    sigma2: Option<usize>,
    f_start: usize,
    n_f: usize,
    i_start: usize,
    n_i: usize,
}

const ALPHA: usize = 0;
const BETA: usize = 1;

/// Partial sums that make one-coordinate updates cheap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnCache {
    sum_ln_f: f64,
    sum_f_alpha: f64,
    /// Sum of squared `I` residuals.
    q_i: f64,
    /// Sum of squared `S` residuals.
    q_s: f64,
    /// Log density of the state the sums describe.
    lp: f64,
}

/// Posterior of the network for one dataset, as a sampler target.
///
/// Coordinates: `alpha`, `beta`, then `r`, `sigma1` when the `I` term is
/// active, `m`, `sigma2` when the `S` term is active, then one latent `f`
/// per instance if `F` is unobserved and one latent `i` per instance if `I`
/// is unobserved but needed.
#[derive(Debug, Clone)]
pub struct BnPosterior {
    data: NetworkData,
    mask: ObservationMask,
    priors: PriorConfig,
    layout: Layout,
    ln_fail: Vec<f64>,
}

impl BnPosterior {
    pub fn new(data: NetworkData, mask: ObservationMask, priors: PriorConfig) -> Result<Self> {
        priors.validate()?;
        data.check(&mask)?;
        if data.n == 0 {
            return Err(Error::InvalidInput("no instances to fit".into()));
        }
        if mask.f_observed && data.fail.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidInput("failure cycles must be positive".into()));
        }
        let mut next = 2;
        let mut slot = |on: bool| {
            on.then(|| {
                next += 1;
                next - 1
            })
        };
        let r = slot(mask.i_term());
        let sigma1 = slot(mask.i_term());
        let m = slot(mask.s_term());
        let sigma2 = slot(mask.s_term());
        let n_f = mask.latent_f_len(data.n);
        let n_i = mask.latent_i_len(data.n);
        let f_start = next;
        let i_start = f_start + n_f;
        let layout = Layout { r, sigma1, m, sigma2, f_start, n_f, i_start, n_i };
        let ln_fail = if mask.f_observed { data.fail.iter().map(|f| f.ln()).collect() } else { Vec::new() };
        Ok(Self { data, mask, priors, layout, ln_fail })
    }

    pub fn mask(&self) -> ObservationMask {
        self.mask
    }

    pub fn data(&self) -> &NetworkData {
        &self.data
    }

    /// Pack a state into sampler coordinates.
    pub fn coords(&self, state: &ModelState) -> Result<Vec<f64>> {
        let l = &self.layout;
        if state.latent_f.len() != l.n_f || state.latent_i.len() != l.n_i {
            return Err(Error::DimensionMismatch(format!(
                "latent slots f/i = {}/{}, expected {}/{}",
                state.latent_f.len(),
                state.latent_i.len(),
                l.n_f,
                l.n_i
            )));
        }
        let mut x = vec![0.0; l.i_start + l.n_i];
        x[ALPHA] = state.weibull.alpha;
        x[BETA] = state.weibull.beta;
        for (slot, v) in [(l.r, state.dep.r), (l.sigma1, state.dep.sigma1), (l.m, state.dep.m), (l.sigma2, state.dep.sigma2)] {
            if let Some(c) = slot {
                x[c] = v;
            }
        }
        x[l.f_start..l.f_start + l.n_f].copy_from_slice(&state.latent_f);
        x[l.i_start..l.i_start + l.n_i].copy_from_slice(&state.latent_i);
        Ok(x)
    }

    /// Unpack sampler coordinates. Dependency parameters outside the fit
    /// keep the prior midpoint.
    pub fn state(&self, x: &[f64]) -> ModelState {
        let l = &self.layout;
        let mid = DependencyParams::prior_midpoint(&self.priors);
        let get = |slot: Option<usize>, default: f64| slot.map_or(default, |c| x[c]);
        ModelState {
            weibull: WeibullParams { alpha: x[ALPHA], beta: x[BETA] },
            dep: DependencyParams {
                r: get(l.r, mid.r),
                sigma1: get(l.sigma1, mid.sigma1),
                m: get(l.m, mid.m),
                sigma2: get(l.sigma2, mid.sigma2),
            },
            latent_f: x[l.f_start..l.f_start + l.n_f].to_vec(),
            latent_i: x[l.i_start..l.i_start + l.n_i].to_vec(),
        }
    }

    /// Starting latent values: `f` at the observed `s`, `i` at `0.9*s`, or
    /// derived from whatever is observed.
    fn initial_latents(&self) -> (Vec<f64>, Vec<f64>) {
        let d = &self.data;
        let anchor = |t: usize| {
            if self.mask.s_observed {
                d.serv[t]
            } else if self.mask.f_observed {
                d.fail[t]
            } else {
                d.ind[t] / 0.9
            }
        };
        let lf = (0..self.layout.n_f).map(|t| anchor(t).max(1e-3)).collect();
        let li = (0..self.layout.n_i)
            .map(|t| {
                let s = anchor(t);
                if self.mask.f_observed {
                    (0.9 * s).min(d.fail[t]).max(1e-3)
                } else {
                    (0.9 * s).max(1e-3)
                }
            })
            .collect();
        (lf, li)
    }

    fn value_f(&self, x: &[f64], t: usize) -> f64 {
        if self.mask.f_observed {
            self.data.fail[t]
        } else {
            x[self.layout.f_start + t]
        }
    }

    fn ln_f(&self, x: &[f64], t: usize) -> f64 {
        if self.mask.f_observed {
            self.ln_fail[t]
        } else {
            x[self.layout.f_start + t].ln()
        }
    }

    fn value_i(&self, x: &[f64], t: usize) -> f64 {
        if self.mask.i_observed {
            self.data.ind[t]
        } else {
            x[self.layout.i_start + t]
        }
    }

    fn r(&self, x: &[f64]) -> f64 {
        self.layout.r.map_or(0.0, |c| x[c])
    }

    fn m(&self, x: &[f64]) -> f64 {
        self.layout.m.map_or(0.0, |c| x[c])
    }

    fn resid_i(&self, f: f64, i: f64, r: f64) -> f64 {
        i - (f - f * r)
    }

    fn resid_s(&self, t: usize, f: f64, i: f64, m: f64) -> f64 {
        self.data.serv[t] - ((f - i) * m + i)
    }

    fn sum_f_alpha(&self, x: &[f64], alpha: f64) -> f64 {
        (0..self.data.n).map(|t| (alpha * self.ln_f(x, t)).exp()).sum()
    }

    fn q_i(&self, x: &[f64], r: f64) -> f64 {
        if !self.mask.i_term() {
            return 0.0;
        }
        (0..self.data.n)
            .map(|t| self.resid_i(self.value_f(x, t), self.value_i(x, t), r).powi(2))
            .sum()
    }

    fn q_s(&self, x: &[f64], m: f64) -> f64 {
        if !self.mask.s_term() {
            return 0.0;
        }
        (0..self.data.n)
            .map(|t| self.resid_s(t, self.value_f(x, t), self.value_i(x, t), m).powi(2))
            .sum()
    }

    /// Log density from the cached sums, with coordinate `coord` of `x`
    /// read as `value`.
    fn density_from(&self, x: &[f64], c: &BnCache, coord: usize, value: f64) -> f64 {
        let l = &self.layout;
        let p = &self.priors;
        let at = |i: usize| if i == coord { value } else { x[i] };
        let (alpha, beta) = (at(ALPHA), at(BETA));
        let mut lp = ln_uniform(alpha, 0.0, p.a) + ln_uniform(beta, 0.0, p.b_scale);
        if let (Some(rc), Some(sc)) = (l.r, l.sigma1) {
            lp += ln_uniform(at(rc), p.r1, p.r2) + ln_uniform(at(sc), 0.0, p.c1);
        }
        if let (Some(mc), Some(sc)) = (l.m, l.sigma2) {
            lp += ln_uniform(at(mc), 0.0, 1.0) + ln_uniform(at(sc), 0.0, p.c3);
        }
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let n = self.data.n as f64;
        lp += n * alpha.ln() - n * alpha * beta.ln() + (alpha - 1.0) * c.sum_ln_f
            - (-alpha * beta.ln()).exp() * c.sum_f_alpha;
        if let Some(sc) = l.sigma1 {
            let s1 = at(sc);
            lp += -n * (s1.ln() + LN_SQRT_2PI) - 0.5 * c.q_i / (s1 * s1);
        }
        if let Some(sc) = l.sigma2 {
            let s2 = at(sc);
            lp += -n * (s2.ln() + LN_SQRT_2PI) - 0.5 * c.q_s / (s2 * s2);
        }
        lp
    }

    fn names(&self) -> Vec<(usize, String)> {
        let l = &self.layout;
        let mut out = vec![(ALPHA, "alpha".to_string()), (BETA, "beta".to_string())];
        for (slot, name) in [(l.r, "r"), (l.sigma1, "sigma1"), (l.m, "m"), (l.sigma2, "sigma2")] {
            if let Some(c) = slot {
                out.push((c, name.to_string()));
            }
        }
        out
    }

    /// Replace instance `t`'s `f` and/or `i` and update the sums and the
    /// log density.
    fn instance_delta(&self, x: &[f64], cache: &BnCache, t: usize, new_f: Option<f64>, new_i: Option<f64>) -> BnCache {
        let l = &self.layout;
        let mut c = *cache;
        let (f0, i0) = (self.value_f(x, t), if self.mask.i_term() { self.value_i(x, t) } else { 0.0 });
        let (f1, i1) = (new_f.unwrap_or(f0), new_i.unwrap_or(i0));
        if new_f.is_some() {
            let (alpha, beta) = (x[ALPHA], x[BETA]);
            let d_ln = f1.ln() - f0.ln();
            let d_pow = f1.powf(alpha) - f0.powf(alpha);
            c.sum_ln_f += d_ln;
            c.sum_f_alpha += d_pow;
            c.lp += (alpha - 1.0) * d_ln - (-alpha * beta.ln()).exp() * d_pow;
        }
        if let Some(sc) = l.sigma1 {
            let r = self.r(x);
            let dq = self.resid_i(f1, i1, r).powi(2) - self.resid_i(f0, i0, r).powi(2);
            c.q_i += dq;
            c.lp -= 0.5 * dq / (x[sc] * x[sc]);
        }
        if let Some(sc) = l.sigma2 {
            let m = self.m(x);
            let dq = self.resid_s(t, f1, i1, m).powi(2) - self.resid_s(t, f0, i0, m).powi(2);
            c.q_s += dq;
            c.lp -= 0.5 * dq / (x[sc] * x[sc]);
        }
        c
    }
}

impl Target for BnPosterior {
    type Cache = BnCache;

    fn dim(&self) -> usize {
        self.layout.i_start + self.layout.n_i
    }

    fn support(&self, coord: usize) -> Support {
        let l = &self.layout;
        if Some(coord) == l.r {
            Support::Interval { lo: self.priors.r1, hi: self.priors.r2 }
        } else if Some(coord) == l.m {
            Support::Interval { lo: 0.0, hi: 1.0 }
        } else {
            Support::Positive
        }
    }

    fn tracked(&self) -> Vec<(usize, String)> {
        self.names()
    }

    fn cache(&self, x: &[f64]) -> BnCache {
        let mut c = BnCache {
            sum_ln_f: (0..self.data.n).map(|t| self.ln_f(x, t)).sum(),
            sum_f_alpha: self.sum_f_alpha(x, x[ALPHA]),
            q_i: self.q_i(x, self.r(x)),
            q_s: self.q_s(x, self.m(x)),
            lp: 0.0,
        };
        c.lp = self.density_from(x, &c, ALPHA, x[ALPHA]);
        c
    }

    fn log_density(&self, _x: &[f64], cache: &BnCache) -> f64 {
        cache.lp
    }

    fn propose(&self, x: &[f64], cache: &BnCache, coord: usize, value: f64) -> (f64, BnCache) {
        let l = &self.layout;
        if coord >= l.f_start {
            let c = if coord < l.f_start + l.n_f {
                self.instance_delta(x, cache, coord - l.f_start, Some(value), None)
            } else {
                self.instance_delta(x, cache, coord - l.i_start, None, Some(value))
            };
            return (c.lp, c);
        }
        let mut c = if coord == ALPHA {
            BnCache { sum_f_alpha: self.sum_f_alpha(x, value), ..*cache }
        } else if Some(coord) == l.r {
            BnCache { q_i: self.q_i(x, value), ..*cache }
        } else if Some(coord) == l.m {
            BnCache { q_s: self.q_s(x, value), ..*cache }
        } else {
            *cache
        };
        c.lp = self.density_from(x, &c, coord, value);
        (c.lp, c)
    }

    fn draw_initial(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let p = &self.priors;
        let mut open = |lo: f64, hi: f64| loop {
            let v = rng.random_range(lo..hi);
            if v > lo {
                return v;
            }
        };
        let weibull = WeibullParams { alpha: open(0.0, p.a), beta: open(0.0, p.b_scale) };
        let dep = DependencyParams {
            r: open(p.r1, p.r2),
            sigma1: open(0.0, p.c1),
            m: open(0.0, 1.0),
            sigma2: open(0.0, p.c3),
        };
        let (latent_f, latent_i) = self.initial_latents();
        self.coords(&ModelState { weibull, dep, latent_f, latent_i }).ok()
    }
}
