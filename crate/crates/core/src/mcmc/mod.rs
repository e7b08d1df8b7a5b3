//! Blockwise random-walk Metropolis-Hastings.
//!
//! Every scalar coordinate of the target is updated on its own. Proposals
//! are Gaussian steps in an unconstrained space: the log of positive
//! coordinates, the logit of interval coordinates. Proposal scales adapt
//! per coordinate toward the target acceptance rate during burn-in and are
//! frozen afterwards. Chains run independently, each from its own sub-seed,
//! and are merged by chain index.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::{seed, Error, Result};

mod diagnostics;

pub use diagnostics::{diagnostics, ess_bulk, ess_mean, split_rhat, Diagnostics, ParamDiagnostics};

const ADAPT_BATCH: usize = 50;
const INIT_RETRIES: usize = 1000;
const MIN_LOG_SCALE: f64 = -16.0;
const MAX_LOG_SCALE: f64 = 4.0;

/// Support of a scalar coordinate, which fixes its proposal transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Real,
    Positive,
    Interval { lo: f64, hi: f64 },
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::Positive => x > 0.0 && x.is_finite(),
            Support::Interval { lo, hi } => lo < x && x < hi,
        }
    }

    fn to_free(self, x: f64) -> f64 {
        match self {
            Support::Real => x,
            Support::Positive => x.ln(),
            Support::Interval { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
        }
    }

    fn from_free(self, y: f64) -> f64 {
        match self {
            Support::Real => y,
            Support::Positive => y.exp(),
            Support::Interval { lo, hi } => lo + (hi - lo) / (1.0 + (-y).exp()),
        }
    }

    /// `ln |dx/dy|` at `x`.
    fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Support::Real => 0.0,
            Support::Positive => x.ln(),
            Support::Interval { lo, hi } => (x - lo).ln() + (hi - x).ln() - (hi - lo).ln(),
        }
    }
}

/// A log density over a vector of scalar coordinates that the sampler can
/// update one coordinate at a time.
///
/// `Cache` carries whatever partial sums make a single-coordinate update
/// cheaper than a full re-evaluation.
pub trait Target: Sync {
    type Cache: Clone + Send;

    fn dim(&self) -> usize;

    fn support(&self, coord: usize) -> Support;

    /// Coordinates retained in the trace, with their names. Others only
    /// contribute to [`Trace::coord_means`].
    fn tracked(&self) -> Vec<(usize, String)>;

    fn cache(&self, x: &[f64]) -> Self::Cache;

    fn log_density(&self, x: &[f64], cache: &Self::Cache) -> f64;

    /// Log density and cache after `x[coord]` is replaced by `value`.
    fn propose(&self, x: &[f64], cache: &Self::Cache, coord: usize, value: f64) -> (f64, Self::Cache);

    /// A dispersed starting point, used for chains after the first and when
    /// the given initial point has zero density.
    fn draw_initial(&self, _rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        None
    }
}

/// Target defined by a plain closure; every proposal re-evaluates it.
pub struct FnTarget<F> {
    supports: Vec<Support>,
    names: Vec<String>,
    density: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTarget<F> {
    pub fn new(supports: Vec<Support>, names: Vec<String>, density: F) -> Self {
        assert_eq!(supports.len(), names.len());
        Self { supports, names, density }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Target for FnTarget<F> {
    type Cache = ();

    fn dim(&self) -> usize {
        self.supports.len()
    }

    fn support(&self, coord: usize) -> Support {
        self.supports[coord]
    }

    fn tracked(&self) -> Vec<(usize, String)> {
        self.names.iter().cloned().enumerate().collect()
    }

    fn cache(&self, _x: &[f64]) {}

    fn log_density(&self, x: &[f64], _cache: &()) -> f64 {
        (self.density)(x)
    }

    fn propose(&self, x: &[f64], _cache: &(), coord: usize, value: f64) -> (f64, ()) {
        let mut y = x.to_vec();
        y[coord] = value;
        ((self.density)(&y), ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_acceptance: f64,
    /// Initial proposal standard deviation in the unconstrained space.
    pub initial_scale: f64,
    /// Per-parameter overrides of `initial_scale`, keyed by tracked name.
    pub initial_scales: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 20_000,
            burn_in: 10_000,
            thin: 1,
            target_acceptance: 0.3,
            initial_scale: 0.1,
            initial_scales: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("mcmc: {m}")));
        if self.n_chains < 1 {
            return bad("n_chains must be >= 1");
        }
        if self.burn_in >= self.n_iterations {
            return bad("burn_in must be < n_iterations");
        }
        if self.thin < 1 {
            return bad("thin must be >= 1");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad("target_acceptance must lie in (0, 1)");
        }
        if !(self.initial_scale > 0.0) || self.initial_scales.values().any(|s| !(*s > 0.0)) {
            return bad("proposal scales must be > 0");
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.n_iterations - self.burn_in).div_ceil(self.thin)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub rate: f64,
}

/// Retained draws of one chain, `draws[param][i]`, in the original space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub draws: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    pub chains: Vec<ChainDraws>,
    /// Post-burn-in acceptance per tracked parameter, plus one `latent`
    /// block pooling every untracked coordinate.
    pub acceptance: Vec<BlockAcceptance>,
    /// Pooled posterior mean of every coordinate, tracked or not.
    pub coord_means: Vec<f64>,
    /// Present when the run had at least two chains.
    pub diagnostics: Option<Diagnostics>,
}

impl Trace {
    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Per-chain sample sequences of one parameter.
    pub fn samples(&self, name: &str) -> Result<Vec<&[f64]>> {
        let idx = self.param_index(name)?;
        Ok(self.chains.iter().map(|c| c.draws[idx].as_slice()).collect())
    }

    pub fn retained_len(&self) -> usize {
        self.chains.iter().map(|c| c.draws.first().map_or(0, Vec::len)).sum()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.acceptance.is_empty() {
            return 0.0;
        }
        self.acceptance.iter().map(|b| b.rate).sum::<f64>() / self.acceptance.len() as f64
    }

    /// One row per retained draw: `chain,draw,<param>...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.names.iter().cloned());
        out.write_record(&header)?;
        for (c, chain) in self.chains.iter().enumerate() {
            let n = chain.draws.first().map_or(0, Vec::len);
            for i in 0..n {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(chain.draws.iter().map(|d| format!("{}", d[i])));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Arithmetic mean of all retained draws of `name`, pooled over chains.
pub fn posterior_mean(trace: &Trace, name: &str) -> Result<f64> {
    let chains = trace.samples(name)?;
    let (sum, n) = chains
        .iter()
        .flat_map(|c| c.iter())
        .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    if n == 0 {
        return Err(Error::InvalidInput(format!("no retained draws for {name}")));
    }
    Ok(sum / n as f64)
}

/// Pooled sample standard deviation of `name`.
pub fn posterior_sd(trace: &Trace, name: &str) -> Result<f64> {
    let mean = posterior_mean(trace, name)?;
    let chains = trace.samples(name)?;
    let (ss, n) = chains
        .iter()
        .flat_map(|c| c.iter())
        .fold((0.0, 0usize), |(s, n), &x| (s + (x - mean).powi(2), n + 1));
    Ok((ss / (n.max(2) - 1) as f64).sqrt())
}

pub fn run_mh<T: Target>(target: &T, init: &[f64], cfg: &McmcConfig) -> Result<Trace> {
    run_mh_with(target, init, cfg, Execution::default())
}

/// [`run_mh`] with an explicit choice of chain-level parallelism.
pub fn run_mh_with<T: Target>(
    target: &T,
    init: &[f64],
    cfg: &McmcConfig,
    exec: Execution,
) -> Result<Trace> {
    cfg.validate()?;
    let dim = target.dim();
    if init.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "initial point has {} coordinates, target has {dim}",
            init.len()
        )));
    }
    let tracked = target.tracked();
    let start = starting_point(target, init, cfg.seed)?;

    let runs = par::map_range(exec, cfg.n_chains, |chain| {
        let mut rng = seed::rng(cfg.seed, &[1, chain as u64]);
        let x0 = if chain == 0 {
            start.clone()
        } else {
            dispersed_start(target, &mut rng).unwrap_or_else(|| start.clone())
        };
        run_chain(target, x0, cfg, &tracked, &mut rng)
    });

    let mut chains = Vec::with_capacity(cfg.n_chains);
    let mut accepted = vec![0u64; dim];
    let mut coord_sums = vec![0.0; dim];
    let mut retained = 0usize;
    for run in runs {
        for (a, b) in accepted.iter_mut().zip(&run.accepted) {
            *a += b;
        }
        for (a, b) in coord_sums.iter_mut().zip(&run.coord_sums) {
            *a += b;
        }
        retained += run.n_retained;
        chains.push(ChainDraws { draws: run.draws });
    }

    let post = ((cfg.n_iterations - cfg.burn_in) * cfg.n_chains) as f64;
    let mut acceptance: Vec<BlockAcceptance> = tracked
        .iter()
        .map(|(c, name)| BlockAcceptance { block: name.clone(), rate: accepted[*c] as f64 / post })
        .collect();
    let latent: Vec<usize> =
        (0..dim).filter(|c| !tracked.iter().any(|(t, _)| t == c)).collect();
    if !latent.is_empty() {
        let total: u64 = latent.iter().map(|&c| accepted[c]).sum();
        acceptance.push(BlockAcceptance {
            block: "latent".into(),
            rate: total as f64 / (post * latent.len() as f64),
        });
    }
    let coord_means = coord_sums.iter().map(|s| s / retained.max(1) as f64).collect();

    let mut trace = Trace {
        names: tracked.into_iter().map(|(_, n)| n).collect(),
        chains,
        acceptance,
        coord_means,
        diagnostics: None,
    };
    if cfg.n_chains >= 2 {
        trace.diagnostics = Some(diagnostics(&trace)?);
    }
    Ok(trace)
}

fn finite_density<T: Target>(target: &T, x: &[f64]) -> bool {
    x.iter().enumerate().all(|(c, &v)| target.support(c).contains(v)) && {
        let cache = target.cache(x);
        let lp = target.log_density(x, &cache);
        lp.is_finite()
    }
}

fn starting_point<T: Target>(target: &T, init: &[f64], seed_value: u64) -> Result<Vec<f64>> {
    if finite_density(target, init) {
        return Ok(init.to_vec());
    }
    let mut rng = seed::rng(seed_value, &[0]);
    for _ in 0..INIT_RETRIES {
        match target.draw_initial(&mut rng) {
            Some(x) if finite_density(target, &x) => return Ok(x),
            Some(_) => continue,
            None => break,
        }
    }
    Err(Error::Initialization(INIT_RETRIES))
}

fn dispersed_start<T: Target>(target: &T, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..INIT_RETRIES {
        let x = target.draw_initial(rng)?;
        if finite_density(target, &x) {
            return Some(x);
        }
    }
    None
}

struct ChainRun {
    draws: Vec<Vec<f64>>,
    accepted: Vec<u64>,
    coord_sums: Vec<f64>,
    n_retained: usize,
}

fn run_chain<T: Target>(
    target: &T,
    mut x: Vec<f64>,
    cfg: &McmcConfig,
    tracked: &[(usize, String)],
    rng: &mut ChaCha8Rng,
) -> ChainRun {
    let dim = x.len();
    let supports: Vec<Support> = (0..dim).map(|c| target.support(c)).collect();
    let mut log_scale = vec![cfg.initial_scale.ln(); dim];
    for (c, name) in tracked {
        if let Some(s) = cfg.initial_scales.get(name) {
            log_scale[*c] = s.ln();
        }
    }
    let mut cache = target.cache(&x);
    let mut lp = target.log_density(&x, &cache);
    // Unconstrained coordinates, kept in step with `x`.
    let mut y: Vec<f64> = x.iter().zip(&supports).map(|(&v, s)| s.to_free(v)).collect();

    let per_chain = cfg.retained_per_chain();
    let mut draws = vec![Vec::with_capacity(per_chain); tracked.len()];
    let mut batch_accepts = vec![0u32; dim];
    let mut accepted = vec![0u64; dim];
    let mut coord_sums = vec![0.0; dim];
    let mut n_retained = 0;
    let mut batch = 0usize;
    let mut scale: Vec<f64> = log_scale.iter().map(|l| l.exp()).collect();

    for it in 0..cfg.n_iterations {
        let burning = it < cfg.burn_in;
        for c in 0..dim {
            let support = supports[c];
            let old = x[c];
            let z: f64 = rng.sample(StandardNormal);
            let y_new = y[c] + scale[c] * z;
            let proposal = support.from_free(y_new);
            let u: f64 = rng.random();
            if !support.contains(proposal) {
                continue;
            }
            let (lp_new, cache_new) = target.propose(&x, &cache, c, proposal);
            if lp_new.is_nan() || lp_new == f64::NEG_INFINITY {
                continue;
            }
            let jacobian = match support {
                Support::Real => 0.0,
                Support::Positive => y_new - y[c],
                Support::Interval { .. } => support.log_jacobian(proposal) - support.log_jacobian(old),
            };
            let log_ratio = lp_new - lp + jacobian;
            if log_ratio.is_nan() {
                continue;
            }
            if u.ln() < log_ratio {
                x[c] = proposal;
                y[c] = y_new;
                lp = lp_new;
                cache = cache_new;
                if burning {
                    batch_accepts[c] += 1;
                } else {
                    accepted[c] += 1;
                }
            }
        }

        if burning && (it + 1) % ADAPT_BATCH == 0 {
            let gain = 1.0 / ((batch + 1) as f64).sqrt().min(10.0);
            for c in 0..dim {
                let rate = batch_accepts[c] as f64 / ADAPT_BATCH as f64;
                log_scale[c] = (log_scale[c] + 2.0 * gain * (rate - cfg.target_acceptance))
                    .clamp(MIN_LOG_SCALE, MAX_LOG_SCALE);
                scale[c] = log_scale[c].exp();
                batch_accepts[c] = 0;
            }
            batch += 1;
        }
        if (it + 1) % ADAPT_BATCH == 0 {
            // Refresh cached partial sums against rounding drift.
            cache = target.cache(&x);
            lp = target.log_density(&x, &cache);
        }

        if !burning && (it - cfg.burn_in) % cfg.thin == 0 {
            for (slot, (c, _)) in draws.iter_mut().zip(tracked) {
                slot.push(x[*c]);
            }
            for (s, v) in coord_sums.iter_mut().zip(&x) {
                *s += v;
            }
            n_retained += 1;
        }
    }
    ChainRun { draws, accepted, coord_sums, n_retained }
}
