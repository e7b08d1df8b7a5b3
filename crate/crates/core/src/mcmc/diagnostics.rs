//! Rank-normalized split R-hat and effective sample size.
//!
//! Chains are split in half, draws are replaced by normal scores of their
//! pooled ranks, and the classic potential scale reduction is computed on
//! both the scores and the scores of the folded draws; the larger value is
//! reported. ESS uses Geyer's initial monotone sequence on the pooled
//! autocorrelation estimate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::Trace;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub r_hat: f64,
    pub ess_bulk: f64,
    /// ESS of the raw draws, the one that governs the Monte Carlo error of
    /// the posterior mean.
    pub ess_mean: f64,
    pub mcse_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub params: Vec<ParamDiagnostics>,
}

impl Diagnostics {
    pub fn max_r_hat(&self) -> f64 {
        self.params.iter().map(|p| p.r_hat).fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess_bulk).fold(f64::NAN, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub fn diagnostics(trace: &Trace) -> Result<Diagnostics> {
    let n_chains = trace.chains.len();
    if n_chains < 2 {
        return Err(Error::InsufficientChains(n_chains));
    }
    let mut params = Vec::with_capacity(trace.names.len());
    for name in &trace.names {
        let chains: Vec<Vec<f64>> = trace.samples(name)?.into_iter().map(<[f64]>::to_vec).collect();
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let sd = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let ess_raw = ess_mean(&chains);
        params.push(ParamDiagnostics {
            name: name.clone(),
            mean,
            sd,
            r_hat: split_rhat(&chains),
            ess_bulk: ess_bulk(&chains),
            ess_mean: ess_raw,
            mcse_mean: sd / ess_raw.sqrt(),
        });
    }
    Ok(Diagnostics {
        n_chains,
        draws_per_chain: trace.chains[0].draws.first().map_or(0, Vec::len),
        params,
    })
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        if half == 0 {
            out.push(c.clone());
            continue;
        }
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replace every draw by the normal score of its pooled rank (ties get
/// their average rank).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = idx.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // 1-based average rank of the tie group.
        let rank = (start + end + 1) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn classic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let w = chains.iter().map(|c| variance(&c[..n])).sum::<f64>() / chains.len() as f64;
    let b_over_n = variance(&means);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Rank-normalized split R-hat, the maximum of the bulk and folded-tail
/// versions. Identical constant chains give 1.0.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split(chains);
    let bulk = classic_rhat(&rank_normalize(&halves));
    let all: Vec<f64> = halves.iter().flatten().copied().collect();
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let folded: Vec<Vec<f64>> =
        halves.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let tail = classic_rhat(&rank_normalize(&folded));
    bulk.max(tail)
}

fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let total = (m * n) as f64;
    if m == 0 || n < 4 {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| {
                c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let acov0 = acov(0);
    let mean_var = acov0 * nf / (nf - 1.0);
    let var_plus = mean_var * (nf - 1.0) / nf + if m > 1 { variance(&means) } else { 0.0 };
    if var_plus == 0.0 {
        return total;
    }
    let rho = |a: f64| 1.0 - (mean_var - a) / var_plus;

    // Geyer initial monotone sequence over pairs (rho[2k], rho[2k+1]).
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let r0 = if t == 0 { 1.0 } else { rho(acov(t)) };
        let r1 = rho(acov(t + 1));
        let mut pair = r0 + r1;
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total * total.log10().max(1.0))
}

/// Bulk ESS: ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    ess_of(&rank_normalize(&split(chains)))
}

/// ESS of the raw split chains.
pub fn ess_mean(chains: &[Vec<f64>]) -> f64 {
    ess_of(&split(chains))
}
